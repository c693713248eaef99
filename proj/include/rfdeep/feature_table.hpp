#pragma once

// CSV feature and score tables exchanged between pipeline stages.
//   features: scan_id,cohort_label,crop_index,<feature names...>
//   scores:   scan_id,cohort_label,method,value,fallback_used
// Reals are written with 17 significant digits so they read back bit-exactly.

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rfdeep/confidence.hpp"
#include "rfdeep/forest.hpp"
#include "rfdeep/region_features.hpp"

namespace rfdeep {

struct FeatureRow {
  std::string scan_id;
  CohortLabel label = CohortLabel::ID;
  int crop_index = 0;
  std::vector<double> values;
};

struct FeatureTable {
  FeatureKind kind = FeatureKind::Deep;
  std::vector<std::string> names;
  std::vector<FeatureRow> rows;

  /// Stage -> [begin, end) columns, from "PE_000"-style names. Empty for
  /// radiomics tables.
  std::map<StageId, std::pair<int, int>> stage_slices() const;

  /// Keeps the columns of the given stages plus every non-stage column.
  FeatureTable select_stages(const std::set<StageId>& stages) const;

  FeatureTable select_columns(const std::vector<int>& columns) const;

  /// Row indices grouped by scan, in first-appearance order.
  std::vector<std::pair<std::string, std::vector<int>>> rows_by_scan() const;

  Matrix matrix(const std::vector<int>& row_indices) const;
};

std::string format_real(double v);

void write_feature_csv(const FeatureTable& table, const std::filesystem::path& path);
FeatureTable read_feature_csv(const std::filesystem::path& path, FeatureKind kind);

struct ScoreRow {
  OodScore score;
  CohortLabel label = CohortLabel::ID;
};

void write_score_csv(const std::vector<ScoreRow>& rows, const std::filesystem::path& path);
std::vector<ScoreRow> read_score_csv(const std::filesystem::path& path);

}  // namespace rfdeep

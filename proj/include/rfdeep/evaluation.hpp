#pragma once

// Repeated patient-level split protocol and summary reporting.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rfdeep/feature_table.hpp"
#include "rfdeep/forest.hpp"
#include "rfdeep/tensor_store.hpp"

namespace rfdeep {

inline constexpr const char* kRfDeep = "RF-Deep";
inline constexpr const char* kRfRadiomics = "RF-Radiomics";

struct ProtocolConfig {
  double train_frac = 0.4;
  int n_seeds = 100;
  std::uint64_t base_seed = 0;
};

struct RfConfig {
  ForestParams forest;
  bool rfe = false;
  int rfe_target = 32;
  int rfe_step = 0;  // 0 -> max(1, d / 10)
};

struct PatientSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

/// Per cohort: shuffle the cohort's scan ids (manifest order) with a stream
/// derived from (seed, cohort index) and send the first
/// max(1, floor(train_frac * n)) to training. Throws DataError when either
/// side of a cohort would be empty.
PatientSplit patient_split(const CohortManifest& manifest, double train_frac, std::uint64_t seed);

/// Seed used for protocol repetition `s`.
inline std::uint64_t split_seed(std::uint64_t base_seed, int s) {
  return base_seed ^ static_cast<std::uint64_t>(s);
}

struct MetricSeries {
  std::string method;
  std::string cohort;
  std::vector<double> auroc;  // fractions, one per seed
  std::vector<double> fpr95;
};

double mean_of(const std::vector<double>& v);
/// Sample standard deviation; 0 for fewer than two values.
double std_of(const std::vector<double>& v);

struct EvalReport {
  ProtocolConfig protocol;
  std::vector<std::string> methods;  // row order
  std::vector<std::string> cohorts;  // OOD cohorts, column order
  std::vector<MetricSeries> series;

  const MetricSeries& get(const std::string& method, const std::string& cohort) const;
  void append(const EvalReport& other);
};

/// Training-free scores, evaluated once on the full cohorts and replicated
/// across seeds.
EvalReport evaluate_baselines(const CohortManifest& manifest, const std::vector<ScoreRow>& scores,
                              const ProtocolConfig& protocol);

/// Trains on the pooled ID/OOD training scans of each seed's split, scores
/// test scans as the mean crop P(OOD), and compares each OOD cohort's test
/// scans against the shared ID test scans. Seeds run in parallel.
EvalReport evaluate_rf(const CohortManifest& manifest, const FeatureTable& table, const std::string& method,
                       const RfConfig& cfg, const ProtocolConfig& protocol);

struct EvalInputs {
  const CohortManifest* manifest = nullptr;
  const FeatureTable* deep = nullptr;
  const FeatureTable* radiomics = nullptr;
  const std::vector<ScoreRow>* scores = nullptr;
};

/// Baselines, RF-Radiomics and RF-Deep, whichever inputs are present, in
/// that row order.
EvalReport repeated_split_eval(const EvalInputs& inputs, const RfConfig& deep_cfg, const RfConfig& radiomics_cfg,
                               const ProtocolConfig& protocol);

/// One RF-Deep evaluation per listed encoder stage, restricted to that
/// stage's columns. Methods are named "RF-Deep[PE]" ... "RF-Deep[SB4]".
EvalReport stage_ablation(const CohortManifest& manifest, const FeatureTable& deep, const RfConfig& cfg,
                          const ProtocolConfig& protocol,
                          const std::vector<StageId>& stages = {kAllStages.begin(), kAllStages.end()});

// Output files. Percentages are metric x 100.
void write_per_seed_csv(const EvalReport& report, const std::filesystem::path& path);
/// method,<cohort>_auroc,<cohort>_fpr95,... with 2-decimal means.
void write_summary_csv(const EvalReport& report, const std::filesystem::path& path);
/// method,cohort,auroc_mean,auroc_std,fpr95_mean,fpr95_std,n_seeds.
void write_summary_long_csv(const EvalReport& report, const std::filesystem::path& path);
std::string format_summary_table(const EvalReport& report);

/// Rebuilds a report skeleton (means/stds only) from a long summary CSV.
struct SummaryRow {
  std::string method;
  std::string cohort;
  double auroc_mean = 0.0;
  double auroc_std = 0.0;
  double fpr95_mean = 0.0;
  double fpr95_std = 0.0;
  int n_seeds = 0;
};
std::vector<SummaryRow> read_summary_long_csv(const std::filesystem::path& path);
std::string format_summary_table(const std::vector<SummaryRow>& rows);

}  // namespace rfdeep

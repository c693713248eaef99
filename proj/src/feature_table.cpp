#include "rfdeep/feature_table.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "rfdeep/error.hpp"

namespace fs = std::filesystem;

namespace rfdeep {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_real(const std::string& s, const fs::path& path) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError(path.string() + ": cannot parse number '" + s + "'");
  }
  return v;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

std::string format_real(double v) { return fmt::format("{:.17g}", v); }

std::map<StageId, std::pair<int, int>> FeatureTable::stage_slices() const {
  std::map<StageId, std::pair<int, int>> slices;
  for (int c = 0; c < static_cast<int>(names.size()); ++c) {
    const auto us = names[c].find('_');
    if (us == std::string::npos) continue;
    const std::string prefix = names[c].substr(0, us);
    for (StageId id : kAllStages) {
      if (prefix != stage_name(id)) continue;
      auto it = slices.find(id);
      if (it == slices.end()) {
        slices[id] = {c, c + 1};
      } else if (it->second.second == c) {
        it->second.second = c + 1;
      } else {
        throw DataError("stage '" + prefix + "' columns are not contiguous");
      }
    }
  }
  return slices;
}

FeatureTable FeatureTable::select_columns(const std::vector<int>& columns) const {
  FeatureTable out;
  out.kind = kind;
  for (int c : columns) out.names.push_back(names.at(c));
  out.rows.reserve(rows.size());
  for (const auto& r : rows) {
    FeatureRow nr{r.scan_id, r.label, r.crop_index, {}};
    nr.values.reserve(columns.size());
    for (int c : columns) nr.values.push_back(r.values[c]);
    out.rows.push_back(std::move(nr));
  }
  return out;
}

FeatureTable FeatureTable::select_stages(const std::set<StageId>& stages) const {
  const auto slices = stage_slices();
  if (slices.size() != kNumStages) throw DataError("feature table lacks stage slice metadata");
  std::vector<char> keep(names.size(), 1);
  for (const auto& [id, range] : slices) {
    if (stages.count(id)) continue;
    for (int c = range.first; c < range.second; ++c) keep[c] = 0;
  }
  std::vector<int> cols;
  for (int c = 0; c < static_cast<int>(names.size()); ++c) {
    if (keep[c]) cols.push_back(c);
  }
  return select_columns(cols);
}

std::vector<std::pair<std::string, std::vector<int>>> FeatureTable::rows_by_scan() const {
  std::vector<std::pair<std::string, std::vector<int>>> out;
  std::unordered_map<std::string, std::size_t> where;
  for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
    auto [it, inserted] = where.emplace(rows[i].scan_id, out.size());
    if (inserted) out.push_back({rows[i].scan_id, {}});
    out[it->second].second.push_back(i);
  }
  return out;
}

Matrix FeatureTable::matrix(const std::vector<int>& row_indices) const {
  Matrix m(static_cast<int>(row_indices.size()), static_cast<int>(names.size()));
  for (int i = 0; i < m.rows; ++i) {
    const auto& v = rows[row_indices[i]].values;
    std::copy(v.begin(), v.end(), m.data.begin() + static_cast<std::ptrdiff_t>(i) * m.cols);
  }
  return m;
}

void write_feature_csv(const FeatureTable& table, const fs::path& path) {
  auto out = open_out(path);
  std::string line = "scan_id,cohort_label,crop_index";
  for (const auto& n : table.names) line += "," + n;
  out << line << "\n";
  for (const auto& r : table.rows) {
    if (r.values.size() != table.names.size()) throw InvariantError("feature row width mismatch");
    line = fmt::format("{},{},{}", r.scan_id, label_name(r.label), r.crop_index);
    for (double v : r.values) {
      line += ',';
      line += format_real(v);
    }
    out << line << "\n";
  }
}

FeatureTable read_feature_csv(const fs::path& path, FeatureKind kind) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature table " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty feature table");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "scan_id" || header[1] != "cohort_label" || header[2] != "crop_index") {
    throw DataError(path.string() + ": bad feature table header");
  }
  FeatureTable t;
  t.kind = kind;
  t.names.assign(header.begin() + 3, header.end());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw DataError(path.string() + ": ragged row for " + cells[0]);
    FeatureRow r;
    r.scan_id = cells[0];
    r.label = parse_label(cells[1]);
    r.crop_index = static_cast<int>(parse_real(cells[2], path));
    r.values.reserve(t.names.size());
    for (std::size_t c = 3; c < cells.size(); ++c) r.values.push_back(parse_real(cells[c], path));
    t.rows.push_back(std::move(r));
  }
  return t;
}

void write_score_csv(const std::vector<ScoreRow>& rows, const fs::path& path) {
  auto out = open_out(path);
  out << "scan_id,cohort_label,method,value,fallback_used\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{},{}\n", r.score.scan_id, label_name(r.label), r.score.method,
                       format_real(r.score.value), r.score.fallback_used ? 1 : 0);
  }
}

std::vector<ScoreRow> read_score_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open score table " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "scan_id,cohort_label,method,value,fallback_used") {
    throw DataError(path.string() + ": bad score table header");
  }
  std::vector<ScoreRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 5) throw DataError(path.string() + ": ragged score row");
    ScoreRow r;
    r.score.scan_id = c[0];
    r.label = parse_label(c[1]);
    r.score.method = c[2];
    r.score.value = parse_real(c[3], path);
    r.score.fallback_used = c[4] == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace rfdeep

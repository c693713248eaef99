#include "rfdeep/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "rfdeep/confidence.hpp"
#include "rfdeep/error.hpp"
#include "rfdeep/metrics.hpp"
#include "rfdeep/rng.hpp"

namespace fs = std::filesystem;

namespace rfdeep {

namespace {

std::vector<std::string> ood_cohorts(const CohortManifest& m) {
  std::vector<std::string> out;
  for (const auto& name : m.cohort_names()) {
    for (const auto& r : m.records) {
      if (r.cohort_name == name) {
        if (r.cohort_label == CohortLabel::OOD) out.push_back(name);
        break;
      }
    }
  }
  return out;
}

void check_manifest(const CohortManifest& m) {
  bool id = false, ood = false;
  for (const auto& r : m.records) (r.cohort_label == CohortLabel::ID ? id : ood) = true;
  if (!id || !ood) throw DataError("evaluation needs at least one ID and one OOD cohort");
}

struct Metrics {
  double auroc = 0.0;
  double fpr95 = 0.0;
};

Metrics cohort_metrics(const CohortManifest& m, const std::unordered_map<std::string, double>& score,
                       const std::string& cohort) {
  std::vector<double> s;
  std::vector<int> l;
  for (const auto& r : m.records) {
    const bool id = r.cohort_label == CohortLabel::ID;
    if (!id && r.cohort_name != cohort) continue;
    auto it = score.find(r.scan_id);
    if (it == score.end()) continue;
    s.push_back(it->second);
    l.push_back(id ? 0 : 1);
  }
  return {auroc(s, l), fpr_at_tpr(s, l, 0.95)};
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::vector<SummaryRow> to_summary(const EvalReport& report) {
  std::vector<SummaryRow> rows;
  for (const auto& method : report.methods) {
    for (const auto& cohort : report.cohorts) {
      const auto& s = report.get(method, cohort);
      rows.push_back({method, cohort, 100.0 * mean_of(s.auroc), 100.0 * std_of(s.auroc),
                      100.0 * mean_of(s.fpr95), 100.0 * std_of(s.fpr95), static_cast<int>(s.auroc.size())});
    }
  }
  return rows;
}

}  // namespace

PatientSplit patient_split(const CohortManifest& manifest, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw ConfigError("train_frac must be in (0, 1)");
  PatientSplit split;
  const auto cohorts = manifest.cohort_names();
  for (std::size_t c = 0; c < cohorts.size(); ++c) {
    std::vector<std::string> ids;
    for (const auto& r : manifest.records) {
      if (r.cohort_name == cohorts[c]) ids.push_back(r.scan_id);
    }
    SplitMix64 rng(derive_seed(seed, "split", c));
    for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
    const std::size_t n_train =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(ids.size()))));
    if (n_train >= ids.size()) {
      throw DataError("cohort '" + cohorts[c] + "' too small for a non-empty train/test split");
    }
    split.train.insert(split.train.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.test.insert(split.test.end(), ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  }
  return split;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

const MetricSeries& EvalReport::get(const std::string& method, const std::string& cohort) const {
  for (const auto& s : series) {
    if (s.method == method && s.cohort == cohort) return s;
  }
  throw DataError("report has no entry for " + method + " / " + cohort);
}

void EvalReport::append(const EvalReport& other) {
  if (cohorts.empty()) cohorts = other.cohorts;
  if (other.cohorts != cohorts) throw InvariantError("cannot merge reports over different cohorts");
  methods.insert(methods.end(), other.methods.begin(), other.methods.end());
  series.insert(series.end(), other.series.begin(), other.series.end());
}

EvalReport evaluate_baselines(const CohortManifest& manifest, const std::vector<ScoreRow>& scores,
                              const ProtocolConfig& protocol) {
  check_manifest(manifest);
  EvalReport report;
  report.protocol = protocol;
  report.cohorts = ood_cohorts(manifest);
  for (ScoreMethod m : kAllScoreMethods) {
    std::unordered_map<std::string, double> by_scan;
    for (const auto& r : scores) {
      if (r.score.method == method_name(m)) by_scan[r.score.scan_id] = r.score.value;
    }
    for (const auto& rec : manifest.records) {
      if (!by_scan.count(rec.scan_id)) {
        throw DataError("score table has no " + std::string(method_name(m)) + " score for '" + rec.scan_id + "'");
      }
    }
    const std::string display(method_display_name(m));
    report.methods.push_back(display);
    for (const auto& cohort : report.cohorts) {
      const Metrics mt = cohort_metrics(manifest, by_scan, cohort);
      report.series.push_back({display, cohort, std::vector<double>(protocol.n_seeds, mt.auroc),
                               std::vector<double>(protocol.n_seeds, mt.fpr95)});
    }
  }
  return report;
}

EvalReport evaluate_rf(const CohortManifest& manifest, const FeatureTable& table, const std::string& method,
                       const RfConfig& cfg, const ProtocolConfig& protocol) {
  check_manifest(manifest);
  if (protocol.n_seeds < 1) throw ConfigError("n_seeds must be >= 1");
  const auto groups = table.rows_by_scan();
  std::unordered_map<std::string, const std::vector<int>*> rows_of;
  for (const auto& [id, rows] : groups) rows_of[id] = &rows;
  for (const auto& r : manifest.records) {
    if (!rows_of.count(r.scan_id)) throw DataError(method + ": feature table has no rows for '" + r.scan_id + "'");
  }

  EvalReport report;
  report.protocol = protocol;
  report.methods = {method};
  report.cohorts = ood_cohorts(manifest);
  const std::size_t nc = report.cohorts.size();
  std::vector<std::vector<Metrics>> per_seed(protocol.n_seeds, std::vector<Metrics>(nc));
  std::vector<std::string> errors(protocol.n_seeds);

#pragma omp parallel for schedule(dynamic)
  for (int s = 0; s < protocol.n_seeds; ++s) {
    try {
      const std::uint64_t seed = split_seed(protocol.base_seed, s);
      const PatientSplit split = patient_split(manifest, protocol.train_frac, seed);

      std::vector<int> train_rows;
      std::vector<int> labels;
      for (const auto& id : split.train) {
        const int label = manifest.find(id).cohort_label == CohortLabel::OOD ? 1 : 0;
        for (int r : *rows_of.at(id)) {
          train_rows.push_back(r);
          labels.push_back(label);
        }
      }
      Matrix X = table.matrix(train_rows);
      std::vector<int> columns(table.names.size());
      std::iota(columns.begin(), columns.end(), 0);
      if (cfg.rfe) {
        const int target = std::min(cfg.rfe_target, X.cols);
        columns = rfe(X, labels, cfg.forest, target, cfg.rfe_step, derive_seed(seed, "rfe", 0));
        X = X.select_columns(columns);
      }
      const Forest forest = fit_forest(X, labels, cfg.forest, derive_seed(seed, "forest", 0));

      std::unordered_map<std::string, double> score;
      std::vector<double> x(columns.size());
      for (const auto& id : split.test) {
        double sum = 0.0;
        const auto& rows = *rows_of.at(id);
        for (int r : rows) {
          for (std::size_t c = 0; c < columns.size(); ++c) x[c] = table.rows[r].values[columns[c]];
          sum += predict_proba(forest, x)[1];
        }
        score[id] = sum / static_cast<double>(rows.size());
      }
      for (std::size_t c = 0; c < nc; ++c) per_seed[s][c] = cohort_metrics(manifest, score, report.cohorts[c]);
    } catch (const std::exception& e) {
      errors[s] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw DataError(method + ": " + e);
  }

  for (std::size_t c = 0; c < nc; ++c) {
    MetricSeries ms{method, report.cohorts[c], {}, {}};
    for (int s = 0; s < protocol.n_seeds; ++s) {
      ms.auroc.push_back(per_seed[s][c].auroc);
      ms.fpr95.push_back(per_seed[s][c].fpr95);
    }
    report.series.push_back(std::move(ms));
  }
  return report;
}

EvalReport repeated_split_eval(const EvalInputs& in, const RfConfig& deep_cfg, const RfConfig& radiomics_cfg,
                               const ProtocolConfig& protocol) {
  if (!in.manifest) throw ConfigError("repeated_split_eval needs a manifest");
  EvalReport report;
  report.protocol = protocol;
  if (in.scores) report.append(evaluate_baselines(*in.manifest, *in.scores, protocol));
  if (in.radiomics) report.append(evaluate_rf(*in.manifest, *in.radiomics, kRfRadiomics, radiomics_cfg, protocol));
  if (in.deep) report.append(evaluate_rf(*in.manifest, *in.deep, kRfDeep, deep_cfg, protocol));
  return report;
}

EvalReport stage_ablation(const CohortManifest& manifest, const FeatureTable& deep, const RfConfig& cfg,
                          const ProtocolConfig& protocol, const std::vector<StageId>& stages) {
  if (deep.stage_slices().size() != static_cast<std::size_t>(kNumStages)) throw DataError("deep feature table lacks stage slice metadata");
  EvalReport report;
  report.protocol = protocol;
  for (StageId id : stages) {
    const FeatureTable sub = deep.select_stages({id});
    report.append(evaluate_rf(manifest, sub, std::string(kRfDeep) + "[" + std::string(stage_name(id)) + "]", cfg,
                              protocol));
  }
  return report;
}

void write_per_seed_csv(const EvalReport& report, const fs::path& path) {
  auto out = open_out(path);
  out << "seed,method,cohort,auroc,fpr95\n";
  for (int s = 0; s < report.protocol.n_seeds; ++s) {
    for (const auto& m : report.methods) {
      for (const auto& c : report.cohorts) {
        const auto& ms = report.get(m, c);
        out << fmt::format("{},{},{},{:.4f},{:.4f}\n", split_seed(report.protocol.base_seed, s), m, c,
                           100.0 * ms.auroc.at(s), 100.0 * ms.fpr95.at(s));
      }
    }
  }
}

void write_summary_csv(const EvalReport& report, const fs::path& path) {
  auto out = open_out(path);
  std::string header = "method";
  for (const auto& c : report.cohorts) header += "," + c + "_auroc," + c + "_fpr95";
  out << header << "\n";
  for (const auto& m : report.methods) {
    std::string line = m;
    for (const auto& c : report.cohorts) {
      const auto& s = report.get(m, c);
      line += fmt::format(",{:.2f},{:.2f}", 100.0 * mean_of(s.auroc), 100.0 * mean_of(s.fpr95));
    }
    out << line << "\n";
  }
}

void write_summary_long_csv(const EvalReport& report, const fs::path& path) {
  auto out = open_out(path);
  out << "method,cohort,auroc_mean,auroc_std,fpr95_mean,fpr95_std,n_seeds\n";
  for (const auto& r : to_summary(report)) {
    out << fmt::format("{},{},{:.4f},{:.4f},{:.4f},{:.4f},{}\n", r.method, r.cohort, r.auroc_mean, r.auroc_std,
                       r.fpr95_mean, r.fpr95_std, r.n_seeds);
  }
}

std::vector<SummaryRow> read_summary_long_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open summary " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "method,cohort,auroc_mean,auroc_std,fpr95_mean,fpr95_std,n_seeds") {
    throw DataError(path.string() + ": bad summary header");
  }
  std::vector<SummaryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> c;
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) c.push_back(cell);
    if (c.size() != 7) throw DataError(path.string() + ": ragged summary row");
    try {
      rows.push_back({c[0], c[1], std::stod(c[2]), std::stod(c[3]), std::stod(c[4]), std::stod(c[5]), std::stoi(c[6])});
    } catch (const std::exception&) {
      throw DataError(path.string() + ": bad number in summary row");
    }
  }
  return rows;
}

std::string format_summary_table(const std::vector<SummaryRow>& rows) {
  std::vector<std::string> methods, cohorts;
  for (const auto& r : rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    if (std::find(cohorts.begin(), cohorts.end(), r.cohort) == cohorts.end()) cohorts.push_back(r.cohort);
  }
  std::size_t mw = 6;
  for (const auto& m : methods) mw = std::max(mw, m.size());
  std::size_t cw = 19;  // "AUROC(^)  FPR95(v)" plus padding
  for (const auto& c : cohorts) cw = std::max(cw, c.size() + 2);

  std::string out = fmt::format("{:<{}}", "Method", mw);
  for (const auto& c : cohorts) out += fmt::format(" | {:<{}}", c, cw);
  out += "\n" + fmt::format("{:<{}}", "", mw);
  for (std::size_t i = 0; i < cohorts.size(); ++i) out += fmt::format(" | {:>9} {:>9}{:<{}}", "AUROC(^)", "FPR95(v)", "", cw - 19);
  out += "\n" + std::string(mw + cohorts.size() * (cw + 3), '-') + "\n";
  for (const auto& m : methods) {
    out += fmt::format("{:<{}}", m, mw);
    for (const auto& c : cohorts) {
      auto it = std::find_if(rows.begin(), rows.end(), [&](const SummaryRow& r) { return r.method == m && r.cohort == c; });
      if (it == rows.end()) {
        out += fmt::format(" | {:>9} {:>9}{:<{}}", "-", "-", "", cw - 19);
      } else {
        out += fmt::format(" | {:>9.2f} {:>9.2f}{:<{}}", it->auroc_mean, it->fpr95_mean, "", cw - 19);
      }
    }
    out += "\n";
  }
  return out;
}

std::string format_summary_table(const EvalReport& report) { return format_summary_table(to_summary(report)); }

}  // namespace rfdeep

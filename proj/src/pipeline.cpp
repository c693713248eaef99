#include "rfdeep/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "rfdeep/confidence.hpp"
#include "rfdeep/error.hpp"
#include "rfdeep/feature_table.hpp"
#include "rfdeep/rng.hpp"
#include "rfdeep/tree_shap.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace rfdeep {

// ---------------------------------------------------------------------------
// Configuration

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

json rf_to_json(const RfConfig& c) {
  return {{"forest", c.forest}, {"rfe", c.rfe}, {"rfe_target", c.rfe_target}, {"rfe_step", c.rfe_step}};
}

RfConfig rf_from_json(const json& j, const std::string& where, RfConfig c) {
  check_keys(j, where, {"forest", "rfe", "rfe_target", "rfe_step"});
  if (j.contains("forest")) {
    check_keys(j["forest"], where + ".forest",
               {"n_trees", "max_depth", "max_features", "min_samples_split", "balanced"});
    json merged = c.forest;
    merged.update(j["forest"]);
    c.forest = merged.get<ForestParams>();
  }
  read_opt(j, "rfe", c.rfe);
  read_opt(j, "rfe_target", c.rfe_target);
  read_opt(j, "rfe_step", c.rfe_step);
  return c;
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  return (p.is_absolute() || base.empty()) ? p : base / p;
}

}  // namespace

void RunConfig::validate() const {
  if (work_dir.empty()) throw ConfigError("paths.work_dir must be set");
  if (!manifest && cohorts.empty()) throw ConfigError("config needs cohorts or paths.manifest");
  for (const auto& c : cohorts) c.validate();
  encoder.validate();
  if (crops.k < 1) throw ConfigError("crops.k must be >= 1");
  for (int a = 0; a < 3; ++a) {
    if (crops.size[a] < 1) throw ConfigError("crops.size must be positive");
  }
  if (crops.jitter_radius < 0) throw ConfigError("crops.jitter must be >= 0");
  for (const RfConfig* rf : {&deep_rf, &radiomics_rf}) {
    if (rf->rfe_target < 1) throw ConfigError("rfe_target must be >= 1");
  }
  if (!(score_temperature > 0.0)) throw ConfigError("scores.temperature must be > 0");
  if (protocol.n_seeds < 1) throw ConfigError("protocol.n_seeds must be >= 1");
  if (!(protocol.train_frac > 0.0 && protocol.train_frac < 1.0)) {
    throw ConfigError("protocol.train_frac must be in (0, 1)");
  }
  if (ablation_stages.empty()) throw ConfigError("ablation.stages must not be empty");
  std::set<StageId> seen(ablation_stages.begin(), ablation_stages.end());
  if (seen.size() != ablation_stages.size()) throw ConfigError("ablation.stages has duplicates");
  if (shap.max_rows < 0) throw ConfigError("shap.max_rows must be >= 0");
}

RunConfig default_run_config() {
  RunConfig c;
  c.radiomics_rf.rfe = true;
  c.radiomics_rf.rfe_target = 12;
  c.shap.max_rows = 32;
  return c;
}

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
  RunConfig c = default_run_config();
  try {
    check_keys(j, "config", {"paths", "dataset_name", "cohorts", "encoder", "crops", "rf", "scores", "protocol",
                             "ablation", "shap", "pipeline"});
    if (j.contains("paths")) {
      const json& p = j["paths"];
      check_keys(p, "paths", {"work_dir", "manifest"});
      if (p.contains("work_dir")) c.work_dir = p["work_dir"].get<std::string>();
      if (p.contains("manifest") && !p["manifest"].is_null()) c.manifest = fs::path(p["manifest"].get<std::string>());
    }
    c.work_dir = resolve(c.work_dir, base_dir);
    if (c.manifest) c.manifest = resolve(*c.manifest, base_dir);
    read_opt(j, "dataset_name", c.dataset_name);
    if (j.contains("cohorts")) c.cohorts = j["cohorts"].get<std::vector<CohortSpec>>();
    if (j.contains("encoder")) {
      check_keys(j["encoder"], "encoder", {"patch_size", "widths", "seed"});
      c.encoder = j["encoder"].get<ToyEncoderConfig>();
    }
    if (j.contains("crops")) {
      const json& cr = j["crops"];
      check_keys(cr, "crops", {"k", "size", "jitter"});
      read_opt(cr, "k", c.crops.k);
      read_opt(cr, "size", c.crops.size);
      read_opt(cr, "jitter", c.crops.jitter_radius);
    }
    if (j.contains("rf")) {
      check_keys(j["rf"], "rf", {"deep", "radiomics"});
      if (j["rf"].contains("deep")) c.deep_rf = rf_from_json(j["rf"]["deep"], "rf.deep", c.deep_rf);
      if (j["rf"].contains("radiomics")) {
        c.radiomics_rf = rf_from_json(j["rf"]["radiomics"], "rf.radiomics", c.radiomics_rf);
      }
    }
    if (j.contains("scores")) {
      check_keys(j["scores"], "scores", {"temperature"});
      read_opt(j["scores"], "temperature", c.score_temperature);
    }
    if (j.contains("protocol")) {
      const json& p = j["protocol"];
      check_keys(p, "protocol", {"train_frac", "n_seeds", "base_seed"});
      read_opt(p, "train_frac", c.protocol.train_frac);
      read_opt(p, "n_seeds", c.protocol.n_seeds);
      read_opt(p, "base_seed", c.protocol.base_seed);
    }
    if (j.contains("ablation")) {
      check_keys(j["ablation"], "ablation", {"stages"});
      if (j["ablation"].contains("stages")) {
        c.ablation_stages.clear();
        for (const auto& s : j["ablation"]["stages"]) c.ablation_stages.push_back(parse_stage(s.get<std::string>()));
      }
    }
    if (j.contains("shap")) {
      check_keys(j["shap"], "shap", {"max_rows"});
      read_opt(j["shap"], "max_rows", c.shap.max_rows);
    }
    if (j.contains("pipeline")) {
      check_keys(j["pipeline"], "pipeline", {"ablate", "explain"});
      read_opt(j["pipeline"], "ablate", c.pipeline_ablate);
      read_opt(j["pipeline"], "explain", c.pipeline_explain);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const DataError& e) {
    // parse_label / parse_stage report bad enum names as data errors.
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

json run_config_to_json(const RunConfig& c) {
  json stages = json::array();
  for (StageId s : c.ablation_stages) stages.push_back(std::string(stage_name(s)));
  json paths = {{"work_dir", c.work_dir.generic_string()}};
  if (c.manifest) paths["manifest"] = c.manifest->generic_string();
  return {{"paths", paths},
          {"dataset_name", c.dataset_name},
          {"cohorts", c.cohorts},
          {"encoder", c.encoder},
          {"crops", {{"k", c.crops.k}, {"size", c.crops.size}, {"jitter", c.crops.jitter_radius}}},
          {"rf", {{"deep", rf_to_json(c.deep_rf)}, {"radiomics", rf_to_json(c.radiomics_rf)}}},
          {"scores", {{"temperature", c.score_temperature}}},
          {"protocol",
           {{"train_frac", c.protocol.train_frac},
            {"n_seeds", c.protocol.n_seeds},
            {"base_seed", c.protocol.base_seed}}},
          {"ablation", {{"stages", stages}}},
          {"shap", {{"max_rows", c.shap.max_rows}}},
          {"pipeline", {{"ablate", c.pipeline_ablate}, {"explain", c.pipeline_explain}}}};
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

std::uint64_t crop_seed(std::uint64_t base_seed, const std::string& scan_id) {
  return derive_seed(base_seed, "crops", fnv1a64(scan_id));
}

// ---------------------------------------------------------------------------
// Steps

namespace {

WorkPaths paths_of(const RunConfig& cfg) { return WorkPaths{cfg.work_dir}; }

fs::path raw_manifest_path(const RunConfig& cfg) {
  return cfg.manifest ? *cfg.manifest : paths_of(cfg).raw_manifest();
}

void ensure_parent(const fs::path& p) {
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  if (ec) throw DataError("cannot create " + p.parent_path().string() + ": " + ec.message());
}

void require(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) throw DataError("missing " + p.string() + " (run " + hint + " first)");
}

CohortManifest load_raw_manifest(const RunConfig& cfg) {
  const fs::path p = raw_manifest_path(cfg);
  require(p, "gen");
  return load_manifest(p);
}

// Rethrows the first per-item failure, keeping its scan id.
void rethrow_first(const std::vector<std::exception_ptr>& errors) {
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<int> columns_by_name(const FeatureTable& table, const std::vector<std::string>& names) {
  std::vector<int> cols;
  for (const auto& n : names) {
    auto it = std::find(table.names.begin(), table.names.end(), n);
    if (it == table.names.end()) throw DataError("feature table lacks model column '" + n + "'");
    cols.push_back(static_cast<int>(it - table.names.begin()));
  }
  return cols;
}

Forest train_model(const FeatureTable& table, const RfConfig& rf, std::uint64_t seed) {
  std::vector<int> rows(table.rows.size());
  std::iota(rows.begin(), rows.end(), 0);
  std::vector<int> y;
  for (const auto& r : table.rows) y.push_back(r.label == CohortLabel::OOD ? 1 : 0);
  Matrix X = table.matrix(rows);
  std::vector<int> cols(table.names.size());
  std::iota(cols.begin(), cols.end(), 0);
  if (rf.rfe) {
    cols = rfe(X, y, rf.forest, std::min(rf.rfe_target, X.cols), rf.rfe_step, derive_seed(seed, "rfe", 0));
    X = X.select_columns(cols);
  }
  std::vector<std::string> names;
  for (int c : cols) names.push_back(table.names[c]);
  return fit_forest(X, y, rf.forest, derive_seed(seed, "forest", 0), names);
}

void write_report_files(const EvalReport& report, const fs::path& dir) {
  write_per_seed_csv(report, dir / "per_seed.csv");
  write_summary_csv(report, dir / "summary.csv");
  write_summary_long_csv(report, dir / "summary_long.csv");
}

}  // namespace

CohortManifest cmd_gen(const RunConfig& cfg) {
  if (cfg.manifest) return load_manifest(*cfg.manifest);
  if (cfg.cohorts.empty()) throw ConfigError("gen: no cohorts configured");
  return make_cohort(cfg.cohorts, paths_of(cfg).data_dir(), cfg.dataset_name);
}

CohortManifest cmd_encode(const RunConfig& cfg) {
  const WorkPaths wp = paths_of(cfg);
  const CohortManifest raw = load_raw_manifest(cfg);
  CohortManifest enc = encode_cohort(raw, cfg.encoder, wp.encoded_dir());
  save_manifest(enc, wp.encoded_manifest());
  return enc;
}

void cmd_extract(const RunConfig& cfg) {
  const WorkPaths wp = paths_of(cfg);
  require(wp.encoded_manifest(), "encode");
  const CohortManifest m = load_manifest(wp.encoded_manifest());
  const std::size_t n = m.records.size();
  std::vector<std::vector<FeatureVector>> deep(n);
  std::vector<FeatureVector> rad(n);
  std::vector<std::exception_ptr> errors(n);

#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    const ScanRecord& r = m.records[i];
    try {
      const ScanData scan = load_scan(r, true);
      try {
        const auto crops = tumor_crops(scan.mask, cfg.crops, crop_seed(cfg.protocol.base_seed, r.scan_id));
        deep[i] = deep_feature_vectors(r.scan_id, *scan.pyramid, scan.mask, crops);
        rad[i] = radiomics_lite(r.scan_id, scan.volume, scan.mask);
      } catch (const DataError& e) {
        throw ScanError(r.scan_id, "scan '" + r.scan_id + "': " + e.what());
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  rethrow_first(errors);

  FeatureTable dt;
  dt.kind = FeatureKind::Deep;
  FeatureTable rt;
  rt.kind = FeatureKind::Radiomics;
  rt.names = radiomics_feature_names();
  for (std::size_t i = 0; i < n; ++i) {
    const ScanRecord& r = m.records[i];
    for (std::size_t c = 0; c < deep[i].size(); ++c) {
      if (dt.names.empty()) dt.names = deep[i][c].names;
      if (deep[i][c].names != dt.names) {
        throw ScanError(r.scan_id, "scan '" + r.scan_id + "': deep feature layout differs from other scans");
      }
      dt.rows.push_back({r.scan_id, r.cohort_label, static_cast<int>(c), deep[i][c].values});
    }
    rt.rows.push_back({r.scan_id, r.cohort_label, 0, rad[i].values});
  }
  ensure_parent(wp.deep_csv());
  write_feature_csv(dt, wp.deep_csv());
  write_feature_csv(rt, wp.radiomics_csv());
}

void cmd_score(const RunConfig& cfg) {
  const WorkPaths wp = paths_of(cfg);
  const CohortManifest m = load_raw_manifest(cfg);
  const std::size_t n = m.records.size();
  std::vector<std::vector<ScoreRow>> per_scan(n);
  std::vector<std::exception_ptr> errors(n);

#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    const ScanRecord& r = m.records[i];
    try {
      const ScanData scan = load_scan(r, false);
      for (ScoreMethod method : kAllScoreMethods) {
        const ScoreConfig sc{method, cfg.score_temperature};
        per_scan[i].push_back({scan_score(r.scan_id, scan.logits, scan.mask, sc), r.cohort_label});
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  rethrow_first(errors);

  std::vector<ScoreRow> rows;
  for (auto& v : per_scan) rows.insert(rows.end(), v.begin(), v.end());
  ensure_parent(wp.scores_csv());
  write_score_csv(rows, wp.scores_csv());
}

void cmd_train(const RunConfig& cfg, TrainKind kind) {
  const WorkPaths wp = paths_of(cfg);
  ensure_parent(wp.deep_model());
  if (kind != TrainKind::Radiomics) {
    require(wp.deep_csv(), "extract");
    const FeatureTable t = read_feature_csv(wp.deep_csv(), FeatureKind::Deep);
    save_forest(train_model(t, cfg.deep_rf, derive_seed(cfg.protocol.base_seed, "train", 0)), wp.deep_model());
  }
  if (kind != TrainKind::Deep) {
    require(wp.radiomics_csv(), "extract");
    const FeatureTable t = read_feature_csv(wp.radiomics_csv(), FeatureKind::Radiomics);
    save_forest(train_model(t, cfg.radiomics_rf, derive_seed(cfg.protocol.base_seed, "train", 1)),
                wp.radiomics_model());
  }
}

EvalReport cmd_eval(const RunConfig& cfg) {
  const WorkPaths wp = paths_of(cfg);
  const CohortManifest m = load_raw_manifest(cfg);
  require(wp.deep_csv(), "extract");
  require(wp.scores_csv(), "score");
  const FeatureTable deep = read_feature_csv(wp.deep_csv(), FeatureKind::Deep);
  const FeatureTable rad = read_feature_csv(wp.radiomics_csv(), FeatureKind::Radiomics);
  const std::vector<ScoreRow> scores = read_score_csv(wp.scores_csv());
  const EvalInputs in{&m, &deep, &rad, &scores};
  const EvalReport report = repeated_split_eval(in, cfg.deep_rf, cfg.radiomics_rf, cfg.protocol);
  fs::create_directories(wp.eval_dir());
  write_report_files(report, wp.eval_dir());
  return report;
}

EvalReport cmd_ablate(const RunConfig& cfg) {
  const WorkPaths wp = paths_of(cfg);
  const CohortManifest m = load_raw_manifest(cfg);
  require(wp.deep_csv(), "extract");
  const FeatureTable deep = read_feature_csv(wp.deep_csv(), FeatureKind::Deep);
  const EvalReport report = stage_ablation(m, deep, cfg.deep_rf, cfg.protocol, cfg.ablation_stages);
  fs::create_directories(wp.ablation_dir());
  write_report_files(report, wp.ablation_dir());
  return report;
}

void cmd_explain(const RunConfig& cfg) {
  const WorkPaths wp = paths_of(cfg);
  require(wp.deep_model(), "train");
  require(wp.deep_csv(), "extract");
  const Forest forest = load_forest(wp.deep_model());
  const FeatureTable table = read_feature_csv(wp.deep_csv(), FeatureKind::Deep);
  const std::vector<int> cols = columns_by_name(table, forest.feature_names);

  // Explain each scan's unjittered crop.
  std::vector<int> rows;
  for (int r = 0; r < static_cast<int>(table.rows.size()); ++r) {
    if (table.rows[r].crop_index != 0) continue;
    if (cfg.shap.max_rows > 0 && static_cast<int>(rows.size()) >= cfg.shap.max_rows) break;
    rows.push_back(r);
  }
  if (rows.empty()) throw DataError("explain: no rows to explain");
  const Matrix X = table.matrix(rows).select_columns(cols);
  const auto expl = tree_shap_batch(forest, X);

  fs::create_directories(wp.explain_dir());
  std::ofstream vals(wp.explain_dir() / "shap_values.csv", std::ios::trunc);
  std::string header = "scan_id,cohort_label,base_value,prediction";
  for (const auto& n : forest.feature_names) header += "," + n;
  vals << header << "\n";
  const int d = forest.n_features;
  std::vector<double> mean_abs(d, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const FeatureRow& fr = table.rows[rows[i]];
    std::string line = fmt::format("{},{},{},{}", fr.scan_id, label_name(fr.label), format_real(expl[i].base_value),
                                   format_real(expl[i].prediction));
    for (int c = 0; c < d; ++c) {
      line += "," + format_real(expl[i].contributions[c]);
      mean_abs[c] += std::abs(expl[i].contributions[c]) / static_cast<double>(rows.size());
    }
    vals << line << "\n";
  }

  const auto mdi = mdi_importance(forest);
  std::ofstream imp(wp.explain_dir() / "shap_importance.csv", std::ios::trunc);
  imp << "feature,mean_abs_shap,mdi\n";
  for (int c = 0; c < d; ++c) {
    imp << fmt::format("{},{},{}\n", forest.feature_names[c], format_real(mean_abs[c]), format_real(mdi[c]));
  }

  std::ofstream st(wp.explain_dir() / "stage_importance.csv", std::ios::trunc);
  st << "stage,mean_abs_shap,mdi\n";
  for (StageId s : kAllStages) {
    const std::string prefix = std::string(stage_name(s)) + "_";
    double a = 0.0, b = 0.0;
    for (int c = 0; c < d; ++c) {
      if (forest.feature_names[c].rfind(prefix, 0) == 0) {
        a += mean_abs[c];
        b += mdi[c];
      }
    }
    st << fmt::format("{},{},{}\n", stage_name(s), format_real(a), format_real(b));
  }
}

std::string cmd_report(const RunConfig& cfg) {
  const WorkPaths wp = paths_of(cfg);
  const fs::path src = wp.eval_dir() / "summary_long.csv";
  require(src, "eval");
  std::string text = format_summary_table(read_summary_long_csv(src));
  const fs::path abl = wp.ablation_dir() / "summary_long.csv";
  if (fs::exists(abl)) text += "\nStage ablation\n" + format_summary_table(read_summary_long_csv(abl));
  std::ofstream out(wp.eval_dir() / "summary.txt", std::ios::trunc);
  if (!out) throw DataError("cannot write summary.txt");
  out << text;
  return text;
}

// ---------------------------------------------------------------------------
// Errors

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e)) return 3;
  return 4;
}

std::string error_line(const std::string& stage, const std::exception& e) {
  const int code = exit_code_for(e);
  json j = {{"error", stage + ": " + e.what()},
            {"stage", stage},
            {"code", code},
            {"kind", code == 2 ? "config" : code == 3 ? "data" : "invariant"},
            {"scan_id", nullptr}};
  if (auto* se = dynamic_cast<const ScanError*>(&e)) j["scan_id"] = se->scan_id();
  return j.dump();
}

// ---------------------------------------------------------------------------
// Fingerprints and orchestration

namespace {

std::string hex(std::uint64_t v) { return fmt::format("{:016x}", v); }

std::string file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return "missing";
  std::ostringstream ss;
  ss << in.rdbuf();
  return hex(fnv1a64(ss.str()));
}

// Artifact paths listed in a manifest, without validating the files.
std::vector<fs::path> manifest_files(const fs::path& manifest, std::initializer_list<const char*> roles) {
  std::ifstream in(manifest);
  if (!in) return {};
  json j = json::parse(in, nullptr, false);
  std::vector<fs::path> out;
  if (j.is_discarded() || !j.contains("records") || !j["records"].is_array()) return out;
  for (const auto& r : j["records"]) {
    for (const char* role : roles) {
      if (!r.contains(role)) continue;
      if (r[role].is_string()) {
        out.push_back(resolve(r[role].get<std::string>(), manifest.parent_path()));
      } else if (r[role].is_array()) {
        for (const auto& p : r[role]) {
          if (p.is_string()) out.push_back(resolve(p.get<std::string>(), manifest.parent_path()));
        }
      }
    }
  }
  return out;
}

struct Step {
  std::string name;
  json config;
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
};

Step describe(const RunConfig& cfg, const std::string& step) {
  const WorkPaths wp = paths_of(cfg);
  const json full = run_config_to_json(cfg);
  const fs::path raw = raw_manifest_path(cfg);
  Step s{step, json::object(), {}, {}};
  auto with_manifest = [&](const fs::path& m, std::initializer_list<const char*> roles) {
    s.inputs.push_back(m);
    for (auto& p : manifest_files(m, roles)) s.inputs.push_back(p);
  };
  if (step == "gen") {
    if (cfg.manifest) {
      s.config = {{"manifest", cfg.manifest->generic_string()}};
    } else {
      s.config = {{"dataset_name", full["dataset_name"]}, {"cohorts", full["cohorts"]}};
    }
    s.outputs = {raw};
  } else if (step == "encode") {
    s.config = full["encoder"];
    with_manifest(raw, {"volume"});
    s.outputs = {wp.encoded_manifest()};
  } else if (step == "extract") {
    s.config = {{"crops", full["crops"]}, {"base_seed", cfg.protocol.base_seed}};
    with_manifest(wp.encoded_manifest(), {"volume", "mask", "pyramid"});
    s.outputs = {wp.deep_csv(), wp.radiomics_csv()};
  } else if (step == "score") {
    s.config = full["scores"];
    with_manifest(raw, {"mask", "logits"});
    s.outputs = {wp.scores_csv()};
  } else if (step == "train") {
    s.config = {{"rf", full["rf"]}, {"base_seed", cfg.protocol.base_seed}};
    s.inputs = {wp.deep_csv(), wp.radiomics_csv()};
    s.outputs = {wp.deep_model(), wp.radiomics_model()};
  } else if (step == "eval") {
    s.config = {{"rf", full["rf"]}, {"protocol", full["protocol"]}};
    s.inputs = {raw, wp.deep_csv(), wp.radiomics_csv(), wp.scores_csv()};
    s.outputs = {wp.eval_dir() / "per_seed.csv", wp.eval_dir() / "summary.csv",
                 wp.eval_dir() / "summary_long.csv"};
  } else if (step == "ablate") {
    s.config = {{"rf", full["rf"]["deep"]}, {"protocol", full["protocol"]}, {"ablation", full["ablation"]}};
    s.inputs = {raw, wp.deep_csv()};
    s.outputs = {wp.ablation_dir() / "per_seed.csv", wp.ablation_dir() / "summary.csv",
                 wp.ablation_dir() / "summary_long.csv"};
  } else if (step == "explain") {
    s.config = full["shap"];
    s.inputs = {wp.deep_model(), wp.deep_csv()};
    s.outputs = {wp.explain_dir() / "shap_values.csv", wp.explain_dir() / "shap_importance.csv",
                 wp.explain_dir() / "stage_importance.csv"};
  } else if (step == "report") {
    s.inputs = {wp.eval_dir() / "summary_long.csv", wp.ablation_dir() / "summary_long.csv"};
    s.outputs = {wp.eval_dir() / "summary.txt"};
  } else {
    throw InvariantError("unknown pipeline step '" + step + "'");
  }
  return s;
}

std::uint64_t fingerprint(const Step& s) {
  json inputs = json::array();
  for (const auto& p : s.inputs) inputs.push_back(file_hash(p));
  // json objects are key-sorted, so dump() is canonical.
  const json doc = {{"step", s.name}, {"config", s.config}, {"inputs", inputs}};
  return fnv1a64(doc.dump());
}

bool up_to_date(const Step& s, const fs::path& stamp, std::uint64_t fp) {
  for (const auto& o : s.outputs) {
    if (!fs::exists(o)) return false;
  }
  std::ifstream in(stamp);
  if (!in) return false;
  const json j = json::parse(in, nullptr, false);
  return !j.is_discarded() && j.value("fingerprint", "") == hex(fp);
}

void write_stamp(const fs::path& stamp, std::uint64_t fp) {
  ensure_parent(stamp);
  std::ofstream out(stamp, std::ios::trunc);
  out << json{{"fingerprint", hex(fp)}}.dump() << "\n";
}

}  // namespace

std::uint64_t step_fingerprint(const RunConfig& cfg, const std::string& step) {
  return fingerprint(describe(cfg, step));
}

int cmd_pipeline(const RunConfig& cfg, std::ostream& log, std::ostream& err, const PipelineOptions& opts) {
  std::vector<std::string> steps = {"gen", "encode", "extract", "score", "train", "eval"};
  if (cfg.pipeline_ablate) steps.push_back("ablate");
  if (cfg.pipeline_explain) steps.push_back("explain");
  steps.push_back("report");

  const WorkPaths wp = paths_of(cfg);
  for (const auto& name : steps) {
    try {
      const Step s = describe(cfg, name);
      const std::uint64_t fp = fingerprint(s);
      if (!opts.force && up_to_date(s, wp.stamp(name), fp)) {
        log << fmt::format("[{}] up to date, skipped\n", name);
        continue;
      }
      const auto t0 = std::chrono::steady_clock::now();
      if (name == "gen") {
        cmd_gen(cfg);
      } else if (name == "encode") {
        cmd_encode(cfg);
      } else if (name == "extract") {
        cmd_extract(cfg);
      } else if (name == "score") {
        cmd_score(cfg);
      } else if (name == "train") {
        cmd_train(cfg);
      } else if (name == "eval") {
        cmd_eval(cfg);
      } else if (name == "ablate") {
        cmd_ablate(cfg);
      } else if (name == "explain") {
        cmd_explain(cfg);
      } else {
        cmd_report(cfg);
      }
      // Outputs may feed this step's own inputs (gen), so re-fingerprint.
      write_stamp(wp.stamp(name), fingerprint(describe(cfg, name)));
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log << fmt::format("[{}] done in {:.2f} s\n", name, secs);
    } catch (const std::exception& e) {
      err << error_line(name, e) << std::endl;
      return exit_code_for(e);
    }
  }
  return 0;
}

}  // namespace rfdeep

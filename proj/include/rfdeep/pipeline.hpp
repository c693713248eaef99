#pragma once

// Run configuration, per-step commands and the cached end-to-end pipeline
// behind the `rfdeep` CLI.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rfdeep/evaluation.hpp"
#include "rfdeep/region_features.hpp"
#include "rfdeep/synthetic.hpp"

namespace rfdeep {

struct ShapConfig {
  int max_rows = 0;  // 0 = every deep feature row
};

struct RunConfig {
  std::filesystem::path work_dir = "work";
  /// Existing manifest to use instead of generated cohorts.
  std::optional<std::filesystem::path> manifest;
  std::string dataset_name = "synthetic";
  std::vector<CohortSpec> cohorts;
  ToyEncoderConfig encoder;
  CropConfig crops;
  RfConfig deep_rf;
  RfConfig radiomics_rf;
  double score_temperature = 1.0;
  ProtocolConfig protocol;
  std::vector<StageId> ablation_stages{kAllStages.begin(), kAllStages.end()};
  ShapConfig shap;
  bool pipeline_ablate = false;
  bool pipeline_explain = false;

  /// Throws ConfigError.
  void validate() const;
};

RunConfig default_run_config();

/// Unknown keys are rejected. Relative paths are resolved against `base_dir`.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

/// Artifact locations inside the work directory.
struct WorkPaths {
  std::filesystem::path root;

  std::filesystem::path data_dir() const { return root / "data"; }
  std::filesystem::path raw_manifest() const { return data_dir() / "manifest.json"; }
  std::filesystem::path encoded_dir() const { return root / "encoded"; }
  std::filesystem::path encoded_manifest() const { return encoded_dir() / "manifest.json"; }
  std::filesystem::path deep_csv() const { return root / "features" / "deep.csv"; }
  std::filesystem::path radiomics_csv() const { return root / "features" / "radiomics.csv"; }
  std::filesystem::path scores_csv() const { return root / "scores" / "baselines.csv"; }
  std::filesystem::path deep_model() const { return root / "models" / "rf_deep.json"; }
  std::filesystem::path radiomics_model() const { return root / "models" / "rf_radiomics.json"; }
  std::filesystem::path eval_dir() const { return root / "eval"; }
  std::filesystem::path ablation_dir() const { return root / "ablation"; }
  std::filesystem::path explain_dir() const { return root / "explain"; }
  std::filesystem::path stamp(const std::string& step) const { return root / ".stamps" / (step + ".json"); }
};

/// Seed of the crop-jitter stream for one scan.
std::uint64_t crop_seed(std::uint64_t base_seed, const std::string& scan_id);

// Single steps. Each reads the artifacts of the previous steps from the work
// directory and always runs.
CohortManifest cmd_gen(const RunConfig& cfg);
CohortManifest cmd_encode(const RunConfig& cfg);
void cmd_extract(const RunConfig& cfg);
void cmd_score(const RunConfig& cfg);
enum class TrainKind { Deep, Radiomics, Both };
void cmd_train(const RunConfig& cfg, TrainKind kind = TrainKind::Both);
EvalReport cmd_eval(const RunConfig& cfg);
EvalReport cmd_ablate(const RunConfig& cfg);
void cmd_explain(const RunConfig& cfg);
/// Formats eval/summary_long.csv, writes eval/summary.txt and returns the text.
std::string cmd_report(const RunConfig& cfg);

/// Process exit code for an exception: 2 config, 3 data, 4 invariant/other.
int exit_code_for(const std::exception& e);

/// One-line JSON error record: {"error":..,"stage":..,"code":..,"scan_id":..}.
std::string error_line(const std::string& stage, const std::exception& e);

/// Hash of a step's configuration slice and input file contents.
std::uint64_t step_fingerprint(const RunConfig& cfg, const std::string& step);

struct PipelineOptions {
  bool force = false;
};

/// gen -> encode -> extract -> score -> train -> eval -> report (plus ablate
/// and explain when enabled). Steps whose fingerprint and outputs are
/// unchanged are skipped. Progress goes to `log`; on the first failure an
/// error line goes to `err` and the matching exit code is returned.
int cmd_pipeline(const RunConfig& cfg, std::ostream& log, std::ostream& err, const PipelineOptions& opts = {});

}  // namespace rfdeep

// rfdeep: command line front end for the OOD detection pipeline.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "rfdeep/error.hpp"
#include "rfdeep/parallel.hpp"
#include "rfdeep/pipeline.hpp"

namespace fs = std::filesystem;
using namespace rfdeep;

namespace {

struct Options {
  std::string config;
  int threads = 0;
  std::optional<std::uint64_t> seed;
  std::string specs;
  std::string encoder;
  std::string work_dir;
  std::string manifest;
  std::string kind = "all";
  bool force = false;
};

nlohmann::json read_json(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ConfigError(std::string("cannot open ") + what + " " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(what) + " " + path + ": " + e.what());
  }
}

// Command-line overrides are applied to the JSON document before parsing, so
// they go through the same validation as file settings.
RunConfig build_config(const Options& o) {
  nlohmann::json j = nlohmann::json::object();
  fs::path base;
  if (!o.config.empty()) {
    j = read_json(o.config, "config");
    base = fs::path(o.config).parent_path();
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  auto abs = [](const std::string& p) { return fs::absolute(p).generic_string(); };
  if (!o.specs.empty()) {
    nlohmann::json specs = read_json(o.specs, "specs");
    j["cohorts"] = specs.is_array() ? specs : specs.value("cohorts", nlohmann::json::array());
  }
  if (!o.encoder.empty()) j["encoder"] = read_json(o.encoder, "encoder config");
  if (!o.work_dir.empty()) j["paths"]["work_dir"] = abs(o.work_dir);
  if (!o.manifest.empty()) j["paths"]["manifest"] = abs(o.manifest);
  if (o.seed) j["protocol"]["base_seed"] = *o.seed;
  return run_config_from_json(j, base);
}

int run(const std::string& command, const Options& o) {
  RunConfig cfg;
  try {
    cfg = build_config(o);
    if (o.threads > 0) set_threads(o.threads);
  } catch (const std::exception& e) {
    std::cerr << error_line("config", e) << std::endl;
    return exit_code_for(e);
  }
  if (command == "pipeline") return cmd_pipeline(cfg, std::cout, std::cerr, PipelineOptions{o.force});

  try {
    if (command == "gen") {
      const auto m = cmd_gen(cfg);
      std::cout << "generated " << m.records.size() << " scans\n";
    } else if (command == "encode") {
      const auto m = cmd_encode(cfg);
      std::cout << "encoded " << m.records.size() << " scans\n";
    } else if (command == "extract") {
      cmd_extract(cfg);
    } else if (command == "score") {
      cmd_score(cfg);
    } else if (command == "train") {
      if (o.kind != "all" && o.kind != "deep" && o.kind != "radiomics") {
        throw ConfigError("--kind must be deep, radiomics or all");
      }
      cmd_train(cfg, o.kind == "deep" ? TrainKind::Deep : o.kind == "radiomics" ? TrainKind::Radiomics
                                                                                : TrainKind::Both);
    } else if (command == "eval") {
      std::cout << format_summary_table(cmd_eval(cfg));
    } else if (command == "ablate") {
      std::cout << format_summary_table(cmd_ablate(cfg));
    } else if (command == "explain") {
      cmd_explain(cfg);
    } else if (command == "report") {
      std::cout << cmd_report(cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << error_line(command, e) << std::endl;
    return exit_code_for(e);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random-forest OOD detection on encoder features (synthetic CT harness)"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config, "JSON run configuration");
  app.add_option("--threads", o.threads, "Cap on worker threads")->check(CLI::PositiveNumber);
  app.add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { o.seed = s; },
                                         "Override protocol.base_seed");
  app.add_option("--work-dir", o.work_dir, "Override paths.work_dir");

  auto* gen = app.add_subcommand("gen", "Generate synthetic cohorts");
  gen->add_option("--specs", o.specs, "JSON array of cohort specs");
  gen->add_option("--out-dir", o.work_dir, "Work directory (same as --work-dir)");
  auto* enc = app.add_subcommand("encode", "Run the toy encoder over a manifest");
  enc->add_option("--manifest", o.manifest, "Manifest to encode instead of the generated one");
  enc->add_option("--encoder", o.encoder, "JSON encoder settings");
  enc->add_option("--out", o.work_dir, "Work directory (same as --work-dir)");
  app.add_subcommand("extract", "Crop and extract deep and radiomics features");
  app.add_subcommand("score", "Training-free confidence scores");
  auto* train = app.add_subcommand("train", "Fit RF-Deep and RF-Radiomics on all scans");
  train->add_option("--kind", o.kind, "deep, radiomics or all");
  app.add_subcommand("eval", "Repeated patient-level split evaluation");
  app.add_subcommand("ablate", "Per-stage RF-Deep evaluation");
  app.add_subcommand("explain", "TreeSHAP attributions for RF-Deep");
  app.add_subcommand("report", "Print the summary table");
  auto* pipe = app.add_subcommand("pipeline", "Run every step, skipping up-to-date ones");
  pipe->add_flag("--force", o.force, "Rerun every step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  return run(app.get_subcommands().front()->get_name(), o);
}

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "json.hpp"
#include "oracles.hpp"
#include "rfdeep/confidence.hpp"
#include "rfdeep/evaluation.hpp"
#include "rfdeep/forest.hpp"
#include "rfdeep/metrics.hpp"
#include "rfdeep/parallel.hpp"
#include "rfdeep/pipeline.hpp"
#include "rfdeep/tensor_store.hpp"
#include "rfdeep/tree_shap.hpp"

#ifndef RFDEEP_CLI
#error "RFDEEP_CLI must name the rfdeep executable"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rfdeep;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome metric_oracles() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const int n = 2 + static_cast<int>(rng() % 499);
    const int levels = 1 + static_cast<int>(rng() % 30);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      y[i] = i == 0 ? 0 : i == 1 ? 1 : static_cast<int>(rng() % 2);
      s[i] = static_cast<double>(rng() % levels) + 0.5 * y[i] * static_cast<double>(rng() % 2);
    }
    if (auroc(s, y) != oracle::pairwise_auroc(s, y)) ++mismatches;
    if (fpr_at_tpr(s, y, 0.95) != oracle::threshold_scan_fpr(s, y, 0.95)) ++mismatches;
  }
  const double secs = seconds_since(t0);
  o.require(mismatches == 0, std::to_string(mismatches) + " oracle mismatches");
  o.require(secs < 30.0, "took " + fmt_double(secs) + " s");
  if (o.pass) o.detail = "1000 sets exact, " + fmt_double(secs) + " s";
  return o;
}

Outcome shap_oracle() {
  Outcome o;
  std::mt19937_64 rng(1002);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double max_err = 0.0, max_eff = 0.0;
  for (int t = 0; t < 200; ++t) {
    const int d = 1 + static_cast<int>(rng() % 4);
    const Tree tree = oracle::random_tree(rng, d, 12);
    int leaves = 0;
    for (const auto& n : tree.nodes) leaves += n.is_leaf();
    o.require(leaves <= 12, "tree with too many leaves");
    Forest f;
    f.n_features = d;
    f.trees = {tree};
    for (int k = 0; k < 4; ++k) {
      std::vector<double> x(d);
      for (double& v : x) v = u(rng);
      const auto e = tree_shap(f, x);
      const auto ref = oracle::brute_shapley(tree, x);
      double sum = e.base_value;
      for (int j = 0; j < d; ++j) {
        max_err = std::max(max_err, std::abs(e.contributions[j] - ref[j]));
        sum += e.contributions[j];
      }
      max_eff = std::max(max_eff, std::abs(sum - predict_proba(f, x)[1]));
    }
  }
  // Multi-tree forests, including fitted ones.
  for (int t = 0; t < 20; ++t) {
    Forest f;
    f.n_features = 4;
    for (int k = 0; k < 10; ++k) f.trees.push_back(oracle::random_tree(rng, 4, 12));
    for (int k = 0; k < 10; ++k) {
      std::vector<double> x(4);
      for (double& v : x) v = u(rng);
      const auto e = tree_shap(f, x);
      double sum = e.base_value;
      for (double c : e.contributions) sum += c;
      max_eff = std::max(max_eff, std::abs(sum - predict_proba(f, x)[1]));
    }
  }
  Matrix X(120, 6);
  std::vector<int> y(120);
  for (int i = 0; i < 120; ++i) {
    y[i] = i % 2;
    for (int j = 0; j < 6; ++j) X.at(i, j) = u(rng) + (j == 0 ? y[i] * 0.5 : 0.0);
  }
  ForestParams p;
  p.n_trees = 50;
  const Forest fitted = fit_forest(X, y, p, 3);
  for (const auto& e : tree_shap_batch(fitted, X)) {
    double sum = e.base_value;
    for (double c : e.contributions) sum += c;
    max_eff = std::max(max_eff, std::abs(sum - e.prediction));
  }
  o.require(max_err <= 1e-9, "max oracle error " + fmt_double(max_err));
  o.require(max_eff <= 1e-9, "max efficiency gap " + fmt_double(max_eff));
  if (o.pass) o.detail = "max |err| " + fmt_double(max_err) + ", max efficiency gap " + fmt_double(max_eff);
  return o;
}

Outcome rf_sanity() {
  Outcome o;
  std::mt19937_64 rng(1003);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix X(200, 2);
  std::vector<int> y(200);
  for (int i = 0; i < 200; ++i) {
    y[i] = i % 2;
    X.at(i, 0) = g(rng) + 6.0 * y[i];
    X.at(i, 1) = g(rng);
  }
  ForestParams p;
  p.n_trees = 100;
  const Forest f = fit_forest(X, y, p, 7);
  const auto pr = predict_ood(f, X);
  int ok = 0;
  for (int i = 0; i < 200; ++i) ok += (pr[i] > 0.5) == (y[i] == 1);
  const double acc = ok / 200.0;
  o.require(acc >= 0.99, "blob accuracy " + fmt_double(acc));

  Matrix xor_x(4, 2);
  const std::vector<int> xor_y{0, 1, 1, 0};
  const double pts[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  for (int i = 0; i < 4; ++i) {
    xor_x.at(i, 0) = pts[i][0];
    xor_x.at(i, 1) = pts[i][1];
  }
  ForestParams tp;
  tp.max_depth = 2;
  tp.max_features = 2;
  const std::vector<double> w(4, 1.0);
  const Tree xt = fit_tree(xor_x, xor_y, w, tp, 1);
  bool xor_ok = xt.depth() <= 2;
  for (int i = 0; i < 4; ++i) xor_ok = xor_ok && xt.leaf_for(xor_x.row(i)).value[xor_y[i]] == 1.0;
  o.require(xor_ok, "depth-2 tree does not fit XOR");

  int mono_fail = 0, in_bag_fail = 0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    const int n = 40 + static_cast<int>(rng() % 60);
    const int d = 1 + static_cast<int>(rng() % 5);
    Matrix A(n, d), B(n, d);
    std::vector<int> lab(n);
    for (int i = 0; i < n; ++i) {
      double z = 0.0;
      for (int j = 0; j < d; ++j) {
        A.at(i, j) = u(rng);
        z += (j % 2 ? -1.0 : 1.0) * A.at(i, j);
      }
      lab[i] = i < 2 ? i : (z + 0.3 * g(rng) > 0.5 * (d % 2) ? 1 : 0);
      for (int j = 0; j < d; ++j) {
        const double v = A.at(i, j);
        B.at(i, j) = j % 3 == 0 ? std::exp(4.0 * v) : j % 3 == 1 ? v * v * v - 2.0 : std::atan(5.0 * v);
      }
    }
    ForestParams mp;
    mp.n_trees = 20;
    const Forest fa = fit_forest(A, lab, mp, 100 + t);
    const Forest fb = fit_forest(B, lab, mp, 100 + t);
    if (predict_ood(fa, A) != predict_ood(fb, B)) ++mono_fail;
    // Diagnostic only: each tree's routing of its own bootstrap rows.
    bool in_bag_same = true;
    for (std::size_t k = 0; k < fa.trees.size(); ++k) {
      const auto counts = bootstrap_counts(n, fa.seed, static_cast<int>(k));
      for (int i = 0; i < n; ++i) {
        if (counts[i] > 0 && fa.trees[k].leaf_for(A.row(i)).value != fb.trees[k].leaf_for(B.row(i)).value) {
          in_bag_same = false;
        }
      }
    }
    in_bag_fail += !in_bag_same;
  }
  o.require(mono_fail == 0, "forest predictions on training rows changed on " + std::to_string(mono_fail) +
                                "/50 datasets");
  const std::string diag = "blob accuracy " + fmt_double(acc) + (xor_ok ? ", XOR exact" : ", XOR not fit") +
                           ", monotone: forest predictions changed on " + std::to_string(mono_fail) +
                           "/50, per-tree in-bag routing changed on " + std::to_string(in_bag_fail) + "/50";
  o.detail = diag;
  return o;
}

Outcome balanced_weights_recall() {
  Outcome o;
  std::normal_distribution<double> g(0.0, 1.0);
  auto make = [&](std::mt19937_64& rng, int n, Matrix& X, std::vector<int>& y) {
    X = Matrix(n, 2);
    y.assign(n, 0);
    for (int i = 0; i < n; ++i) {
      y[i] = i % 10 == 0 ? 1 : 0;
      X.at(i, 0) = g(rng) + 1.0 * y[i];
      X.at(i, 1) = g(rng) + 0.5 * y[i];
    }
  };
  double rec_bal = 0.0, rec_plain = 0.0;
  for (int s = 0; s < 20; ++s) {
    std::mt19937_64 rng(5000 + s);
    Matrix Xtr, Xte;
    std::vector<int> ytr, yte;
    make(rng, 400, Xtr, ytr);
    make(rng, 1000, Xte, yte);
    ForestParams p;
    p.n_trees = 100;
    p.max_depth = 8;
    ForestParams q = p;
    q.balanced = false;
    const auto pb = predict_ood(fit_forest(Xtr, ytr, p, s), Xte);
    const auto pu = predict_ood(fit_forest(Xtr, ytr, q, s), Xte);
    int pos = 0, hb = 0, hu = 0;
    for (int i = 0; i < Xte.rows; ++i) {
      if (yte[i] != 1) continue;
      ++pos;
      hb += pb[i] > 0.5;
      hu += pu[i] > 0.5;
    }
    rec_bal += static_cast<double>(hb) / pos / 20.0;
    rec_plain += static_cast<double>(hu) / pos / 20.0;
  }
  o.require(rec_bal >= rec_plain, "balanced recall " + fmt_double(rec_bal) + " < unweighted " + fmt_double(rec_plain));
  if (o.pass) o.detail = "minority recall balanced " + fmt_double(rec_bal) + " vs unweighted " + fmt_double(rec_plain);
  return o;
}

Outcome numerical_robustness() {
  using big = boost::multiprecision::cpp_bin_float_50;
  Outcome o;
  std::mt19937_64 rng(1005);
  std::uniform_real_distribution<double> u(-1e4, 1e4);
  double max_sum_err = 0.0, max_energy_err = 0.0;
  bool finite = true;
  auto check = [&](double a, double b) {
    const auto p = voxel_softmax(a, b);
    max_sum_err = std::max(max_sum_err, std::abs(p[0] + p[1] - 1.0));
    finite = finite && std::isfinite(p[0]) && std::isfinite(p[1]);
    for (auto m : kAllScoreMethods) finite = finite && std::isfinite(voxel_score(a, b, {m, 1.0}));
    const double e = voxel_energy(a, b, 1.0);
    const big ref = -boost::multiprecision::log(boost::multiprecision::exp(big(a)) + boost::multiprecision::exp(big(b)));
    max_energy_err = std::max(max_energy_err, std::abs(e - static_cast<double>(ref)));
  };
  for (int i = 0; i < 10000; ++i) check(u(rng), u(rng));
  for (double a : {-1e4, 0.0, 1e4})
    for (double b : {-1e4, 0.0, 1e4}) check(a, b);
  o.require(finite, "non-finite output");
  o.require(max_sum_err <= 1e-12, "softmax sum error " + fmt_double(max_sum_err));
  o.require(max_energy_err <= 1e-12, "energy error " + fmt_double(max_energy_err));
  if (o.pass) {
    o.detail = "finite; max |sum-1| " + fmt_double(max_sum_err) + ", max energy error " + fmt_double(max_energy_err);
  }
  return o;
}

// Runs the in-process pipeline on `cfg` (relative to a fresh directory).
int run_pipeline(const std::string& name, json cfg, fs::path& work, double& secs) {
  const fs::path dir = oracle::temp_dir("acc_" + name);
  work = dir / "work";
  cfg["paths"] = {{"work_dir", work.generic_string()}};
  const RunConfig rc = run_config_from_json(cfg);
  std::ostringstream log, err;
  const auto t0 = Clock::now();
  const int rc_code = cmd_pipeline(rc, log, err);
  secs = seconds_since(t0);
  if (rc_code != 0) std::cerr << err.str();
  return rc_code;
}

const SummaryRow* find_row(const std::vector<SummaryRow>& rows, const std::string& m, const std::string& c) {
  for (const auto& r : rows) {
    if (r.method == m && r.cohort == c) return &r;
  }
  return nullptr;
}

json forest_block(int n_trees) {
  return {{"deep", {{"forest", {{"n_trees", n_trees}}}}}, {"radiomics", {{"forest", {{"n_trees", n_trees}}}}}};
}

// ID vs far-OOD (more, smaller blobs on a brighter background) and near-OOD
// (same geometry, texture mean +0.15).
json separability_config() {
  return {{"cohorts",
           {{{"cohort_name", "id"}, {"cohort_label", "ID"}, {"n_scans", 60}, {"seed", 1}},
            {{"cohort_name", "far"},
             {"cohort_label", "OOD"},
             {"n_scans", 60},
             {"seed", 2},
             {"blob_count", {3, 4}},
             {"blob_radius", {2.0, 3.0}},
             {"background_mean", 0.45}},
            {{"cohort_name", "near"}, {"cohort_label", "OOD"}, {"n_scans", 60}, {"seed", 3}, {"texture_mean", 0.50}}}},
          {"rf", forest_block(200)},
          {"protocol", {{"n_seeds", 10}, {"base_seed", 7}}}};
}

// ID with one blob per scan; "layout" differs only in blob count, a
// coarse-scale property; "miscal" has confidently wrong tumor logits.
json structure_config() {
  return {{"cohorts",
           {{{"cohort_name", "id"},
             {"cohort_label", "ID"},
             {"n_scans", 60},
             {"seed", 11},
             {"blob_count", {1, 1}},
             {"blob_radius", {3.0, 4.0}}},
            {{"cohort_name", "layout"},
             {"cohort_label", "OOD"},
             {"n_scans", 60},
             {"seed", 12},
             {"blob_count", {5, 6}},
             {"blob_radius", {3.0, 4.0}}},
            {{"cohort_name", "miscal"},
             {"cohort_label", "OOD"},
             {"n_scans", 60},
             {"seed", 13},
             {"texture_mean", 0.5},
             {"logit_miscalibration", 6.0}}}},
          {"rf", forest_block(200)},
          {"protocol", {{"n_seeds", 10}, {"base_seed", 7}}},
          {"pipeline", {{"ablate", true}}}};
}

Outcome end_to_end_separability() {
  Outcome o;
  fs::path work;
  double secs = 0.0;
  const int code = run_pipeline("separability", separability_config(), work, secs);
  o.require(code == 0, "pipeline exit code " + std::to_string(code));
  if (!o.pass) return o;
  const auto rows = read_summary_long_csv(work / "eval" / "summary_long.csv");
  const auto* far = find_row(rows, kRfDeep, "far");
  const auto* near = find_row(rows, kRfDeep, "near");
  o.require(far && near, "RF-Deep rows missing");
  if (!o.pass) return o;
  o.require(far->auroc_mean >= 95.0, "far AUROC " + fmt_double(far->auroc_mean));
  o.require(far->fpr95_mean <= 10.0, "far FPR95 " + fmt_double(far->fpr95_mean));
  o.require(near->auroc_mean >= 80.0, "near AUROC " + fmt_double(near->auroc_mean));
  o.require(secs <= 600.0, "took " + fmt_double(secs) + " s");
  if (o.pass) {
    o.detail = "far AUROC " + fmt_double(far->auroc_mean) + " FPR95 " + fmt_double(far->fpr95_mean) +
               ", near AUROC " + fmt_double(near->auroc_mean) + ", " + fmt_double(secs) + " s";
  }
  return o;
}

struct StructureRun {
  int code = -1;
  fs::path work;
  double secs = 0.0;
};

StructureRun& structure_run() {
  static StructureRun run = [] {
    StructureRun r;
    r.code = run_pipeline("structure", structure_config(), r.work, r.secs);
    return r;
  }();
  return run;
}

Outcome miscalibration_ordering() {
  Outcome o;
  const auto& run = structure_run();
  o.require(run.code == 0, "pipeline exit code " + std::to_string(run.code));
  if (!o.pass) return o;
  const auto rows = read_summary_long_csv(run.work / "eval" / "summary_long.csv");
  const auto* rf = find_row(rows, kRfDeep, "miscal");
  const auto* msp = find_row(rows, "MaxSoftmax", "miscal");
  o.require(rf && msp, "rows missing");
  if (!o.pass) return o;
  o.require(rf->auroc_mean > msp->auroc_mean,
            "RF-Deep " + fmt_double(rf->auroc_mean) + " <= MaxSoftmax " + fmt_double(msp->auroc_mean));
  if (o.pass) o.detail = "RF-Deep " + fmt_double(rf->auroc_mean) + " > MaxSoftmax " + fmt_double(msp->auroc_mean);
  return o;
}

Outcome ablation_harness() {
  Outcome o;
  const auto& run = structure_run();
  o.require(run.code == 0, "pipeline exit code " + std::to_string(run.code));
  if (!o.pass) return o;
  const auto rows = read_summary_long_csv(run.work / "ablation" / "summary_long.csv");
  int layout_rows = 0;
  for (const auto& r : rows) layout_rows += r.cohort == "layout";
  o.require(layout_rows == 5, std::to_string(layout_rows) + " stage rows");
  const std::string summary = slurp(run.work / "ablation" / "summary.csv");
  int lines = 0;
  for (char c : summary) lines += c == '\n';
  o.require(lines == 6, "summary.csv has " + std::to_string(lines - 1) + " stage rows");
  const auto* pe = find_row(rows, "RF-Deep[PE]", "layout");
  const auto* sb4 = find_row(rows, "RF-Deep[SB4]", "layout");
  o.require(pe && sb4, "PE/SB4 rows missing");
  if (!o.pass) return o;
  o.require(sb4->auroc_mean > pe->auroc_mean,
            "SB4 " + fmt_double(sb4->auroc_mean) + " <= PE " + fmt_double(pe->auroc_mean));
  if (o.pass) o.detail = "5 rows; SB4 " + fmt_double(sb4->auroc_mean) + " > PE " + fmt_double(pe->auroc_mean);
  return o;
}

Outcome cli_determinism() {
  Outcome o;
  const fs::path dir = oracle::temp_dir("acc_determinism");
  json cfg = {{"cohorts",
               {{{"cohort_name", "id"}, {"cohort_label", "ID"}, {"n_scans", 20}, {"seed", 21}},
                {{"cohort_name", "far"},
                 {"cohort_label", "OOD"},
                 {"n_scans", 20},
                 {"seed", 22},
                 {"blob_count", {3, 4}},
                 {"background_mean", 0.4}},
                {{"cohort_name", "near"}, {"cohort_label", "OOD"}, {"n_scans", 20}, {"seed", 23}, {"texture_mean", 0.42}}}},
              {"rf", forest_block(60)},
              {"protocol", {{"n_seeds", 6}, {"base_seed", 3}}},
              {"pipeline", {{"ablate", true}, {"explain", true}}}};
  std::ofstream(dir / "config.json") << cfg.dump(2);
  const std::vector<std::string> files = {"eval/summary.csv", "eval/summary_long.csv", "eval/per_seed.csv",
                                          "ablation/summary.csv", "ablation/summary_long.csv"};
  std::vector<std::string> runs[2];
  const int threads[2] = {1, 8};
  for (int k = 0; k < 2; ++k) {
    const fs::path work = dir / ("work_t" + std::to_string(threads[k]));
    const std::string cmd = std::string("\"") + RFDEEP_CLI + "\" --config \"" + (dir / "config.json").string() +
                            "\" --work-dir \"" + work.string() + "\" --threads " + std::to_string(threads[k]) +
                            " pipeline > \"" + (dir / "log.txt").string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    o.require(rc == 0, "CLI run at --threads " + std::to_string(threads[k]) + " failed: " + slurp(dir / "log.txt"));
    if (!o.pass) return o;
    for (const auto& f : files) runs[k].push_back(slurp(work / f));
  }
  for (std::size_t i = 0; i < files.size(); ++i) {
    o.require(!runs[0][i].empty(), files[i] + " is empty");
    o.require(runs[0][i] == runs[1][i], files[i] + " differs between thread counts");
  }
  if (o.pass) o.detail = std::to_string(files.size()) + " summary files byte-identical at 1 and 8 threads";
  return o;
}

Outcome format_round_trips() {
  Outcome o;
  const fs::path dir = oracle::temp_dir("acc_roundtrip");
  std::mt19937_64 rng(1009);
  std::uniform_real_distribution<float> uf(-1e6f, 1e6f);
  int bad_ovf = 0, bad_model = 0;
  for (int t = 0; t < 100; ++t) {
    OvfTensor a;
    a.dtype = t % 2 ? DType::F32 : DType::U8;
    const int ndim = 3 + static_cast<int>(rng() % 2);
    for (int k = 0; k < ndim; ++k) a.dims.push_back(1 + static_cast<std::uint32_t>(rng() % 9));
    a.spacing = {0.5f + static_cast<float>(rng() % 8) * 0.25f, 1.0f, 2.5f};
    const std::size_t n = a.element_count();
    for (std::size_t i = 0; i < n; ++i) {
      if (a.dtype == DType::F32) {
        a.f32.push_back(uf(rng));
      } else {
        a.u8.push_back(static_cast<std::uint8_t>(rng() & 0xff));
      }
    }
    const fs::path p = dir / "t.ovf";
    write_ovf(a, p);
    const OvfTensor b = read_ovf(p);
    const bool same = b.dtype == a.dtype && b.dims == a.dims && b.spacing == a.spacing && b.u8 == a.u8 &&
                      std::memcmp(b.f32.data(), a.f32.data(), a.f32.size() * sizeof(float)) == 0 &&
                      b.f32.size() == a.f32.size();
    bad_ovf += !same;

    const int rows = 30 + static_cast<int>(rng() % 50), cols = 1 + static_cast<int>(rng() % 6);
    Matrix X(rows, cols);
    std::vector<int> y(rows);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < rows; ++i) {
      y[i] = i < 2 ? i : static_cast<int>(rng() % 2);
      for (int j = 0; j < cols; ++j) X.at(i, j) = g(rng) * std::pow(10.0, static_cast<double>(rng() % 7) - 3.0);
    }
    ForestParams fp;
    fp.n_trees = 5 + static_cast<int>(rng() % 10);
    const Forest f = fit_forest(X, y, fp, rng());
    save_forest(f, dir / "m.json");
    const Forest h = load_forest(dir / "m.json");
    Matrix Q(50, cols);
    for (double& v : Q.data) v = g(rng) * 100.0;
    bad_model += predict_ood(f, X) != predict_ood(h, X) || predict_ood(f, Q) != predict_ood(h, Q);
  }
  o.require(bad_ovf == 0, std::to_string(bad_ovf) + " OVF mismatches");
  o.require(bad_model == 0, std::to_string(bad_model) + " model mismatches");
  if (o.pass) o.detail = "100 OVF and 100 model round-trips bit-exact";
  return o;
}

}  // namespace

int main() {
  set_threads(0);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"metric oracles", metric_oracles},
      {"TreeSHAP oracle and efficiency", shap_oracle},
      {"random forest sanity", rf_sanity},
      {"balanced class weights", balanced_weights_recall},
      {"numerical robustness", numerical_robustness},
      {"end-to-end separability", end_to_end_separability},
      {"miscalibration ordering", miscalibration_ordering},
      {"thread-count determinism", cli_determinism},
      {"format round-trips", format_round_trips},
      {"stage ablation", ablation_harness},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::cout << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << i + 1 << ": " << criteria[i].first << " ("
              << o.detail << "; " << fmt_double(seconds_since(t0)) << " s)" << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}

#include "rfdeep/forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "rfdeep/error.hpp"
#include "rfdeep/metrics.hpp"
#include "rfdeep/rng.hpp"

namespace rfdeep {

Matrix Matrix::select_columns(std::span<const int> columns) const {
  Matrix out(rows, static_cast<int>(columns.size()));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < out.cols; ++c) out.at(r, c) = at(r, columns[c]);
  }
  return out;
}

int ForestParams::resolved_max_features(int d) const {
  const int mf = max_features > 0 ? max_features
                                  : static_cast<int>(std::floor(std::sqrt(static_cast<double>(d))));
  return std::clamp(mf, 1, std::max(1, d));
}

void to_json(nlohmann::json& j, const ForestParams& p) {
  j = {{"n_trees", p.n_trees},
       {"max_depth", p.max_depth},
       {"max_features", p.max_features},
       {"min_samples_split", p.min_samples_split},
       {"balanced", p.balanced}};
}

void from_json(const nlohmann::json& j, ForestParams& p) {
  p = ForestParams{};
  if (j.contains("n_trees")) j.at("n_trees").get_to(p.n_trees);
  if (j.contains("max_depth")) j.at("max_depth").get_to(p.max_depth);
  if (j.contains("max_features")) j.at("max_features").get_to(p.max_features);
  if (j.contains("min_samples_split")) j.at("min_samples_split").get_to(p.min_samples_split);
  if (j.contains("balanced")) j.at("balanced").get_to(p.balanced);
  if (p.n_trees < 1 || p.max_depth < 0 || p.min_samples_split < 2 || p.max_features < 0) {
    throw ConfigError("invalid forest hyperparameters");
  }
}

int Tree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> depth(nodes.size(), 0);
  int best = 0;
  // Preorder: parents precede children.
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].is_leaf()) {
      best = std::max(best, depth[i]);
      continue;
    }
    depth[nodes[i].left] = depth[i] + 1;
    depth[nodes[i].right] = depth[i] + 1;
  }
  return best;
}

const TreeNode& Tree::leaf_for(std::span<const double> x) const {
  const TreeNode* n = &nodes[0];
  while (!n->is_leaf()) n = &nodes[x[n->feature] <= n->threshold ? n->left : n->right];
  return *n;
}

std::array<double, 2> balanced_weights(std::span<const int> labels) {
  std::array<double, 2> counts{0.0, 0.0};
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError("labels must be 0 or 1");
    counts[l] += 1.0;
  }
  if (counts[0] == 0.0 || counts[1] == 0.0) throw DataError("both classes must be present");
  const double n = static_cast<double>(labels.size());
  return {n / (2.0 * counts[0]), n / (2.0 * counts[1])};
}

double weighted_gini(double w0, double w1) {
  const double w = w0 + w1;
  if (!(w > 0.0)) return 0.0;
  const double p0 = w0 / w, p1 = w1 / w;
  return 1.0 - (p0 * p0 + p1 * p1);
}

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& X, std::span<const int> y, std::span<const double> w,
              const ForestParams& params, std::uint64_t seed)
      : X_(X), y_(y), w_(w), params_(params), rng_(seed),
        max_features_(params.resolved_max_features(X.cols)), pool_(X.cols) {}

  Tree build() {
    std::vector<int> rows;
    for (int r = 0; r < X_.rows; ++r) {
      if (w_[r] > 0.0) rows.push_back(r);
    }
    if (rows.empty()) throw DataError("fit_tree: no rows with positive weight");
    grow(rows, 0);
    // Internal covers are the sums of their children's covers so cover ratios
    // along every path are consistent.
    for (std::size_t i = tree_.nodes.size(); i-- > 0;) {
      TreeNode& n = tree_.nodes[i];
      if (!n.is_leaf()) n.cover = tree_.nodes[n.left].cover + tree_.nodes[n.right].cover;
    }
    return std::move(tree_);
  }

 private:
  int grow(std::vector<int>& rows, int depth) {
    double w0 = 0.0, w1 = 0.0;
    for (int r : rows) (y_[r] == 1 ? w1 : w0) += w_[r];
    const int index = static_cast<int>(tree_.nodes.size());
    {
      TreeNode node;
      node.cover = w0 + w1;
      node.value = {w0 / node.cover, w1 / node.cover};
      node.impurity = weighted_gini(w0, w1);
      tree_.nodes.push_back(node);
    }
    if (depth >= params_.max_depth || static_cast<int>(rows.size()) < params_.min_samples_split ||
        tree_.nodes[index].impurity == 0.0) {
      return index;
    }

    // Partial Fisher-Yates draw of the candidate features, then ascending
    // order so ties resolve to the lowest feature index.
    std::iota(pool_.begin(), pool_.end(), 0);
    for (int i = 0; i < max_features_; ++i) {
      const int j = i + static_cast<int>(rng_.below(static_cast<std::uint64_t>(X_.cols - i)));
      std::swap(pool_[i], pool_[j]);
    }
    std::vector<int> candidates(pool_.begin(), pool_.begin() + max_features_);
    std::sort(candidates.begin(), candidates.end());

    const double parent = (w0 + w1) * tree_.nodes[index].impurity;
    double best_gain = -std::numeric_limits<double>::infinity();
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<int> order(rows);
    for (int f : candidates) {
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double va = X_.at(a, f), vb = X_.at(b, f);
        return va != vb ? va < vb : a < b;
      });
      double l0 = 0.0, l1 = 0.0;
      for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        const int r = order[k];
        (y_[r] == 1 ? l1 : l0) += w_[r];
        const double a = X_.at(r, f), b = X_.at(order[k + 1], f);
        if (!(a < b)) continue;
        const double r0 = w0 - l0, r1 = w1 - l1;
        const double gain = parent - (l0 + l1) * weighted_gini(l0, l1) - (r0 + r1) * weighted_gini(r0, r1);
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          double t = std::midpoint(a, b);
          if (!(t < b)) t = a;
          best_threshold = t;
        }
      }
    }
    if (best_feature < 0) return index;

    std::vector<int> left, right;
    for (int r : rows) (X_.at(r, best_feature) <= best_threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    tree_.nodes[index].feature = best_feature;
    tree_.nodes[index].threshold = best_threshold;
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    tree_.nodes[index].left = l;
    tree_.nodes[index].right = r;
    return index;
  }

  const Matrix& X_;
  std::span<const int> y_;
  std::span<const double> w_;
  const ForestParams& params_;
  SplitMix64 rng_;
  int max_features_;
  std::vector<int> pool_;
  Tree tree_;
};

void check_training_data(const Matrix& X, std::span<const int> y) {
  if (X.rows == 0 || X.cols == 0) throw DataError("empty training data");
  if (static_cast<int>(y.size()) != X.rows) throw DataError("label count does not match rows");
  for (double v : X.data) {
    if (!std::isfinite(v)) throw DataError("training data must be finite");
  }
}

std::vector<double> tree_weights(std::span<const int> y, const std::array<double, 2>& cw,
                                 const std::vector<int>& counts) {
  std::vector<double> w(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) w[i] = cw[y[i]] * counts[i];
  return w;
}

Forest forest_shell(const Matrix& X, std::span<const int> y, const ForestParams& params,
                    std::uint64_t seed, std::vector<std::string> names) {
  check_training_data(X, y);
  if (!names.empty() && static_cast<int>(names.size()) != X.cols) {
    throw DataError("feature name count does not match columns");
  }
  const auto bw = balanced_weights(y);  // also rejects single-class input
  Forest f;
  f.n_features = X.cols;
  f.feature_names = std::move(names);
  if (f.feature_names.empty()) {
    for (int c = 0; c < X.cols; ++c) f.feature_names.push_back("f" + std::to_string(c));
  }
  f.seed = seed;
  f.params = params;
  f.class_weights = params.balanced ? bw : std::array<double, 2>{1.0, 1.0};
  f.trees.resize(params.n_trees);
  return f;
}

Tree fit_one(const Matrix& X, std::span<const int> y, const Forest& f, int t) {
  const auto counts = bootstrap_counts(X.rows, f.seed, t);
  const auto w = tree_weights(y, f.class_weights, counts);
  return fit_tree(X, y, w, f.params, tree_seed(f.seed, t));
}

}  // namespace

Tree fit_tree(const Matrix& X, std::span<const int> y, std::span<const double> sample_weights,
              const ForestParams& params, std::uint64_t seed) {
  check_training_data(X, y);
  if (static_cast<int>(sample_weights.size()) != X.rows) throw DataError("weight count does not match rows");
  return TreeBuilder(X, y, sample_weights, params, seed).build();
}

std::vector<int> bootstrap_counts(int n, std::uint64_t seed, int t) {
  SplitMix64 rng(derive_seed(seed, "bootstrap", static_cast<std::uint64_t>(t)));
  std::vector<int> counts(n, 0);
  for (int i = 0; i < n; ++i) ++counts[rng.below(static_cast<std::uint64_t>(n))];
  return counts;
}

std::uint64_t tree_seed(std::uint64_t seed, int t) {
  return derive_seed(seed, "tree", static_cast<std::uint64_t>(t));
}

Forest fit_forest(const Matrix& X, std::span<const int> y, const ForestParams& params,
                  std::uint64_t seed, std::vector<std::string> feature_names) {
  Forest f = forest_shell(X, y, params, seed, std::move(feature_names));
  std::vector<std::string> errors(f.trees.size());
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < params.n_trees; ++t) {
    try {
      f.trees[t] = fit_one(X, y, f, t);
    } catch (const std::exception& e) {
      errors[t] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw DataError(e);
  }
  return f;
}

std::array<double, 2> predict_proba(const Forest& forest, std::span<const double> x) {
  if (static_cast<int>(x.size()) != forest.n_features) throw DataError("predict_proba: dimension mismatch");
  if (forest.trees.empty()) throw DataError("predict_proba: empty forest");
  double p0 = 0.0, p1 = 0.0;
  for (const Tree& t : forest.trees) {
    const auto& v = t.leaf_for(x).value;
    p0 += v[0];
    p1 += v[1];
  }
  const double n = static_cast<double>(forest.trees.size());
  return {p0 / n, p1 / n};
}

std::vector<double> predict_ood(const Forest& forest, const Matrix& X) {
  if (X.cols != forest.n_features) throw DataError("predict_ood: dimension mismatch");
  std::vector<double> out(X.rows);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < X.rows; ++r) out[r] = predict_proba(forest, X.row(r))[1];
  return out;
}

double predict_scan(const Forest& forest, const std::vector<std::vector<double>>& crops) {
  if (crops.empty()) throw DataError("predict_scan: no crop vectors");
  double sum = 0.0;
  for (const auto& c : crops) sum += predict_proba(forest, c)[1];
  return sum / static_cast<double>(crops.size());
}

std::vector<double> mdi_importance(const Forest& forest) {
  std::vector<double> total(forest.n_features, 0.0);
  for (const Tree& t : forest.trees) {
    const double root = t.nodes[0].cover;
    for (const TreeNode& n : t.nodes) {
      if (n.is_leaf()) continue;
      const TreeNode& l = t.nodes[n.left];
      const TreeNode& r = t.nodes[n.right];
      const double dec = n.cover * n.impurity - l.cover * l.impurity - r.cover * r.impurity;
      total[n.feature] += std::max(0.0, dec) / root;
    }
  }
  double sum = 0.0;
  for (double& v : total) {
    v /= static_cast<double>(std::max<std::size_t>(1, forest.trees.size()));
    sum += v;
  }
  if (sum > 0.0) {
    for (double& v : total) v /= sum;
  }
  return total;
}

std::vector<double> permutation_importance(const Forest& forest, const Matrix& X, std::span<const int> y,
                                           int n_repeats, std::uint64_t seed) {
  if (n_repeats < 1) throw ConfigError("permutation_importance: n_repeats must be >= 1");
  const double base = auroc(predict_ood(forest, X), y);
  std::vector<double> out(X.cols, 0.0);
  Matrix work = X;
  std::vector<double> column(X.rows);
  for (int j = 0; j < X.cols; ++j) {
    double sum = 0.0;
    for (int rep = 0; rep < n_repeats; ++rep) {
      for (int r = 0; r < X.rows; ++r) column[r] = X.at(r, j);
      SplitMix64 rng(derive_seed(seed, "permutation",
                                 static_cast<std::uint64_t>(j) * static_cast<std::uint64_t>(n_repeats) + rep));
      for (int i = X.rows - 1; i > 0; --i) {
        std::swap(column[i], column[rng.below(static_cast<std::uint64_t>(i) + 1)]);
      }
      for (int r = 0; r < X.rows; ++r) work.at(r, j) = column[r];
      sum += auroc(predict_ood(forest, work), y);
    }
    for (int r = 0; r < X.rows; ++r) work.at(r, j) = X.at(r, j);
    out[j] = base - sum / n_repeats;
  }
  return out;
}

std::vector<int> rfe(const Matrix& X, std::span<const int> y, const ForestParams& params, int target_count,
                     int step, std::uint64_t seed) {
  if (target_count < 1) throw ConfigError("rfe: target_count must be >= 1");
  if (target_count > X.cols) throw ConfigError("rfe: target_count exceeds feature count");
  if (step <= 0) step = std::max(1, X.cols / 10);
  std::vector<int> remaining(X.cols);
  std::iota(remaining.begin(), remaining.end(), 0);
  for (std::uint64_t iter = 0; static_cast<int>(remaining.size()) > target_count; ++iter) {
    const Matrix sub = X.select_columns(remaining);
    const Forest f = fit_forest(sub, y, params, derive_seed(seed, "rfe", iter));
    const auto imp = mdi_importance(f);
    std::vector<int> pos(remaining.size());
    std::iota(pos.begin(), pos.end(), 0);
    // Least important first; equal importance drops the higher index first.
    std::sort(pos.begin(), pos.end(), [&](int a, int b) {
      return imp[a] != imp[b] ? imp[a] < imp[b] : remaining[a] > remaining[b];
    });
    const int drop = std::min(step, static_cast<int>(remaining.size()) - target_count);
    std::vector<char> dropped(remaining.size(), 0);
    for (int i = 0; i < drop; ++i) dropped[pos[i]] = 1;
    std::vector<int> next;
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      if (!dropped[i]) next.push_back(remaining[i]);
    }
    remaining = std::move(next);
  }
  return remaining;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

nlohmann::json node_to_json(const Tree& t, int i) {
  const TreeNode& n = t.nodes[i];
  nlohmann::json j = {{"value", n.value}, {"cover", n.cover}, {"impurity", n.impurity}};
  if (!n.is_leaf()) {
    j["feature"] = n.feature;
    j["threshold"] = n.threshold;
    j["left"] = node_to_json(t, n.left);
    j["right"] = node_to_json(t, n.right);
  }
  return j;
}

int node_from_json(const nlohmann::json& j, Tree& t, int n_features) {
  const int index = static_cast<int>(t.nodes.size());
  TreeNode n;
  j.at("value").get_to(n.value);
  j.at("cover").get_to(n.cover);
  j.at("impurity").get_to(n.impurity);
  t.nodes.push_back(n);
  if (j.contains("feature")) {
    const int f = j.at("feature").get<int>();
    if (f < 0 || f >= n_features) throw DataError("model: feature index out of range");
    const double thr = j.at("threshold").get<double>();
    const int l = node_from_json(j.at("left"), t, n_features);
    const int r = node_from_json(j.at("right"), t, n_features);
    t.nodes[index].feature = f;
    t.nodes[index].threshold = thr;
    t.nodes[index].left = l;
    t.nodes[index].right = r;
  }
  return index;
}

}  // namespace

nlohmann::json forest_to_json(const Forest& f) {
  nlohmann::json j;
  j["format"] = "rfdeep-forest";
  j["version"] = kModelFormatVersion;
  j["n_features"] = f.n_features;
  j["feature_names"] = f.feature_names;
  j["seed"] = f.seed;
  j["params"] = f.params;
  j["class_weights"] = f.class_weights;
  j["trees"] = nlohmann::json::array();
  for (const Tree& t : f.trees) j["trees"].push_back(node_to_json(t, 0));
  return j;
}

Forest forest_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "rfdeep-forest") throw DataError("model: unknown format");
    if (j.at("version").get<int>() != kModelFormatVersion) throw DataError("model: unsupported version");
    Forest f;
    j.at("n_features").get_to(f.n_features);
    j.at("feature_names").get_to(f.feature_names);
    j.at("seed").get_to(f.seed);
    j.at("params").get_to(f.params);
    j.at("class_weights").get_to(f.class_weights);
    if (static_cast<int>(f.feature_names.size()) != f.n_features) throw DataError("model: feature name count");
    for (const auto& jt : j.at("trees")) {
      Tree t;
      node_from_json(jt, t, f.n_features);
      f.trees.push_back(std::move(t));
    }
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model: ") + e.what());
  }
}

void save_forest(const Forest& forest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write model " + path.string());
  out << forest_to_json(forest).dump() << "\n";
}

Forest load_forest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model " + path.string());
  try {
    return forest_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("model " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

namespace serial {

Forest fit_forest(const Matrix& X, std::span<const int> y, const ForestParams& params, std::uint64_t seed,
                  std::vector<std::string> feature_names) {
  Forest f = forest_shell(X, y, params, seed, std::move(feature_names));
  for (int t = 0; t < params.n_trees; ++t) f.trees[t] = fit_one(X, y, f, t);
  return f;
}

std::vector<double> predict_ood(const Forest& forest, const Matrix& X) {
  std::vector<double> out;
  out.reserve(X.rows);
  for (int r = 0; r < X.rows; ++r) {
    double p1 = 0.0;
    for (const Tree& t : forest.trees) p1 += t.leaf_for(X.row(r)).value[1];
    out.push_back(p1 / static_cast<double>(forest.trees.size()));
  }
  return out;
}

}  // namespace serial

}  // namespace rfdeep

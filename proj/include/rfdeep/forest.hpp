#pragma once

// Balanced random forest for the binary ID (0) / OOD (1) task: CART trees
// with weighted Gini, bootstrap resampling, MDI and permutation importance,
// recursive feature elimination and JSON persistence.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace rfdeep {

/// Dense row-major sample matrix.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::span<const double> row(int r) const {
    return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
  }
  /// Copy of the given columns, in the given order.
  Matrix select_columns(std::span<const int> columns) const;
};

struct ForestParams {
  int n_trees = 1000;
  int max_depth = 20;
  int max_features = 0;  // 0 -> floor(sqrt(d))
  int min_samples_split = 2;
  bool balanced = true;

  int resolved_max_features(int d) const;
};

void to_json(nlohmann::json& j, const ForestParams& p);
void from_json(const nlohmann::json& j, ForestParams& p);

/// Flat node; feature < 0 marks a leaf. Children are node indices.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::array<double, 2> value{0.0, 0.0};  // weighted class proportions
  double cover = 0.0;                     // weighted sample count
  double impurity = 0.0;                  // weighted Gini

  bool is_leaf() const { return feature < 0; }
};

/// Nodes in preorder; node 0 is the root.
struct Tree {
  std::vector<TreeNode> nodes;

  int depth() const;
  const TreeNode& leaf_for(std::span<const double> x) const;
};

struct Forest {
  std::vector<Tree> trees;
  int n_features = 0;
  std::vector<std::string> feature_names;
  std::uint64_t seed = 0;
  ForestParams params;
  std::array<double, 2> class_weights{1.0, 1.0};
};

/// w_c = n / (2 n_c). Throws DataError when a class is missing.
std::array<double, 2> balanced_weights(std::span<const int> labels);

/// 1 - sum_c (W_c / W)^2.
double weighted_gini(double w0, double w1);

/// Fits one CART tree. Rows with zero weight are ignored. Feature subsets are
/// drawn per node from a SplitMix64 stream seeded with `seed`, in preorder.
Tree fit_tree(const Matrix& X, std::span<const int> y, std::span<const double> sample_weights,
              const ForestParams& params, std::uint64_t seed);

/// Bootstrap multiplicities for tree `t` (n draws with replacement).
std::vector<int> bootstrap_counts(int n, std::uint64_t seed, int t);

/// Seed of tree t's feature-subset stream.
std::uint64_t tree_seed(std::uint64_t seed, int t);

/// Trees are fitted in parallel; the result does not depend on thread count.
Forest fit_forest(const Matrix& X, std::span<const int> y, const ForestParams& params,
                  std::uint64_t seed, std::vector<std::string> feature_names = {});

/// Unweighted mean of leaf distributions over trees.
std::array<double, 2> predict_proba(const Forest& forest, std::span<const double> x);

/// P(OOD) for every row, in parallel.
std::vector<double> predict_ood(const Forest& forest, const Matrix& X);

/// Mean P(OOD) over a scan's crop vectors.
double predict_scan(const Forest& forest, const std::vector<std::vector<double>>& crops);

/// Mean decrease in impurity, normalised to sum 1 (all zero if no split).
std::vector<double> mdi_importance(const Forest& forest);

/// AUROC(base) - mean AUROC with column j permuted, per column.
std::vector<double> permutation_importance(const Forest& forest, const Matrix& X,
                                           std::span<const int> y, int n_repeats,
                                           std::uint64_t seed);

/// Recursive feature elimination by MDI. step <= 0 -> max(1, d / 10).
/// Returns surviving column indices in ascending order.
std::vector<int> rfe(const Matrix& X, std::span<const int> y, const ForestParams& params,
                     int target_count, int step, std::uint64_t seed);

inline constexpr int kModelFormatVersion = 1;

nlohmann::json forest_to_json(const Forest& forest);
Forest forest_from_json(const nlohmann::json& j);
void save_forest(const Forest& forest, const std::filesystem::path& path);
Forest load_forest(const std::filesystem::path& path);

namespace serial {

/// Single-threaded reference kernels, kept for equivalence tests and
/// benchmarks against the OpenMP versions.
Forest fit_forest(const Matrix& X, std::span<const int> y, const ForestParams& params,
                  std::uint64_t seed, std::vector<std::string> feature_names = {});
std::vector<double> predict_ood(const Forest& forest, const Matrix& X);

}  // namespace serial

}  // namespace rfdeep

#include "rfdeep/tree_shap.hpp"

#include <algorithm>

#include "rfdeep/error.hpp"

namespace rfdeep {

namespace {

struct PathElement {
  int feature = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double weight = 0.0;
};

// Adds a feature to the path, updating the permutation weights of every
// subset size.
void extend_path(PathElement* path, int depth, double zero_fraction, double one_fraction, int feature) {
  path[depth] = {feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0};
  for (int i = depth - 1; i >= 0; --i) {
    path[i + 1].weight += one_fraction * path[i].weight * (i + 1) / static_cast<double>(depth + 1);
    path[i].weight = zero_fraction * path[i].weight * (depth - i) / static_cast<double>(depth + 1);
  }
}

// Inverse of extend_path for the element at `index`.
void unwind_path(PathElement* path, int depth, int index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  double next = path[depth].weight;
  for (int i = depth - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = path[i].weight;
      path[i].weight = next * (depth + 1) / ((i + 1) * one);
      next = tmp - path[i].weight * zero * (depth - i) / static_cast<double>(depth + 1);
    } else {
      path[i].weight = path[i].weight * (depth + 1) / (zero * (depth - i));
    }
  }
  for (int i = index; i < depth; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

// Total permutation weight if the element at `index` were unwound.
double unwound_sum(const PathElement* path, int depth, int index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  double next = path[depth].weight;
  double total = 0.0;
  for (int i = depth - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = next * (depth + 1) / ((i + 1) * one);
      total += tmp;
      next = path[i].weight - tmp * zero * (depth - i) / static_cast<double>(depth + 1);
    } else {
      total += path[i].weight / (zero * (depth - i) / static_cast<double>(depth + 1));
    }
  }
  return total;
}

class ShapRecursion {
 public:
  ShapRecursion(const Tree& tree, std::span<const double> x, std::span<double> phi)
      : tree_(tree), x_(x), phi_(phi) {
    const int max_depth = tree.depth() + 2;
    storage_.resize(static_cast<std::size_t>(max_depth) * (max_depth + 1) / 2 + max_depth + 1);
  }

  void run() { recurse(0, 0, storage_.data(), 1.0, 1.0, -1); }

 private:
  void recurse(int node, int depth, PathElement* parent_path, double zero_fraction, double one_fraction,
               int feature) {
    PathElement* path = parent_path + depth + 1;
    std::copy(parent_path, parent_path + depth + 1, path);
    extend_path(path, depth, zero_fraction, one_fraction, feature);

    const TreeNode& n = tree_.nodes[node];
    if (n.is_leaf()) {
      for (int i = 1; i <= depth; ++i) {
        const double w = unwound_sum(path, depth, i);
        phi_[path[i].feature] += w * (path[i].one_fraction - path[i].zero_fraction) * n.value[1];
      }
      return;
    }

    const int hot = x_[n.feature] <= n.threshold ? n.left : n.right;
    const int cold = hot == n.left ? n.right : n.left;
    const double hot_zero = tree_.nodes[hot].cover / n.cover;
    const double cold_zero = tree_.nodes[cold].cover / n.cover;
    double incoming_zero = 1.0, incoming_one = 1.0;

    // A feature already on the path is unwound and re-added at this node.
    int k = 0;
    for (; k <= depth; ++k) {
      if (path[k].feature == n.feature) break;
    }
    if (k != depth + 1) {
      incoming_zero = path[k].zero_fraction;
      incoming_one = path[k].one_fraction;
      unwind_path(path, depth, k);
      depth -= 1;
    }
    recurse(hot, depth + 1, path, hot_zero * incoming_zero, incoming_one, n.feature);
    recurse(cold, depth + 1, path, cold_zero * incoming_zero, 0.0, n.feature);
  }

  const Tree& tree_;
  std::span<const double> x_;
  std::span<double> phi_;
  std::vector<PathElement> storage_;
};

}  // namespace

double expected_value(const Tree& tree) {
  std::vector<double> ev(tree.nodes.size(), 0.0);
  // Reverse preorder visits children before parents.
  for (std::size_t i = tree.nodes.size(); i-- > 0;) {
    const TreeNode& n = tree.nodes[i];
    if (n.is_leaf()) {
      ev[i] = n.value[1];
    } else {
      ev[i] = (tree.nodes[n.left].cover * ev[n.left] + tree.nodes[n.right].cover * ev[n.right]) / n.cover;
    }
  }
  return ev[0];
}

void tree_shap_accumulate(const Tree& tree, std::span<const double> x, std::span<double> phi) {
  ShapRecursion(tree, x, phi).run();
}

ShapExplanation tree_shap(const Forest& forest, std::span<const double> x) {
  if (static_cast<int>(x.size()) != forest.n_features) throw DataError("tree_shap: dimension mismatch");
  ShapExplanation e;
  e.contributions.assign(forest.n_features, 0.0);
  for (const Tree& t : forest.trees) {
    e.base_value += expected_value(t);
    tree_shap_accumulate(t, x, e.contributions);
  }
  const double n = static_cast<double>(forest.trees.size());
  e.base_value /= n;
  for (double& v : e.contributions) v /= n;
  e.prediction = predict_proba(forest, x)[1];
  return e;
}

std::vector<ShapExplanation> tree_shap_batch(const Forest& forest, const Matrix& X) {
  if (X.cols != forest.n_features) throw DataError("tree_shap_batch: dimension mismatch");
  std::vector<ShapExplanation> out(X.rows);
#pragma omp parallel for schedule(dynamic)
  for (int r = 0; r < X.rows; ++r) out[r] = tree_shap(forest, X.row(r));
  return out;
}

}  // namespace rfdeep

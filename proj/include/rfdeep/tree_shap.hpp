#pragma once

// Exact path-dependent TreeSHAP for the forest's P(OOD) output. The value
// function of a feature subset S is the cover-weighted expectation of the
// tree output when features outside S are unknown.

#include <span>
#include <vector>

#include "rfdeep/forest.hpp"

namespace rfdeep {

struct ShapExplanation {
  double base_value = 0.0;
  std::vector<double> contributions;
  double prediction = 0.0;
};

/// Cover-weighted mean leaf P(OOD) of one tree.
double expected_value(const Tree& tree);

/// Adds one tree's Shapley values for x into `phi` (size d).
void tree_shap_accumulate(const Tree& tree, std::span<const double> x, std::span<double> phi);

/// Per-tree values summed and divided by the number of trees.
ShapExplanation tree_shap(const Forest& forest, std::span<const double> x);

/// One explanation per row, computed in parallel.
std::vector<ShapExplanation> tree_shap_batch(const Forest& forest, const Matrix& X);

}  // namespace rfdeep

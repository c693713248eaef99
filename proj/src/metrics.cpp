#include "rfdeep/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "rfdeep/error.hpp"

namespace rfdeep {

namespace {

struct Counts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

Counts check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  Counts c;
  for (int l : labels) {
    if (l == 1) {
      ++c.pos;
    } else if (l == 0) {
      ++c.neg;
    } else {
      throw DataError("labels must be 0 (ID) or 1 (OOD)");
    }
  }
  if (c.pos == 0 || c.neg == 0) throw DataError("metric needs both ID and OOD scores");
  return c;
}

// Indices sorted by descending score (index order within ties).
std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

void split(const LabeledScores& s, std::vector<double>& scores, std::vector<int>& labels) {
  scores.clear();
  labels.clear();
  for (const auto& e : s) {
    scores.push_back(e.score);
    labels.push_back(e.label == CohortLabel::OOD ? 1 : 0);
  }
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  const Counts c = check_inputs(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks are half-integers, so the rank sum is exact in double precision.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) rank_sum_pos += midrank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(c.pos);
  const double nn = static_cast<double>(c.neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

double auroc(const LabeledScores& s) {
  std::vector<double> scores;
  std::vector<int> labels;
  split(s, scores, labels);
  return auroc(scores, labels);
}

double fpr_at_tpr(std::span<const double> scores, std::span<const int> labels, double target_tpr) {
  const Counts c = check_inputs(scores, labels);
  const auto order = descending_order(scores);
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double t = scores[order[i]];
    while (i < order.size() && scores[order[i]] == t) {
      if (labels[order[i]] == 1) ++tp; else ++fp;
      ++i;
    }
    // FPR only grows as the threshold falls, so the first qualifying
    // threshold gives the minimum.
    if (static_cast<double>(tp) / static_cast<double>(c.pos) >= target_tpr) {
      return static_cast<double>(fp) / static_cast<double>(c.neg);
    }
  }
  return 1.0;
}

double fpr_at_tpr(const LabeledScores& s, double target_tpr) {
  std::vector<double> scores;
  std::vector<int> labels;
  split(s, scores, labels);
  return fpr_at_tpr(scores, labels, target_tpr);
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  const Counts c = check_inputs(scores, labels);
  const auto order = descending_order(scores);
  std::vector<RocPoint> curve{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double t = scores[order[i]];
    while (i < order.size() && scores[order[i]] == t) {
      if (labels[order[i]] == 1) ++tp; else ++fp;
      ++i;
    }
    curve.push_back({static_cast<double>(fp) / static_cast<double>(c.neg),
                     static_cast<double>(tp) / static_cast<double>(c.pos)});
  }
  if (curve.back().fpr != 1.0 || curve.back().tpr != 1.0) curve.push_back({1.0, 1.0});
  return curve;
}

double trapezoid_area(const std::vector<RocPoint>& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) * 0.5 * (curve[i].tpr + curve[i - 1].tpr);
  }
  return area;
}

}  // namespace rfdeep

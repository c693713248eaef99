#pragma once

// ROC statistics with OOD as the positive class (label 1).

#include <span>
#include <string>
#include <vector>

#include "rfdeep/tensor_store.hpp"

namespace rfdeep {

struct LabeledScore {
  std::string scan_id;
  CohortLabel label = CohortLabel::ID;
  double score = 0.0;
  std::string method;
};
using LabeledScores = std::vector<LabeledScore>;

/// Mann-Whitney AUROC with midranks: P(s_ood > s_id) + 0.5 P(s_ood = s_id).
double auroc(std::span<const double> scores, std::span<const int> labels);
double auroc(const LabeledScores& scores);

/// Minimum FPR over observed-score thresholds t (score >= t -> OOD) whose
/// TPR reaches `target_tpr`. No interpolation.
double fpr_at_tpr(std::span<const double> scores, std::span<const int> labels,
                  double target_tpr = 0.95);
double fpr_at_tpr(const LabeledScores& scores, double target_tpr = 0.95);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

/// (0,0), then one point per distinct score in descending order; ends at (1,1).
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

double trapezoid_area(const std::vector<RocPoint>& curve);

}  // namespace rfdeep

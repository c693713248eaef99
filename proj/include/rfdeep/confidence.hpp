#pragma once

// Training-free OOD scores from per-voxel logits, aggregated over the
// predicted tumor region. Every score follows "higher = more OOD".

#include <array>
#include <string>
#include <string_view>

#include "rfdeep/tensor_store.hpp"

namespace rfdeep {

enum class ScoreMethod { MaxSoftmax, MaxLogit, Energy, Entropy };
inline constexpr std::array<ScoreMethod, 4> kAllScoreMethods = {
    ScoreMethod::MaxSoftmax, ScoreMethod::MaxLogit, ScoreMethod::Energy, ScoreMethod::Entropy};

std::string_view method_name(ScoreMethod m);  // "maxsoftmax", ...
std::string_view method_display_name(ScoreMethod m);  // "MaxSoftmax", ...
ScoreMethod parse_method(std::string_view s);

struct ScoreConfig {
  ScoreMethod method = ScoreMethod::MaxSoftmax;
  double temperature = 1.0;
};

struct OodScore {
  std::string scan_id;
  std::string method;
  double value = 0.0;
  bool fallback_used = false;
};

/// Voxels scored when the predicted mask is empty.
inline constexpr int kFallbackVoxels = 100;

/// Overflow-safe two-class softmax.
std::array<double, 2> voxel_softmax(double l0, double l1);

/// -T * log(exp(l0/T) + exp(l1/T)), shifted by the max.
double voxel_energy(double l0, double l1, double temperature);

/// Raw per-voxel statistic (max probability, max logit, energy, entropy).
double voxel_score(double l0, double l1, const ScoreConfig& cfg);

/// Mean voxel statistic m over the mask, mapped to an OOD value:
/// 1 - m (maxsoftmax), -m (maxlogit), m (energy), m (entropy).
OodScore scan_score(const std::string& scan_id, const LogitVolume& logits,
                    const MaskVolume& mask, const ScoreConfig& cfg);

}  // namespace rfdeep

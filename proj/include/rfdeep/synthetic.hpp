#pragma once

// Deterministic synthetic cohorts and the toy hierarchical encoder that
// stands in for a pretrained volumetric transformer encoder.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "rfdeep/tensor_store.hpp"

namespace rfdeep {

struct CohortSpec {
  std::string cohort_name;
  CohortLabel cohort_label = CohortLabel::ID;
  int n_scans = 1;
  Dims3 dims{32, 32, 32};
  Spacing3 spacing{1.0f, 1.0f, 1.0f};
  std::array<int, 2> blob_count{1, 2};
  std::array<double, 2> blob_radius{3.0, 5.0};  // voxels, drawn per axis
  double texture_mean = 0.35;                   // added inside blobs
  double texture_std = 0.05;
  double background_mean = 0.30;
  double background_std = 0.05;
  double logit_gain = 6.0;
  double logit_noise = 0.5;
  /// Extra tumor logit inside the blobs of OOD cohorts (confidently wrong).
  double logit_miscalibration = 0.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

void to_json(nlohmann::json& j, const CohortSpec& s);
void from_json(const nlohmann::json& j, CohortSpec& s);

struct ToyEncoderConfig {
  int patch_size = 2;
  std::array<int, kNumStages> widths{8, 8, 16, 32, 64};
  std::uint64_t seed = 0x5eed;

  void validate() const;
};

void to_json(nlohmann::json& j, const ToyEncoderConfig& c);
void from_json(const nlohmann::json& j, ToyEncoderConfig& c);

/// Clip to [lo, hi] then map affinely onto [0, 1].
Volume3D hu_window_normalize(const Volume3D& volume, double lo, double hi);

/// Window origins covering `dims` with the given overlap; the last origin on
/// each axis is clamped so the window fits. Lexicographic (z, y, x) order.
std::vector<Dims3> sliding_window_origins(const Dims3& dims, const Dims3& window,
                                          double overlap_fraction);

struct SyntheticScan {
  Volume3D volume;
  MaskVolume mask;
  LogitVolume logits;
};

/// Pure function of (spec, index).
SyntheticScan generate_scan(const CohortSpec& spec, int index);

/// PE = patch average-pool -> seeded linear map -> tanh; each SB stage =
/// 2x2x2 average-pool of the previous stage -> seeded linear map -> tanh.
FeaturePyramid toy_encode(const Volume3D& volume, const ToyEncoderConfig& cfg);

/// Seeded encoder weights for one stage, row-major [out][in], then biases.
struct StageWeights {
  int in = 0;
  int out = 0;
  std::vector<double> weight;
  std::vector<double> bias;
};
StageWeights encoder_stage_weights(const ToyEncoderConfig& cfg, int stage);

std::string scan_id_for(const std::string& cohort_name, int index);

/// Writes volume/mask/logits OVF files for every scan of every spec plus a
/// manifest (out_dir/manifest.json) and returns the manifest.
CohortManifest make_cohort(const std::vector<CohortSpec>& specs,
                           const std::filesystem::path& out_dir,
                           const std::string& dataset_name = "synthetic");

/// Encodes every record, writes the five stage files per scan under out_dir
/// and returns a manifest whose records carry pyramid paths.
CohortManifest encode_cohort(const CohortManifest& manifest, const ToyEncoderConfig& cfg,
                             const std::filesystem::path& out_dir);

}  // namespace rfdeep

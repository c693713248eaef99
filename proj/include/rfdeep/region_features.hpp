#pragma once

// Tumor-region feature extraction: tumor-centred crops, masked multi-scale
// aggregation of encoder stages (deep vector) and radiomics-lite features.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rfdeep/tensor_store.hpp"

namespace rfdeep {

struct CropBox {
  Dims3 origin{};
  Dims3 size{};
};

enum class FeatureKind { Deep, Radiomics };

struct FeatureVector {
  std::string scan_id;
  FeatureKind kind = FeatureKind::Deep;
  std::vector<std::string> names;
  std::vector<double> values;
  /// Deep kind only: stage -> [begin, end) column range.
  std::map<StageId, std::pair<int, int>> stage_slices;
  bool fallback = false;
};

/// 26-connected components as sorted linear voxel indices, largest first;
/// equal sizes are ordered by their smallest voxel index.
std::vector<std::vector<std::size_t>> connected_components(const MaskVolume& mask);

struct CropConfig {
  int k = 8;
  Dims3 size{16, 16, 16};
  int jitter_radius = 2;
};

/// k crops centred on the largest component's centroid (volume centre for an
/// empty mask). Crop 0 is unjittered; crops 1..k-1 draw (dz, dy, dx) in
/// [-jitter, jitter] from one SplitMix64 stream seeded with `seed`, in order.
/// Every crop is clamped inside the volume.
std::vector<CropBox> tumor_crops(const MaskVolume& mask, const CropConfig& cfg, std::uint64_t seed);

struct StageMask {
  Dims3 dims{};
  std::vector<std::uint8_t> data;
};

/// Max-pool: a stage cell is foreground iff any covered voxel is.
StageMask downsample_mask_to_stage(const MaskVolume& mask, int factor);

struct MaskedMean {
  std::vector<double> values;  // one per channel
  bool fallback = false;
};

/// Per-channel mean over foreground cells, or over all cells when the mask is
/// empty (fallback = true). `cells` spans one channel's grid.
MaskedMean masked_mean(const FeatureStage& stage, const StageMask& mask);

/// One vector per crop: PE || SB1 || ... || SB4 masked means restricted to
/// the crop, followed by the `empty_mask` indicator.
std::vector<FeatureVector> deep_feature_vectors(const std::string& scan_id,
                                                const FeaturePyramid& pyramid,
                                                const MaskVolume& mask,
                                                const std::vector<CropBox>& crops);

std::vector<std::string> deep_feature_names(const FeaturePyramid& pyramid);

/// 14 first-order + 12 shape features, then `empty_mask`.
FeatureVector radiomics_lite(const std::string& scan_id, const Volume3D& volume,
                             const MaskVolume& mask);

const std::vector<std::string>& radiomics_feature_names();

inline constexpr const char* kEmptyMaskFeature = "empty_mask";

}  // namespace rfdeep

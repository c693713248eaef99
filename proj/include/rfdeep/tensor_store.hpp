#pragma once

// Scan-level data model and the OVF binary tensor container.
//
// OVF layout (all integers and floats little-endian):
//   bytes 0-7    magic "OVF1\0\0\0\0"
//   byte  8      dtype code (1 = f32, 2 = u8)
//   byte  9      ndim (3 for volumes/masks, 4 for channel-first tensors)
//   bytes 10-13  reserved, zero
//   ndim x u32   dims, outermost first
//   3 x f32      spacing in mm (z, y, x)
//   payload      row-major, last axis fastest

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace rfdeep {

using Dims3 = std::array<int, 3>;       // z, y, x
using Spacing3 = std::array<float, 3>;  // mm per voxel, z, y, x

inline std::size_t voxel_count(const Dims3& d) {
  return static_cast<std::size_t>(d[0]) * static_cast<std::size_t>(d[1]) *
         static_cast<std::size_t>(d[2]);
}

inline std::size_t linear_index(const Dims3& d, int z, int y, int x) {
  return (static_cast<std::size_t>(z) * d[1] + y) * d[2] + x;
}

class Volume3D {
 public:
  Volume3D(Dims3 dims, Spacing3 spacing, std::vector<float> data);

  const Dims3& dims() const { return dims_; }
  const Spacing3& spacing() const { return spacing_; }
  std::span<const float> data() const { return data_; }
  float at(int z, int y, int x) const { return data_[linear_index(dims_, z, y, x)]; }

 private:
  Dims3 dims_;
  Spacing3 spacing_;
  std::vector<float> data_;
};

class MaskVolume {
 public:
  MaskVolume(Dims3 dims, Spacing3 spacing, std::vector<std::uint8_t> data);

  const Dims3& dims() const { return dims_; }
  const Spacing3& spacing() const { return spacing_; }
  std::span<const std::uint8_t> data() const { return data_; }
  bool at(int z, int y, int x) const { return data_[linear_index(dims_, z, y, x)] != 0; }
  std::size_t count() const;

 private:
  Dims3 dims_;
  Spacing3 spacing_;
  std::vector<std::uint8_t> data_;
};

/// Two-channel (background, tumor) per-voxel logits, channel-major.
class LogitVolume {
 public:
  static constexpr int kChannels = 2;

  LogitVolume(Dims3 dims, Spacing3 spacing, std::vector<float> data);

  const Dims3& dims() const { return dims_; }
  const Spacing3& spacing() const { return spacing_; }
  std::span<const float> data() const { return data_; }
  float background(std::size_t voxel) const { return data_[voxel]; }
  float tumor(std::size_t voxel) const { return data_[voxel_count(dims_) + voxel]; }

 private:
  Dims3 dims_;
  Spacing3 spacing_;
  std::vector<float> data_;
};

enum class StageId { PE = 0, SB1, SB2, SB3, SB4 };
inline constexpr int kNumStages = 5;
inline constexpr std::array<StageId, kNumStages> kAllStages = {
    StageId::PE, StageId::SB1, StageId::SB2, StageId::SB3, StageId::SB4};

std::string_view stage_name(StageId id);
StageId parse_stage(std::string_view name);

/// One encoder stage: channel-first grid (C, gz, gy, gx). cell_spacing is the
/// physical size of a grid cell, i.e. voxel spacing times the downsample factor.
struct FeatureStage {
  StageId id = StageId::PE;
  int factor = 1;
  int channels = 0;
  Dims3 grid{};
  Spacing3 cell_spacing{};
  std::vector<float> data;

  float at(int c, int z, int y, int x) const {
    return data[static_cast<std::size_t>(c) * voxel_count(grid) + linear_index(grid, z, y, x)];
  }
};

class FeaturePyramid {
 public:
  /// Validates stage order, factor monotonicity, channel monotonicity and
  /// grid dims = ceil(volume_dims / factor).
  FeaturePyramid(Dims3 volume_dims, std::vector<FeatureStage> stages);

  const Dims3& volume_dims() const { return volume_dims_; }
  const std::vector<FeatureStage>& stages() const { return stages_; }
  const FeatureStage& stage(StageId id) const { return stages_[static_cast<int>(id)]; }

 private:
  Dims3 volume_dims_;
  std::vector<FeatureStage> stages_;
};

// ---------------------------------------------------------------------------
// OVF container

enum class DType : std::uint8_t { F32 = 1, U8 = 2 };

struct OvfTensor {
  DType dtype = DType::F32;
  std::vector<std::uint32_t> dims;
  Spacing3 spacing{1.0f, 1.0f, 1.0f};
  std::vector<float> f32;
  std::vector<std::uint8_t> u8;

  std::size_t element_count() const;
};

struct OvfHeader {
  DType dtype;
  std::vector<std::uint32_t> dims;
  Spacing3 spacing;
};

void write_ovf(const OvfTensor& tensor, const std::filesystem::path& path);
OvfTensor read_ovf(const std::filesystem::path& path);
/// Parses only the header and checks the file size against it.
OvfHeader read_ovf_header(const std::filesystem::path& path);

/// Serialises to the exact byte image written by write_ovf.
std::vector<std::uint8_t> encode_ovf(const OvfTensor& tensor);
OvfTensor decode_ovf(std::span<const std::uint8_t> bytes);

void write_ovf(const Volume3D& v, const std::filesystem::path& path);
void write_ovf(const MaskVolume& m, const std::filesystem::path& path);
void write_ovf(const LogitVolume& l, const std::filesystem::path& path);
void write_ovf(const FeatureStage& s, const std::filesystem::path& path);

Volume3D read_volume(const std::filesystem::path& path);
MaskVolume read_mask(const std::filesystem::path& path);
LogitVolume read_logits(const std::filesystem::path& path);
/// Stage files do not carry their id; the factor is recovered from the cell
/// spacing relative to the scan's voxel spacing.
FeatureStage read_stage(const std::filesystem::path& path, StageId id,
                        const Spacing3& voxel_spacing);
FeaturePyramid read_pyramid(std::span<const std::filesystem::path> paths,
                            const Dims3& volume_dims, const Spacing3& voxel_spacing);

// ---------------------------------------------------------------------------
// Manifests

enum class CohortLabel { ID = 0, OOD = 1 };

std::string_view label_name(CohortLabel label);
CohortLabel parse_label(std::string_view s);

struct ScanRecord {
  std::string scan_id;
  CohortLabel cohort_label = CohortLabel::ID;
  std::string cohort_name;
  std::filesystem::path volume;
  std::filesystem::path mask;
  std::filesystem::path logits;
  std::optional<std::array<std::filesystem::path, kNumStages>> pyramid;
};

struct CohortManifest {
  std::string dataset_name;
  std::vector<ScanRecord> records;
  nlohmann::json provenance;  // null when absent

  const ScanRecord& find(std::string_view scan_id) const;
  /// Distinct cohort names in order of first appearance.
  std::vector<std::string> cohort_names() const;
};

/// Parses and eagerly validates a manifest. Relative artifact paths resolve
/// against the manifest's directory. Errors name the offending scan_id.
CohortManifest load_manifest(const std::filesystem::path& path);

/// Writes artifact paths relative to the manifest's directory when possible.
void save_manifest(const CohortManifest& manifest, const std::filesystem::path& path);

/// Loads all tensors of one record.
struct ScanData {
  Volume3D volume;
  MaskVolume mask;
  LogitVolume logits;
  std::optional<FeaturePyramid> pyramid;
};
ScanData load_scan(const ScanRecord& record, bool with_pyramid);

}  // namespace rfdeep

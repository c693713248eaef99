#include "rfdeep/region_features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "rfdeep/error.hpp"
#include "rfdeep/numeric.hpp"
#include "rfdeep/rng.hpp"

namespace rfdeep {

namespace {

struct Box {
  Dims3 lo;    // inclusive
  Dims3 dims;  // extent
};

// Mean over `box` of every channel, restricted to foreground cells of
// `box_mask` (laid out over the box).
MaskedMean masked_mean_box(const FeatureStage& stage, const Box& box,
                           const std::vector<std::uint8_t>& box_mask) {
  const std::size_t cells = voxel_count(stage.grid);
  const bool any = std::find(box_mask.begin(), box_mask.end(), std::uint8_t{1}) != box_mask.end();
  MaskedMean out;
  out.fallback = !any;
  out.values.resize(stage.channels);
  for (int c = 0; c < stage.channels; ++c) {
    CompensatedSum sum;
    std::size_t n = 0;
    std::size_t i = 0;
    for (int z = 0; z < box.dims[0]; ++z)
      for (int y = 0; y < box.dims[1]; ++y)
        for (int x = 0; x < box.dims[2]; ++x, ++i) {
          if (any && !box_mask[i]) continue;
          sum.add(stage.data[c * cells + linear_index(stage.grid, box.lo[0] + z, box.lo[1] + y, box.lo[2] + x)]);
          ++n;
        }
    out.values[c] = sum.value() / static_cast<double>(n);
  }
  return out;
}

double percentile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::vector<std::vector<std::size_t>> connected_components(const MaskVolume& mask) {
  const Dims3& d = mask.dims();
  const auto data = mask.data();
  std::vector<std::uint8_t> visited(data.size(), 0);
  std::vector<std::vector<std::size_t>> comps;
  std::vector<std::size_t> stack;

  for (std::size_t seed = 0; seed < data.size(); ++seed) {
    if (!data[seed] || visited[seed]) continue;
    std::vector<std::size_t> comp;
    visited[seed] = 1;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      comp.push_back(v);
      const int z = static_cast<int>(v / (static_cast<std::size_t>(d[1]) * d[2]));
      const int y = static_cast<int>((v / d[2]) % d[1]);
      const int x = static_cast<int>(v % d[2]);
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nz = z + dz, ny = y + dy, nx = x + dx;
            if (nz < 0 || ny < 0 || nx < 0 || nz >= d[0] || ny >= d[1] || nx >= d[2]) continue;
            const std::size_t u = linear_index(d, nz, ny, nx);
            if (data[u] && !visited[u]) {
              visited[u] = 1;
              stack.push_back(u);
            }
          }
    }
    std::sort(comp.begin(), comp.end());
    comps.push_back(std::move(comp));
  }
  // Components were discovered in increasing seed order, so a stable sort by
  // size keeps the smallest-seed tie-break.
  std::stable_sort(comps.begin(), comps.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });
  return comps;
}

std::vector<CropBox> tumor_crops(const MaskVolume& mask, const CropConfig& cfg, std::uint64_t seed) {
  const Dims3& d = mask.dims();
  if (cfg.k < 1) throw ConfigError("tumor_crops: k must be >= 1");
  if (cfg.jitter_radius < 0) throw ConfigError("tumor_crops: jitter_radius must be >= 0");
  for (int a = 0; a < 3; ++a) {
    if (cfg.size[a] < 1 || cfg.size[a] > d[a]) throw ConfigError("tumor_crops: crop size exceeds volume dims");
  }

  std::array<int, 3> center;
  const auto comps = connected_components(mask);
  if (comps.empty()) {
    for (int a = 0; a < 3; ++a) center[a] = d[a] / 2;
  } else {
    std::array<double, 3> sum{0.0, 0.0, 0.0};
    for (std::size_t v : comps.front()) {
      sum[0] += static_cast<double>(v / (static_cast<std::size_t>(d[1]) * d[2]));
      sum[1] += static_cast<double>((v / d[2]) % d[1]);
      sum[2] += static_cast<double>(v % d[2]);
    }
    for (int a = 0; a < 3; ++a) {
      center[a] = static_cast<int>(std::floor(sum[a] / static_cast<double>(comps.front().size()) + 0.5));
    }
  }

  SplitMix64 rng(seed);
  std::vector<CropBox> crops;
  crops.reserve(cfg.k);
  for (int i = 0; i < cfg.k; ++i) {
    std::array<int, 3> jitter{0, 0, 0};
    if (i > 0) {
      for (int a = 0; a < 3; ++a) {
        jitter[a] = static_cast<int>(rng.between(-cfg.jitter_radius, cfg.jitter_radius));
      }
    }
    CropBox box;
    box.size = cfg.size;
    for (int a = 0; a < 3; ++a) {
      box.origin[a] = std::clamp(center[a] + jitter[a] - cfg.size[a] / 2, 0, d[a] - cfg.size[a]);
    }
    crops.push_back(box);
  }
  return crops;
}

StageMask downsample_mask_to_stage(const MaskVolume& mask, int factor) {
  if (factor < 1) throw ConfigError("downsample_mask_to_stage: factor must be >= 1");
  const Dims3& d = mask.dims();
  StageMask out;
  for (int a = 0; a < 3; ++a) out.dims[a] = (d[a] + factor - 1) / factor;
  out.data.assign(voxel_count(out.dims), 0);
  std::size_t i = 0;
  for (int z = 0; z < d[0]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[2]; ++x, ++i) {
        if (mask.data()[i]) out.data[linear_index(out.dims, z / factor, y / factor, x / factor)] = 1;
      }
  return out;
}

MaskedMean masked_mean(const FeatureStage& stage, const StageMask& mask) {
  if (mask.dims != stage.grid) throw DataError("masked_mean: mask and stage grid differ");
  return masked_mean_box(stage, Box{{0, 0, 0}, stage.grid}, mask.data);
}

std::vector<std::string> deep_feature_names(const FeaturePyramid& pyramid) {
  std::vector<std::string> names;
  char buf[32];
  for (const auto& st : pyramid.stages()) {
    for (int c = 0; c < st.channels; ++c) {
      std::snprintf(buf, sizeof(buf), "%s_%03d", std::string(stage_name(st.id)).c_str(), c);
      names.emplace_back(buf);
    }
  }
  names.emplace_back(kEmptyMaskFeature);
  return names;
}

std::vector<FeatureVector> deep_feature_vectors(const std::string& scan_id,
                                                const FeaturePyramid& pyramid,
                                                const MaskVolume& mask,
                                                const std::vector<CropBox>& crops) {
  const Dims3& d = mask.dims();
  if (d != pyramid.volume_dims()) throw DataError("deep_feature_vectors: mask and pyramid dims differ");
  const bool empty = mask.count() == 0;
  const auto names = deep_feature_names(pyramid);

  std::map<StageId, std::pair<int, int>> slices;
  int offset = 0;
  for (const auto& st : pyramid.stages()) {
    slices[st.id] = {offset, offset + st.channels};
    offset += st.channels;
  }

  std::vector<FeatureVector> out;
  out.reserve(crops.size());
  for (const CropBox& crop : crops) {
    for (int a = 0; a < 3; ++a) {
      if (crop.size[a] < 1 || crop.origin[a] < 0 || crop.origin[a] + crop.size[a] > d[a]) {
        throw DataError("deep_feature_vectors: crop outside volume");
      }
    }
    FeatureVector fv;
    fv.scan_id = scan_id;
    fv.kind = FeatureKind::Deep;
    fv.names = names;
    fv.stage_slices = slices;
    fv.fallback = empty;
    fv.values.reserve(names.size());
    for (const auto& st : pyramid.stages()) {
      const int f = st.factor;
      Box box;
      for (int a = 0; a < 3; ++a) {
        box.lo[a] = crop.origin[a] / f;
        box.dims[a] = (crop.origin[a] + crop.size[a] - 1) / f - box.lo[a] + 1;
      }
      // Mask restricted to the crop, then max-pooled onto the stage box.
      std::vector<std::uint8_t> box_mask(voxel_count(box.dims), 0);
      for (int z = crop.origin[0]; z < crop.origin[0] + crop.size[0]; ++z)
        for (int y = crop.origin[1]; y < crop.origin[1] + crop.size[1]; ++y)
          for (int x = crop.origin[2]; x < crop.origin[2] + crop.size[2]; ++x) {
            if (mask.at(z, y, x)) {
              box_mask[linear_index(box.dims, z / f - box.lo[0], y / f - box.lo[1], x / f - box.lo[2])] = 1;
            }
          }
      const MaskedMean mm = masked_mean_box(st, box, box_mask);
      fv.fallback = fv.fallback || mm.fallback;
      fv.values.insert(fv.values.end(), mm.values.begin(), mm.values.end());
    }
    fv.values.push_back(empty ? 1.0 : 0.0);
    out.push_back(std::move(fv));
  }
  return out;
}

const std::vector<std::string>& radiomics_feature_names() {
  static const std::vector<std::string> names = {
      "fo_mean",          "fo_variance",        "fo_skewness",
      "fo_kurtosis",      "fo_min",             "fo_max",
      "fo_median",        "fo_p10",             "fo_p90",
      "fo_iqr",           "fo_rms",             "fo_energy",
      "fo_entropy",       "fo_uniformity",      "shape_voxel_count",
      "shape_volume_mm3", "shape_surface_mm2",  "shape_surface_to_volume",
      "shape_sphericity", "shape_bbox_z_mm",    "shape_bbox_y_mm",
      "shape_bbox_x_mm",  "shape_bbox_diag_mm", "shape_centroid_offset_z",
      "shape_centroid_offset_y", "shape_centroid_offset_x", kEmptyMaskFeature};
  return names;
}

FeatureVector radiomics_lite(const std::string& scan_id, const Volume3D& volume, const MaskVolume& mask) {
  const Dims3& d = volume.dims();
  if (mask.dims() != d) throw DataError("radiomics_lite: mask and volume dims differ");
  FeatureVector fv;
  fv.scan_id = scan_id;
  fv.kind = FeatureKind::Radiomics;
  fv.names = radiomics_feature_names();
  fv.values.assign(fv.names.size(), 0.0);

  std::vector<double> vals;
  std::array<int, 3> bb_lo{d[0], d[1], d[2]};
  std::array<int, 3> bb_hi{-1, -1, -1};
  std::array<double, 3> centroid{0.0, 0.0, 0.0};
  std::array<std::size_t, 3> exposed{0, 0, 0};  // faces normal to z, y, x

  for (int z = 0; z < d[0]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[2]; ++x) {
        if (!mask.at(z, y, x)) continue;
        vals.push_back(volume.at(z, y, x));
        const std::array<int, 3> p{z, y, x};
        for (int a = 0; a < 3; ++a) {
          bb_lo[a] = std::min(bb_lo[a], p[a]);
          bb_hi[a] = std::max(bb_hi[a], p[a]);
          centroid[a] += p[a];
          for (int step : {-1, 1}) {
            std::array<int, 3> q = p;
            q[a] += step;
            if (q[a] < 0 || q[a] >= d[a] || !mask.at(q[0], q[1], q[2])) ++exposed[a];
          }
        }
      }

  if (vals.empty()) {
    fv.fallback = true;
    fv.values.back() = 1.0;
    return fv;
  }

  const double n = static_cast<double>(vals.size());
  CompensatedSum s1, s2;
  for (double v : vals) {
    s1.add(v);
    s2.add(v * v);
  }
  const double mean = s1.value() / n;
  CompensatedSum m2, m3, m4;
  for (double v : vals) {
    const double c = v - mean;
    m2.add(c * c);
    m3.add(c * c * c);
    m4.add(c * c * c * c);
  }
  const double var = vals.size() < 2 ? 0.0 : m2.value() / n;
  double skew = 0.0, kurt = 0.0;
  if (var > 0.0) {
    skew = (m3.value() / n) / std::pow(var, 1.5);
    kurt = (m4.value() / n) / (var * var) - 3.0;
  }

  std::vector<double> sorted = vals;
  std::sort(sorted.begin(), sorted.end());

  constexpr int kBins = 64;
  std::array<double, kBins> hist{};
  for (double v : vals) {
    const double c = std::clamp(v, 0.0, 1.0);
    hist[std::min(static_cast<int>(c * kBins), kBins - 1)] += 1.0;
  }
  double entropy = 0.0, uniformity = 0.0;
  for (double h : hist) {
    if (h == 0.0) continue;
    const double p = h / n;
    entropy -= p * std::log2(p);
    uniformity += p * p;
  }

  const auto& sp = volume.spacing();
  const double voxel_mm3 = static_cast<double>(sp[0]) * sp[1] * sp[2];
  const double volume_mm3 = n * voxel_mm3;
  const double area = exposed[0] * static_cast<double>(sp[1]) * sp[2] +
                      exposed[1] * static_cast<double>(sp[0]) * sp[2] +
                      exposed[2] * static_cast<double>(sp[0]) * sp[1];
  const double sphericity =
      std::cbrt(36.0 * std::numbers::pi * volume_mm3 * volume_mm3) / area;

  std::array<double, 3> bbox;
  for (int a = 0; a < 3; ++a) bbox[a] = (bb_hi[a] - bb_lo[a] + 1) * static_cast<double>(sp[a]);

  auto& v = fv.values;
  v[0] = mean;
  v[1] = var;
  v[2] = skew;
  v[3] = kurt;
  v[4] = sorted.front();
  v[5] = sorted.back();
  v[6] = percentile(sorted, 0.5);
  v[7] = percentile(sorted, 0.1);
  v[8] = percentile(sorted, 0.9);
  v[9] = percentile(sorted, 0.75) - percentile(sorted, 0.25);
  v[10] = std::sqrt(s2.value() / n);
  v[11] = s2.value();
  v[12] = entropy + 0.0;  // no negative zero
  v[13] = uniformity;
  v[14] = n;
  v[15] = volume_mm3;
  v[16] = area;
  v[17] = area / volume_mm3;
  v[18] = sphericity;
  v[19] = bbox[0];
  v[20] = bbox[1];
  v[21] = bbox[2];
  v[22] = std::sqrt(bbox[0] * bbox[0] + bbox[1] * bbox[1] + bbox[2] * bbox[2]);
  for (int a = 0; a < 3; ++a) {
    v[23 + a] = (centroid[a] / n - 0.5 * (d[a] - 1)) / d[a];
  }
  v[26] = 0.0;
  return fv;
}

}  // namespace rfdeep

#include "rfdeep/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "rfdeep/error.hpp"
#include "rfdeep/rng.hpp"

namespace fs = std::filesystem;

namespace rfdeep {

namespace {

constexpr double kHuLo = -400.0;
constexpr double kHuHi = 400.0;

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

struct Blob {
  std::array<double, 3> center;
  std::array<double, 3> radius;
};

}  // namespace

void CohortSpec::validate() const {
  auto fail = [&](const std::string& m) { throw ConfigError("cohort '" + cohort_name + "': " + m); };
  if (cohort_name.empty()) throw ConfigError("cohort spec needs a cohort_name");
  if (n_scans < 1) fail("empty cohort");
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) fail("dims must be positive");
    if (!(spacing[a] > 0.0f)) fail("spacing must be positive");
  }
  if (blob_count[0] < 0 || blob_count[1] < blob_count[0]) fail("invalid blob_count range");
  if (blob_radius[0] <= 0.0 || blob_radius[1] < blob_radius[0]) fail("invalid blob_radius range");
  const int rmax = static_cast<int>(std::ceil(blob_radius[1]));
  for (int a = 0; a < 3; ++a) {
    if (2 * rmax + 1 > dims[a]) fail("blob radius range does not fit inside dims");
  }
  if (texture_std < 0.0 || background_std < 0.0 || logit_noise < 0.0) fail("std must be >= 0");
  if (logit_miscalibration < 0.0) fail("logit_miscalibration must be >= 0");
}

void to_json(nlohmann::json& j, const CohortSpec& s) {
  j = {{"cohort_name", s.cohort_name},
       {"cohort_label", std::string(label_name(s.cohort_label))},
       {"n_scans", s.n_scans},
       {"dims", s.dims},
       {"spacing", s.spacing},
       {"blob_count", s.blob_count},
       {"blob_radius", s.blob_radius},
       {"texture_mean", s.texture_mean},
       {"texture_std", s.texture_std},
       {"background_mean", s.background_mean},
       {"background_std", s.background_std},
       {"logit_gain", s.logit_gain},
       {"logit_noise", s.logit_noise},
       {"logit_miscalibration", s.logit_miscalibration},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, CohortSpec& s) {
  s = CohortSpec{};
  j.at("cohort_name").get_to(s.cohort_name);
  if (j.contains("cohort_label")) s.cohort_label = parse_label(j.at("cohort_label").get<std::string>());
  read_opt(j, "n_scans", s.n_scans);
  read_opt(j, "dims", s.dims);
  read_opt(j, "spacing", s.spacing);
  read_opt(j, "blob_count", s.blob_count);
  read_opt(j, "blob_radius", s.blob_radius);
  read_opt(j, "texture_mean", s.texture_mean);
  read_opt(j, "texture_std", s.texture_std);
  read_opt(j, "background_mean", s.background_mean);
  read_opt(j, "background_std", s.background_std);
  read_opt(j, "logit_gain", s.logit_gain);
  read_opt(j, "logit_noise", s.logit_noise);
  read_opt(j, "logit_miscalibration", s.logit_miscalibration);
  read_opt(j, "seed", s.seed);
}

void ToyEncoderConfig::validate() const {
  if (patch_size < 1) throw ConfigError("encoder: patch_size must be positive");
  for (int w : widths) {
    if (w < 1) throw ConfigError("encoder: widths must be positive");
  }
  for (int s = 2; s < kNumStages; ++s) {
    if (widths[s] < widths[s - 1]) throw ConfigError("encoder: SB widths must be non-decreasing");
  }
  if (widths[1] < widths[0]) throw ConfigError("encoder: channel counts must be non-decreasing");
}

void to_json(nlohmann::json& j, const ToyEncoderConfig& c) {
  j = {{"patch_size", c.patch_size}, {"widths", c.widths}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ToyEncoderConfig& c) {
  c = ToyEncoderConfig{};
  read_opt(j, "patch_size", c.patch_size);
  read_opt(j, "widths", c.widths);
  read_opt(j, "seed", c.seed);
}

Volume3D hu_window_normalize(const Volume3D& volume, double lo, double hi) {
  if (!(lo < hi)) throw ConfigError("hu_window_normalize: lo must be < hi");
  std::vector<float> out(volume.data().size());
  const double range = hi - lo;
  std::transform(volume.data().begin(), volume.data().end(), out.begin(), [&](float v) {
    const double c = std::clamp(static_cast<double>(v), lo, hi);
    return static_cast<float>((c - lo) / range);
  });
  return Volume3D(volume.dims(), volume.spacing(), std::move(out));
}

std::vector<Dims3> sliding_window_origins(const Dims3& dims, const Dims3& window,
                                          double overlap_fraction) {
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
    throw ConfigError("sliding_window_origins: overlap must be in [0, 1)");
  }
  std::array<std::vector<int>, 3> axis;
  for (int a = 0; a < 3; ++a) {
    if (window[a] < 1 || window[a] > dims[a]) {
      throw ConfigError("sliding_window_origins: window larger than dims");
    }
    const int stride = std::max(1, static_cast<int>(std::floor(window[a] * (1.0 - overlap_fraction))));
    int o = 0;
    while (true) {
      axis[a].push_back(o);
      if (o + window[a] >= dims[a]) break;
      o += stride;
      if (o + window[a] > dims[a]) o = dims[a] - window[a];
    }
  }
  std::vector<Dims3> origins;
  origins.reserve(axis[0].size() * axis[1].size() * axis[2].size());
  for (int z : axis[0])
    for (int y : axis[1])
      for (int x : axis[2]) origins.push_back({z, y, x});
  return origins;
}

SyntheticScan generate_scan(const CohortSpec& spec, int index) {
  spec.validate();
  SplitMix64 rng(derive_seed(spec.seed, static_cast<std::uint64_t>(index)));

  const int n_blobs = static_cast<int>(rng.between(spec.blob_count[0], spec.blob_count[1]));
  std::vector<Blob> blobs(n_blobs);
  for (Blob& b : blobs) {
    for (int a = 0; a < 3; ++a) {
      b.radius[a] = rng.uniform(spec.blob_radius[0], spec.blob_radius[1]);
      const int margin = static_cast<int>(std::ceil(b.radius[a]));
      b.center[a] = static_cast<double>(rng.between(margin, spec.dims[a] - 1 - margin));
    }
  }

  const Dims3& d = spec.dims;
  const std::size_t n = voxel_count(d);
  std::vector<float> hu(n);
  std::vector<std::uint8_t> mask(n, 0);
  std::vector<float> logits(2 * n);
  const bool decoy = spec.cohort_label == CohortLabel::OOD;

  std::size_t i = 0;
  for (int z = 0; z < d[0]; ++z) {
    for (int y = 0; y < d[1]; ++y) {
      for (int x = 0; x < d[2]; ++x, ++i) {
        // Blob signal: 1 at a centre, 0 on the surface, negative outside.
        double signal = -1.0;
        for (const Blob& b : blobs) {
          const double dz = (z - b.center[0]) / b.radius[0];
          const double dy = (y - b.center[1]) / b.radius[1];
          const double dx = (x - b.center[2]) / b.radius[2];
          signal = std::max(signal, 1.0 - std::sqrt(dz * dz + dy * dy + dx * dx));
        }
        const bool inside = signal >= 0.0;

        double intensity = spec.background_mean + spec.background_std * rng.normal();
        if (inside) intensity += spec.texture_mean + spec.texture_std * rng.normal();
        hu[i] = static_cast<float>(kHuLo + (kHuHi - kHuLo) * intensity);

        double logit = spec.logit_gain * signal + spec.logit_noise * rng.normal();
        if (inside && decoy) logit += spec.logit_miscalibration;
        logits[i] = static_cast<float>(-0.5 * logit);
        logits[n + i] = static_cast<float>(0.5 * logit);
        mask[i] = inside ? 1 : 0;
      }
    }
  }

  Volume3D raw(d, spec.spacing, std::move(hu));
  return SyntheticScan{hu_window_normalize(raw, kHuLo, kHuHi),
                       MaskVolume(d, spec.spacing, std::move(mask)),
                       LogitVolume(d, spec.spacing, std::move(logits))};
}

StageWeights encoder_stage_weights(const ToyEncoderConfig& cfg, int stage) {
  StageWeights w;
  w.in = stage == 0 ? 1 : cfg.widths[stage - 1];
  w.out = cfg.widths[stage];
  SplitMix64 rng(derive_seed(cfg.seed, "encoder", static_cast<std::uint64_t>(stage)));
  const double bound = 1.0 / std::sqrt(static_cast<double>(w.in));
  w.weight.resize(static_cast<std::size_t>(w.in) * w.out);
  for (double& v : w.weight) v = rng.uniform(-bound, bound);
  w.bias.resize(w.out);
  for (double& v : w.bias) v = rng.uniform(-bound, bound);
  return w;
}

FeaturePyramid toy_encode(const Volume3D& volume, const ToyEncoderConfig& cfg) {
  cfg.validate();
  const Dims3& vd = volume.dims();
  const int p = cfg.patch_size;
  for (int a = 0; a < 3; ++a) {
    if (vd[a] % p != 0) throw ConfigError("toy_encode: patch_size must divide volume dims");
  }

  std::vector<FeatureStage> stages;
  stages.reserve(kNumStages);

  // Patch embedding.
  {
    const StageWeights w = encoder_stage_weights(cfg, 0);
    FeatureStage st;
    st.id = StageId::PE;
    st.factor = p;
    st.channels = w.out;
    st.grid = {vd[0] / p, vd[1] / p, vd[2] / p};
    for (int a = 0; a < 3; ++a) st.cell_spacing[a] = volume.spacing()[a] * static_cast<float>(p);
    const std::size_t cells = voxel_count(st.grid);
    st.data.resize(cells * w.out);
    const double inv = 1.0 / (static_cast<double>(p) * p * p);
    const auto data = volume.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t cell = 0; cell < static_cast<std::int64_t>(cells); ++cell) {
      const int gz = static_cast<int>(cell / (st.grid[1] * st.grid[2]));
      const int gy = static_cast<int>((cell / st.grid[2]) % st.grid[1]);
      const int gx = static_cast<int>(cell % st.grid[2]);
      double sum = 0.0;
      for (int z = gz * p; z < gz * p + p; ++z)
        for (int y = gy * p; y < gy * p + p; ++y)
          for (int x = gx * p; x < gx * p + p; ++x) sum += data[linear_index(vd, z, y, x)];
      const double pooled = sum * inv;
      for (int c = 0; c < w.out; ++c) {
        st.data[c * cells + cell] = static_cast<float>(std::tanh(w.weight[c] * pooled + w.bias[c]));
      }
    }
    stages.push_back(std::move(st));
  }

  // Hierarchical stages: 2x2x2 pool (partial windows at odd edges) + mix + tanh.
  for (int s = 1; s < kNumStages; ++s) {
    const FeatureStage& prev = stages.back();
    const StageWeights w = encoder_stage_weights(cfg, s);
    FeatureStage st;
    st.id = kAllStages[s];
    st.factor = prev.factor * 2;
    st.channels = w.out;
    for (int a = 0; a < 3; ++a) {
      st.grid[a] = (prev.grid[a] + 1) / 2;
      st.cell_spacing[a] = volume.spacing()[a] * static_cast<float>(st.factor);
    }
    const std::size_t cells = voxel_count(st.grid);
    const std::size_t prev_cells = voxel_count(prev.grid);
    st.data.resize(cells * w.out);
#pragma omp parallel for schedule(static)
    for (std::int64_t cell = 0; cell < static_cast<std::int64_t>(cells); ++cell) {
      const int gz = static_cast<int>(cell / (st.grid[1] * st.grid[2]));
      const int gy = static_cast<int>((cell / st.grid[2]) % st.grid[1]);
      const int gx = static_cast<int>(cell % st.grid[2]);
      std::vector<double> pooled(w.in, 0.0);
      int count = 0;
      for (int z = 2 * gz; z < std::min(2 * gz + 2, prev.grid[0]); ++z)
        for (int y = 2 * gy; y < std::min(2 * gy + 2, prev.grid[1]); ++y)
          for (int x = 2 * gx; x < std::min(2 * gx + 2, prev.grid[2]); ++x) {
            const std::size_t src = linear_index(prev.grid, z, y, x);
            for (int c = 0; c < w.in; ++c) pooled[c] += prev.data[c * prev_cells + src];
            ++count;
          }
      for (double& v : pooled) v /= count;
      for (int o = 0; o < w.out; ++o) {
        double acc = w.bias[o];
        for (int c = 0; c < w.in; ++c) acc += w.weight[static_cast<std::size_t>(o) * w.in + c] * pooled[c];
        st.data[o * cells + cell] = static_cast<float>(std::tanh(acc));
      }
    }
    stages.push_back(std::move(st));
  }
  return FeaturePyramid(vd, std::move(stages));
}

std::string scan_id_for(const std::string& cohort_name, int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", index);
  return cohort_name + "_" + buf;
}

CohortManifest make_cohort(const std::vector<CohortSpec>& specs, const fs::path& out_dir,
                           const std::string& dataset_name) {
  if (specs.empty()) throw ConfigError("make_cohort: no cohort specs");
  for (const auto& s : specs) s.validate();

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());

  CohortManifest m;
  m.dataset_name = dataset_name;
  std::vector<std::pair<int, int>> jobs;  // (spec, index)
  for (int s = 0; s < static_cast<int>(specs.size()); ++s) {
    for (int i = 0; i < specs[s].n_scans; ++i) {
      jobs.emplace_back(s, i);
      const CohortSpec& spec = specs[s];
      ScanRecord r;
      r.scan_id = scan_id_for(spec.cohort_name, i);
      r.cohort_label = spec.cohort_label;
      r.cohort_name = spec.cohort_name;
      r.volume = out_dir / (r.scan_id + "_volume.ovf");
      r.mask = out_dir / (r.scan_id + "_mask.ovf");
      r.logits = out_dir / (r.scan_id + "_logits.ovf");
      m.records.push_back(std::move(r));
    }
  }
  for (std::size_t a = 0; a < m.records.size(); ++a) {
    for (std::size_t b = a + 1; b < m.records.size(); ++b) {
      if (m.records[a].scan_id == m.records[b].scan_id) {
        throw ConfigError("duplicate scan_id '" + m.records[a].scan_id + "' (repeated cohort_name?)");
      }
    }
  }

  std::vector<std::string> errors(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t j = 0; j < static_cast<std::int64_t>(jobs.size()); ++j) {
    try {
      const auto [s, i] = jobs[j];
      const SyntheticScan scan = generate_scan(specs[s], i);
      write_ovf(scan.volume, m.records[j].volume);
      write_ovf(scan.mask, m.records[j].mask);
      write_ovf(scan.logits, m.records[j].logits);
    } catch (const std::exception& e) {
      errors[j] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw DataError(e);
  }

  m.provenance = {{"generator", "rfdeep-synthetic"}, {"specs", specs}};
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

CohortManifest encode_cohort(const CohortManifest& manifest, const ToyEncoderConfig& cfg,
                             const fs::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());

  CohortManifest out = manifest;
  std::vector<std::string> errors(out.records.size());
  std::vector<std::string> error_ids(out.records.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t k = 0; k < static_cast<std::int64_t>(out.records.size()); ++k) {
    ScanRecord& r = out.records[k];
    try {
      const Volume3D vol = read_volume(r.volume);
      const FeaturePyramid pyr = toy_encode(vol, cfg);
      std::array<fs::path, kNumStages> paths;
      for (int s = 0; s < kNumStages; ++s) {
        paths[s] = out_dir / (r.scan_id + "_" + std::string(stage_name(kAllStages[s])) + ".ovf");
        write_ovf(pyr.stages()[s], paths[s]);
      }
      r.pyramid = paths;
    } catch (const std::exception& e) {
      errors[k] = "scan '" + r.scan_id + "': " + e.what();
      error_ids[k] = r.scan_id;
    }
  }
  for (std::size_t k = 0; k < errors.size(); ++k) {
    if (!errors[k].empty()) throw ScanError(error_ids[k], errors[k]);
  }
  nlohmann::json prov = out.provenance.is_null() ? nlohmann::json::object() : out.provenance;
  prov["encoder"] = cfg;
  out.provenance = prov;
  return out;
}

}  // namespace rfdeep

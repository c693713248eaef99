#include "rfdeep/tensor_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <unordered_set>

#include "rfdeep/error.hpp"

namespace fs = std::filesystem;

namespace rfdeep {

namespace {

constexpr std::array<std::uint8_t, 8> kMagic = {'O', 'V', 'F', '1', 0, 0, 0, 0};
constexpr std::size_t kFixedHeader = 14;

static_assert(std::endian::native == std::endian::little,
              "OVF I/O assumes a little-endian host");

std::string dims_string(const Dims3& d) {
  return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
}

void check_dims(const Dims3& dims, const char* what) {
  for (int d : dims) {
    if (d <= 0) throw DataError(std::string(what) + ": dims must be positive");
  }
}

void check_spacing(const Spacing3& s, const char* what) {
  for (float v : s) {
    if (!(v > 0.0f) || !std::isfinite(v)) {
      throw DataError(std::string(what) + ": spacing must be positive and finite");
    }
  }
}

void check_finite(std::span<const float> data, const char* what) {
  for (float v : data) {
    if (!std::isfinite(v)) throw DataError(std::string(what) + ": non-finite payload");
  }
}

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(value);
  out.insert(out.end(), bytes.begin(), bytes.end());
}

template <typename T>
T get(std::span<const std::uint8_t> in, std::size_t offset) {
  std::array<std::uint8_t, sizeof(T)> bytes;
  std::memcpy(bytes.data(), in.data() + offset, sizeof(T));
  return std::bit_cast<T>(bytes);
}

std::size_t dtype_size(DType t) { return t == DType::F32 ? 4 : 1; }

DType parse_dtype(std::uint8_t code) {
  if (code == 1) return DType::F32;
  if (code == 2) return DType::U8;
  throw DataError("unknown dtype code " + std::to_string(code));
}

OvfHeader parse_header(std::span<const std::uint8_t> bytes, std::size_t& payload_offset) {
  if (bytes.size() < kFixedHeader ||
      !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw DataError("bad magic");
  }
  OvfHeader h;
  h.dtype = parse_dtype(bytes[8]);
  const int ndim = bytes[9];
  if (ndim < 1 || ndim > 8) throw DataError("unsupported ndim " + std::to_string(ndim));
  const std::size_t need = kFixedHeader + 4 * ndim + 12;
  if (bytes.size() < need) throw DataError("truncated header");
  for (int i = 0; i < ndim; ++i) h.dims.push_back(get<std::uint32_t>(bytes, kFixedHeader + 4 * i));
  for (int i = 0; i < 3; ++i) h.spacing[i] = get<float>(bytes, kFixedHeader + 4 * ndim + 4 * i);
  payload_offset = need;
  return h;
}

std::size_t product(const std::vector<std::uint32_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Dims3 dims3(const std::vector<std::uint32_t>& d, std::size_t offset) {
  return {static_cast<int>(d[offset]), static_cast<int>(d[offset + 1]),
          static_cast<int>(d[offset + 2])};
}

void expect_shape(const OvfTensor& t, DType dtype, std::size_t ndim, const fs::path& path) {
  if (t.dtype != dtype || t.dims.size() != ndim) {
    throw DataError(path.string() + ": unexpected dtype/ndim for this tensor kind");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

Volume3D::Volume3D(Dims3 dims, Spacing3 spacing, std::vector<float> data)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
  check_dims(dims_, "Volume3D");
  check_spacing(spacing_, "Volume3D");
  if (data_.size() != voxel_count(dims_)) throw DataError("Volume3D: payload length mismatch");
  check_finite(data_, "Volume3D");
}

MaskVolume::MaskVolume(Dims3 dims, Spacing3 spacing, std::vector<std::uint8_t> data)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
  check_dims(dims_, "MaskVolume");
  check_spacing(spacing_, "MaskVolume");
  if (data_.size() != voxel_count(dims_)) throw DataError("MaskVolume: payload length mismatch");
  for (auto v : data_) {
    if (v > 1) throw DataError("MaskVolume: values must be 0 or 1");
  }
}

std::size_t MaskVolume::count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

LogitVolume::LogitVolume(Dims3 dims, Spacing3 spacing, std::vector<float> data)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
  check_dims(dims_, "LogitVolume");
  check_spacing(spacing_, "LogitVolume");
  if (data_.size() != kChannels * voxel_count(dims_)) {
    throw DataError("LogitVolume: payload length mismatch");
  }
  check_finite(data_, "LogitVolume");
}

std::string_view stage_name(StageId id) {
  static constexpr std::array<std::string_view, kNumStages> names = {"PE", "SB1", "SB2", "SB3", "SB4"};
  return names[static_cast<int>(id)];
}

StageId parse_stage(std::string_view name) {
  for (StageId id : kAllStages) {
    if (stage_name(id) == name) return id;
  }
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

FeaturePyramid::FeaturePyramid(Dims3 volume_dims, std::vector<FeatureStage> stages)
    : volume_dims_(volume_dims), stages_(std::move(stages)) {
  if (stages_.size() != kNumStages) throw DataError("FeaturePyramid: expected 5 stages");
  for (int s = 0; s < kNumStages; ++s) {
    const FeatureStage& st = stages_[s];
    if (st.id != kAllStages[s]) throw DataError("FeaturePyramid: stages out of order");
    if (st.factor < 1 || st.channels < 1) throw DataError("FeaturePyramid: bad factor/channels");
    if (s > 0 && st.factor <= stages_[s - 1].factor) {
      throw DataError("FeaturePyramid: downsample factors must strictly increase");
    }
    if (s > 0 && st.channels < stages_[s - 1].channels) {
      throw DataError("FeaturePyramid: channel counts must be non-decreasing");
    }
    for (int a = 0; a < 3; ++a) {
      const int expect = (volume_dims_[a] + st.factor - 1) / st.factor;
      if (st.grid[a] != expect) {
        throw DataError("FeaturePyramid: stage " + std::string(stage_name(st.id)) +
                        " grid " + dims_string(st.grid) + " != ceil(volume/factor)");
      }
    }
    if (st.data.size() != static_cast<std::size_t>(st.channels) * voxel_count(st.grid)) {
      throw DataError("FeaturePyramid: payload length mismatch");
    }
    check_finite(st.data, "FeaturePyramid");
  }
}

// ---------------------------------------------------------------------------

std::size_t OvfTensor::element_count() const { return product(dims); }

std::vector<std::uint8_t> encode_ovf(const OvfTensor& t) {
  if (t.dims.empty() || t.dims.size() > 8) throw DataError("OVF: ndim must be 1..8");
  const std::size_t n = t.element_count();
  const std::size_t have = t.dtype == DType::F32 ? t.f32.size() : t.u8.size();
  if (have != n) throw DataError("OVF: payload length mismatch");
  if (t.dtype == DType::F32) check_finite(t.f32, "OVF");

  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  out.reserve(kFixedHeader + 4 * t.dims.size() + 12 + n * dtype_size(t.dtype));
  out.push_back(static_cast<std::uint8_t>(t.dtype));
  out.push_back(static_cast<std::uint8_t>(t.dims.size()));
  out.insert(out.end(), 4, 0);
  for (auto d : t.dims) put<std::uint32_t>(out, d);
  for (float s : t.spacing) put<float>(out, s);
  if (t.dtype == DType::F32) {
    for (float v : t.f32) put<float>(out, v);
  } else {
    out.insert(out.end(), t.u8.begin(), t.u8.end());
  }
  return out;
}

OvfTensor decode_ovf(std::span<const std::uint8_t> bytes) {
  std::size_t offset = 0;
  OvfHeader h = parse_header(bytes, offset);
  OvfTensor t;
  t.dtype = h.dtype;
  t.dims = std::move(h.dims);
  t.spacing = h.spacing;
  const std::size_t n = t.element_count();
  if (bytes.size() - offset != n * dtype_size(t.dtype)) throw DataError("payload length mismatch");
  if (t.dtype == DType::F32) {
    t.f32.resize(n);
    std::memcpy(t.f32.data(), bytes.data() + offset, 4 * n);
    check_finite(t.f32, "OVF");
  } else {
    t.u8.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
  }
  return t;
}

void write_ovf(const OvfTensor& tensor, const fs::path& path) {
  const auto bytes = encode_ovf(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

OvfTensor read_ovf(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_ovf(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

OvfHeader read_ovf_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> head(kFixedHeader + 4 * 8 + 12);
  in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  try {
    std::size_t offset = 0;
    OvfHeader h = parse_header(head, offset);
    const auto size = fs::file_size(path);
    if (size - offset != product(h.dims) * dtype_size(h.dtype)) {
      throw DataError("payload length mismatch");
    }
    return h;
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_ovf(const Volume3D& v, const fs::path& path) {
  OvfTensor t;
  t.dtype = DType::F32;
  t.dims = {static_cast<std::uint32_t>(v.dims()[0]), static_cast<std::uint32_t>(v.dims()[1]),
            static_cast<std::uint32_t>(v.dims()[2])};
  t.spacing = v.spacing();
  t.f32.assign(v.data().begin(), v.data().end());
  write_ovf(t, path);
}

void write_ovf(const MaskVolume& m, const fs::path& path) {
  OvfTensor t;
  t.dtype = DType::U8;
  t.dims = {static_cast<std::uint32_t>(m.dims()[0]), static_cast<std::uint32_t>(m.dims()[1]),
            static_cast<std::uint32_t>(m.dims()[2])};
  t.spacing = m.spacing();
  t.u8.assign(m.data().begin(), m.data().end());
  write_ovf(t, path);
}

void write_ovf(const LogitVolume& l, const fs::path& path) {
  OvfTensor t;
  t.dtype = DType::F32;
  t.dims = {2, static_cast<std::uint32_t>(l.dims()[0]), static_cast<std::uint32_t>(l.dims()[1]),
            static_cast<std::uint32_t>(l.dims()[2])};
  t.spacing = l.spacing();
  t.f32.assign(l.data().begin(), l.data().end());
  write_ovf(t, path);
}

void write_ovf(const FeatureStage& s, const fs::path& path) {
  OvfTensor t;
  t.dtype = DType::F32;
  t.dims = {static_cast<std::uint32_t>(s.channels), static_cast<std::uint32_t>(s.grid[0]),
            static_cast<std::uint32_t>(s.grid[1]), static_cast<std::uint32_t>(s.grid[2])};
  t.spacing = s.cell_spacing;
  t.f32 = s.data;
  write_ovf(t, path);
}

Volume3D read_volume(const fs::path& path) {
  OvfTensor t = read_ovf(path);
  expect_shape(t, DType::F32, 3, path);
  return Volume3D(dims3(t.dims, 0), t.spacing, std::move(t.f32));
}

MaskVolume read_mask(const fs::path& path) {
  OvfTensor t = read_ovf(path);
  expect_shape(t, DType::U8, 3, path);
  return MaskVolume(dims3(t.dims, 0), t.spacing, std::move(t.u8));
}

LogitVolume read_logits(const fs::path& path) {
  OvfTensor t = read_ovf(path);
  expect_shape(t, DType::F32, 4, path);
  if (t.dims[0] != 2) throw DataError(path.string() + ": logits must have 2 channels");
  return LogitVolume(dims3(t.dims, 1), t.spacing, std::move(t.f32));
}

FeatureStage read_stage(const fs::path& path, StageId id, const Spacing3& voxel_spacing) {
  OvfTensor t = read_ovf(path);
  expect_shape(t, DType::F32, 4, path);
  FeatureStage s;
  s.id = id;
  s.channels = static_cast<int>(t.dims[0]);
  s.grid = dims3(t.dims, 1);
  s.cell_spacing = t.spacing;
  const double ratio = static_cast<double>(t.spacing[0]) / voxel_spacing[0];
  s.factor = static_cast<int>(std::lround(ratio));
  if (s.factor < 1 || std::abs(ratio - s.factor) > 1e-3) {
    throw DataError(path.string() + ": stage cell spacing is not an integer multiple of voxel spacing");
  }
  s.data = std::move(t.f32);
  return s;
}

FeaturePyramid read_pyramid(std::span<const fs::path> paths, const Dims3& volume_dims,
                            const Spacing3& voxel_spacing) {
  if (paths.size() != kNumStages) throw DataError("pyramid needs exactly 5 stage files");
  std::vector<FeatureStage> stages;
  for (int s = 0; s < kNumStages; ++s) stages.push_back(read_stage(paths[s], kAllStages[s], voxel_spacing));
  return FeaturePyramid(volume_dims, std::move(stages));
}

// ---------------------------------------------------------------------------

std::string_view label_name(CohortLabel label) { return label == CohortLabel::ID ? "ID" : "OOD"; }

CohortLabel parse_label(std::string_view s) {
  if (s == "ID") return CohortLabel::ID;
  if (s == "OOD") return CohortLabel::OOD;
  throw DataError("unknown cohort_label '" + std::string(s) + "'");
}

const ScanRecord& CohortManifest::find(std::string_view scan_id) const {
  for (const auto& r : records) {
    if (r.scan_id == scan_id) return r;
  }
  throw DataError("scan_id '" + std::string(scan_id) + "' not in manifest");
}

std::vector<std::string> CohortManifest::cohort_names() const {
  std::vector<std::string> names;
  for (const auto& r : records) {
    if (std::find(names.begin(), names.end(), r.cohort_name) == names.end()) names.push_back(r.cohort_name);
  }
  return names;
}

namespace {

void validate_record(const ScanRecord& r) {
  auto header = [&](const fs::path& p) {
    if (!fs::exists(p)) throw ScanError(r.scan_id, "scan '" + r.scan_id + "': missing file " + p.string());
    try {
      return read_ovf_header(p);
    } catch (const DataError& e) {
      throw ScanError(r.scan_id, "scan '" + r.scan_id + "': " + e.what());
    }
  };
  const OvfHeader vol = header(r.volume);
  const OvfHeader mask = header(r.mask);
  const OvfHeader logits = header(r.logits);
  auto fail = [&](const std::string& msg) { throw ScanError(r.scan_id, "scan '" + r.scan_id + "': " + msg); };
  if (vol.dtype != DType::F32 || vol.dims.size() != 3) fail("volume must be f32 with 3 dims");
  if (mask.dtype != DType::U8 || mask.dims != vol.dims) fail("mask dims/dtype do not match volume");
  if (logits.dtype != DType::F32 || logits.dims.size() != 4 || logits.dims[0] != 2 ||
      !std::equal(vol.dims.begin(), vol.dims.end(), logits.dims.begin() + 1)) {
    fail("logits must be 2 x volume dims");
  }
  if (r.pyramid) {
    for (const auto& p : *r.pyramid) {
      const OvfHeader st = header(p);
      if (st.dtype != DType::F32 || st.dims.size() != 4) fail("pyramid stage must be f32 with 4 dims");
    }
  }
}

}  // namespace

CohortManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + path.string() + ": " + e.what());
  }
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path q(p);
    return q.is_absolute() ? q : base / q;
  };

  CohortManifest m;
  try {
    m.dataset_name = j.at("dataset_name").get<std::string>();
    if (j.contains("provenance")) m.provenance = j["provenance"];
    std::unordered_set<std::string> seen;
    for (const auto& jr : j.at("records")) {
      ScanRecord r;
      r.scan_id = jr.at("scan_id").get<std::string>();
      if (!seen.insert(r.scan_id).second) {
        throw ScanError(r.scan_id, "duplicate scan_id '" + r.scan_id + "'");
      }
      try {
        r.cohort_label = parse_label(jr.at("cohort_label").get<std::string>());
      } catch (const DataError& e) {
        throw ScanError(r.scan_id, "scan '" + r.scan_id + "': " + e.what());
      }
      r.cohort_name = jr.at("cohort_name").get<std::string>();
      r.volume = resolve(jr.at("volume").get<std::string>());
      r.mask = resolve(jr.at("mask").get<std::string>());
      r.logits = resolve(jr.at("logits").get<std::string>());
      if (jr.contains("pyramid") && !jr["pyramid"].is_null()) {
        const auto& jp = jr["pyramid"];
        if (!jp.is_array() || jp.size() != kNumStages) {
          throw ScanError(r.scan_id, "scan '" + r.scan_id + "': pyramid must list 5 stage files");
        }
        std::array<fs::path, kNumStages> ps;
        for (int s = 0; s < kNumStages; ++s) ps[s] = resolve(jp[s].get<std::string>());
        r.pyramid = ps;
      }
      m.records.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + path.string() + ": " + e.what());
  }
  for (const auto& r : m.records) validate_record(r);
  return m;
}

void save_manifest(const CohortManifest& m, const fs::path& path) {
  const fs::path base = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  auto rel = [&](const fs::path& p) {
    std::error_code ec;
    fs::path r = fs::relative(p, base, ec);
    return (ec || r.empty()) ? p.generic_string() : r.generic_string();
  };
  nlohmann::json j;
  j["dataset_name"] = m.dataset_name;
  j["records"] = nlohmann::json::array();
  for (const auto& r : m.records) {
    nlohmann::json jr = {{"scan_id", r.scan_id},
                         {"cohort_label", std::string(label_name(r.cohort_label))},
                         {"cohort_name", r.cohort_name},
                         {"volume", rel(r.volume)},
                         {"mask", rel(r.mask)},
                         {"logits", rel(r.logits)}};
    if (r.pyramid) {
      jr["pyramid"] = nlohmann::json::array();
      for (const auto& p : *r.pyramid) jr["pyramid"].push_back(rel(p));
    }
    j["records"].push_back(std::move(jr));
  }
  if (!m.provenance.is_null()) j["provenance"] = m.provenance;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << j.dump(2) << "\n";
}

ScanData load_scan(const ScanRecord& r, bool with_pyramid) {
  try {
    Volume3D vol = read_volume(r.volume);
    MaskVolume mask = read_mask(r.mask);
    LogitVolume logits = read_logits(r.logits);
    if (mask.dims() != vol.dims() || logits.dims() != vol.dims()) {
      throw DataError("artifact dims disagree");
    }
    std::optional<FeaturePyramid> pyr;
    if (with_pyramid) {
      if (!r.pyramid) throw DataError("record has no pyramid (run encode first)");
      pyr = read_pyramid(*r.pyramid, vol.dims(), vol.spacing());
    }
    return ScanData{std::move(vol), std::move(mask), std::move(logits), std::move(pyr)};
  } catch (const ScanError&) {
    throw;
  } catch (const DataError& e) {
    throw ScanError(r.scan_id, "scan '" + r.scan_id + "': " + e.what());
  }
}

}  // namespace rfdeep

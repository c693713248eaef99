#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "rfdeep/error.hpp"
#include "rfdeep/synthetic.hpp"
#include "rfdeep/tensor_store.hpp"

namespace fs = std::filesystem;
using namespace rfdeep;

namespace {

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

template <typename F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Ovf, SingleVoxelFileLayout) {
  const auto dir = oracle::temp_dir("ovf_layout");
  const fs::path p = dir / "one.ovf";
  write_ovf(Volume3D({1, 1, 1}, {1.0f, 1.0f, 1.0f}, {0.0f}), p);
  const auto bytes = slurp(p);
  // magic 8 + dtype 1 + ndim 1 + reserved 4 + dims 3*4 + spacing 3*4 + payload 4
  ASSERT_EQ(bytes.size(), 8u + 1 + 1 + 4 + 12 + 12 + 4);
  EXPECT_EQ(std::memcmp(bytes.data(), "OVF1\0\0\0\0", 8), 0);
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[9], 3);
  for (int i = 10; i < 14; ++i) EXPECT_EQ(bytes[i], 0);
  for (int a = 0; a < 3; ++a) {
    std::uint32_t dim = 0;
    std::memcpy(&dim, bytes.data() + 14 + 4 * a, 4);
    EXPECT_EQ(dim, 1u);
    float sp = 0;
    std::memcpy(&sp, bytes.data() + 26 + 4 * a, 4);
    EXPECT_EQ(sp, 1.0f);
  }
  float v = -1.0f;
  std::memcpy(&v, bytes.data() + 38, 4);
  EXPECT_EQ(v, 0.0f);
}

TEST(Ovf, RandomRoundTripsAreBitExact) {
  const auto dir = oracle::temp_dir("ovf_roundtrip");
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> dim(1, 7);
  std::normal_distribution<float> val(0.0f, 100.0f);
  for (int c = 0; c < 20; ++c) {
    const Dims3 d{dim(rng), dim(rng), dim(rng)};
    const Spacing3 sp{0.5f + c, 1.25f, 2.0f};
    std::vector<float> data(voxel_count(d));
    for (float& x : data) x = val(rng);
    std::vector<std::uint8_t> m(voxel_count(d));
    for (auto& x : m) x = rng() & 1;
    std::vector<float> lg(2 * voxel_count(d));
    for (float& x : lg) x = val(rng);
    write_ovf(Volume3D(d, sp, data), dir / "v.ovf");
    write_ovf(MaskVolume(d, sp, m), dir / "m.ovf");
    write_ovf(LogitVolume(d, sp, lg), dir / "l.ovf");
    const auto v = read_volume(dir / "v.ovf");
    EXPECT_EQ(v.dims(), d);
    EXPECT_EQ(v.spacing(), sp);
    EXPECT_EQ(std::memcmp(v.data().data(), data.data(), data.size() * 4), 0);
    const auto mm = read_mask(dir / "m.ovf");
    EXPECT_TRUE(std::equal(mm.data().begin(), mm.data().end(), m.begin()));
    const auto ll = read_logits(dir / "l.ovf");
    EXPECT_EQ(std::memcmp(ll.data().data(), lg.data(), lg.size() * 4), 0);
  }
}

TEST(Ovf, EncodeDecodeMatchesFileBytes) {
  const auto dir = oracle::temp_dir("ovf_encode");
  OvfTensor t;
  t.dtype = DType::F32;
  t.dims = {2, 3, 1, 2};
  t.spacing = {1.0f, 2.0f, 3.0f};
  for (int i = 0; i < 12; ++i) t.f32.push_back(static_cast<float>(i) * 0.1f);
  write_ovf(t, dir / "t.ovf");
  EXPECT_EQ(slurp(dir / "t.ovf"), encode_ovf(t));
  const auto back = decode_ovf(encode_ovf(t));
  EXPECT_EQ(back.dims, t.dims);
  EXPECT_EQ(back.f32, t.f32);
}

TEST(Ovf, NonFinitePayloadRejected) {
  const auto dir = oracle::temp_dir("ovf_nan");
  OvfTensor t;
  t.dims = {1, 1, 1};
  t.f32 = {std::numeric_limits<float>::quiet_NaN()};
  EXPECT_NE(error_of([&] { write_ovf(t, dir / "x.ovf"); }).find("non-finite payload"), std::string::npos);
  EXPECT_THROW(Volume3D({1, 1, 1}, {1, 1, 1}, {std::numeric_limits<float>::infinity()}), DataError);
}

TEST(Ovf, BadMagicRejected) {
  const auto dir = oracle::temp_dir("ovf_magic");
  write_ovf(Volume3D({1, 1, 1}, {1, 1, 1}, {0.5f}), dir / "x.ovf");
  auto bytes = slurp(dir / "x.ovf");
  bytes[2] = 'X';
  dump(dir / "x.ovf", bytes);
  EXPECT_NE(error_of([&] { read_ovf(dir / "x.ovf"); }).find("bad magic"), std::string::npos);
}

TEST(Ovf, TruncatedPayloadRejected) {
  const auto dir = oracle::temp_dir("ovf_trunc");
  std::vector<float> data(8, 1.0f);
  write_ovf(Volume3D({2, 2, 2}, {1, 1, 1}, data), dir / "x.ovf");
  auto bytes = slurp(dir / "x.ovf");
  bytes.resize(bytes.size() - 4);  // 7 values left
  dump(dir / "x.ovf", bytes);
  EXPECT_NE(error_of([&] { read_ovf(dir / "x.ovf"); }).find("payload length mismatch"), std::string::npos);
  EXPECT_THROW(read_ovf_header(dir / "x.ovf"), DataError);
}

TEST(Ovf, UnknownDtypeRejected) {
  const auto dir = oracle::temp_dir("ovf_dtype");
  write_ovf(Volume3D({1, 1, 1}, {1, 1, 1}, {0.5f}), dir / "x.ovf");
  auto bytes = slurp(dir / "x.ovf");
  bytes[8] = 9;
  dump(dir / "x.ovf", bytes);
  EXPECT_NE(error_of([&] { read_ovf(dir / "x.ovf"); }).find("unknown dtype"), std::string::npos);
}

TEST(Ovf, MaskValuesMustBeBinary) {
  EXPECT_THROW(MaskVolume({1, 1, 2}, {1, 1, 1}, {0, 2}), DataError);
}

TEST(Ovf, PyramidRoundTripKeepsOrderAndFactors) {
  const auto dir = oracle::temp_dir("ovf_pyramid");
  const Spacing3 sp{1.0f, 0.5f, 2.0f};
  std::vector<float> data(16 * 16 * 16);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>((i * 7919) % 101) / 100.0f;
  const Volume3D vol({16, 16, 16}, sp, data);
  const FeaturePyramid pyr = toy_encode(vol, ToyEncoderConfig{});
  std::array<fs::path, kNumStages> paths;
  for (int s = 0; s < kNumStages; ++s) {
    paths[s] = dir / (std::string(stage_name(kAllStages[s])) + ".ovf");
    write_ovf(pyr.stages()[s], paths[s]);
  }
  const FeaturePyramid back = read_pyramid(paths, vol.dims(), sp);
  for (int s = 0; s < kNumStages; ++s) {
    const auto& a = pyr.stages()[s];
    const auto& b = back.stages()[s];
    EXPECT_EQ(b.id, kAllStages[s]);
    EXPECT_EQ(b.factor, a.factor);
    EXPECT_EQ(b.channels, a.channels);
    EXPECT_EQ(b.grid, a.grid);
    EXPECT_EQ(b.data, a.data);
  }
}

TEST(FeaturePyramidInvariants, RejectsWrongGridOrOrder) {
  auto stage = [](StageId id, int f, int c, Dims3 g) {
    FeatureStage s;
    s.id = id;
    s.factor = f;
    s.channels = c;
    s.grid = g;
    s.cell_spacing = {1, 1, 1};
    s.data.assign(c * voxel_count(g), 0.0f);
    return s;
  };
  std::vector<FeatureStage> ok = {stage(StageId::PE, 2, 1, {2, 2, 2}), stage(StageId::SB1, 4, 1, {1, 1, 1}),
                                  stage(StageId::SB2, 8, 1, {1, 1, 1}), stage(StageId::SB3, 16, 1, {1, 1, 1}),
                                  stage(StageId::SB4, 32, 1, {1, 1, 1})};
  EXPECT_NO_THROW(FeaturePyramid({4, 4, 4}, ok));
  auto bad = ok;
  bad[0].grid = {3, 2, 2};
  bad[0].data.assign(12, 0.0f);
  EXPECT_ANY_THROW(FeaturePyramid({4, 4, 4}, bad));
  bad = ok;
  std::swap(bad[1], bad[2]);
  EXPECT_ANY_THROW(FeaturePyramid({4, 4, 4}, bad));
  bad = ok;
  bad.pop_back();
  EXPECT_ANY_THROW(FeaturePyramid({4, 4, 4}, bad));
}

namespace {

void write_manifest_json(const fs::path& p, const std::string& body) {
  std::ofstream(p) << body;
}

std::string record(const std::string& id, const std::string& label, const std::string& mask = "") {
  return "{\"scan_id\":\"" + id + "\",\"cohort_label\":\"" + label + "\",\"cohort_name\":\"c\",\"volume\":\"" + id +
         "_volume.ovf\",\"mask\":\"" + (mask.empty() ? id + "_mask.ovf" : mask) + "\",\"logits\":\"" + id +
         "_logits.ovf\"}";
}

void write_scan_files(const fs::path& dir, const std::string& id) {
  write_ovf(Volume3D({2, 2, 2}, {1, 1, 1}, std::vector<float>(8, 0.5f)), dir / (id + "_volume.ovf"));
  write_ovf(MaskVolume({2, 2, 2}, {1, 1, 1}, std::vector<std::uint8_t>(8, 1)), dir / (id + "_mask.ovf"));
  write_ovf(LogitVolume({2, 2, 2}, {1, 1, 1}, std::vector<float>(16, 0.0f)), dir / (id + "_logits.ovf"));
}

}  // namespace

TEST(Manifest, DuplicateScanIdNamed) {
  const auto dir = oracle::temp_dir("manifest_dup");
  write_scan_files(dir, "s1");
  write_manifest_json(dir / "m.json",
                      "{\"dataset_name\":\"d\",\"records\":[" + record("s1", "ID") + "," + record("s1", "OOD") + "]}");
  try {
    load_manifest(dir / "m.json");
    FAIL() << "expected an error";
  } catch (const ScanError& e) {
    EXPECT_EQ(e.scan_id(), "s1");
    EXPECT_NE(std::string(e.what()).find("s1"), std::string::npos);
  }
}

TEST(Manifest, EmptyRecordsIsValid) {
  const auto dir = oracle::temp_dir("manifest_empty");
  write_manifest_json(dir / "m.json", "{\"dataset_name\":\"d\",\"records\":[]}");
  const auto m = load_manifest(dir / "m.json");
  EXPECT_EQ(m.records.size(), 0u);
  EXPECT_EQ(m.dataset_name, "d");
}

TEST(Manifest, MissingMaskNamesPath) {
  const auto dir = oracle::temp_dir("manifest_missing");
  write_scan_files(dir, "s1");
  write_manifest_json(dir / "m.json",
                      "{\"dataset_name\":\"d\",\"records\":[" + record("s1", "ID", "nowhere_mask.ovf") + "]}");
  const std::string msg = error_of([&] { load_manifest(dir / "m.json"); });
  EXPECT_NE(msg.find("nowhere_mask.ovf"), std::string::npos);
}

TEST(Manifest, UnknownLabelRejected) {
  const auto dir = oracle::temp_dir("manifest_label");
  write_scan_files(dir, "s1");
  write_manifest_json(dir / "m.json", "{\"dataset_name\":\"d\",\"records\":[" + record("s1", "MAYBE") + "]}");
  EXPECT_THROW(load_manifest(dir / "m.json"), DataError);
}

TEST(Manifest, OrderPreservedAndSaveReloads) {
  const auto dir = oracle::temp_dir("manifest_order");
  for (const char* id : {"b", "a", "c"}) write_scan_files(dir, id);
  write_manifest_json(dir / "m.json", "{\"dataset_name\":\"d\",\"records\":[" + record("b", "ID") + "," +
                                          record("a", "OOD") + "," + record("c", "ID") + "]}");
  const auto m = load_manifest(dir / "m.json");
  ASSERT_EQ(m.records.size(), 3u);
  EXPECT_EQ(m.records[0].scan_id, "b");
  EXPECT_EQ(m.records[1].scan_id, "a");
  EXPECT_EQ(m.records[1].cohort_label, CohortLabel::OOD);
  save_manifest(m, dir / "copy.json");
  const auto again = load_manifest(dir / "copy.json");
  ASSERT_EQ(again.records.size(), 3u);
  EXPECT_EQ(again.records[2].scan_id, "c");
  EXPECT_EQ(fs::canonical(again.records[2].mask), fs::canonical(m.records[2].mask));
}

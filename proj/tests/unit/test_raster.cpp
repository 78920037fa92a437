#include <gtest/gtest.h>

#include <fstream>

#include "../support/tempdir.hpp"
#include "marss2l/band_stack.hpp"
#include "marss2l/synthetic.hpp"

using namespace marss2l;
using testing_support::TempDir;

namespace {

SceneImage flat_scene(int w = 8, int h = 6) {
  SceneImage s;
  s.site_id = "s1";
  s.acquisition_time = make_time(2024, 7, 1, 10, 30);
  for (int b = 0; b < kBandCount; ++b) {
    s.bands[b] = Plane(w, h, 0.1f * float(b + 1));
    for (std::size_t i = 0; i < s.bands[b].size(); ++i) s.bands[b][i] += 0.001f * float(i);
  }
  s.cloud_mask = Grid<CloudState>(w, h, CloudState::clear);
  s.wind_u = 3.0;
  s.wind_v = -4.0;
  s.geometry = {30.0, 5.0};
  return s;
}

void flag(SceneImage& s, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) s.cloud_mask[i] = CloudState::cloud;
}

}  // namespace

TEST(Raster, SceneRoundTripIsBitwise) {
  TempDir dir("raster");
  SceneImage s = flat_scene();
  s.cloud_mask[3] = CloudState::shadow;
  s.cloud_mask[4] = CloudState::missing;
  s.sensor = Sensor::Landsat;
  save_scene(s, dir / "a.ms2l");
  SceneImage back = load_scene(dir / "a.ms2l");
  EXPECT_EQ(back, s);
}

TEST(Raster, FiveBandPlanesIsIntegrityError) {
  TempDir dir("raster");
  SceneImage s = flat_scene();
  save_scene(s, dir / "a.ms2l");
  BandStack st = read_band_stack(dir / "a.ms2l");
  st.planes.erase(st.planes.begin() + 2);
  write_band_stack(dir / "a.ms2l", st);
  EXPECT_THROW(load_scene(dir / "a.ms2l"), IntegrityError);
}

TEST(Raster, NegativeReflectanceClampedAtLoad) {
  TempDir dir("raster");
  SceneImage s = flat_scene();
  save_scene(s, dir / "a.ms2l");
  BandStack st = read_band_stack(dir / "a.ms2l");
  std::get<Plane>(st.planes[0].data)[5] = -0.02f;
  write_band_stack(dir / "a.ms2l", st);
  EXPECT_EQ(load_scene(dir / "a.ms2l").bands[0][5], 0.0f);
}

TEST(Raster, InvariantViolationsAreRejected) {
  SceneImage s = flat_scene();
  s.bands[3][0] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(validate(s), IntegrityError);
  s = flat_scene();
  s.wind_u = 60.0;
  s.wind_v = 0.0;
  EXPECT_THROW(validate(s), IntegrityError);
  s = flat_scene();
  s.cloud_mask = Grid<CloudState>(3, 3, CloudState::clear);
  EXPECT_THROW(validate(s), IntegrityError);
  s = flat_scene();
  s.bands[1] = Plane(4, 4, 0.1f);
  EXPECT_THROW(validate(s), IntegrityError);
}

TEST(Raster, SyntheticFixtureSceneIs64Square) {
  TempDir dir("raster");
  auto physics = PlumePhysics::standard();
  FixtureConfig c;
  c.n_sites = 1;
  c.scenes_per_site = 1;
  auto series = generate_fixture(physics, c);
  write_fixture(series, dir.path());
  for (const auto& e : fs::directory_iterator(dir / "scenes")) {
    if (e.path().extension() != ".ms2l") continue;
    SceneImage s = load_scene(e.path());
    EXPECT_EQ(s.width(), 64);
    EXPECT_EQ(s.height(), 64);
  }
}

TEST(BandStack, MalformedInputs) {
  BandStack st{4, 3, {{"a", Plane(4, 3, 1.0f)}, {"m", Mask(4, 3, 1)}}};
  std::string bytes = encode_band_stack(st);
  EXPECT_EQ(bytes.size(), 4 + 2 + 4 + 4 + 1 + (1 + 1 + 1) * 2 + 12 * 4 + 12u);
  BandStack back = decode_band_stack(bytes);
  EXPECT_EQ(std::get<Plane>(back.planes[0].data), std::get<Plane>(st.planes[0].data));
  EXPECT_EQ(std::get<Mask>(back.planes[1].data), std::get<Mask>(st.planes[1].data));

  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_band_stack(bad), FormatError);
  bad = bytes;
  bad[4] = 2;
  EXPECT_THROW(decode_band_stack(bad), FormatError);
  EXPECT_THROW(decode_band_stack(bytes.substr(0, bytes.size() - 1)), FormatError);
  EXPECT_THROW(decode_band_stack(bytes + "x"), IntegrityError);
  bad = bytes;
  bad[4 + 2 + 4 + 4 + 1 + 2] = 7;  // dtype of first plane
  EXPECT_THROW(decode_band_stack(bad), FormatError);
  BandStack mismatched{4, 3, {{"a", Plane(3, 3, 1.0f)}}};
  EXPECT_THROW(encode_band_stack(mismatched), IntegrityError);
}

TEST(BandStack, LittleEndianHeader) {
  std::string bytes = encode_band_stack({258, 1, {{"p", Mask(258, 1, 0)}}});
  EXPECT_EQ(bytes.substr(0, 4), "MS2L");
  EXPECT_EQ(std::uint8_t(bytes[4]), 1);
  EXPECT_EQ(std::uint8_t(bytes[5]), 0);
  EXPECT_EQ(std::uint8_t(bytes[6]), 2);
  EXPECT_EQ(std::uint8_t(bytes[7]), 1);
}

TEST(Resample, ConstantPlaneStaysConstant) {
  Plane p(7, 5, 0.3f);
  Plane out = resample_to_10m(p, 2);
  EXPECT_EQ(out.width(), 14);
  EXPECT_EQ(out.height(), 10);
  for (float v : out.values()) EXPECT_NEAR(v, 0.3f, 1e-6);
}

TEST(Resample, BilinearRampPreservedInInterior) {
  const int W = 12, H = 10, f = 2;
  auto ramp = [](double x, double y) { return 0.1 + 0.02 * x + 0.01 * y + 0.001 * x * y; };
  Grid<double> p(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) p(x, y) = ramp(x, y);
  Grid<double> out = bicubic_upsample(p, f);
  for (int Y = 2 * f; Y < (H - 2) * f; ++Y)
    for (int X = 2 * f; X < (W - 2) * f; ++X) {
      double sx = (X + 0.5) / f - 0.5, sy = (Y + 0.5) / f - 0.5;
      EXPECT_NEAR(out(X, Y), ramp(sx, sy), 1e-6);
    }
}

TEST(Resample, FactorThreeShape) {
  Plane out = resample_to_10m(Plane(20, 20, 0.2f), 3);
  EXPECT_EQ(out.width(), 60);
  EXPECT_EQ(out.height(), 60);
  EXPECT_THROW(resample_to_10m(Plane(2, 2), 0), ArgumentError);
}

TEST(ClearFilter, FiftyPercentRule) {
  SceneImage s = flat_scene(10, 10);
  EXPECT_TRUE(passes_clear_filter(s));
  flag(s, 60);
  EXPECT_FALSE(passes_clear_filter(s));
  s = flat_scene(10, 10);
  flag(s, 50);
  EXPECT_TRUE(passes_clear_filter(s));
  s.cloud_mask[50] = CloudState::missing;
  EXPECT_FALSE(passes_clear_filter(s));
}

TEST(Time, Rfc3339RoundTrip) {
  Timestamp t = make_time(2024, 2, 29, 23, 59, 58);
  EXPECT_EQ(to_rfc3339(t), "2024-02-29T23:59:58Z");
  EXPECT_EQ(parse_rfc3339(to_rfc3339(t)), t);
  EXPECT_EQ(compact_time(t), "20240229T235958");
  EXPECT_THROW(parse_rfc3339("yesterday"), FormatError);
}

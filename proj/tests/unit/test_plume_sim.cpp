#include <gtest/gtest.h>

#include "../support/oracles.hpp"
#include "../support/scenes.hpp"
#include "../support/tempdir.hpp"
#include "marss2l/sampler.hpp"
#include "marss2l/synthetic.hpp"

using namespace marss2l;
using testing_support::patch;
using testing_support::textured_scene;

namespace {

const PlumePhysics& physics() {
  static const PlumePhysics p = PlumePhysics::standard();
  return p;
}

std::size_t nearest(const std::vector<double>& grid, double v) {
  return std::size_t(std::min_element(grid.begin(), grid.end(),
                                      [&](double a, double b) { return std::abs(a - v) < std::abs(b - v); }) -
                     grid.begin());
}

PlumeLabel bar_plume(int w, int h, int x0, int y0, int length) {
  PlumeLabel l{Mask(w, h, 0), Plane(w, h, 0.0f), 2.0};
  for (int k = 0; k < length; ++k) {
    l.mask(x0 + k, y0) = 1;
    l.delta_ch4(x0 + k, y0) = float(1.0 - 0.05 * k);
  }
  return l;
}

}  // namespace

TEST(Lut, ZeroColumnIsTransparentEverywhere) {
  const auto& lut = physics().lut;
  for (std::size_t ia = 0; ia < lut.amf.size(); ++ia)
    for (std::size_t il = 0; il < lut.wavelength_nm.size(); ++il) ASSERT_EQ(lut.at(ia, 0, il), 1.0f);
}

TEST(Lut, DoublingColumnSquaresTransmittance) {
  const auto& lut = physics().lut;
  for (std::size_t ia = 0; ia < lut.amf.size(); ia += 4)
    for (std::size_t id = 1; 2 * id < lut.delta_ch4.size(); id += 3)
      for (std::size_t il = 0; il < lut.wavelength_nm.size(); il += 7) {
        double t = lut.at(ia, id, il);
        EXPECT_NEAR(lut.at(ia, 2 * id, il), t * t, 1e-6);
      }
}

TEST(Lut, StrongerAbsorptionNear2300) {
  const auto& lut = physics().lut;
  std::size_t id = nearest(lut.delta_ch4, 0.5);
  EXPECT_LT(lut.at(0, id, nearest(lut.wavelength_nm, 2300)), lut.at(0, id, nearest(lut.wavelength_nm, 1660)));
}

TEST(Lut, MonotoneNonIncreasingInColumn) {
  const auto& lut = physics().lut;
  for (std::size_t ia = 0; ia < lut.amf.size(); ++ia)
    for (std::size_t id = 1; id < lut.delta_ch4.size(); ++id)
      for (std::size_t il = 0; il < lut.wavelength_nm.size(); ++il)
        ASSERT_LE(lut.at(ia, id, il), lut.at(ia, id - 1, il));
}

TEST(Lut, FileRoundTripAndCorruption) {
  testing_support::TempDir dir("lut");
  LutConfig c;
  c.wavelength_count = 50;
  c.delta_count = 5;
  c.amf_count = 3;
  TransmittanceLUT lut = build_toy_lut(c);
  save_lut(lut, dir / "lut.bin");
  TransmittanceLUT back = load_lut(dir / "lut.bin");
  EXPECT_EQ(back.values, lut.values);
  EXPECT_EQ(back.amf, lut.amf);
  lut.values[lut.index(1, 2, 3)] = 1.5f;
  EXPECT_THROW(check_lut(lut), ConstructionError);
  c.delta_step = -1;
  EXPECT_THROW(build_toy_lut(c), ArgumentError);
}

TEST(BandTau, ZeroMapIsUnity) {
  auto t = band_transmittance(physics().lut, physics().ctx, Plane(4, 4, 0.0f), {}, Band::swir2, Sensor::S2);
  for (float v : t.tau.values()) EXPECT_EQ(v, 1.0f);
}

TEST(BandTau, Swir2AbsorbsMoreThanSwir1) {
  Plane d(3, 3, 0.5f);
  auto t1 = band_transmittance(physics().lut, physics().ctx, d, {}, Band::swir1, Sensor::S2);
  auto t2 = band_transmittance(physics().lut, physics().ctx, d, {}, Band::swir2, Sensor::S2);
  EXPECT_LT(t2.tau[4], t1.tau[4]);
  EXPECT_LT(t1.tau[4], 1.0f);
}

TEST(BandTau, SplineMatchesDenseQuadrature) {
  for (Sensor sensor : {Sensor::S2, Sensor::Landsat})
    for (Band band : {Band::swir1, Band::swir2})
      for (Geometry g : {Geometry{0, 0}, Geometry{30, 5}, Geometry{52, 12}}) {
        BandTransmittanceCurve curve(physics().lut, physics().ctx, g, band, sensor);
        for (double delta : {0.013, 0.1, 0.37, 0.5, 1.234, 2.9}) {
          EXPECT_NEAR(curve(delta), testing_support::dense_band_tau(delta, g, band, sensor), 1e-3)
              << int(band) << " " << g.solar_zenith << " " << delta;
        }
      }
}

TEST(BandTau, MonotoneAndClampedAboveTable) {
  BandTransmittanceCurve curve(physics().lut, physics().ctx, {}, Band::swir2, Sensor::S2);
  EXPECT_EQ(curve(0.0), 1.0);
  double prev = 1.0;
  for (double d = 0.01; d < 4.0; d += 0.01) {
    EXPECT_LE(curve(d), prev + 1e-12);
    prev = curve(d);
  }
  Plane big(2, 1, 9.0f);
  auto t = band_transmittance(physics().lut, physics().ctx, big, {}, Band::swir2, Sensor::S2);
  EXPECT_EQ(t.clamped_pixels, 2u);
  EXPECT_FLOAT_EQ(t.tau[0], float(curve(curve.delta_max())));
}

TEST(Inject, UnitTransmittanceIsIdentity) {
  SceneImage s = textured_scene(16, 16, 1);
  EXPECT_EQ(inject_plume(s, Plane(16, 16, 1.0f), Plane(16, 16, 1.0f)), s);
}

TEST(Inject, PatchScalesSwir2Exactly) {
  SceneImage s = textured_scene(16, 16, 2);
  Plane t2 = patch(16, 16, 2, 2, 6, 6, 0.9f);
  SceneImage out = inject_plume(s, Plane(16, 16, 1.0f), t2);
  for (std::size_t i = 0; i < t2.size(); ++i) {
    EXPECT_EQ(out.bands[5][i], s.bands[5][i] * t2[i]);
    EXPECT_EQ(out.bands[4][i], s.bands[4][i]);
    EXPECT_EQ(out.bands[0][i], s.bands[0][i]);
  }
  EXPECT_THROW(inject_plume(s, Plane(16, 16, 1.0f), Plane(16, 16, 1.2f)), ArgumentError);
  EXPECT_THROW(inject_plume(s, Plane(16, 16, 0.0f), Plane(16, 16, 1.0f)), ArgumentError);
  EXPECT_THROW(inject_plume(s, Plane(15, 16, 1.0f), Plane(16, 16, 1.0f)), ArgumentError);
}

TEST(Wind, CompatibilityRule) {
  EXPECT_TRUE(wind_compatible(3.0, 4.0));
  EXPECT_FALSE(wind_compatible(5.0, 9.5));
  EXPECT_FALSE(wind_compatible(3.0, 4.5));
  EXPECT_FALSE(wind_compatible(9.5, 9.5));
  for (double x : {0.0, 2.5, 9.0}) EXPECT_TRUE(wind_compatible(x, x));
  EXPECT_THROW(wind_compatible(-1.0, 2.0), ArgumentError);
}

TEST(Rotate, ZeroAndFullTurnAreIdentity) {
  PlumeLabel bar = bar_plume(32, 32, 10, 12, 8);
  auto r0 = rotate_plume(bar, 40.0, 40.0);
  auto r360 = rotate_plume(bar, 10.0, 370.0);
  ASSERT_TRUE(r0 && r360);
  EXPECT_EQ(r0->mask, bar.mask);
  for (std::size_t i = 0; i < bar.delta_ch4.size(); ++i) {
    EXPECT_NEAR(r0->delta_ch4[i], bar.delta_ch4[i], 1e-6);
    EXPECT_NEAR(r360->delta_ch4[i], r0->delta_ch4[i], 1e-6);
  }
}

TEST(Rotate, QuarterTurnTurnsEastwardBarNorthward) {
  PlumeLabel bar = bar_plume(32, 32, 10, 20, 8);
  auto r = rotate_plume(bar, 0.0, 90.0);
  ASSERT_TRUE(r);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      bool on_bar = x == 10 && y <= 20 && y > 20 - 8;
      EXPECT_EQ(bool(r->mask(x, y)), on_bar) << x << "," << y;
      if (on_bar) EXPECT_NEAR(r->delta_ch4(x, y), bar.delta_ch4(10 + (20 - y), 20), 1e-6);
    }
}

TEST(Rotate, ArbitraryAnglePreservesMass) {
  Rng rng(7);
  PlumeLabel p = generate_plume(4.0, 3.0, 1.0, 64, 64, 128, 128, rng);
  ASSERT_GE(p.pixel_count(), 50u);
  for (double a : {17.0, 45.0, 133.0, 250.0}) {
    auto r = rotate_plume(p, 0.0, a);
    ASSERT_TRUE(r) << a;
    EXPECT_NEAR(r->total_column(), p.total_column(), 0.02 * p.total_column()) << a;
    EXPECT_EQ(plume_origin(*r), plume_origin(p)) << a;
  }
}

TEST(Rotate, MassLeavingTheGridIsRejected) {
  PlumeLabel bar = bar_plume(32, 32, 2, 16, 20);
  EXPECT_FALSE(rotate_plume(bar, 0.0, 180.0));
  EXPECT_THROW(rotate_plume(PlumeLabel{Mask(4, 4, 0), Plane(4, 4, 0.0f), {}}, 0, 90), ArgumentError);
}

TEST(Simulation, InjectThenMbmpRecoversBandRatio) {
  SceneImage ref = textured_scene(48, 48, 3);
  ref.geometry = {35.0, 4.0};
  Rng rng(2);
  PlumeLabel plume = generate_plume(5.0, 2.0, 2.0, 20, 20, 48, 48, rng);
  auto t1 = band_transmittance(physics().lut, physics().ctx, plume.delta_ch4, ref.geometry, Band::swir1, ref.sensor);
  auto t2 = band_transmittance(physics().lut, physics().ctx, plume.delta_ch4, ref.geometry, Band::swir2, ref.sensor);
  RetrievalProduct p = mbmp(simulate_plume(physics(), ref, plume.delta_ch4), ref);
  for (std::size_t i = 0; i < p.ratio.size(); ++i) ASSERT_NEAR(p.ratio[i], double(t2.tau[i]) / t1.tau[i], 1e-3);
}

namespace {

TrainingSite site_with(std::size_t plumes, std::uint64_t seed) { return testing_support::textured_training_site(plumes, seed); }

double simulated_fraction(std::size_t plumes, int draws) {
  return testing_support::simulated_fraction(physics(), plumes, draws);
}

}  // namespace

TEST(Sampler, SimulationProbabilityByPlumeCount) {
  EXPECT_EQ(simulation_probability(0), 1.0);
  EXPECT_EQ(simulation_probability(1), 0.9);
  EXPECT_EQ(simulation_probability(5), 0.9);
  EXPECT_EQ(simulation_probability(6), 0.1);
}

TEST(Sampler, StratifiedFrequenciesOverTenThousandDraws) {
  EXPECT_EQ(simulated_fraction(0, 2000), 1.0);
  EXPECT_NEAR(simulated_fraction(3, 10000), 0.9, 0.01);
  EXPECT_NEAR(simulated_fraction(8, 10000), 0.1, 0.01);
}

TEST(Sampler, SimulatedExamplesCarryRotatedDonorAndAreReproducible) {
  TrainingSite site = site_with(0, 200);
  Rng prng(5);
  const SceneImage& target = site.pool[3];
  PlumeDonor donor{generate_plume(5.0, 1.0, -2.5, 16, 16, 32, 32, prng), target.wind_speed() + 0.5, -30.0};
  SamplerConfig cfg;
  cfg.positive_fraction = 1.0;
  TrainingSampler a(physics(), {site}, {donor}, cfg), b(physics(), {site}, {donor}, cfg);
  Rng ra(9), rb(9);
  for (int i = 0; i < 5; ++i) {
    TrainingExample ea = a(ra), eb = b(rb);
    ASSERT_TRUE(ea.positive && ea.simulated);
    EXPECT_FALSE(ea.skipped);
    EXPECT_GT(count_set(ea.mask), 0u);
    EXPECT_EQ(ea.mask, eb.mask);
    EXPECT_EQ(ea.delta_ch4, eb.delta_ch4);
    ASSERT_EQ(ea.input.size(), eb.input.size());
    EXPECT_EQ(ea.input.data, eb.input.data);
  }
}

TEST(Sampler, IncompatibleWindEmitsNegativeAndCounts) {
  TrainingSite site = site_with(0, 300);
  Rng prng(5);
  PlumeDonor donor{generate_plume(5.0, 1.0, 0.0, 16, 16, 32, 32, prng), 8.5, 0.0};
  SamplerConfig cfg;
  cfg.positive_fraction = 1.0;
  TrainingSampler s(physics(), {site}, {donor}, cfg);
  Rng rng(1);
  TrainingExample e = s(rng);
  EXPECT_TRUE(e.skipped);
  EXPECT_FALSE(e.positive);
  EXPECT_EQ(s.skipped(), 1u);
}

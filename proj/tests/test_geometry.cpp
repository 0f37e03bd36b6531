#include "beamforge/error.hpp"
#include "beamforge/geometry.hpp"
#include "beamforge/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace beamforge;

namespace {

ArrayGeometry small_linear() { return make_linear_array(8, 0.3e-3, 5e6, 40e6); }

ArrayGeometry small_sa() {
  return make_linear_array(8, 0.3e-3, 5e6, 40e6, 1540.0, SyntheticAperture{4, 4});
}

} // namespace

TEST(Geometry, LinearElementsAreCentredAtPitch) {
  const auto g = make_linear_array(4, 1e-3, 5e6, 40e6);
  ASSERT_EQ(g.element_count(), 4u);
  EXPECT_DOUBLE_EQ(g.elements[0].x, -1.5e-3);
  EXPECT_DOUBLE_EQ(g.elements[3].x, 1.5e-3);
  EXPECT_DOUBLE_EQ(g.elements[1].x - g.elements[0].x, 1e-3);
  for (const auto &e : g.elements)
    EXPECT_EQ(e.z, 0.0);
}

TEST(Geometry, CircularElementsLieOnTheCircleAtArcPitch) {
  const auto g = make_circular_array(32, 0.057e-3, 20e6, 100e6);
  const double r = 32 * 0.057e-3 / (2 * std::numbers::pi);
  EXPECT_NEAR(g.radius, r, 1e-15);
  for (const auto &e : g.elements)
    EXPECT_NEAR(std::hypot(e.x, e.z), r, 1e-15);
  // Chord between neighbours subtends 2 pi / n.
  const double chord = distance(g.elements[0], g.elements[1]);
  EXPECT_NEAR(chord, 2 * r * std::sin(std::numbers::pi / 32), 1e-15);
}

TEST(Geometry, PresetsMatchTheirDocumentedShapes) {
  const auto ld = preset_geometry(Preset::linear_desk);
  EXPECT_EQ(ld.element_count(), 64u);
  EXPECT_DOUBLE_EQ(ld.pitch, 0.3e-3);
  EXPECT_DOUBLE_EQ(ld.f0, 6.25e6);
  EXPECT_DOUBLE_EQ(ld.fs, 25e6);
  EXPECT_DOUBLE_EQ(ld.c, 1540.0);
  EXPECT_TRUE(ld.plane_wave());
  EXPECT_EQ(ld.aperture_size(), 64u);

  EXPECT_EQ(preset_geometry(Preset::linear_full).element_count(), 128u);

  const auto cd = preset_geometry(Preset::circular_desk);
  EXPECT_EQ(cd.element_count(), 32u);
  EXPECT_EQ(cd.num_transmits(), 8u);
  EXPECT_EQ(cd.receive_channels(), 8u);
  EXPECT_LE(cd.aperture_size(), 64u);

  const auto cf = preset_geometry(Preset::circular_full);
  EXPECT_EQ(cf.element_count(), 64u);
  EXPECT_EQ(cf.receive_channels(), 14u);

  for (auto p : {Preset::linear_desk, Preset::circular_desk, Preset::linear_full,
                 Preset::circular_full})
    EXPECT_EQ(parse_preset(preset_name(p)), p);
  EXPECT_THROW(parse_preset("phased"), ConfigError);
}

TEST(Geometry, TimeOfFlightIsSymmetricInTransmitAndReceive) {
  const auto g = small_sa();
  Rng rng(1);
  std::uniform_real_distribution<double> u(-3e-3, 3e-3), d(1e-3, 20e-3);
  for (int i = 0; i < 200; ++i) {
    const Point2 a{u(rng), 0.0}, b{u(rng), 0.0}, r{u(rng), d(rng)};
    EXPECT_DOUBLE_EQ(time_of_flight(g, a, b, r), time_of_flight(g, b, a, r));
  }
}

TEST(Geometry, TimeOfFlightIncreasesWithRangeWhenTxEqualsRx) {
  const auto g = small_sa();
  const Point2 e{0.3e-3, 0.0};
  double prev = -1.0;
  for (int k = 1; k <= 100; ++k) {
    const Point2 r{e.x + 0.1e-3 * k * 0.6, 0.1e-3 * k * 0.8};
    const double t = time_of_flight(g, e, e, r);
    EXPECT_GT(t, prev);
    EXPECT_NEAR(t, 2 * distance(e, r) / g.c, 1e-18);
    prev = t;
  }
}

TEST(Geometry, PlaneWaveDelayIsDepthPlusReturnPath) {
  auto g = small_linear();
  const Point2 rx = g.elements[2], r{0.4e-3, 10e-3};
  EXPECT_NEAR(time_of_flight(g, {}, rx, r), (r.z + distance(rx, r)) / g.c, 1e-18);
  g.transmit = PlaneWave{0.2};
  EXPECT_NEAR(time_of_flight(g, {}, rx, r),
              (r.x * std::sin(0.2) + r.z * std::cos(0.2) + distance(rx, r)) / g.c, 1e-18);
}

TEST(Geometry, LinearInterpolationExamples) {
  const std::vector<double> x{2.0, 6.0, -4.0};
  EXPECT_EQ(sample_linear(x, 1.0), 6.0);
  EXPECT_EQ(sample_linear(x, 0.5), 0.5 * (2.0 + 6.0));
  EXPECT_EQ(sample_linear(x, 1.5), 0.5 * (6.0 - 4.0));
  EXPECT_NEAR(sample_linear(x, 0.25), 0.75 * 2.0 + 0.25 * 6.0, 1e-15);
  EXPECT_EQ(sample_linear(x, 2.0), -4.0);
  EXPECT_EQ(sample_linear(x, -0.1), 0.0);
  EXPECT_EQ(sample_linear(x, 2.01), 0.0);
}

TEST(Geometry, FocusOfConstantSignalIsAllOnes) {
  const auto g = small_linear();
  const auto grid = ImagingGrid::cartesian(-1e-3, 1e-3, 5, 5e-3, 8e-3, 7);
  RawChannelData raw(1, 8, 2000);
  std::fill(raw.samples.begin(), raw.samples.end(), 1.0);
  const auto f = focus(raw, g, grid);
  ASSERT_EQ(f.aperture(), 8u);
  ASSERT_EQ(f.pixels(), 35u);
  EXPECT_TRUE((f.data.array() == 1.0).all());
}

TEST(Geometry, FocusSamplesEachChannelAtItsOwnDelay) {
  const auto g = small_sa();
  const auto grid = ImagingGrid::cartesian(-1e-3, 1e-3, 3, 4e-3, 6e-3, 4);
  RawChannelData raw(g.num_transmits(), g.receive_channels(), 600, 1e-6);
  for (std::size_t i = 0; i < raw.samples.size(); ++i)
    raw.samples[i] = std::sin(0.37 * static_cast<double>(i)) + 0.01 * static_cast<double>(i % 17);
  const auto f = focus(raw, g, grid);
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const Point2 r = grid.pixel(p);
    for (std::size_t t = 0; t < g.num_transmits(); ++t) {
      const auto rx = g.receive_elements(t);
      const Point2 tx = g.elements[g.transmit_element(t)];
      for (std::size_t j = 0; j < rx.size(); ++j) {
        // Independent delay: straight-line path lengths.
        const Point2 e = g.elements[rx[j]];
        const double delay = (std::hypot(tx.x - r.x, tx.z - r.z) +
                              std::hypot(e.x - r.x, e.z - r.z)) / g.c;
        const double idx = (delay - raw.t0) * g.fs;
        const auto k = static_cast<std::size_t>(std::floor(idx));
        const double a = idx - std::floor(idx);
        const auto tr = raw.trace(t, j);
        const double expect = (1 - a) * tr[k] + a * tr[k + 1];
        EXPECT_NEAR(f.data(static_cast<Eigen::Index>(t * rx.size() + j),
                           static_cast<Eigen::Index>(p)),
                    expect, 1e-12);
      }
    }
  }
}

TEST(Geometry, FocusIsLinear) {
  const auto g = small_linear();
  const auto grid = ImagingGrid::cartesian(-1e-3, 1e-3, 4, 5e-3, 8e-3, 6);
  Rng rng(3);
  std::normal_distribution<double> n(0, 1);
  RawChannelData x1(1, 8, 800), x2(1, 8, 800), mix(1, 8, 800);
  for (std::size_t i = 0; i < x1.samples.size(); ++i) {
    x1.samples[i] = n(rng);
    x2.samples[i] = n(rng);
    mix.samples[i] = 2.5 * x1.samples[i] - 0.75 * x2.samples[i];
  }
  const auto f1 = focus(x1, g, grid), f2 = focus(x2, g, grid), fm = focus(mix, g, grid);
  EXPECT_LT((fm.data - (2.5 * f1.data - 0.75 * f2.data)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Geometry, SyntheticApertureConcatenatesReceiveWindows) {
  const auto g = preset_geometry(Preset::circular_desk);
  EXPECT_EQ(g.transmit_element(0), 12u);
  EXPECT_EQ(g.transmit_element(7), 19u);
  const auto rx = g.receive_elements(0);
  const std::vector<std::size_t> expect{8, 9, 10, 11, 12, 13, 14, 15};
  EXPECT_EQ(rx, expect);

  // Circular windows wrap around the array.
  const auto wrap = make_circular_array(8, 0.1e-3, 20e6, 100e6, 1540.0,
                                        SyntheticAperture{8, 4});
  const std::vector<std::size_t> w0{6, 7, 0, 1};
  EXPECT_EQ(wrap.receive_elements(0), w0);
  EXPECT_EQ(wrap.index_distance(0, 7), 1.0);

  // Linear windows are clamped inside the array.
  const auto lin = make_linear_array(8, 0.3e-3, 5e6, 40e6, 1540.0, SyntheticAperture{8, 4});
  const std::vector<std::size_t> l0{0, 1, 2, 3};
  EXPECT_EQ(lin.receive_elements(0), l0);
}

TEST(Geometry, MismatchedDataOrGridIsAConfigurationError) {
  const auto g = small_linear();
  const auto grid = ImagingGrid::cartesian(-1e-3, 1e-3, 4, 5e-3, 8e-3, 6);
  EXPECT_THROW(focus(RawChannelData(1, 7, 100), g, grid), ConfigError);
  const auto behind = ImagingGrid::cartesian(-1e-3, 1e-3, 4, -1e-3, 1e-3, 6);
  EXPECT_THROW(focus(RawChannelData(1, 8, 100), g, behind), ConfigError);
  EXPECT_THROW(ImagingGrid::cartesian(0, 1, 3, 2, 1, 3), ConfigError);
}

TEST(Geometry, GridNearestInvertsPixel) {
  const auto polar = ImagingGrid::polar(-0.5, 0.5, 11, 1e-3, 2e-3, 9);
  for (std::size_t ix = 0; ix < polar.num_x(); ++ix)
    for (std::size_t iz = 0; iz < polar.num_z(); ++iz) {
      const auto [a, b] = polar.nearest(polar.pixel(ix, iz));
      EXPECT_EQ(a, ix);
      EXPECT_EQ(b, iz);
    }
}

TEST(Geometry, InvalidGeometryIsRejected) {
  EXPECT_THROW(make_linear_array(1, 0.3e-3, 5e6, 40e6), InvalidInput);
  EXPECT_THROW(make_linear_array(8, 0.3e-3, 5e6, 9e6), InvalidInput);
  EXPECT_THROW(make_linear_array(8, 0.3e-3, 5e6, 40e6, 1540.0, SyntheticAperture{9, 2}),
               InvalidInput);
}

#include "beamforge/error.hpp"
#include "beamforge/evalsuite.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

using namespace beamforge;

namespace {

DatasetConfig tiny(Preset preset = Preset::linear_desk) {
  DatasetConfig cfg;
  cfg.geometry = preset_geometry(preset);
  cfg.grid = preset == Preset::linear_desk
                 ? ImagingGrid::cartesian(-1.2e-3, 1.2e-3, 16, 13.6e-3, 15.2e-3, 24)
                 : ImagingGrid::polar(-0.5, 0.5, 12, 1.2e-3, 1.8e-3, 20);
  cfg.train_frames = 3;
  cfg.test_frames = 2;
  cfg.speckle_density = preset == Preset::linear_desk ? 30.0 : 200.0;
  cfg.cyst_radius = preset == Preset::linear_desk ? 0.5e-3 : 0.2e-3;
  cfg.target = TargetKind::das;
  cfg.seed = 4;
  return cfg;
}

} // namespace

TEST(Evalsuite, DatasetIsSeededAndHasTheStandardHeldOutFrames) {
  const auto cfg = tiny();
  const auto a = make_dataset(cfg);
  const auto b = make_dataset(cfg);
  ASSERT_EQ(a.train.size(), 3u);
  ASSERT_EQ(a.test.size(), 2u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.train[i].target, b.train[i].target);
    EXPECT_EQ(a.train[i].input.data, b.train[i].input.data);
  }
  EXPECT_EQ(a.test_info[0].kind, FrameKind::cyst);
  EXPECT_TRUE(a.test_info[0].regions.has_value());
  EXPECT_EQ(a.test_info[1].kind, FrameKind::point);
  ASSERT_EQ(a.test_info[1].points.size(), 1u);
  const Point2 centre = grid_point(cfg.grid, 0.5, 0.5);
  EXPECT_NEAR(a.test_info[1].points[0].x, centre.x, 1e-12);
  EXPECT_NEAR(a.test_info[1].points[0].z, centre.z, 1e-12);
  // DAS targets are the boxcar sum of the focused channels.
  EXPECT_LT((a.test[1].target - das(a.test[1].input, Window::boxcar).values)
                .cwiseAbs().maxCoeff(), 1e-12);

  auto other = cfg;
  other.seed = 5;
  EXPECT_NE(make_dataset(other).train[0].target, a.train[0].target);

  auto bad = cfg;
  bad.test_frames = 1;
  EXPECT_THROW(make_dataset(bad), ConfigError);
}

TEST(Evalsuite, GridPointMapsUnitSquareCorners) {
  const auto cart = ImagingGrid::cartesian(-1e-3, 1e-3, 5, 2e-3, 4e-3, 5);
  EXPECT_NEAR(grid_point(cart, 0.0, 1.0).x, -1e-3, 1e-15);
  EXPECT_NEAR(grid_point(cart, 0.0, 1.0).z, 4e-3, 1e-15);
  const auto polar = ImagingGrid::polar(-0.4, 0.4, 5, 1e-3, 2e-3, 5);
  const auto p = grid_point(polar, 1.0, 0.0);
  EXPECT_NEAR(p.x, 1e-3 * std::sin(0.4), 1e-15);
  EXPECT_NEAR(p.z, 1e-3 * std::cos(0.4), 1e-15);
}

TEST(Evalsuite, ComparisonHasOneRowPerFrameAndMethod) {
  const auto data = make_dataset(tiny());
  Rng rng(1);
  const auto able = MLPParams::glorot(able_widths(64), 0.2, rng);
  const auto cmp = compare_beamformers(data, CompareConfig{}, &able);
  const std::vector<std::string> methods{"das_boxcar", "das_hanning", "imap", "mv", "ebmv",
                                         "able"};
  ASSERT_EQ(cmp.rows.size(), data.test.size() * methods.size());
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto &r : cmp.rows)
    seen.insert({r.frame, r.method});
  EXPECT_EQ(seen.size(), cmp.rows.size());
  for (const auto &r : cmp.rows) {
    if (r.frame == data.test_info[0].id) {
      EXPECT_TRUE(std::isnan(r.fwhm_lat));
      EXPECT_TRUE(std::isnan(r.point_peak_db));
    } else {
      EXPECT_TRUE(std::isnan(r.cnr_db));
      EXPECT_TRUE(std::isfinite(r.point_peak_db)) << r.method;
    }
  }
  ASSERT_EQ(cmp.outputs.size(), 2u);
  ASSERT_EQ(cmp.outputs[0].size(), methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m)
    EXPECT_EQ(cmp.outputs[0][m].method, methods[m]);

  std::ostringstream os;
  write_metrics_csv(os, cmp.rows);
  EXPECT_EQ(os.str().rfind("frame,method,fwhm_lat,fwhm_ax,cnr_db,point_peak_db,smsle\n", 0),
            0u);
}

TEST(Evalsuite, WeightLineCsvHasOneColumnPerChannel) {
  const auto data = make_dataset(tiny());
  Rng rng(2);
  const auto able = MLPParams::glorot(able_widths(64), 0.2, rng);
  const auto w = weight_line(able, data.test[1].input, 10);
  ASSERT_EQ(w.rows(), 64);
  ASSERT_EQ(w.cols(), 16);
  const auto [img, apod] = able_beamform(able, data.test[1].input);
  for (std::size_t ix = 0; ix < 16; ++ix)
    EXPECT_LT((w.col(static_cast<Eigen::Index>(ix)) -
               apod.weights.col(static_cast<Eigen::Index>(ix * 24 + 10)))
                  .cwiseAbs().maxCoeff(), 1e-14);

  std::ostringstream os;
  write_weight_line_csv(os, w, data.grid);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("lateral,w0,w1,", 0), 0u);
  EXPECT_NE(line.find(",w63"), std::string::npos);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 64);
  }
  EXPECT_EQ(rows, 16u);
}

TEST(Evalsuite, LossCsvNumbersEpochsFromOne) {
  std::ostringstream os;
  const double h[] = {2.0, 1.5};
  write_loss_csv(os, h);
  EXPECT_EQ(os.str(), "epoch,loss\n1,2\n2,1.5\n");
}

TEST(Evalsuite, StandardConditionsAreRateMajor) {
  const double rates[] = {0.5, 0.25};
  const auto c = standard_conditions(rates, 9);
  ASSERT_EQ(c.size(), 5u);
  const std::vector<std::string> labels{"full", "random_50", "deterministic_50", "random_25",
                                        "deterministic_25"};
  for (std::size_t i = 0; i < 5; ++i)
    EXPECT_EQ(c[i].label, labels[i]);
  EXPECT_FALSE(c[0].scheme);
  EXPECT_EQ(c[1].scheme->seed, study_scheme(SubsampleKind::random, 0.5, 9).seed);
  EXPECT_NE(c[1].scheme->seed, 9u);
  EXPECT_EQ(c[3].scheme->rate, 0.25);
}

TEST(Evalsuite, TwoStageFramesKeepActiveChannelsPerTransmit) {
  const auto data = make_dataset(tiny(Preset::circular_desk));
  const auto mask = make_aperture_mask({SubsampleKind::deterministic, 0.5, 0}, data.geometry);
  const auto frames = two_stage_frames(data.test, data.geometry, mask);
  ASSERT_EQ(frames.size(), 2u);
  ASSERT_EQ(frames[0].blocks.size(), 8u);
  for (const auto &b : frames[0].blocks)
    EXPECT_EQ(b.rows(), 4);
  EXPECT_EQ(frames[0].target, data.test[0].target);
  EXPECT_EQ(frames[0].num_x, 12u);
}

TEST(Evalsuite, SubsampleStudyIsDeterministicPerCondition) {
  const auto data = make_dataset(tiny(Preset::circular_desk));
  const double rates[] = {0.5};
  const auto conds = standard_conditions(rates, 3);
  TrainConfig cfg;
  cfg.epochs = 2;
  const auto a = subsample_study(data, conds, cfg, 0.2);
  const auto b = subsample_study(data, conds, cfg, 0.2);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].label, conds[i].label);
    EXPECT_EQ(a[i].loss_history, b[i].loss_history);
    EXPECT_EQ(a[i].heldout.smsle, b[i].heldout.smsle);
    EXPECT_TRUE(std::isfinite(a[i].heldout.smsle));
  }
  EXPECT_EQ(std::count(a[1].mask.begin(), a[1].mask.end(), 1), 32);
}

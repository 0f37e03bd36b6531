#include "beamforge/error.hpp"
#include "beamforge/neural.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace beamforge;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = g(rng);
  return m;
}

MLPParams small_net(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t widths[] = {6, 5, 3, 6};
  auto p = MLPParams::glorot(widths, 0.0, rng);
  for (auto &l : p.layers)
    l.bias = random_matrix(l.bias.size(), 1, seed + 99).col(0) * 0.1;
  return p;
}

// Sample-at-a-time reference forward built from antirectifier().
Eigen::VectorXd reference_forward(const MLPParams &p, Eigen::VectorXd x) {
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    Eigen::VectorXd z = p.layers[i].weight * x + p.layers[i].bias;
    x = i + 1 == p.layers.size() ? z : antirectifier(z);
  }
  return x;
}

double weighted_output(const MLPParams &p, const Eigen::MatrixXd &x,
                       const Eigen::MatrixXd &c) {
  return (forward(p, x, false).array() * c.array()).sum();
}

} // namespace

TEST(Neural, AntirectifierExamples) {
  const auto a = antirectifier(Eigen::Vector2d(1.0, 3.0));
  const double s = 1.0 / std::sqrt(2.0);
  ASSERT_EQ(a.size(), 4);
  EXPECT_NEAR(a(0), 0.0, 1e-15);
  EXPECT_NEAR(a(1), s, 1e-15);
  EXPECT_NEAR(a(2), s, 1e-15);
  EXPECT_NEAR(a(3), 0.0, 1e-15);
  EXPECT_TRUE((antirectifier(Eigen::Vector3d::Constant(4.0)).array() == 0.0).all());
}

TEST(Neural, AntirectifierOutputHasUnitNormAndIsShiftScaleInvariant) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Eigen::VectorXd x = random_matrix(9, 1, s).col(0);
    const auto a = antirectifier(x);
    EXPECT_NEAR(a.norm(), 1.0, 1e-12);
    EXPECT_GE(a.minCoeff(), 0.0);
    const Eigen::VectorXd shifted = (3.5 * x).array() + 2.0;
    EXPECT_LT((antirectifier(shifted) - a).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Neural, AbleWidthsAndParameterCount) {
  const auto w = able_widths(128);
  const std::vector<std::size_t> expect{128, 128, 32, 32, 128};
  EXPECT_EQ(w, expect);
  // 128*128+128 + 256*32+32 + 64*32+32 + 64*128+128
  EXPECT_EQ(able_parameter_count(128), 35136u);
  for (std::size_t n : {2u, 3u, 8u, 64u, 105u, 128u}) {
    const auto p = MLPParams::zeros(able_widths(n));
    EXPECT_EQ(p.parameter_count(), able_parameter_count(n)) << n;
    EXPECT_EQ(p.widths(), able_widths(n));
    EXPECT_NO_THROW(p.validate());
  }
  EXPECT_EQ(able_widths(3)[2], 1u);
}

TEST(Neural, LayerShapesFollowTheDoublingRule) {
  const auto p = MLPParams::zeros(able_widths(16));
  ASSERT_EQ(p.layers.size(), 4u);
  EXPECT_EQ(p.layers[0].fan_in(), 16u);
  for (std::size_t i = 1; i < 4; ++i)
    EXPECT_EQ(p.layers[i].fan_in(), 2 * p.layers[i - 1].fan_out());
  auto bad = p;
  bad.layers[2].weight.resize(4, 7);
  EXPECT_THROW(bad.validate(), ConfigError);
  auto bad_drop = p;
  bad_drop.dropout = 1.0;
  EXPECT_THROW(bad_drop.validate(), ConfigError);
  const std::size_t one[] = {4};
  EXPECT_THROW(MLPParams::zeros(one), ConfigError);
}

TEST(Neural, GlorotIsBoundedAndSeeded) {
  Rng a(5), b(5);
  const auto pa = MLPParams::glorot(able_widths(32), 0.2, a);
  const auto pb = MLPParams::glorot(able_widths(32), 0.2, b);
  for (std::size_t i = 0; i < pa.layers.size(); ++i) {
    const auto &l = pa.layers[i];
    const double bound = std::sqrt(6.0 / static_cast<double>(l.fan_in() + l.fan_out()));
    EXPECT_LE(l.weight.cwiseAbs().maxCoeff(), bound);
    EXPECT_TRUE((l.bias.array() == 0.0).all());
    EXPECT_EQ(l.weight, pb.layers[i].weight);
  }
}

TEST(Neural, BatchedForwardMatchesPerSampleReference) {
  const auto p = small_net(3);
  const auto x = random_matrix(6, 11, 4);
  const auto y = forward(p, x, false);
  for (Eigen::Index c = 0; c < x.cols(); ++c)
    EXPECT_LT((y.col(c) - reference_forward(p, x.col(c))).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_THROW(forward(p, random_matrix(5, 2, 1), false), ConfigError);
}

TEST(Neural, DropoutZeroesOrRescalesActivations) {
  auto p = MLPParams::zeros(able_widths(64), 0.25);
  Rng rng(8);
  ForwardCache cache;
  forward(p, random_matrix(64, 200, 2), true, &rng, &cache);
  ASSERT_EQ(cache.dropout.size(), 3u);
  double dropped = 0.0, total = 0.0;
  for (const auto &m : cache.dropout)
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double v = m.data()[i];
      EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-15);
      dropped += v == 0.0;
      total += 1.0;
    }
  EXPECT_NEAR(dropped / total, 0.25, 0.01);
  EXPECT_THROW(forward(p, random_matrix(64, 1, 2), true, nullptr), InvalidInput);
}

TEST(Neural, BackwardMatchesFiniteDifferences) {
  const auto p = small_net(11);
  const auto x = random_matrix(6, 4, 12);
  const auto c = random_matrix(6, 4, 13);
  ForwardCache cache;
  forward(p, x, false, nullptr, &cache);
  auto grads = MLPParams::zeros(p.widths(), 0.0);
  const auto gx = backward(p, cache, c, grads);

  const double h = 1e-6;
  auto check = [&](double analytic, double numeric) {
    EXPECT_NEAR(analytic, numeric, 1e-6 * std::max(1.0, std::abs(numeric)));
  };
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::MatrixXd xp = x, xm = x;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    check(gx.data()[i], (weighted_output(p, xp, c) - weighted_output(p, xm, c)) / (2 * h));
  }
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    for (Eigen::Index i = 0; i < p.layers[l].weight.size(); ++i) {
      auto pp = p, pm = p;
      pp.layers[l].weight.data()[i] += h;
      pm.layers[l].weight.data()[i] -= h;
      check(grads.layers[l].weight.data()[i],
            (weighted_output(pp, x, c) - weighted_output(pm, x, c)) / (2 * h));
    }
    for (Eigen::Index i = 0; i < p.layers[l].bias.size(); ++i) {
      auto pp = p, pm = p;
      pp.layers[l].bias(i) += h;
      pm.layers[l].bias(i) -= h;
      check(grads.layers[l].bias(i),
            (weighted_output(pp, x, c) - weighted_output(pm, x, c)) / (2 * h));
    }
  }
}

TEST(Neural, UnitColumnsAndItsBackward) {
  Eigen::MatrixXd y = random_matrix(5, 3, 6);
  y.col(1).setZero();
  Eigen::RowVectorXd norms;
  const auto u = unit_columns(y, &norms);
  EXPECT_NEAR(u.col(0).norm(), 1.0, 1e-15);
  EXPECT_TRUE((u.col(1).array() == 0.0).all());
  EXPECT_EQ(norms(1), 0.0);

  const auto g = random_matrix(5, 3, 7);
  const auto back = unit_columns_backward(u, norms, g);
  EXPECT_TRUE((back.col(1).array() == 0.0).all());
  const double h = 1e-6;
  for (Eigen::Index j : {0, 2})
    for (Eigen::Index i = 0; i < 5; ++i) {
      Eigen::MatrixXd yp = y, ym = y;
      yp(i, j) += h;
      ym(i, j) -= h;
      const double num =
          ((unit_columns(yp) - unit_columns(ym)).array() * g.array()).sum() / (2 * h);
      EXPECT_NEAR(back(i, j), num, 1e-7);
    }
}

TEST(Neural, AbleOutputIsWeightedSumAndPositivelyHomogeneous) {
  Rng rng(2);
  const auto p = MLPParams::glorot(able_widths(8), 0.2, rng);
  FocusedFrame f{2, 3, random_matrix(8, 6, 9), {}};
  const auto [img, apod] = able_beamform(p, f);
  EXPECT_EQ(img.beamformer, "able");
  for (Eigen::Index c = 0; c < 6; ++c)
    EXPECT_NEAR(img.values(c), apod.weights.col(c).dot(f.data.col(c)), 1e-13);

  FocusedFrame scaled = f;
  scaled.data *= 1e-4;
  const auto [small, small_apod] = able_beamform(p, scaled);
  EXPECT_LT((small.values - 1e-4 * img.values).cwiseAbs().maxCoeff(),
            1e-12 * img.values.cwiseAbs().maxCoeff());
  EXPECT_LT((small_apod.weights - apod.weights).cwiseAbs().maxCoeff(), 1e-12);

  FocusedFrame wrong{1, 1, random_matrix(7, 1, 1), {}};
  EXPECT_THROW(able_beamform(p, wrong), ConfigError);
}

TEST(Neural, SplitTransmitsKeepsActiveChannelsInOrder) {
  FocusedFrame f{1, 2, random_matrix(8, 2, 4), {1, 0, 1, 0, 1, 0, 1, 0}};
  const auto blocks = split_transmits(f, 2);
  ASSERT_EQ(blocks.size(), 2u);
  ASSERT_EQ(blocks[0].rows(), 2);
  EXPECT_EQ(blocks[0].row(0), f.data.row(0));
  EXPECT_EQ(blocks[0].row(1), f.data.row(2));
  EXPECT_EQ(blocks[1].row(0), f.data.row(4));
  EXPECT_EQ(blocks[1].row(1), f.data.row(6));
  EXPECT_THROW(split_transmits(f, 3), ConfigError);
  FocusedFrame uneven = f;
  uneven.mask = {1, 1, 1, 0, 1, 0, 1, 0};
  EXPECT_THROW(split_transmits(uneven, 2), ConfigError);
}

TEST(Neural, TwoStageComposesPerTransmitOutputs) {
  Rng rng(10);
  const auto p = TwoStageParams::glorot(4, 3, 0.2, rng);
  EXPECT_EQ(p.parameter_count(), able_parameter_count(4) + able_parameter_count(3));
  FocusedFrame f{2, 2, random_matrix(12, 4, 5), {}};
  const auto blocks = split_transmits(f, 3);
  const auto s = stage1_outputs(p.stage1, blocks);
  ASSERT_EQ(s.rows(), 3);
  for (std::size_t t = 0; t < 3; ++t) {
    FocusedFrame sub{2, 2, blocks[t], {}};
    const auto [img, apod] = able_beamform(p.stage1, sub);
    EXPECT_LT((s.row(static_cast<Eigen::Index>(t)).transpose() - img.values)
                  .cwiseAbs().maxCoeff(), 1e-13);
  }
  const auto out = two_stage_beamform(p, blocks, 2, 2);
  FocusedFrame stacked{2, 2, s, {}};
  const auto [ref, ref_apod] = able_beamform(p.stage2, stacked);
  EXPECT_LT((out.values - ref.values).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_THROW(two_stage_beamform(p, blocks, 3, 2), ConfigError);
}

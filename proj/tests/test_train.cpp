#include "beamforge/error.hpp"
#include "beamforge/train.hpp"

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

TrainingFrame das_frame(std::size_t n, std::uint64_t seed) {
  TrainingFrame f;
  f.input = FocusedFrame{3, 4, random_matrix(static_cast<Eigen::Index>(n), 12, seed), {}};
  f.target = das(f.input, Window::hanning).values;
  return f;
}

MLPParams small_net(std::size_t n, std::uint64_t seed, double dropout = 0.0) {
  Rng rng(seed);
  return MLPParams::glorot(able_widths(n), dropout, rng);
}

LossConfig exact() { return LossConfig{}; }

void expect_close(double analytic, double numeric) {
  EXPECT_NEAR(analytic, numeric, 1e-5 * std::max(1.0, std::abs(numeric)));
}

} // namespace

TEST(Train, SmsleExamples) {
  const double p[] = {10.0}, t[] = {1.0};
  EXPECT_NEAR(smsle(p, t), 0.5, 1e-15);
  const double same[] = {0.3, -2.0, 0.0};
  EXPECT_EQ(smsle(same, same), 0.0);
  // Opposite signs pay the floor distance on both parts.
  const double neg[] = {-1.0}, pos[] = {1.0};
  EXPECT_NEAR(smsle(neg, pos), 0.5 * (64.0 + 64.0), 1e-12);
  EXPECT_NEAR(smsle(neg, pos, 1e-2), 0.5 * (4.0 + 4.0), 1e-12);
  const double two[] = {1.0, 2.0};
  EXPECT_THROW(smsle(two, pos), InvalidInput);
}

TEST(Train, SmsleIsSymmetricUnderJointNegation) {
  const auto a = random_matrix(50, 2, 1);
  std::vector<double> p(50), t(50), np(50), nt(50);
  for (int i = 0; i < 50; ++i) {
    p[i] = a(i, 0);
    t[i] = a(i, 1);
    np[i] = -p[i];
    nt[i] = -t[i];
  }
  EXPECT_NEAR(smsle(p, t), smsle(np, nt), 1e-12);
  EXPECT_GE(smsle(p, t), 0.0);
}

TEST(Train, SmsleGradientMatchesFiniteDifferences) {
  const auto a = random_matrix(20, 2, 2);
  std::vector<double> p(20), t(20);
  for (int i = 0; i < 20; ++i) {
    p[i] = a(i, 0);
    t[i] = a(i, 1);
  }
  const auto g = smsle_gradient(p, t);
  const double h = 1e-7;
  for (int i = 0; i < 20; ++i) {
    auto pp = p, pm = p;
    pp[i] += h;
    pm[i] -= h;
    expect_close(g(i), (smsle(pp, t) - smsle(pm, t)) / (2 * h));
  }
}

TEST(Train, UnityPenaltyAndTotalLoss) {
  EXPECT_NEAR(unity_penalty(Eigen::Vector2d(0.5, 0.25)), 0.0625, 1e-16);
  EXPECT_EQ(unity_penalty(Eigen::Vector3d(0.2, 0.3, 0.5)), 0.0);

  const Eigen::Vector2d pred(10.0, 2.0), target(1.0, 2.0);
  Eigen::MatrixXd w(2, 2);
  w << 1.0, 0.5, 0.5, 0.0; // column sums 1.5 and 0.5
  LossConfig cfg;
  cfg.normalize = false;
  const auto l = total_loss(pred, target, w, cfg);
  EXPECT_NEAR(l.smsle, 0.25, 1e-15);
  EXPECT_NEAR(l.unity, 0.25, 1e-15);
  EXPECT_NEAR(l.total, 0.9 * 0.25 + 0.1 * 0.25, 1e-15);
}

TEST(Train, NormalisedLossIsScaleInvariant) {
  const auto a = random_matrix(30, 2, 3);
  const Eigen::VectorXd p = a.col(0), t = a.col(1);
  const auto cfg = exact();
  const double base = normalized_smsle(p, t, cfg);
  for (double s : {1e-6, 3.0, 1e5})
    EXPECT_NEAR(normalized_smsle(s * p, s * t, cfg), base, 1e-9);
}

TEST(Train, LossConfigValidation) {
  EXPECT_THROW((LossConfig{.lambda = 1.5}.validate()), ConfigError);
  EXPECT_THROW((LossConfig{.log_floor = 0.0}.validate()), ConfigError);
  EXPECT_THROW((LossConfig{.pixel_gradient_clip = 0.0}.validate()), ConfigError);
  EXPECT_EQ(TrainConfig{}.loss.pixel_gradient_clip, kTrainingGradientClip);
  EXPECT_TRUE(std::isinf(LossConfig{}.pixel_gradient_clip));
}

TEST(Train, FrameGradientMatchesFiniteDifferences) {
  const auto f = das_frame(12, 4);
  const auto p = small_net(12, 5);
  const auto cfg = exact();
  const auto g = frame_gradient(p, f.input, f.target, cfg, std::nullopt);
  EXPECT_NEAR(g.loss.total, frame_loss(p, f.input, f.target, cfg).total, 1e-12);
  const double h = 1e-6;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    for (Eigen::Index i = 0; i < p.layers[l].weight.size(); i += 3) {
      auto pp = p, pm = p;
      pp.layers[l].weight.data()[i] += h;
      pm.layers[l].weight.data()[i] -= h;
      expect_close(g.grads.layers[l].weight.data()[i],
                   (frame_loss(pp, f.input, f.target, cfg).total -
                    frame_loss(pm, f.input, f.target, cfg).total) / (2 * h));
    }
    for (Eigen::Index i = 0; i < p.layers[l].bias.size(); ++i) {
      auto pp = p, pm = p;
      pp.layers[l].bias(i) += h;
      pm.layers[l].bias(i) -= h;
      expect_close(g.grads.layers[l].bias(i),
                   (frame_loss(pp, f.input, f.target, cfg).total -
                    frame_loss(pm, f.input, f.target, cfg).total) / (2 * h));
    }
  }
}

TEST(Train, ClippedGradientKeepsTheReportedLoss) {
  const auto f = das_frame(12, 14);
  const auto p = small_net(12, 15);
  auto clipped = exact();
  clipped.pixel_gradient_clip = 1e-3;
  const auto a = frame_gradient(p, f.input, f.target, exact(), std::nullopt);
  const auto b = frame_gradient(p, f.input, f.target, clipped, std::nullopt);
  EXPECT_EQ(a.loss.total, b.loss.total);
  EXPECT_NE(a.grads.layers[0].weight, b.grads.layers[0].weight);
}

TEST(Train, AdamFirstStepMovesBySignTimesLearningRate) {
  auto p = MLPParams::zeros(able_widths(2), 0.0);
  auto g = MLPParams::zeros(able_widths(2), 0.0);
  g.layers[0].weight << 2.0, -0.5, 1e-3, 0.0;
  const auto before = p.layers[0].weight;
  OptimizerState opt(p, AdamConfig{.learning_rate = 0.01});
  opt.step(p, g);
  EXPECT_EQ(opt.steps(), 1);
  for (Eigen::Index i = 0; i < 4; ++i) {
    const double gi = g.layers[0].weight.data()[i];
    const double expect = -0.01 * gi / (std::abs(gi) + 1e-8);
    EXPECT_NEAR(p.layers[0].weight.data()[i] - before.data()[i], expect, 1e-12);
  }
}

TEST(Train, TrainingIsDeterministicAndDescends) {
  std::vector<TrainingFrame> data;
  for (std::uint64_t s = 0; s < 4; ++s)
    data.push_back(das_frame(8, 100 + s));
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.seed = 3;
  cfg.adam.learning_rate = 3e-3;
  const auto init = small_net(8, 6, 0.1);
  const auto a = train(data, init, cfg);
  const auto b = train(data, init, cfg);
  ASSERT_EQ(a.loss_history.size(), 30u);
  EXPECT_EQ(a.loss_history, b.loss_history);
  for (std::size_t l = 0; l < a.params.layers.size(); ++l)
    EXPECT_EQ(a.params.layers[l].weight, b.params.layers[l].weight);
  const double start = evaluate(init, data, cfg.loss).smsle;
  const double end = evaluate(a.params, data, cfg.loss).smsle;
  EXPECT_LT(end, 0.5 * start);

  cfg.seed = 4;
  EXPECT_NE(train(data, init, cfg).loss_history, a.loss_history);
}

TEST(Train, EvaluateIsTheMeanFrameLoss) {
  const auto f0 = das_frame(12, 7), f1 = das_frame(12, 8);
  const auto p = small_net(12, 9);
  const std::vector<TrainingFrame> data{f0, f1};
  const auto cfg = exact();
  const double mean = 0.5 * (frame_loss(p, f0.input, f0.target, cfg).total +
                             frame_loss(p, f1.input, f1.target, cfg).total);
  EXPECT_NEAR(evaluate(p, data, cfg).total, mean, 1e-14);
}

TEST(Train, TwoStageGradientMatchesFiniteDifferences) {
  FocusedFrame f{2, 3, random_matrix(64, 6, 21), {}};
  TwoStageFrame frame{split_transmits(f, 8), das(f, Window::boxcar).values, 2, 3};
  Rng rng(22);
  const auto p = TwoStageParams::glorot(8, 8, 0.0, rng);
  const auto cfg = exact();
  const auto g = two_stage_gradient(p, frame, cfg, std::nullopt);
  EXPECT_NEAR(g.loss.total, two_stage_loss(p, frame, cfg).total, 1e-12);
  const double h = 1e-6;
  auto numeric = [&](TwoStageParams pp, TwoStageParams pm) {
    return (two_stage_loss(pp, frame, cfg).total - two_stage_loss(pm, frame, cfg).total) /
           (2 * h);
  };
  for (int stage = 0; stage < 2; ++stage) {
    const auto &net = stage == 0 ? p.stage1 : p.stage2;
    const auto &grad = stage == 0 ? g.grads.stage1 : g.grads.stage2;
    for (std::size_t l = 0; l < net.layers.size(); ++l)
      for (Eigen::Index i = 0; i < net.layers[l].weight.size(); i += 2) {
        auto pp = p, pm = p;
        (stage == 0 ? pp.stage1 : pp.stage2).layers[l].weight.data()[i] += h;
        (stage == 0 ? pm.stage1 : pm.stage2).layers[l].weight.data()[i] -= h;
        expect_close(grad.layers[l].weight.data()[i], numeric(pp, pm));
      }
  }
}

TEST(Train, TwoStageTrainingIsDeterministic) {
  std::vector<TwoStageFrame> data;
  for (std::uint64_t s = 0; s < 3; ++s) {
    FocusedFrame f{2, 3, random_matrix(64, 6, 40 + s), {}};
    data.push_back({split_transmits(f, 8), das(f, Window::boxcar).values, 2, 3});
  }
  Rng rng(5);
  const auto init = TwoStageParams::glorot(8, 8, 0.2, rng);
  TrainConfig cfg;
  cfg.epochs = 5;
  const auto a = train_two_stage(data, init, cfg);
  const auto b = train_two_stage(data, init, cfg);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_EQ(a.params.stage2.layers[0].weight, b.params.stage2.layers[0].weight);
}

#pragma once

#include "beamforge/geometry.hpp"
#include "beamforge/neural.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace beamforge {

struct LossConfig {
  double lambda = 0.9;     ///< weight of the log-image term
  double log_floor = 1e-8; ///< floor applied before log10
  bool normalize = true;   ///< divide both images by max|target| first
  /// Bound on |d SMSLE_pixel / d P| (normalised units) used for updates;
  /// infinity gives the exact gradient.
  double pixel_gradient_clip = std::numeric_limits<double>::infinity();

  void validate() const;
};

/// Signed mean-squared-log error: half the mean squared log10 difference of
/// the positive parts plus half that of the (negated) negative parts, each
/// floored at log_floor.
double smsle(std::span<const double> pred, std::span<const double> target,
             double log_floor = 1e-8);

/// d smsle / d pred, same floor handling (zero where pred is floored).
Eigen::VectorXd smsle_gradient(std::span<const double> pred,
                               std::span<const double> target,
                               double log_floor = 1e-8);

/// (sum(w) - 1)^2
double unity_penalty(const Eigen::Ref<const Eigen::VectorXd> &w);

struct LossTerms {
  double total = 0.0;
  double smsle = 0.0;
  double unity = 0.0;
};

/// lambda * smsle + (1 - lambda) * mean over pixels of unity_penalty, with
/// one weight vector per column of `weights`.
LossTerms total_loss(const Eigen::VectorXd &pred, const Eigen::VectorXd &target,
                     const Eigen::MatrixXd &weights, const LossConfig &cfg);

/// SMSLE after the same max|target| normalisation total_loss applies.
double normalized_smsle(const Eigen::VectorXd &pred, const Eigen::VectorXd &target,
                        const LossConfig &cfg);

/// Loss of one frame together with exact gradients for every parameter.
struct FrameGradient {
  LossTerms loss;
  MLPParams grads;
};

/// Whole-frame batch forward and backward. With a dropout seed the forward
/// pass runs in training mode; otherwise dropout is off.
FrameGradient frame_gradient(const MLPParams &params, const FocusedFrame &frame,
                             const Eigen::VectorXd &target,
                             const LossConfig &cfg,
                             std::optional<std::uint64_t> dropout_seed);

/// Inference-mode loss of one frame.
LossTerms frame_loss(const MLPParams &params, const FocusedFrame &frame,
                     const Eigen::VectorXd &target, const LossConfig &cfg);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First and second moments shaped like the parameters they track.
class OptimizerState {
public:
  OptimizerState(const MLPParams &shape, AdamConfig cfg);
  void step(MLPParams &params, const MLPParams &grads);
  long steps() const { return steps_; }
  const AdamConfig &config() const { return cfg_; }

private:
  AdamConfig cfg_;
  MLPParams m_;
  MLPParams v_;
  long steps_ = 0;
};

struct TrainingFrame {
  FocusedFrame input;
  Eigen::VectorXd target;
};

/// Training clips each pixel's SMSLE gradient to +-1 (normalised units);
/// the reported loss is unaffected.
constexpr double kTrainingGradientClip = 1.0;

struct TrainConfig {
  std::size_t epochs = 50;
  std::uint64_t seed = 1;
  LossConfig loss{.pixel_gradient_clip = kTrainingGradientClip};
  AdamConfig adam;
};

struct TrainResult {
  MLPParams params;
  std::vector<double> loss_history; ///< mean training loss per epoch
};

/// One Adam step per frame, frame order reshuffled every epoch. Fully
/// determined by the seed.
TrainResult train(std::span<const TrainingFrame> data, MLPParams params,
                  const TrainConfig &cfg);

/// Mean inference-mode loss terms over a set of frames.
LossTerms evaluate(const MLPParams &params, std::span<const TrainingFrame> data,
                   const LossConfig &cfg);

/// Two-stage data: per-transmit active-channel blocks plus the target.
struct TwoStageFrame {
  std::vector<Eigen::MatrixXd> blocks;
  Eigen::VectorXd target;
  std::size_t num_x = 0;
  std::size_t num_z = 0;
};

struct TwoStageGradient {
  LossTerms loss;
  TwoStageParams grads;
};

/// The unity term averages the stage-2 penalty with the mean per-transmit
/// stage-1 penalty.
TwoStageGradient two_stage_gradient(const TwoStageParams &params,
                                    const TwoStageFrame &frame,
                                    const LossConfig &cfg,
                                    std::optional<std::uint64_t> dropout_seed);

LossTerms two_stage_loss(const TwoStageParams &params, const TwoStageFrame &frame,
                         const LossConfig &cfg);

struct TwoStageTrainResult {
  TwoStageParams params;
  std::vector<double> loss_history;
};

TwoStageTrainResult train_two_stage(std::span<const TwoStageFrame> data,
                                    TwoStageParams params,
                                    const TrainConfig &cfg);

LossTerms evaluate_two_stage(const TwoStageParams &params,
                             std::span<const TwoStageFrame> data,
                             const LossConfig &cfg);

} // namespace beamforge

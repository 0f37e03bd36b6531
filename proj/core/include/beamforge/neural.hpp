#pragma once

#include "beamforge/beamform.hpp"
#include "beamforge/geometry.hpp"
#include "beamforge/rng.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace beamforge {

/// Fully connected layer computing weight * x + bias.
struct DenseLayer {
  Eigen::MatrixXd weight; ///< fan_out x fan_in
  Eigen::VectorXd bias;   ///< fan_out

  std::size_t fan_in() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t fan_out() const { return static_cast<std::size_t>(weight.rows()); }
};

/// Stack of dense layers with an antirectifier (and dropout while training)
/// between consecutive layers; the last layer is linear. Because the
/// antirectifier doubles its input, layer i > 0 has fan_in = 2 * fan_out of
/// layer i - 1.
struct MLPParams {
  std::vector<DenseLayer> layers;
  double dropout = 0.2;

  /// [input, out_1, ..., out_L]
  std::vector<std::size_t> widths() const;
  std::size_t input_width() const;
  std::size_t output_width() const;
  std::size_t parameter_count() const;
  /// Throws ConfigError when shapes break the doubling rule.
  void validate() const;

  static MLPParams zeros(std::span<const std::size_t> widths,
                         double dropout = 0.2);
  /// Uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  static MLPParams glorot(std::span<const std::size_t> widths, double dropout,
                          Rng &rng);
};

/// [n, n, n/4, n/4, n] with the inner width floored and at least 1.
std::vector<std::size_t> able_widths(std::size_t n);

/// Closed-form trainable parameter count of the able_widths(n) network.
std::size_t able_parameter_count(std::size_t n);

constexpr double kAntirectifierEps = 1e-9;

/// [max(0, u); max(0, -u)] with u = (x - mean) / max(|x - mean|_2, eps).
Eigen::VectorXd antirectifier(const Eigen::Ref<const Eigen::VectorXd> &x);

/// Intermediate values of a batched forward pass, kept for backward().
struct ForwardCache {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> normalized; ///< per hidden layer, mean-removed unit columns
  std::vector<Eigen::RowVectorXd> norms;   ///< per hidden layer, column norms (before flooring)
  std::vector<Eigen::MatrixXd> dropout;    ///< per hidden layer scale factors; empty at inference
  std::vector<Eigen::MatrixXd> activations; ///< inputs to layers 1..L-1
};

/// Forward pass over a batch, one column per sample. Dropout is applied only
/// when training, with kept activations scaled by 1 / (1 - p); rng must then
/// be non-null.
Eigen::MatrixXd forward(const MLPParams &params, const Eigen::MatrixXd &x,
                        bool training, Rng *rng = nullptr,
                        ForwardCache *cache = nullptr);

Eigen::VectorXd forward(const MLPParams &params,
                        const Eigen::Ref<const Eigen::VectorXd> &y,
                        bool training, Rng *rng = nullptr);

/// Accumulates parameter gradients into grads (same shapes as params) and
/// returns the gradient with respect to the network input.
Eigen::MatrixXd backward(const MLPParams &params, const ForwardCache &cache,
                         const Eigen::MatrixXd &grad_output, MLPParams &grads);

/// Network input map: columns scaled to unit L2 norm, zero columns kept at
/// zero. Makes predicted weights invariant to the scale of y, so P = w^T y is
/// homogeneous of degree one in y.
Eigen::MatrixXd unit_columns(const Eigen::MatrixXd &y,
                             Eigen::RowVectorXd *norms = nullptr);
/// Gradient through unit_columns: (g - u (u . g)) / |y| per column; zero for
/// zero columns.
Eigen::MatrixXd unit_columns_backward(const Eigen::MatrixXd &unit,
                                      const Eigen::RowVectorXd &norms,
                                      const Eigen::MatrixXd &grad_unit);

/// P = f(y)^T y per pixel; the predicted weights are recorded.
std::pair<BeamformedImage, ApodizationMap>
able_beamform(const MLPParams &params, const FocusedFrame &frame);

/// Stage 1 is shared across transmits and beamforms each transmit's active
/// receive channels; stage 2 predicts compounding weights from the vector of
/// per-transmit outputs.
struct TwoStageParams {
  MLPParams stage1;
  MLPParams stage2;

  std::size_t parameter_count() const {
    return stage1.parameter_count() + stage2.parameter_count();
  }
  static TwoStageParams glorot(std::size_t active_channels,
                               std::size_t transmits, double dropout, Rng &rng);
};

/// Per-transmit channel blocks of a frame: block t holds the active channels
/// of transmit t (channels_per_transmit consecutive rows of the virtual
/// aperture). Every transmit must have the same number of active channels.
std::vector<Eigen::MatrixXd> split_transmits(const FocusedFrame &frame,
                                             std::size_t transmits);

/// Stage-1 outputs, one row per transmit.
Eigen::MatrixXd stage1_outputs(const MLPParams &stage1,
                               std::span<const Eigen::MatrixXd> blocks);

BeamformedImage two_stage_beamform(const TwoStageParams &params,
                                   std::span<const Eigen::MatrixXd> blocks,
                                   std::size_t num_x, std::size_t num_z);

} // namespace beamforge

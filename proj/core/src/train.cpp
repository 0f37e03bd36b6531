#include "beamforge/train.hpp"

#include "beamforge/error.hpp"
#include "beamforge/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace beamforge {

namespace {

constexpr std::size_t kPixelChunk = 1024;

struct PixelLoss {
  double value = 0.0;    ///< 0.5 * (dpos^2 + dneg^2), before the 1/n mean
  double gradient = 0.0; ///< d value / d pred
};

// One pixel's share of the signed log error.
PixelLoss pixel_smsle(double pred, double target, double floor) {
  const double lp_pos = std::log10(std::max(pred, floor));
  const double lt_pos = std::log10(std::max(target, floor));
  const double lp_neg = std::log10(std::max(-pred, floor));
  const double lt_neg = std::log10(std::max(-target, floor));
  const double dpos = lp_pos - lt_pos;
  const double dneg = lp_neg - lt_neg;
  PixelLoss out;
  out.value = 0.5 * (dpos * dpos + dneg * dneg);
  // d/dP log10(P) = 1 / (P ln 10); for the negative part d/dP log10(-P) is
  // the same expression.
  if (pred > floor)
    out.gradient = dpos / (pred * std::numbers::ln10);
  else if (-pred > floor)
    out.gradient = dneg / (pred * std::numbers::ln10);
  return out;
}

double clip(double g, double bound) { return std::clamp(g, -bound, bound); }

double target_scale(const Eigen::VectorXd &target, const LossConfig &cfg) {
  if (!cfg.normalize || target.size() == 0)
    return 1.0;
  const double m = target.cwiseAbs().maxCoeff();
  return m > 0.0 ? m : 1.0;
}

void add_into(MLPParams &acc, const MLPParams &g) {
  for (std::size_t i = 0; i < acc.layers.size(); ++i) {
    acc.layers[i].weight += g.layers[i].weight;
    acc.layers[i].bias += g.layers[i].bias;
  }
}

MLPParams zeros_like(const MLPParams &p) {
  return MLPParams::zeros(p.widths(), p.dropout);
}

void check_finite(const LossTerms &l, const char *where) {
  if (!std::isfinite(l.total))
    throw NumericError(std::string("non-finite loss in ") + where +
                       " (smsle=" + std::to_string(l.smsle) +
                       ", unity=" + std::to_string(l.unity) + ")");
}

struct ChunkTerms {
  double smsle_sum = 0.0;
  double unity_sum = 0.0;
};

// step(frame_index, dropout_seed) applies one optimiser step and returns the
// frame's training loss.
template <class StepFn>
std::vector<double> run_epochs(std::size_t frames, const TrainConfig &cfg,
                               StepFn &&step) {
  std::vector<double> history;
  history.reserve(cfg.epochs);
  std::vector<std::size_t> order(frames);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::uint64_t shuffle_base = derive_seed(cfg.seed, 0);
  const std::uint64_t dropout_base = derive_seed(cfg.seed, 1);
  std::uint64_t global_step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle(derive_seed(shuffle_base, epoch));
    for (std::size_t i = frames; i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(shuffle)]);
    }
    double sum = 0.0;
    for (std::size_t f : order) {
      const double loss = step(f, derive_seed(dropout_base, global_step++));
      if (!std::isfinite(loss))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                           ", frame " + std::to_string(f));
      sum += loss;
    }
    history.push_back(frames ? sum / static_cast<double>(frames) : 0.0);
  }
  return history;
}

} // namespace

void LossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ConfigError("loss lambda must lie in [0, 1]");
  if (!(log_floor > 0.0))
    throw ConfigError("log floor must be positive");
  if (!(pixel_gradient_clip > 0.0))
    throw ConfigError("pixel gradient clip must be positive");
}

double smsle(std::span<const double> pred, std::span<const double> target,
             double log_floor) {
  if (pred.size() != target.size())
    throw InvalidInput("smsle: image sizes differ");
  if (pred.empty())
    return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    sum += pixel_smsle(pred[i], target[i], log_floor).value;
  return sum / static_cast<double>(pred.size());
}

Eigen::VectorXd smsle_gradient(std::span<const double> pred,
                               std::span<const double> target,
                               double log_floor) {
  if (pred.size() != target.size())
    throw InvalidInput("smsle: image sizes differ");
  Eigen::VectorXd g(static_cast<Eigen::Index>(pred.size()));
  const double inv_n = pred.empty() ? 0.0 : 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i)
    g(static_cast<Eigen::Index>(i)) =
        pixel_smsle(pred[i], target[i], log_floor).gradient * inv_n;
  return g;
}

double unity_penalty(const Eigen::Ref<const Eigen::VectorXd> &w) {
  const double d = w.sum() - 1.0;
  return d * d;
}

LossTerms total_loss(const Eigen::VectorXd &pred, const Eigen::VectorXd &target,
                     const Eigen::MatrixXd &weights, const LossConfig &cfg) {
  cfg.validate();
  if (pred.size() != target.size() || weights.cols() != pred.size())
    throw InvalidInput("total_loss: pixel counts differ");
  const double scale = target_scale(target, cfg);
  const Eigen::VectorXd p = pred / scale;
  const Eigen::VectorXd t = target / scale;
  LossTerms out;
  out.smsle = smsle({p.data(), static_cast<std::size_t>(p.size())},
                    {t.data(), static_cast<std::size_t>(t.size())}, cfg.log_floor);
  if (weights.cols() > 0)
    out.unity = (weights.colwise().sum().array() - 1.0).square().mean();
  out.total = cfg.lambda * out.smsle + (1.0 - cfg.lambda) * out.unity;
  return out;
}

double normalized_smsle(const Eigen::VectorXd &pred, const Eigen::VectorXd &target,
                        const LossConfig &cfg) {
  cfg.validate();
  if (pred.size() != target.size())
    throw InvalidInput("normalized_smsle: pixel counts differ");
  const double scale = target_scale(target, cfg);
  const Eigen::VectorXd p = pred / scale;
  const Eigen::VectorXd t = target / scale;
  return smsle({p.data(), static_cast<std::size_t>(p.size())},
               {t.data(), static_cast<std::size_t>(t.size())}, cfg.log_floor);
}

FrameGradient frame_gradient(const MLPParams &params, const FocusedFrame &frame,
                             const Eigen::VectorXd &target,
                             const LossConfig &cfg,
                             std::optional<std::uint64_t> dropout_seed) {
  cfg.validate();
  const std::size_t pixels = frame.pixels();
  if (static_cast<std::size_t>(target.size()) != pixels)
    throw InvalidInput("target size does not match the frame");
  if (params.input_width() != frame.aperture() ||
      params.output_width() != frame.aperture())
    throw ConfigError("network width does not match the frame aperture");

  const double scale = target_scale(target, cfg);
  const double inv_n = 1.0 / static_cast<double>(pixels);
  const double lambda = cfg.lambda;
  const std::size_t chunks = chunk_count(pixels, kPixelChunk);
  std::vector<MLPParams> grads(chunks);
  std::vector<ChunkTerms> terms(chunks);

  parallel_chunks(pixels, kPixelChunk, [&](std::size_t begin, std::size_t end) {
    const std::size_t c = begin / kPixelChunk;
    const auto b = static_cast<Eigen::Index>(begin);
    const auto len = static_cast<Eigen::Index>(end - begin);
    const Eigen::MatrixXd y = frame.data.middleCols(b, len);
    ForwardCache cache;
    Rng rng(dropout_seed ? derive_seed(*dropout_seed, c) : 0);
    const Eigen::MatrixXd w = forward(params, unit_columns(y), dropout_seed.has_value(),
                                      dropout_seed ? &rng : nullptr, &cache);
    const Eigen::RowVectorXd out = (w.array() * y.array()).colwise().sum();
    const Eigen::RowVectorXd wsum = w.colwise().sum();

    Eigen::RowVectorXd g_out(len);
    ChunkTerms t;
    for (Eigen::Index j = 0; j < len; ++j) {
      const PixelLoss pl =
          pixel_smsle(out(j) / scale, target(b + j) / scale, cfg.log_floor);
      t.smsle_sum += pl.value;
      g_out(j) = lambda * clip(pl.gradient, cfg.pixel_gradient_clip) * inv_n / scale;
      const double d = wsum(j) - 1.0;
      t.unity_sum += d * d;
    }
    Eigen::MatrixXd g_w = y.array().rowwise() * g_out.array();
    const Eigen::RowVectorXd g_unity = (2.0 * (1.0 - lambda) * inv_n) *
                                       (wsum.array() - 1.0).matrix();
    g_w.rowwise() += g_unity;

    grads[c] = zeros_like(params);
    backward(params, cache, g_w, grads[c]);
    terms[c] = t;
  });

  FrameGradient out{{}, zeros_like(params)};
  double smsle_sum = 0.0, unity_sum = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    add_into(out.grads, grads[c]);
    smsle_sum += terms[c].smsle_sum;
    unity_sum += terms[c].unity_sum;
  }
  out.loss.smsle = smsle_sum * inv_n;
  out.loss.unity = unity_sum * inv_n;
  out.loss.total = lambda * out.loss.smsle + (1.0 - lambda) * out.loss.unity;
  check_finite(out.loss, "frame_gradient");
  return out;
}

LossTerms frame_loss(const MLPParams &params, const FocusedFrame &frame,
                     const Eigen::VectorXd &target, const LossConfig &cfg) {
  auto [img, apod] = able_beamform(params, frame);
  return total_loss(img.values, target, apod.weights, cfg);
}

OptimizerState::OptimizerState(const MLPParams &shape, AdamConfig cfg)
    : cfg_(cfg), m_(zeros_like(shape)), v_(zeros_like(shape)) {}

void OptimizerState::step(MLPParams &params, const MLPParams &grads) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  auto update = [&](auto &p, auto &m, auto &v, const auto &g) {
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    p.array() -= cfg_.learning_rate * (m.array() / bc1) /
                 ((v.array() / bc2).sqrt() + cfg_.epsilon);
  };
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    update(params.layers[i].weight, m_.layers[i].weight, v_.layers[i].weight,
           grads.layers[i].weight);
    update(params.layers[i].bias, m_.layers[i].bias, v_.layers[i].bias,
           grads.layers[i].bias);
  }
}

TrainResult train(std::span<const TrainingFrame> data, MLPParams params,
                  const TrainConfig &cfg) {
  params.validate();
  cfg.loss.validate();
  OptimizerState opt(params, cfg.adam);
  auto history = run_epochs(data.size(), cfg, [&](std::size_t f, std::uint64_t seed) {
    FrameGradient g = frame_gradient(params, data[f].input, data[f].target,
                                     cfg.loss, seed);
    opt.step(params, g.grads);
    return g.loss.total;
  });
  return {std::move(params), std::move(history)};
}

LossTerms evaluate(const MLPParams &params, std::span<const TrainingFrame> data,
                   const LossConfig &cfg) {
  LossTerms mean;
  for (const auto &f : data) {
    const LossTerms l = frame_loss(params, f.input, f.target, cfg);
    mean.total += l.total;
    mean.smsle += l.smsle;
    mean.unity += l.unity;
  }
  if (!data.empty()) {
    const double n = static_cast<double>(data.size());
    mean.total /= n;
    mean.smsle /= n;
    mean.unity /= n;
  }
  return mean;
}

TwoStageGradient two_stage_gradient(const TwoStageParams &params,
                                    const TwoStageFrame &frame,
                                    const LossConfig &cfg,
                                    std::optional<std::uint64_t> dropout_seed) {
  cfg.validate();
  const std::size_t transmits = frame.blocks.size();
  if (transmits == 0)
    throw ConfigError("two-stage frame has no transmits");
  const std::size_t pixels = static_cast<std::size_t>(frame.target.size());
  if (params.stage2.input_width() != transmits)
    throw ConfigError("stage-2 width does not match the transmit count");
  for (const auto &b : frame.blocks)
    if (static_cast<std::size_t>(b.cols()) != pixels ||
        static_cast<std::size_t>(b.rows()) != params.stage1.input_width())
      throw ConfigError("transmit block shape does not match the network");

  const double scale = target_scale(frame.target, cfg);
  const double inv_n = 1.0 / static_cast<double>(pixels);
  const double inv_t = 1.0 / static_cast<double>(transmits);
  const double lambda = cfg.lambda;
  const auto tr = static_cast<Eigen::Index>(transmits);
  const std::size_t chunks = chunk_count(pixels, kPixelChunk);
  std::vector<TwoStageParams> grads(chunks);
  std::vector<ChunkTerms> terms(chunks);
  const bool training = dropout_seed.has_value();

  parallel_chunks(pixels, kPixelChunk, [&](std::size_t begin, std::size_t end) {
    const std::size_t c = begin / kPixelChunk;
    const auto b = static_cast<Eigen::Index>(begin);
    const auto len = static_cast<Eigen::Index>(end - begin);
    const auto width = frame.blocks.front().rows();

    Eigen::MatrixXd x1(width, tr * len);
    for (Eigen::Index t = 0; t < tr; ++t)
      x1.middleCols(t * len, len) =
          frame.blocks[static_cast<std::size_t>(t)].middleCols(b, len);

    Rng rng1(training ? derive_seed(*dropout_seed, 2 * c) : 0);
    Rng rng2(training ? derive_seed(*dropout_seed, 2 * c + 1) : 0);
    ForwardCache cache1, cache2;
    const Eigen::MatrixXd w1 =
        forward(params.stage1, unit_columns(x1), training, training ? &rng1 : nullptr,
                &cache1);
    const Eigen::RowVectorXd s_flat = (w1.array() * x1.array()).colwise().sum();
    const Eigen::RowVectorXd w1_sum = w1.colwise().sum();
    Eigen::MatrixXd s(tr, len);
    for (Eigen::Index t = 0; t < tr; ++t)
      s.row(t) = s_flat.segment(t * len, len);

    Eigen::RowVectorXd s_norms;
    const Eigen::MatrixXd s_unit = unit_columns(s, &s_norms);
    const Eigen::MatrixXd v =
        forward(params.stage2, s_unit, training, training ? &rng2 : nullptr, &cache2);
    const Eigen::RowVectorXd out = (v.array() * s.array()).colwise().sum();
    const Eigen::RowVectorXd v_sum = v.colwise().sum();

    ChunkTerms ct;
    Eigen::RowVectorXd g_out(len);
    for (Eigen::Index j = 0; j < len; ++j) {
      const PixelLoss pl =
          pixel_smsle(out(j) / scale, frame.target(b + j) / scale, cfg.log_floor);
      ct.smsle_sum += pl.value;
      g_out(j) = lambda * clip(pl.gradient, cfg.pixel_gradient_clip) * inv_n / scale;
      const double d2 = v_sum(j) - 1.0;
      double stage1_pen = 0.0;
      for (Eigen::Index t = 0; t < tr; ++t) {
        const double d1 = w1_sum(t * len + j) - 1.0;
        stage1_pen += d1 * d1;
      }
      ct.unity_sum += 0.5 * (d2 * d2 + stage1_pen * inv_t);
    }

    // Stage 2: out = sum_t v_t s_t.
    Eigen::MatrixXd g_v = s.array().rowwise() * g_out.array();
    g_v.rowwise() += ((1.0 - lambda) * inv_n) * (v_sum.array() - 1.0).matrix();
    TwoStageParams g{zeros_like(params.stage1), zeros_like(params.stage2)};
    Eigen::MatrixXd g_s = v.array().rowwise() * g_out.array();
    g_s += unit_columns_backward(s_unit, s_norms,
                                 backward(params.stage2, cache2, g_v, g.stage2));

    // Stage 1: s_t = w_t^T y_t for every transmit column block.
    Eigen::RowVectorXd g_s_flat(tr * len);
    for (Eigen::Index t = 0; t < tr; ++t)
      g_s_flat.segment(t * len, len) = g_s.row(t);
    Eigen::MatrixXd g_w1 = x1.array().rowwise() * g_s_flat.array();
    g_w1.rowwise() +=
        ((1.0 - lambda) * inv_n * inv_t) * (w1_sum.array() - 1.0).matrix();
    backward(params.stage1, cache1, g_w1, g.stage1);

    grads[c] = std::move(g);
    terms[c] = ct;
  });

  TwoStageGradient out{{},
                       {zeros_like(params.stage1), zeros_like(params.stage2)}};
  double smsle_sum = 0.0, unity_sum = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    add_into(out.grads.stage1, grads[c].stage1);
    add_into(out.grads.stage2, grads[c].stage2);
    smsle_sum += terms[c].smsle_sum;
    unity_sum += terms[c].unity_sum;
  }
  out.loss.smsle = smsle_sum * inv_n;
  out.loss.unity = unity_sum * inv_n;
  out.loss.total = lambda * out.loss.smsle + (1.0 - lambda) * out.loss.unity;
  check_finite(out.loss, "two_stage_gradient");
  return out;
}

LossTerms two_stage_loss(const TwoStageParams &params, const TwoStageFrame &frame,
                         const LossConfig &cfg) {
  return two_stage_gradient(params, frame, cfg, std::nullopt).loss;
}

TwoStageTrainResult train_two_stage(std::span<const TwoStageFrame> data,
                                    TwoStageParams params,
                                    const TrainConfig &cfg) {
  params.stage1.validate();
  params.stage2.validate();
  cfg.loss.validate();
  OptimizerState opt1(params.stage1, cfg.adam);
  OptimizerState opt2(params.stage2, cfg.adam);
  auto history = run_epochs(data.size(), cfg, [&](std::size_t f, std::uint64_t seed) {
    TwoStageGradient g = two_stage_gradient(params, data[f], cfg.loss, seed);
    opt1.step(params.stage1, g.grads.stage1);
    opt2.step(params.stage2, g.grads.stage2);
    return g.loss.total;
  });
  return {std::move(params), std::move(history)};
}

LossTerms evaluate_two_stage(const TwoStageParams &params,
                             std::span<const TwoStageFrame> data,
                             const LossConfig &cfg) {
  LossTerms mean;
  for (const auto &f : data) {
    const LossTerms l = two_stage_loss(params, f, cfg);
    mean.total += l.total;
    mean.smsle += l.smsle;
    mean.unity += l.unity;
  }
  if (!data.empty()) {
    const double n = static_cast<double>(data.size());
    mean.total /= n;
    mean.smsle /= n;
    mean.unity /= n;
  }
  return mean;
}

} // namespace beamforge

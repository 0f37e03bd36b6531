#include "beamforge/neural.hpp"

#include "beamforge/error.hpp"
#include "beamforge/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace beamforge {

std::vector<std::size_t> MLPParams::widths() const {
  std::vector<std::size_t> w;
  if (layers.empty())
    return w;
  w.push_back(layers.front().fan_in());
  for (const auto &l : layers)
    w.push_back(l.fan_out());
  return w;
}

std::size_t MLPParams::input_width() const {
  return layers.empty() ? 0 : layers.front().fan_in();
}

std::size_t MLPParams::output_width() const {
  return layers.empty() ? 0 : layers.back().fan_out();
}

std::size_t MLPParams::parameter_count() const {
  std::size_t total = 0;
  for (const auto &l : layers)
    total += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return total;
}

void MLPParams::validate() const {
  if (layers.empty())
    throw ConfigError("network has no layers");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw ConfigError("dropout probability must lie in [0, 1)");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto &l = layers[i];
    if (static_cast<std::size_t>(l.bias.size()) != l.fan_out())
      throw ConfigError("layer " + std::to_string(i) + ": bias length mismatch");
    if (i > 0 && l.fan_in() != 2 * layers[i - 1].fan_out())
      throw ConfigError("layer " + std::to_string(i) +
                        ": fan_in must be twice the previous layer's width");
    if (!l.weight.allFinite() || !l.bias.allFinite())
      throw ConfigError("layer " + std::to_string(i) + ": non-finite parameters");
  }
}

MLPParams MLPParams::zeros(std::span<const std::size_t> widths, double dropout) {
  if (widths.size() < 2)
    throw ConfigError("network needs an input width and at least one layer");
  MLPParams p;
  p.dropout = dropout;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::size_t fan_in = i == 0 ? widths[0] : 2 * widths[i];
    const std::size_t fan_out = widths[i + 1];
    if (fan_in == 0 || fan_out == 0)
      throw ConfigError("layer widths must be positive");
    p.layers.push_back({Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(fan_out),
                                              static_cast<Eigen::Index>(fan_in)),
                        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(fan_out))});
  }
  return p;
}

MLPParams MLPParams::glorot(std::span<const std::size_t> widths, double dropout,
                           Rng &rng) {
  MLPParams p = zeros(widths, dropout);
  for (auto &l : p.layers) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(l.fan_in() + l.fan_out()));
    std::uniform_real_distribution<double> u(-limit, limit);
    // Column-major fill keeps the draw order tied to the serialised layout.
    for (Eigen::Index i = 0; i < l.weight.size(); ++i)
      l.weight.data()[i] = u(rng);
  }
  return p;
}

std::vector<std::size_t> able_widths(std::size_t n) {
  const std::size_t inner = std::max<std::size_t>(1, n / 4);
  return {n, n, inner, inner, n};
}

std::size_t able_parameter_count(std::size_t n) {
  const std::size_t q = std::max<std::size_t>(1, n / 4);
  return (n * n + n) + (2 * n * q + q) + (2 * q * q + q) + (2 * q * n + n);
}

Eigen::VectorXd antirectifier(const Eigen::Ref<const Eigen::VectorXd> &x) {
  const Eigen::Index m = x.size();
  Eigen::VectorXd u = x.array() - x.mean();
  u /= std::max(u.norm(), kAntirectifierEps);
  Eigen::VectorXd out(2 * m);
  out.head(m) = u.cwiseMax(0.0);
  out.tail(m) = (-u).cwiseMax(0.0);
  return out;
}

namespace {

std::uint64_t drop_threshold(double p) {
  if (p <= 0.0)
    return 0;
  constexpr double two64 = 18446744073709551616.0;
  const double t = p * two64;
  if (t >= two64)
    return std::numeric_limits<std::uint64_t>::max();
  return static_cast<std::uint64_t>(t);
}

} // namespace

Eigen::MatrixXd forward(const MLPParams &params, const Eigen::MatrixXd &x,
                        bool training, Rng *rng, ForwardCache *cache) {
  if (params.layers.empty())
    throw ConfigError("network has no layers");
  if (static_cast<std::size_t>(x.rows()) != params.input_width())
    throw ConfigError("input width " + std::to_string(x.rows()) +
                      " does not match network width " +
                      std::to_string(params.input_width()));
  const bool drop = training && params.dropout > 0.0;
  if (drop && rng == nullptr)
    throw InvalidInput("training-mode forward needs a random stream");

  if (cache) {
    *cache = ForwardCache{};
    cache->input = x;
  }
  const Eigen::Index cols = x.cols();
  const std::uint64_t threshold = drop_threshold(params.dropout);
  const double keep_scale = 1.0 / (1.0 - params.dropout);

  Eigen::MatrixXd act;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto &layer = params.layers[i];
    const Eigen::MatrixXd &in = i == 0 ? x : act;
    Eigen::MatrixXd z = layer.weight * in;
    z.colwise() += layer.bias;
    if (i + 1 == params.layers.size())
      return z;

    const Eigen::Index m = z.rows();
    const Eigen::RowVectorXd mean = z.colwise().mean();
    z.rowwise() -= mean;
    Eigen::RowVectorXd norms = z.colwise().norm();
    const Eigen::RowVectorXd denom = norms.cwiseMax(kAntirectifierEps);
    z.array().rowwise() /= denom.array();

    Eigen::MatrixXd next(2 * m, cols);
    next.topRows(m) = z.cwiseMax(0.0);
    next.bottomRows(m) = (-z).cwiseMax(0.0);

    Eigen::MatrixXd mask;
    if (drop) {
      mask.resize(2 * m, cols);
      double *d = mask.data();
      for (Eigen::Index k = 0; k < mask.size(); ++k)
        d[k] = (*rng)() < threshold ? 0.0 : keep_scale;
      next.array() *= mask.array();
    }
    if (cache) {
      cache->normalized.push_back(std::move(z));
      cache->norms.push_back(std::move(norms));
      cache->dropout.push_back(std::move(mask));
      cache->activations.push_back(next);
    }
    act = std::move(next);
  }
  return act; // unreachable: the last layer returns above
}

Eigen::VectorXd forward(const MLPParams &params,
                        const Eigen::Ref<const Eigen::VectorXd> &y,
                        bool training, Rng *rng) {
  Eigen::MatrixXd x = y;
  return forward(params, x, training, rng, nullptr).col(0);
}

Eigen::MatrixXd backward(const MLPParams &params, const ForwardCache &cache,
                         const Eigen::MatrixXd &grad_output, MLPParams &grads) {
  const std::size_t layers = params.layers.size();
  if (grads.layers.size() != layers)
    throw ConfigError("gradient buffer does not match the network");
  if (cache.activations.size() + 1 != layers)
    throw ConfigError("forward cache does not match the network");

  Eigen::MatrixXd g = grad_output;
  for (std::size_t i = layers; i-- > 0;) {
    const auto &layer = params.layers[i];
    const Eigen::MatrixXd &in = i == 0 ? cache.input : cache.activations[i - 1];
    grads.layers[i].weight.noalias() += g * in.transpose();
    grads.layers[i].bias += g.rowwise().sum();
    Eigen::MatrixXd g_in = layer.weight.transpose() * g;
    if (i == 0)
      return g_in;

    const std::size_t h = i - 1;
    if (cache.dropout[h].size() != 0)
      g_in.array() *= cache.dropout[h].array();
    const Eigen::MatrixXd &xhat = cache.normalized[h];
    const Eigen::Index m = xhat.rows();
    Eigen::MatrixXd g_hat =
        (xhat.array() > 0.0).select(g_in.topRows(m), 0.0) -
        (xhat.array() < 0.0).select(g_in.bottomRows(m), 0.0);
    const Eigen::RowVectorXd &norms = cache.norms[h];
    for (Eigen::Index c = 0; c < g_hat.cols(); ++c) {
      auto col = g_hat.col(c);
      if (norms(c) > kAntirectifierEps) {
        const double proj = xhat.col(c).dot(col);
        col = (col - proj * xhat.col(c)) / norms(c);
      } else {
        col /= kAntirectifierEps;
      }
    }
    g_hat.rowwise() -= g_hat.colwise().mean();
    g = std::move(g_hat);
  }
  return g;
}

Eigen::MatrixXd unit_columns(const Eigen::MatrixXd &y, Eigen::RowVectorXd *norms) {
  const Eigen::RowVectorXd n = y.colwise().norm();
  Eigen::MatrixXd u(y.rows(), y.cols());
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    if (n(j) > 0.0)
      u.col(j) = y.col(j) / n(j);
    else
      u.col(j).setZero();
  }
  if (norms)
    *norms = n;
  return u;
}

Eigen::MatrixXd unit_columns_backward(const Eigen::MatrixXd &unit,
                                      const Eigen::RowVectorXd &norms,
                                      const Eigen::MatrixXd &grad_unit) {
  Eigen::MatrixXd g(unit.rows(), unit.cols());
  for (Eigen::Index j = 0; j < unit.cols(); ++j) {
    if (norms(j) > 0.0)
      g.col(j) = (grad_unit.col(j) - unit.col(j) * unit.col(j).dot(grad_unit.col(j))) /
                 norms(j);
    else
      g.col(j).setZero();
  }
  return g;
}

std::pair<BeamformedImage, ApodizationMap>
able_beamform(const MLPParams &params, const FocusedFrame &frame) {
  params.validate();
  const std::size_t n = frame.aperture();
  if (params.input_width() != n || params.output_width() != n)
    throw ConfigError("network width " + std::to_string(params.input_width()) +
                      " does not match aperture " + std::to_string(n));
  const std::size_t pixels = frame.pixels();
  BeamformedImage img{frame.num_x, frame.num_z,
                      Eigen::VectorXd(static_cast<Eigen::Index>(pixels)), "able"};
  ApodizationMap apod;
  apod.source = ApodizationSource::able;
  apod.weights.resize(static_cast<Eigen::Index>(n),
                      static_cast<Eigen::Index>(pixels));
  parallel_chunks(pixels, 2048, [&](std::size_t begin, std::size_t end) {
    const auto b = static_cast<Eigen::Index>(begin);
    const auto len = static_cast<Eigen::Index>(end - begin);
    const Eigen::MatrixXd y = frame.data.middleCols(b, len);
    const Eigen::MatrixXd w = forward(params, unit_columns(y), false);
    apod.weights.middleCols(b, len) = w;
    img.values.segment(b, len) = (w.array() * y.array()).colwise().sum().transpose();
  });
  return {std::move(img), std::move(apod)};
}

TwoStageParams TwoStageParams::glorot(std::size_t active_channels,
                                      std::size_t transmits, double dropout,
                                      Rng &rng) {
  TwoStageParams p;
  const auto w1 = able_widths(active_channels);
  const auto w2 = able_widths(transmits);
  p.stage1 = MLPParams::glorot(w1, dropout, rng);
  p.stage2 = MLPParams::glorot(w2, dropout, rng);
  return p;
}

std::vector<Eigen::MatrixXd> split_transmits(const FocusedFrame &frame,
                                             std::size_t transmits) {
  const std::size_t n = frame.aperture();
  if (transmits == 0 || n % transmits != 0)
    throw ConfigError("aperture " + std::to_string(n) +
                      " is not a whole number of transmits");
  const std::size_t per = n / transmits;
  std::vector<Eigen::MatrixXd> blocks;
  blocks.reserve(transmits);
  std::size_t active_expected = 0;
  for (std::size_t t = 0; t < transmits; ++t) {
    std::vector<Eigen::Index> rows;
    for (std::size_t j = 0; j < per; ++j)
      if (frame.active(t * per + j))
        rows.push_back(static_cast<Eigen::Index>(t * per + j));
    if (t == 0)
      active_expected = rows.size();
    else if (rows.size() != active_expected)
      throw ConfigError("transmits have differing active channel counts");
    if (rows.empty())
      throw ConfigError("transmit has no active channels");
    Eigen::MatrixXd block(static_cast<Eigen::Index>(rows.size()), frame.data.cols());
    for (std::size_t r = 0; r < rows.size(); ++r)
      block.row(static_cast<Eigen::Index>(r)) = frame.data.row(rows[r]);
    blocks.push_back(std::move(block));
  }
  return blocks;
}

Eigen::MatrixXd stage1_outputs(const MLPParams &stage1,
                               std::span<const Eigen::MatrixXd> blocks) {
  if (blocks.empty())
    throw ConfigError("no transmit blocks");
  const Eigen::Index pixels = blocks.front().cols();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(blocks.size()), pixels);
  for (std::size_t t = 0; t < blocks.size(); ++t) {
    if (blocks[t].cols() != pixels)
      throw ConfigError("transmit blocks have differing pixel counts");
    const Eigen::MatrixXd w = forward(stage1, unit_columns(blocks[t]), false);
    out.row(static_cast<Eigen::Index>(t)) =
        (w.array() * blocks[t].array()).colwise().sum();
  }
  return out;
}

BeamformedImage two_stage_beamform(const TwoStageParams &params,
                                   std::span<const Eigen::MatrixXd> blocks,
                                   std::size_t num_x, std::size_t num_z) {
  params.stage1.validate();
  params.stage2.validate();
  if (params.stage2.input_width() != blocks.size() ||
      params.stage2.output_width() != blocks.size())
    throw ConfigError("stage-2 width does not match the transmit count");
  for (const auto &b : blocks)
    if (static_cast<std::size_t>(b.rows()) != params.stage1.input_width())
      throw ConfigError("stage-1 width does not match the active channels");
  const Eigen::MatrixXd s = stage1_outputs(params.stage1, blocks);
  if (static_cast<std::size_t>(s.cols()) != num_x * num_z)
    throw ConfigError("pixel count does not match grid dimensions");
  const Eigen::MatrixXd v = forward(params.stage2, unit_columns(s), false);
  BeamformedImage img{num_x, num_z, {}, "able_two_stage"};
  img.values = (v.array() * s.array()).colwise().sum().transpose();
  return img;
}

} // namespace beamforge

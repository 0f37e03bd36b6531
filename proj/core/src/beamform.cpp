#include "beamforge/beamform.hpp"

#include "beamforge/error.hpp"
#include "beamforge/parallel.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace beamforge {

std::string_view source_name(ApodizationSource s) {
  switch (s) {
  case ApodizationSource::das_boxcar:
    return "das_boxcar";
  case ApodizationSource::das_hanning:
    return "das_hanning";
  case ApodizationSource::mv:
    return "mv";
  case ApodizationSource::ebmv:
    return "ebmv";
  case ApodizationSource::able:
    return "able";
  }
  return "unknown";
}

Window parse_window(std::string_view name) {
  if (name == "boxcar")
    return Window::boxcar;
  if (name == "hanning" || name == "hann")
    return Window::hanning;
  if (name == "tukey")
    return Window::tukey;
  throw ConfigError("unknown window '" + std::string(name) + "'");
}

std::string_view window_name(Window w) {
  switch (w) {
  case Window::boxcar:
    return "boxcar";
  case Window::hanning:
    return "hanning";
  case Window::tukey:
    return "tukey";
  }
  return "boxcar";
}

Eigen::VectorXd make_window(Window w, std::size_t n) {
  Eigen::VectorXd out = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
  const double pi = std::numbers::pi;
  if (w == Window::hanning) {
    for (std::size_t i = 0; i < n; ++i)
      out(static_cast<Eigen::Index>(i)) =
          0.5 * (1.0 - std::cos(2.0 * pi * static_cast<double>(i + 1) /
                                static_cast<double>(n + 1)));
  } else if (w == Window::tukey && n > 1) {
    constexpr double alpha = 0.5;
    const double m = static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = static_cast<double>(i) / m;
      double v = 1.0;
      if (x < alpha / 2.0)
        v = 0.5 * (1.0 + std::cos(2.0 * pi / alpha * (x - alpha / 2.0)));
      else if (x > 1.0 - alpha / 2.0)
        v = 0.5 * (1.0 + std::cos(2.0 * pi / alpha * (x - 1.0 + alpha / 2.0)));
      out(static_cast<Eigen::Index>(i)) = v;
    }
  }
  return out;
}

BeamformedImage das(const FocusedFrame &frame, const Eigen::VectorXd &weights) {
  if (static_cast<std::size_t>(weights.size()) != frame.aperture())
    throw InvalidInput("DAS window length " + std::to_string(weights.size()) +
                       " does not match aperture " +
                       std::to_string(frame.aperture()));
  BeamformedImage img{frame.num_x, frame.num_z, {}, "das"};
  img.values.noalias() = frame.data.transpose() * weights;
  return img;
}

BeamformedImage das(const FocusedFrame &frame, Window window) {
  auto img = das(frame, make_window(window, frame.aperture()));
  img.beamformer = "das_" + std::string(window_name(window));
  return img;
}

double imap_pixel(const Eigen::Ref<const Eigen::VectorXd> &y, int iterations) {
  if (iterations < 1)
    throw InvalidInput("iMAP needs at least one iteration");
  const double n = static_cast<double>(y.size());
  const double total = y.sum();
  double p = total;
  for (int it = 0; it < iterations; ++it) {
    const double signal_var = p * p;
    const double noise_var = (y.array() - p).square().sum() / n;
    const double denom = n * signal_var + noise_var;
    p = denom > 0.0 ? signal_var / denom * total : 0.0;
  }
  return p;
}

BeamformedImage imap(const FocusedFrame &frame, int iterations) {
  if (iterations < 1)
    throw InvalidInput("iMAP needs at least one iteration");
  BeamformedImage img{frame.num_x, frame.num_z,
                      Eigen::VectorXd(static_cast<Eigen::Index>(frame.pixels())),
                      "imap" + std::to_string(iterations)};
  for (Eigen::Index p = 0; p < img.values.size(); ++p)
    img.values(p) = imap_pixel(frame.data.col(p), iterations);
  return img;
}

std::size_t MVConfig::resolve_subaperture(std::size_t n) const {
  return subaperture == 0 ? std::max<std::size_t>(1, n / 2) : subaperture;
}

void MVConfig::validate(std::size_t n) const {
  const std::size_t l = resolve_subaperture(n);
  if (l < 1 || l > n)
    throw ConfigError("subaperture length L=" + std::to_string(l) +
                      " must lie in [1, N=" + std::to_string(n) + "]");
  if (!(diagonal_loading >= 0.0))
    throw ConfigError("diagonal loading must be non-negative");
  if (!(eigen_fraction > 0.0) || eigen_fraction > 1.0)
    throw ConfigError("eigen fraction k must lie in (0, 1]");
}

Eigen::MatrixXd smoothed_covariance(const Eigen::Ref<const Eigen::VectorXd> &y,
                                    std::size_t subaperture) {
  const auto n = static_cast<std::size_t>(y.size());
  if (subaperture < 1 || subaperture > n)
    throw ConfigError("subaperture length L=" + std::to_string(subaperture) +
                      " must lie in [1, N=" + std::to_string(n) + "]");
  const auto l = static_cast<Eigen::Index>(subaperture);
  const auto k = static_cast<Eigen::Index>(n - subaperture + 1);
  Eigen::MatrixXd snapshots(l, k);
  for (Eigen::Index i = 0; i < k; ++i)
    snapshots.col(i) = y.segment(i, l);
  Eigen::MatrixXd cov = snapshots * snapshots.transpose();
  cov /= static_cast<double>(k);
  return cov;
}

namespace {

Eigen::MatrixXd loaded(const Eigen::Ref<const Eigen::MatrixXd> &cov,
                       double diagonal_loading) {
  if (cov.rows() != cov.cols() || cov.rows() == 0)
    throw InvalidInput("covariance must be a non-empty square matrix");
  if (!cov.allFinite())
    throw InvalidInput("covariance has non-finite entries");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw InvalidInput("covariance must be symmetric");
  Eigen::MatrixXd r = cov;
  r.diagonal().array() += diagonal_loading * cov.trace();
  return r;
}

WeightResult uniform(Eigen::Index l) {
  return {Eigen::VectorXd::Constant(l, 1.0 / static_cast<double>(l)), true};
}

WeightResult mv_from_loaded(const Eigen::MatrixXd &r) {
  const Eigen::Index l = r.rows();
  if (r.trace() == 0.0)
    return uniform(l);
  Eigen::LLT<Eigen::MatrixXd> llt(r);
  if (llt.info() != Eigen::Success)
    return uniform(l);
  Eigen::VectorXd x = llt.solve(Eigen::VectorXd::Ones(l));
  const double denom = x.sum();
  if (!(denom > 0.0) || !x.allFinite())
    return uniform(l);
  return {x / denom, false};
}

} // namespace

WeightResult mv_weights(const Eigen::Ref<const Eigen::MatrixXd> &cov,
                        double diagonal_loading) {
  return mv_from_loaded(loaded(cov, diagonal_loading));
}

std::size_t signal_subspace_size(std::size_t subaperture, double eigen_fraction) {
  const double raw = eigen_fraction * static_cast<double>(subaperture);
  auto m = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::clamp<std::size_t>(m, 1, subaperture);
}

WeightResult ebmv_weights(const Eigen::Ref<const Eigen::MatrixXd> &cov,
                          double diagonal_loading, double eigen_fraction) {
  if (!(eigen_fraction > 0.0) || eigen_fraction > 1.0)
    throw InvalidInput("eigen fraction k must lie in (0, 1]");
  const Eigen::MatrixXd r = loaded(cov, diagonal_loading);
  WeightResult mv = mv_from_loaded(r);
  if (mv.fallback)
    return mv;
  const auto l = static_cast<std::size_t>(r.rows());
  const std::size_t m = signal_subspace_size(l, eigen_fraction);
  if (m == l)
    return mv;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(r);
  if (eig.info() != Eigen::Success)
    throw NumericError("eigendecomposition did not converge");
  // Eigenvalues are ascending; the signal subspace is the trailing block.
  const auto signal = eig.eigenvectors().rightCols(static_cast<Eigen::Index>(m));
  Eigen::VectorXd coeffs = signal.transpose() * mv.w;
  return {signal * coeffs, false};
}

std::pair<BeamformedImage, ApodizationMap>
mv_beamform(const FocusedFrame &frame, const MVConfig &cfg, bool eigen) {
  const std::size_t n = frame.aperture();
  cfg.validate(n);
  const std::size_t l = cfg.resolve_subaperture(n);
  const auto li = static_cast<Eigen::Index>(l);
  const auto k = static_cast<Eigen::Index>(n - l + 1);
  const std::size_t pixels = frame.pixels();

  BeamformedImage img{frame.num_x, frame.num_z,
                      Eigen::VectorXd(static_cast<Eigen::Index>(pixels)),
                      eigen ? "ebmv" : "mv"};
  ApodizationMap apod;
  apod.source = eigen ? ApodizationSource::ebmv : ApodizationSource::mv;
  apod.weights.resize(li, static_cast<Eigen::Index>(pixels));

  const std::size_t chunk = 256;
  std::vector<std::size_t> fallbacks(chunk_count(pixels, chunk), 0);
  parallel_chunks(pixels, chunk, [&](std::size_t begin, std::size_t end) {
    Eigen::MatrixXd snapshots(li, k);
    Eigen::MatrixXd cov(li, li);
    for (std::size_t p = begin; p < end; ++p) {
      const auto pi = static_cast<Eigen::Index>(p);
      const auto y = frame.data.col(pi);
      for (Eigen::Index i = 0; i < k; ++i)
        snapshots.col(i) = y.segment(i, li);
      cov.noalias() = snapshots * snapshots.transpose();
      cov /= static_cast<double>(k);
      const Eigen::VectorXd mean_snapshot = snapshots.rowwise().mean();
      WeightResult wr;
      try {
        wr = eigen ? ebmv_weights(cov, cfg.diagonal_loading, cfg.eigen_fraction)
                   : mv_weights(cov, cfg.diagonal_loading);
      } catch (const NumericError &e) {
        throw NumericError(std::string(e.what()) + " at pixel (" +
                           std::to_string(p / frame.num_z) + ", " +
                           std::to_string(p % frame.num_z) + ")");
      }
      if (wr.fallback)
        ++fallbacks[begin / chunk];
      img.values(pi) = wr.w.dot(mean_snapshot);
      apod.weights.col(pi) = wr.w;
    }
  });
  for (std::size_t f : fallbacks)
    apod.fallback_pixels += f;
  return {std::move(img), std::move(apod)};
}

} // namespace beamforge

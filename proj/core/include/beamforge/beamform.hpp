#pragma once

#include "beamforge/geometry.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>

namespace beamforge {

/// Scalar RF output per pixel, same pixel order as FocusedFrame.
struct BeamformedImage {
  std::size_t num_x = 0;
  std::size_t num_z = 0;
  Eigen::VectorXd values;
  std::string beamformer;

  double at(std::size_t ix, std::size_t iz) const {
    return values(static_cast<Eigen::Index>(ix * num_z + iz));
  }
};

enum class ApodizationSource { das_boxcar, das_hanning, mv, ebmv, able };

std::string_view source_name(ApodizationSource s);

/// Per-pixel weight vectors, one column per pixel.
struct ApodizationMap {
  Eigen::MatrixXd weights;
  ApodizationSource source = ApodizationSource::das_boxcar;
  /// Pixels whose covariance was singular and fell back to uniform weights.
  std::size_t fallback_pixels = 0;
};

enum class Window { boxcar, hanning, tukey };

Window parse_window(std::string_view name);
std::string_view window_name(Window w);

/// Boxcar is all ones. Hanning is 0.5 (1 - cos(2 pi n / (N + 1))),
/// n = 1..N, so no taps are zero. Tukey uses a 0.5 taper fraction.
Eigen::VectorXd make_window(Window w, std::size_t n);

BeamformedImage das(const FocusedFrame &frame, Window window);
BeamformedImage das(const FocusedFrame &frame, const Eigen::VectorXd &weights);

/// iMAP on a single vector. Starting from P = sum(y), each iteration sets
/// sx2 = P^2, sn2 = |y - P 1|^2 / N and P = sx2 / (N sx2 + sn2) * sum(y).
/// A zero denominator yields 0.
double imap_pixel(const Eigen::Ref<const Eigen::VectorXd> &y, int iterations);
BeamformedImage imap(const FocusedFrame &frame, int iterations);

struct MVConfig {
  std::size_t subaperture = 0; ///< L; 0 selects N / 2
  double diagonal_loading = 0.01;
  double eigen_fraction = 0.5;

  std::size_t resolve_subaperture(std::size_t n) const;
  void validate(std::size_t n) const;
};

/// Spatially smoothed covariance: mean of the N - L + 1 outer products of
/// length-L subvectors.
Eigen::MatrixXd smoothed_covariance(const Eigen::Ref<const Eigen::VectorXd> &y,
                                    std::size_t subaperture);

struct WeightResult {
  Eigen::VectorXd w;
  bool fallback = false; ///< loaded covariance was singular; w = 1 / L
};

/// Regularised MV weights R^-1 a / (a^T R^-1 a), a = 1, with R loaded by
/// D * trace(R) on the diagonal. Solved by Cholesky factorisation.
WeightResult mv_weights(const Eigen::Ref<const Eigen::MatrixXd> &cov,
                        double diagonal_loading);

/// MV weights projected onto the eigenvectors of the ceil(k L) largest
/// eigenvalues of the loaded covariance.
WeightResult ebmv_weights(const Eigen::Ref<const Eigen::MatrixXd> &cov,
                          double diagonal_loading, double eigen_fraction);

/// Number of signal-subspace eigenvectors kept for a given L and k.
std::size_t signal_subspace_size(std::size_t subaperture, double eigen_fraction);

/// Per-pixel MV or EBMV. The output is the mean of w^T y_l over all
/// subapertures, i.e. w^T applied to the averaged subaperture vector.
std::pair<BeamformedImage, ApodizationMap>
mv_beamform(const FocusedFrame &frame, const MVConfig &cfg, bool eigen);

} // namespace beamforge

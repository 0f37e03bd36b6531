#pragma once

#include "beamforge/beamform.hpp"
#include "beamforge/geometry.hpp"
#include "beamforge/simulate.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace beamforge {

/// Non-negative image, same layout as BeamformedImage.
struct EnvelopeImage {
  std::size_t num_x = 0;
  std::size_t num_z = 0;
  Eigen::VectorXd values;

  double at(std::size_t ix, std::size_t iz) const {
    return values(static_cast<Eigen::Index>(ix * num_z + iz));
  }
};

/// Magnitude of the analytic signal of a real sequence (FFT, one-sided
/// spectrum).
Eigen::VectorXd analytic_magnitude(std::span<const double> x);

/// Envelope detection along every axial line.
EnvelopeImage envelope(const BeamformedImage &image);

/// Width between the half-maximum crossings on either side of the global
/// peak, linearly interpolated. Throws NumericError if a side never drops
/// below half maximum.
double fwhm(std::span<const double> profile, double spacing);

struct RegionSpec {
  Shape low;
  Shape high;
};

struct RegionStats {
  double mean = 0.0;
  double variance = 0.0;
  std::size_t pixels = 0;
};

RegionStats region_stats(const EnvelopeImage &env, const ImagingGrid &grid,
                         const Shape &region);

/// 20 log10(|mu_low - mu_high| / sqrt((var_low + var_high) / 2)).
double cnr_from_stats(double mean_low, double var_low, double mean_high,
                      double var_high);

/// CNR on the (linear) envelope. Regions need at least 25 pixels and must
/// not overlap. Throws NumericError on a zero numerator or denominator.
double cnr(const EnvelopeImage &env, const ImagingGrid &grid,
           const RegionSpec &regions);

enum class ProfileDirection { lateral, axial };

struct BeamProfile {
  std::vector<double> db;     ///< 0 dB at the peak
  std::vector<double> linear; ///< envelope samples along the line
  std::vector<double> axis;   ///< lateral or axial coordinate of each sample
  std::size_t peak_ix = 0;
  std::size_t peak_iz = 0;
};

/// Line through the envelope maximum within `search` pixels of `through`.
BeamProfile beam_profile(const EnvelopeImage &env, const ImagingGrid &grid,
                         Point2 through, ProfileDirection direction,
                         std::size_t search = 3);

/// FWHM of a point target along one direction. Lateral widths on a polar
/// grid are in radians, everything else in meters.
double point_fwhm(const EnvelopeImage &env, const ImagingGrid &grid,
                  Point2 target, ProfileDirection direction);

/// Value of the envelope peak near `through` relative to the image maximum,
/// in dB.
double relative_peak_db(const EnvelopeImage &env, const ImagingGrid &grid,
                        Point2 through, std::size_t search = 3);

} // namespace beamforge

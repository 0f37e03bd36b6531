#include "beamforge/metrics.hpp"

#include "beamforge/error.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>

namespace beamforge {

Eigen::VectorXd analytic_magnitude(std::span<const double> x) {
  const std::size_t n = x.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  if (n == 0)
    return out;
  // A single sample is its own analytic signal.
  if (n == 1) {
    out(0) = std::abs(x[0]);
    return out;
  }
  std::vector<std::complex<double>> time(x.begin(), x.end());
  std::vector<std::complex<double>> freq;
  Eigen::FFT<double> fft;
  fft.fwd(freq, time);
  // Keep DC (and Nyquist for even n), double the positive frequencies.
  const std::size_t half = n / 2;
  for (std::size_t k = 1; k < n; ++k) {
    if (k < (n + 1) / 2)
      freq[k] *= 2.0;
    else if (!(n % 2 == 0 && k == half))
      freq[k] = 0.0;
  }
  fft.inv(time, freq);
  for (std::size_t i = 0; i < n; ++i)
    out(static_cast<Eigen::Index>(i)) = std::abs(time[i]);
  return out;
}

EnvelopeImage envelope(const BeamformedImage &image) {
  if (static_cast<std::size_t>(image.values.size()) != image.num_x * image.num_z)
    throw InvalidInput("image size does not match its dimensions");
  EnvelopeImage env{image.num_x, image.num_z,
                    Eigen::VectorXd(image.values.size())};
  const auto nz = static_cast<Eigen::Index>(image.num_z);
  for (std::size_t ix = 0; ix < image.num_x; ++ix) {
    const auto start = static_cast<Eigen::Index>(ix) * nz;
    env.values.segment(start, nz) = analytic_magnitude(
        {image.values.data() + start, static_cast<std::size_t>(nz)});
  }
  return env;
}

double fwhm(std::span<const double> profile, double spacing) {
  if (profile.size() < 3)
    throw InvalidInput("fwhm: profile needs at least 3 samples");
  const auto peak_it = std::max_element(profile.begin(), profile.end());
  const auto peak = static_cast<std::size_t>(peak_it - profile.begin());
  const double top = *peak_it;
  if (!(top > 0.0))
    throw NumericError("fwhm: profile has no positive peak");
  const double half = 0.5 * top;

  std::size_t i = peak;
  while (i > 0 && profile[i - 1] > half)
    --i;
  if (i == 0)
    throw NumericError("fwhm: profile truncated on the left");
  const double left = static_cast<double>(i - 1) +
                      (half - profile[i - 1]) / (profile[i] - profile[i - 1]);

  std::size_t j = peak;
  while (j + 1 < profile.size() && profile[j + 1] > half)
    ++j;
  if (j + 1 >= profile.size())
    throw NumericError("fwhm: profile truncated on the right");
  const double right = static_cast<double>(j) +
                       (profile[j] - half) / (profile[j] - profile[j + 1]);
  return (right - left) * spacing;
}

RegionStats region_stats(const EnvelopeImage &env, const ImagingGrid &grid,
                         const Shape &region) {
  if (env.num_x != grid.num_x() || env.num_z != grid.num_z())
    throw ConfigError("envelope and grid dimensions differ");
  RegionStats s;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t p = 0; p < grid.size(); ++p) {
    if (!contains(region, grid.pixel(p)))
      continue;
    const double v = env.values(static_cast<Eigen::Index>(p));
    sum += v;
    sum_sq += v * v;
    ++s.pixels;
  }
  if (s.pixels > 0) {
    const double n = static_cast<double>(s.pixels);
    s.mean = sum / n;
    s.variance = std::max(0.0, sum_sq / n - s.mean * s.mean);
  }
  return s;
}

double cnr_from_stats(double mean_low, double var_low, double mean_high,
                      double var_high) {
  const double num = std::abs(mean_low - mean_high);
  const double den = std::sqrt(0.5 * (var_low + var_high));
  if (!(num > 0.0))
    throw NumericError("cnr: region means are identical");
  if (!(den > 0.0))
    throw NumericError("cnr: both regions have zero variance");
  return 20.0 * std::log10(num / den);
}

double cnr(const EnvelopeImage &env, const ImagingGrid &grid,
           const RegionSpec &regions) {
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const Point2 r = grid.pixel(p);
    if (contains(regions.low, r) && contains(regions.high, r))
      throw ConfigError("cnr: low and high regions overlap");
  }
  const RegionStats low = region_stats(env, grid, regions.low);
  const RegionStats high = region_stats(env, grid, regions.high);
  if (low.pixels < 25 || high.pixels < 25)
    throw ConfigError("cnr: each region needs at least 25 pixels (got " +
                      std::to_string(low.pixels) + " and " +
                      std::to_string(high.pixels) + ")");
  return cnr_from_stats(low.mean, low.variance, high.mean, high.variance);
}

BeamProfile beam_profile(const EnvelopeImage &env, const ImagingGrid &grid,
                         Point2 through, ProfileDirection direction,
                         std::size_t search) {
  if (env.num_x != grid.num_x() || env.num_z != grid.num_z())
    throw ConfigError("envelope and grid dimensions differ");
  const auto [cx, cz] = grid.nearest(through);
  const std::size_t x0 = cx > search ? cx - search : 0;
  const std::size_t x1 = std::min(grid.num_x() - 1, cx + search);
  const std::size_t z0 = cz > search ? cz - search : 0;
  const std::size_t z1 = std::min(grid.num_z() - 1, cz + search);

  BeamProfile out{{}, {}, {}, cx, cz};
  double best = -1.0;
  for (std::size_t ix = x0; ix <= x1; ++ix)
    for (std::size_t iz = z0; iz <= z1; ++iz)
      if (env.at(ix, iz) > best) {
        best = env.at(ix, iz);
        out.peak_ix = ix;
        out.peak_iz = iz;
      }

  if (direction == ProfileDirection::lateral) {
    for (std::size_t ix = 0; ix < grid.num_x(); ++ix) {
      out.linear.push_back(env.at(ix, out.peak_iz));
      out.axis.push_back(grid.lateral[ix]);
    }
  } else {
    for (std::size_t iz = 0; iz < grid.num_z(); ++iz) {
      out.linear.push_back(env.at(out.peak_ix, iz));
      out.axis.push_back(grid.axial[iz]);
    }
  }
  const double peak = best > 0.0 ? best : 1.0;
  for (double v : out.linear)
    out.db.push_back(20.0 * std::log10(std::max(v / peak, 1e-15)));
  return out;
}

double point_fwhm(const EnvelopeImage &env, const ImagingGrid &grid,
                  Point2 target, ProfileDirection direction) {
  const BeamProfile prof = beam_profile(env, grid, target, direction);
  const double spacing = direction == ProfileDirection::lateral
                             ? grid.lateral_spacing()
                             : grid.axial_spacing();
  // Restrict to the peak's own lobe so a brighter neighbour elsewhere on the
  // line cannot hijack the global maximum.
  const std::size_t centre = direction == ProfileDirection::lateral
                                 ? prof.peak_ix
                                 : prof.peak_iz;
  const double half = 0.5 * prof.linear[centre];
  std::size_t lo = centre, hi = centre;
  while (lo > 0 && prof.linear[lo] > half)
    --lo;
  while (hi + 1 < prof.linear.size() && prof.linear[hi] > half)
    ++hi;
  return fwhm(std::span<const double>(prof.linear).subspan(lo, hi - lo + 1),
              spacing);
}

double relative_peak_db(const EnvelopeImage &env, const ImagingGrid &grid,
                        Point2 through, std::size_t search) {
  const BeamProfile prof =
      beam_profile(env, grid, through, ProfileDirection::lateral, search);
  const double global = env.values.maxCoeff();
  const double local = env.at(prof.peak_ix, prof.peak_iz);
  if (!(global > 0.0))
    throw NumericError("relative_peak_db: empty image");
  return 20.0 * std::log10(std::max(local / global, 1e-15));
}

} // namespace beamforge

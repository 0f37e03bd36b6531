#include "beamforge/geometry.hpp"

#include "beamforge/error.hpp"
#include "beamforge/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace beamforge {

namespace {

bool finite(Point2 p) { return std::isfinite(p.x) && std::isfinite(p.z); }

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  if (n == 1) {
    v[0] = a;
    return v;
  }
  const double step = (b - a) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = a + step * static_cast<double>(i);
  return v;
}

std::size_t nearest_index(const std::vector<double> &axis, double v) {
  auto it = std::lower_bound(axis.begin(), axis.end(), v);
  if (it == axis.begin())
    return 0;
  if (it == axis.end())
    return axis.size() - 1;
  auto hi = static_cast<std::size_t>(it - axis.begin());
  return (v - axis[hi - 1] <= axis[hi] - v) ? hi - 1 : hi;
}

} // namespace

double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.z - b.z); }

std::size_t ArrayGeometry::num_transmits() const {
  if (const auto *sa = std::get_if<SyntheticAperture>(&transmit))
    return sa->num_transmits;
  return 1;
}

std::size_t ArrayGeometry::receive_channels() const {
  if (const auto *sa = std::get_if<SyntheticAperture>(&transmit))
    return sa->receive_aperture;
  return elements.size();
}

std::size_t ArrayGeometry::aperture_size() const {
  return num_transmits() * receive_channels();
}

std::size_t ArrayGeometry::transmit_element(std::size_t t) const {
  const auto *sa = std::get_if<SyntheticAperture>(&transmit);
  if (!sa)
    throw InvalidInput("plane-wave transmits have no transmitting element");
  if (t >= sa->num_transmits)
    throw InvalidInput("transmit index " + std::to_string(t) + " out of range");
  return (elements.size() - sa->num_transmits) / 2 + t;
}

std::vector<std::size_t> ArrayGeometry::receive_elements(std::size_t t) const {
  const std::size_t n = elements.size();
  const auto *sa = std::get_if<SyntheticAperture>(&transmit);
  std::vector<std::size_t> out;
  if (!sa) {
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      out[i] = i;
    return out;
  }
  const std::size_t r = sa->receive_aperture;
  const auto e = static_cast<long>(transmit_element(t));
  const long half = static_cast<long>(r / 2);
  out.reserve(r);
  if (kind == ArrayKind::circular) {
    for (long k = 0; k < static_cast<long>(r); ++k) {
      long idx = (e - half + k) % static_cast<long>(n);
      if (idx < 0)
        idx += static_cast<long>(n);
      out.push_back(static_cast<std::size_t>(idx));
    }
  } else {
    long start = std::clamp(e - half, 0L, static_cast<long>(n - r));
    for (long k = 0; k < static_cast<long>(r); ++k)
      out.push_back(static_cast<std::size_t>(start + k));
  }
  return out;
}

double ArrayGeometry::index_distance(double a, double b) const {
  double d = std::abs(a - b);
  if (kind == ArrayKind::circular) {
    const double n = static_cast<double>(elements.size());
    d = std::fmod(d, n);
    d = std::min(d, n - d);
  }
  return d;
}

void ArrayGeometry::validate() const {
  if (elements.size() < 2)
    throw InvalidInput("array needs at least 2 elements");
  if (!(pitch > 0.0))
    throw InvalidInput("pitch must be positive");
  if (!(c > 0.0))
    throw InvalidInput("speed of sound must be positive");
  if (!(f0 > 0.0) || !(fs > 2.0 * f0))
    throw InvalidInput("sampling frequency must exceed twice the centre "
                       "frequency");
  for (const auto &p : elements)
    if (!finite(p))
      throw InvalidInput("non-finite element position");
  if (kind == ArrayKind::circular && !(radius > 0.0))
    throw InvalidInput("circular array needs a positive radius");
  if (const auto *sa = std::get_if<SyntheticAperture>(&transmit)) {
    if (sa->num_transmits < 1 || sa->num_transmits > elements.size())
      throw InvalidInput("num_transmits must be in [1, elements]");
    if (sa->receive_aperture < 1 || sa->receive_aperture > elements.size())
      throw InvalidInput("receive_aperture must be in [1, elements]");
  } else if (!std::isfinite(std::get<PlaneWave>(transmit).angle)) {
    throw InvalidInput("non-finite plane-wave angle");
  }
}

ArrayGeometry make_linear_array(std::size_t n, double pitch, double f0,
                                double fs, double c, TransmitScheme transmit) {
  ArrayGeometry g;
  g.kind = ArrayKind::linear;
  g.pitch = pitch;
  g.f0 = f0;
  g.fs = fs;
  g.c = c;
  g.transmit = transmit;
  g.elements.resize(n);
  const double mid = (static_cast<double>(n) - 1.0) / 2.0;
  for (std::size_t i = 0; i < n; ++i)
    g.elements[i] = {(static_cast<double>(i) - mid) * pitch, 0.0};
  g.validate();
  return g;
}

ArrayGeometry make_circular_array(std::size_t n, double pitch, double f0,
                                  double fs, double c,
                                  TransmitScheme transmit) {
  ArrayGeometry g;
  g.kind = ArrayKind::circular;
  g.pitch = pitch;
  g.f0 = f0;
  g.fs = fs;
  g.c = c;
  g.transmit = transmit;
  g.radius = static_cast<double>(n) * pitch / (2.0 * std::numbers::pi);
  g.elements.resize(n);
  const double mid = (static_cast<double>(n) - 1.0) / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * (static_cast<double>(i) - mid) /
                     static_cast<double>(n);
    g.elements[i] = {g.radius * std::sin(a), g.radius * std::cos(a)};
  }
  g.validate();
  return g;
}

Preset parse_preset(std::string_view name) {
  if (name == "linear_desk")
    return Preset::linear_desk;
  if (name == "circular_desk")
    return Preset::circular_desk;
  if (name == "linear_full")
    return Preset::linear_full;
  if (name == "circular_full")
    return Preset::circular_full;
  throw ConfigError("unknown geometry preset '" + std::string(name) + "'");
}

std::string_view preset_name(Preset p) {
  switch (p) {
  case Preset::linear_desk:
    return "linear_desk";
  case Preset::circular_desk:
    return "circular_desk";
  case Preset::linear_full:
    return "linear_full";
  case Preset::circular_full:
    return "circular_full";
  }
  return "linear_desk";
}

ArrayGeometry preset_geometry(Preset p) {
  switch (p) {
  case Preset::linear_desk:
    return make_linear_array(64, 0.3e-3, 6.25e6, 25e6);
  case Preset::linear_full:
    return make_linear_array(128, 0.3e-3, 6.25e6, 25e6);
  case Preset::circular_desk:
    return make_circular_array(32, 0.057e-3, 20e6, 100e6, 1540.0,
                               SyntheticAperture{8, 8});
  case Preset::circular_full:
    // 8 transmits x 14 receive channels = 112 virtual channels.
    return make_circular_array(64, 0.057e-3, 20e6, 100e6, 1540.0,
                               SyntheticAperture{8, 14});
  }
  throw ConfigError("unknown preset");
}

Point2 ImagingGrid::pixel(std::size_t ix, std::size_t iz) const {
  if (kind == GridKind::cartesian)
    return {lateral[ix], axial[iz]};
  return {axial[iz] * std::sin(lateral[ix]), axial[iz] * std::cos(lateral[ix])};
}

double ImagingGrid::lateral_spacing() const {
  return lateral.size() > 1 ? lateral[1] - lateral[0] : 0.0;
}

double ImagingGrid::axial_spacing() const {
  return axial.size() > 1 ? axial[1] - axial[0] : 0.0;
}

std::pair<std::size_t, std::size_t> ImagingGrid::nearest(Point2 r) const {
  if (kind == GridKind::cartesian)
    return {nearest_index(lateral, r.x), nearest_index(axial, r.z)};
  return {nearest_index(lateral, std::atan2(r.x, r.z)),
          nearest_index(axial, std::hypot(r.x, r.z))};
}

ImagingGrid ImagingGrid::cartesian(double x0, double x1, std::size_t nx,
                                   double z0, double z1, std::size_t nz) {
  if (nx < 1 || nz < 1 || !(x1 >= x0) || !(z1 >= z0) ||
      (nx > 1 && !(x1 > x0)) || (nz > 1 && !(z1 > z0)))
    throw ConfigError("grid spacing must be positive");
  return {GridKind::cartesian, linspace(x0, x1, nx), linspace(z0, z1, nz)};
}

ImagingGrid ImagingGrid::polar(double a0, double a1, std::size_t na, double r0,
                               double r1, std::size_t nr) {
  if (na < 1 || nr < 1 || (na > 1 && !(a1 > a0)) || (nr > 1 && !(r1 > r0)))
    throw ConfigError("grid spacing must be positive");
  return {GridKind::polar, linspace(a0, a1, na), linspace(r0, r1, nr)};
}

void ImagingGrid::validate(const ArrayGeometry &geom) const {
  if (lateral.empty() || axial.empty())
    throw ConfigError("empty imaging grid");
  for (double v : lateral)
    if (!std::isfinite(v))
      throw ConfigError("non-finite grid coordinate");
  for (double v : axial)
    if (!std::isfinite(v))
      throw ConfigError("non-finite grid coordinate");
  if (geom.kind == ArrayKind::linear) {
    for (std::size_t ix = 0; ix < num_x(); ++ix)
      for (std::size_t iz = 0; iz < num_z(); ++iz)
        if (!(pixel(ix, iz).z > 0.0))
          throw ConfigError("grid pixel lies behind the linear array");
  } else {
    for (std::size_t ix = 0; ix < num_x(); ++ix)
      for (std::size_t iz = 0; iz < num_z(); ++iz) {
        const Point2 p = pixel(ix, iz);
        if (!(std::hypot(p.x, p.z) > geom.radius))
          throw ConfigError("grid pixel lies inside the circular array");
      }
  }
}

RawChannelData::RawChannelData(std::size_t transmits, std::size_t channels,
                               std::size_t length, double start_time)
    : num_transmits(transmits), num_channels(channels), num_samples(length),
      t0(start_time), samples(transmits * channels * length, 0.0) {}

double transmit_distance(const ArrayGeometry &geom, std::size_t t, Point2 r) {
  if (const auto *pw = std::get_if<PlaneWave>(&geom.transmit))
    return r.x * std::sin(pw->angle) + r.z * std::cos(pw->angle);
  return distance(geom.elements[geom.transmit_element(t)], r);
}

double time_of_flight(const ArrayGeometry &geom, Point2 tx, Point2 rx,
                      Point2 r) {
  if (!finite(tx) || !finite(rx) || !finite(r))
    throw InvalidInput("time_of_flight: non-finite coordinates");
  if (!(geom.c > 0.0))
    throw InvalidInput("time_of_flight: speed of sound must be positive");
  double outbound;
  if (const auto *pw = std::get_if<PlaneWave>(&geom.transmit))
    outbound = r.x * std::sin(pw->angle) + r.z * std::cos(pw->angle);
  else
    outbound = distance(tx, r);
  return (outbound + distance(rx, r)) / geom.c;
}

double sample_linear(std::span<const double> trace, double index) {
  if (trace.empty() || !(index >= 0.0))
    return 0.0;
  const double last = static_cast<double>(trace.size() - 1);
  if (index > last)
    return 0.0;
  const double base = std::floor(index);
  const auto i0 = static_cast<std::size_t>(base);
  if (i0 + 1 >= trace.size())
    return trace[i0];
  const double frac = index - base;
  if (frac == 0.0)
    return trace[i0];
  return (1.0 - frac) * trace[i0] + frac * trace[i0 + 1];
}

FocusedFrame focus(const RawChannelData &raw, const ArrayGeometry &geom,
                   const ImagingGrid &grid) {
  geom.validate();
  grid.validate(geom);
  const std::size_t transmits = geom.num_transmits();
  const std::size_t channels = geom.receive_channels();
  if (raw.num_transmits != transmits || raw.num_channels != channels)
    throw ConfigError("channel data shape (" +
                      std::to_string(raw.num_transmits) + " x " +
                      std::to_string(raw.num_channels) +
                      ") does not match geometry (" +
                      std::to_string(transmits) + " x " +
                      std::to_string(channels) + ")");
  if (raw.samples.size() != transmits * channels * raw.num_samples)
    throw ConfigError("channel data buffer size mismatch");

  std::vector<std::vector<std::size_t>> receivers(transmits);
  std::vector<Point2> tx_pos(transmits);
  for (std::size_t t = 0; t < transmits; ++t) {
    receivers[t] = geom.receive_elements(t);
    if (!geom.plane_wave())
      tx_pos[t] = geom.elements[geom.transmit_element(t)];
  }

  FocusedFrame frame;
  frame.num_x = grid.num_x();
  frame.num_z = grid.num_z();
  frame.data.setZero(static_cast<Eigen::Index>(transmits * channels),
                     static_cast<Eigen::Index>(grid.size()));

  parallel_chunks(grid.size(), 512, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const Point2 r = grid.pixel(p);
      auto col = frame.data.col(static_cast<Eigen::Index>(p));
      for (std::size_t t = 0; t < transmits; ++t) {
        for (std::size_t j = 0; j < channels; ++j) {
          const Point2 rx = geom.elements[receivers[t][j]];
          const double delay = time_of_flight(geom, tx_pos[t], rx, r);
          const double index = (delay - raw.t0) * geom.fs;
          col(static_cast<Eigen::Index>(t * channels + j)) =
              sample_linear(raw.trace(t, j), index);
        }
      }
    }
  });
  return frame;
}

void apply_mask(FocusedFrame &frame, std::span<const std::uint8_t> mask) {
  if (mask.size() != frame.aperture())
    throw InvalidInput("mask length does not match the aperture");
  frame.mask.assign(mask.begin(), mask.end());
  for (std::size_t ch = 0; ch < mask.size(); ++ch)
    if (!mask[ch])
      frame.data.row(static_cast<Eigen::Index>(ch)).setZero();
}

} // namespace beamforge

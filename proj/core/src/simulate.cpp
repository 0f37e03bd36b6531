#include "beamforge/simulate.hpp"

#include "beamforge/error.hpp"
#include "beamforge/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace beamforge {

namespace {

constexpr double kPulseCutoffSigmas = 5.0;

struct ContainsVisitor {
  Point2 p;
  bool operator()(const Rect &r) const {
    return p.x >= r.x0 && p.x <= r.x1 && p.z >= r.z0 && p.z <= r.z1;
  }
  bool operator()(const Disk &d) const {
    return distance(p, d.center) <= d.radius;
  }
  bool operator()(const Annulus &a) const {
    const double r = distance(p, a.center);
    return r >= a.inner && r <= a.outer;
  }
};

} // namespace

bool contains(const Shape &shape, Point2 p) {
  return std::visit(ContainsVisitor{p}, shape);
}

double area(const Shape &shape) {
  return std::visit(
      [](const auto &s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Rect>)
          return (s.x1 - s.x0) * (s.z1 - s.z0);
        else if constexpr (std::is_same_v<T, Disk>)
          return std::numbers::pi * s.radius * s.radius;
        else
          return std::numbers::pi * (s.outer * s.outer - s.inner * s.inner);
      },
      shape);
}

double pulse_sigma(double f0, double bandwidth) {
  // Half amplitude at f0 * bandwidth / 2 from the centre frequency.
  const double sigma_f =
      bandwidth * f0 / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
  return 1.0 / (2.0 * std::numbers::pi * sigma_f);
}

double pulse(double t, double f0, double bandwidth) {
  const double s = pulse_sigma(f0, bandwidth);
  return std::exp(-0.5 * t * t / (s * s)) *
         std::cos(2.0 * std::numbers::pi * f0 * t);
}

std::size_t samples_for_grid(const ArrayGeometry &geom, const ImagingGrid &grid,
                             double bandwidth) {
  double longest = 0.0;
  for (std::size_t t = 0; t < geom.num_transmits(); ++t) {
    const auto rx = geom.receive_elements(t);
    for (std::size_t p = 0; p < grid.size(); ++p) {
      const Point2 r = grid.pixel(p);
      const double out = transmit_distance(geom, t, r);
      for (std::size_t e : rx)
        longest = std::max(longest, out + distance(geom.elements[e], r));
    }
  }
  const double tail = kPulseCutoffSigmas * pulse_sigma(geom.f0, bandwidth);
  return static_cast<std::size_t>(std::ceil((longest / geom.c + tail) * geom.fs)) +
         2;
}

RawChannelData simulate_channels(const Phantom &phantom,
                                 const ArrayGeometry &geom, double noise_std,
                                 std::uint64_t rng_seed,
                                 const SimulationOptions &options) {
  geom.validate();
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std))
    throw InvalidInput("noise_std must be finite and non-negative");
  if (!(options.bandwidth > 0.0))
    throw InvalidInput("pulse bandwidth must be positive");
  for (const auto &s : phantom.scatterers)
    if (!std::isfinite(s.position.x) || !std::isfinite(s.position.z) ||
        !std::isfinite(s.amplitude))
      throw InvalidInput("non-finite scatterer");

  const std::size_t transmits = geom.num_transmits();
  const std::size_t channels = geom.receive_channels();
  const double sigma = pulse_sigma(geom.f0, options.bandwidth);
  const double half_width = kPulseCutoffSigmas * sigma * geom.fs;
  const double lambda = geom.wavelength();

  std::vector<std::vector<std::size_t>> receivers(transmits);
  for (std::size_t t = 0; t < transmits; ++t)
    receivers[t] = geom.receive_elements(t);

  std::size_t length = options.num_samples;
  if (length == 0) {
    double longest = 0.0;
    for (const auto &s : phantom.scatterers)
      for (std::size_t t = 0; t < transmits; ++t)
        for (std::size_t e : receivers[t])
          longest = std::max(longest,
                             transmit_distance(geom, t, s.position) +
                                 distance(geom.elements[e], s.position));
    length = static_cast<std::size_t>(
                 std::ceil(longest / geom.c * geom.fs + half_width)) +
             2;
  }

  RawChannelData raw(transmits, channels, length);
  const double two_pi_f0 = 2.0 * std::numbers::pi * geom.f0;
  const double inv_two_sigma2 = 0.5 / (sigma * sigma);

  for (const auto &s : phantom.scatterers) {
    for (std::size_t t = 0; t < transmits; ++t) {
      const double d_tx = transmit_distance(geom, t, s.position);
      const double tx_spread = std::max(d_tx / lambda, 1.0);
      for (std::size_t j = 0; j < channels; ++j) {
        const Point2 rx = geom.elements[receivers[t][j]];
        const double d_rx = distance(rx, s.position);
        const double amp =
            s.amplitude / (tx_spread * std::max(d_rx / lambda, 1.0));
        const double delay = (d_tx + d_rx) / geom.c;
        const double centre = (delay - raw.t0) * geom.fs;
        const double lo = std::max(0.0, std::ceil(centre - half_width));
        const double hi = std::min(static_cast<double>(length) - 1.0,
                                   std::floor(centre + half_width));
        if (hi < lo)
          continue;
        auto trace = raw.trace(t, j);
        for (auto k = static_cast<std::size_t>(lo);
             k <= static_cast<std::size_t>(hi); ++k) {
          const double tau = static_cast<double>(k) / geom.fs + raw.t0 - delay;
          trace[k] += amp * std::exp(-tau * tau * inv_two_sigma2) *
                      std::cos(two_pi_f0 * tau);
        }
      }
    }
  }

  add_noise(raw, noise_std, rng_seed);
  return raw;
}

void add_noise(RawChannelData &raw, double noise_std, std::uint64_t rng_seed) {
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std))
    throw InvalidInput("noise_std must be finite and non-negative");
  if (noise_std == 0.0)
    return;
  Rng rng(rng_seed);
  std::normal_distribution<double> normal(0.0, noise_std);
  for (double &v : raw.samples)
    v += normal(rng);
}

double channel_rms(const RawChannelData &raw) {
  if (raw.samples.empty())
    return 0.0;
  double acc = 0.0;
  for (double v : raw.samples)
    acc += v * v;
  return std::sqrt(acc / static_cast<double>(raw.samples.size()));
}

Phantom make_speckle_phantom(const Rect &extent, double density_per_mm2,
                             std::span<const Disk> cysts,
                             std::uint64_t rng_seed) {
  if (!(density_per_mm2 >= 0.0))
    throw InvalidInput("scatterer density must be non-negative");
  if (!(extent.x1 >= extent.x0) || !(extent.z1 >= extent.z0))
    throw InvalidInput("phantom extent is inverted");
  const double area_mm2 = (extent.x1 - extent.x0) * (extent.z1 - extent.z0) * 1e6;
  const auto draws = static_cast<std::size_t>(std::llround(density_per_mm2 * area_mm2));

  Phantom ph;
  Rng rng(rng_seed);
  std::uniform_real_distribution<double> ux(extent.x0, extent.x1);
  std::uniform_real_distribution<double> uz(extent.z0, extent.z1);
  std::uniform_real_distribution<double> ua(0.0, 2.0);
  ph.scatterers.reserve(draws);
  for (std::size_t i = 0; i < draws; ++i) {
    const Point2 p{ux(rng), uz(rng)};
    const double a = ua(rng);
    const bool inside = std::any_of(cysts.begin(), cysts.end(), [&](const Disk &d) {
      return contains(Shape{d}, p);
    });
    if (!inside)
      ph.scatterers.push_back({p, a});
  }
  for (std::size_t i = 0; i < cysts.size(); ++i) {
    const Disk &d = cysts[i];
    ph.regions.push_back({"cyst_low_" + std::to_string(i),
                          Disk{d.center, 0.75 * d.radius}});
    ph.regions.push_back({"cyst_high_" + std::to_string(i),
                          Annulus{d.center, 1.25 * d.radius, 1.75 * d.radius}});
  }
  return ph;
}

Phantom make_point_phantom(std::span<const Point2> positions, double amplitude) {
  Phantom ph;
  for (const auto &p : positions)
    ph.scatterers.push_back({p, amplitude});
  return ph;
}

std::string_view subsample_kind_name(SubsampleKind kind) {
  return kind == SubsampleKind::random ? "random" : "deterministic";
}

SubsampleKind parse_subsample_kind(std::string_view name) {
  if (name == "random")
    return SubsampleKind::random;
  if (name == "deterministic")
    return SubsampleKind::deterministic;
  throw ConfigError("unknown subsampling scheme '" + std::string(name) + "'");
}

std::vector<std::uint8_t> make_mask(const SubsampleScheme &scheme,
                                    const ArrayGeometry &geom,
                                    std::size_t transmit_index) {
  if (!(scheme.rate > 0.0) || scheme.rate > 1.0)
    throw InvalidInput("subsampling rate must lie in (0, 1]");
  if (transmit_index >= geom.num_transmits())
    throw InvalidInput("transmit index out of range");
  const std::size_t n = geom.receive_channels();
  const auto active =
      static_cast<std::size_t>(std::lround(scheme.rate * static_cast<double>(n)));
  if (active < 1)
    throw InvalidInput("subsampling rate leaves no active channel");

  std::vector<std::uint8_t> mask(n, 0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  if (scheme.kind == SubsampleKind::random) {
    // One draw over window positions, shared by every transmit.
    Rng rng(scheme.seed);
    for (std::size_t i = 0; i < active; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(order[i], order[pick(rng)]);
    }
  } else {
    const auto receivers = geom.receive_elements(transmit_index);
    const double centre =
        geom.plane_wave()
            ? (static_cast<double>(geom.element_count()) - 1.0) / 2.0
            : static_cast<double>(geom.transmit_element(transmit_index));
    std::vector<double> dist(n);
    for (std::size_t j = 0; j < n; ++j)
      dist[j] = geom.index_distance(static_cast<double>(receivers[j]), centre);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return dist[a] < dist[b];
    });
  }
  for (std::size_t i = 0; i < active; ++i)
    mask[order[i]] = 1;
  return mask;
}

std::vector<std::uint8_t> make_aperture_mask(const SubsampleScheme &scheme,
                                             const ArrayGeometry &geom) {
  std::vector<std::uint8_t> out;
  out.reserve(geom.aperture_size());
  for (std::size_t t = 0; t < geom.num_transmits(); ++t) {
    const auto m = make_mask(scheme, geom, t);
    out.insert(out.end(), m.begin(), m.end());
  }
  return out;
}

} // namespace beamforge

#pragma once

#include "beamforge/geometry.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace beamforge {

struct Scatterer {
  Point2 position;
  double amplitude = 1.0;
};

struct Rect {
  double x0 = 0.0, x1 = 0.0, z0 = 0.0, z1 = 0.0;
};

struct Disk {
  Point2 center;
  double radius = 0.0;
};

struct Annulus {
  Point2 center;
  double inner = 0.0;
  double outer = 0.0;
};

using Shape = std::variant<Rect, Disk, Annulus>;

bool contains(const Shape &shape, Point2 p);
double area(const Shape &shape);

struct Region {
  std::string label;
  Shape shape;
};

struct Phantom {
  std::vector<Scatterer> scatterers;
  std::vector<Region> regions;
};

struct SimulationOptions {
  double bandwidth = 0.6;      ///< fractional -6 dB bandwidth of the pulse
  std::size_t num_samples = 0; ///< 0 = long enough for every scatterer
};

/// Gaussian-windowed cosine at f0 whose spectrum falls to half amplitude at
/// f0 * (1 +- bandwidth / 2).
double pulse(double t, double f0, double bandwidth);
/// Standard deviation (s) of the pulse's Gaussian envelope.
double pulse_sigma(double f0, double bandwidth);

/// Number of samples that covers every pixel of the grid plus the pulse tail.
std::size_t samples_for_grid(const ArrayGeometry &geom, const ImagingGrid &grid,
                             double bandwidth = 0.6);

/// Linear point-scatterer channel model. Each scatterer adds a delayed pulse
/// scaled by amplitude / (max(d_tx / lambda, 1) * max(d_rx / lambda, 1)).
/// White Gaussian noise is drawn from a stream seeded by rng_seed.
RawChannelData simulate_channels(const Phantom &phantom,
                                 const ArrayGeometry &geom, double noise_std,
                                 std::uint64_t rng_seed,
                                 const SimulationOptions &options = {});

/// Adds white Gaussian noise in place; same stream as simulate_channels.
void add_noise(RawChannelData &raw, double noise_std, std::uint64_t rng_seed);
double channel_rms(const RawChannelData &raw);

/// Uniformly placed scatterers, round(density * area_mm2) draws, with
/// amplitudes uniform in [0, 2). Draws inside a cyst are discarded. Each cyst
/// gets a "cyst_low_<i>" disk (0.75 r) and "cyst_high_<i>" annulus
/// (1.25 r .. 1.75 r) region.
Phantom make_speckle_phantom(const Rect &extent, double density_per_mm2,
                             std::span<const Disk> cysts, std::uint64_t rng_seed);

Phantom make_point_phantom(std::span<const Point2> positions,
                           double amplitude = 1.0);

enum class SubsampleKind { random, deterministic };

struct SubsampleScheme {
  SubsampleKind kind = SubsampleKind::deterministic;
  double rate = 1.0;
  std::uint64_t seed = 0;
};

std::string_view subsample_kind_name(SubsampleKind kind);
SubsampleKind parse_subsample_kind(std::string_view name);

/// Active-channel mask over the receive channels of one transmit. Exactly
/// round(rate * channels) entries are set. Random masks draw one subset of
/// receive-window positions from the seed and reuse it for every transmit,
/// so a channel index names the same element offset across transmits.
/// Deterministic masks keep the
/// channels nearest the transmitting element (array centre for plane
/// waves), ties going to the lower channel index.
std::vector<std::uint8_t> make_mask(const SubsampleScheme &scheme,
                                    const ArrayGeometry &geom,
                                    std::size_t transmit_index);

/// Concatenation of make_mask over all transmits, matching the layout of
/// the focused virtual aperture.
std::vector<std::uint8_t> make_aperture_mask(const SubsampleScheme &scheme,
                                             const ArrayGeometry &geom);

} // namespace beamforge

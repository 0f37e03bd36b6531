#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace beamforge {

/// A point in the imaging plane; x is lateral, z is depth (meters).
struct Point2 {
  double x = 0.0;
  double z = 0.0;
};

double distance(Point2 a, Point2 b);

enum class ArrayKind { linear, circular };

struct PlaneWave {
  double angle = 0.0; ///< steering angle in radians, 0 = straight down +z
};

/// One element fires per transmit; a contiguous group of receive_aperture
/// elements centred on it records. Transmits are num_transmits consecutive
/// elements centred on the array.
struct SyntheticAperture {
  std::size_t num_transmits = 1;
  std::size_t receive_aperture = 1;
};

using TransmitScheme = std::variant<PlaneWave, SyntheticAperture>;

struct ArrayGeometry {
  std::vector<Point2> elements;
  ArrayKind kind = ArrayKind::linear;
  double pitch = 0.0;  ///< element spacing (arc length for circular arrays)
  double radius = 0.0; ///< circular arrays only
  TransmitScheme transmit = PlaneWave{};
  double c = 1540.0;
  double fs = 0.0;
  double f0 = 0.0;

  std::size_t element_count() const { return elements.size(); }
  double wavelength() const { return c / f0; }
  bool plane_wave() const { return std::holds_alternative<PlaneWave>(transmit); }

  std::size_t num_transmits() const;
  /// Channels recorded per transmit (N for plane wave, receive aperture for SA).
  std::size_t receive_channels() const;
  /// Length of the focused per-pixel vector: N, or num_transmits * aperture.
  std::size_t aperture_size() const;

  /// Element index firing for transmit t. Plane wave has no transmit element.
  std::size_t transmit_element(std::size_t t) const;
  /// Element indices recording transmit t, in channel order.
  std::vector<std::size_t> receive_elements(std::size_t t) const;

  /// Array index distance, wrapping around for circular arrays.
  double index_distance(double a, double b) const;

  /// Throws InvalidInput when an invariant does not hold.
  void validate() const;
};

/// Elements centred at x = 0 along z = 0.
ArrayGeometry make_linear_array(std::size_t n, double pitch, double f0,
                                double fs, double c = 1540.0,
                                TransmitScheme transmit = PlaneWave{});

/// Elements equally spaced on a circle centred at the origin; the array is
/// symmetric about the +z axis. Radius follows from n * pitch = 2 pi r.
ArrayGeometry make_circular_array(std::size_t n, double pitch, double f0,
                                  double fs, double c = 1540.0,
                                  TransmitScheme transmit = PlaneWave{});

enum class Preset { linear_desk, circular_desk, linear_full, circular_full };

Preset parse_preset(std::string_view name);
std::string_view preset_name(Preset p);
ArrayGeometry preset_geometry(Preset p);

enum class GridKind { cartesian, polar };

/// Pixel grid. Cartesian: lateral = x, axial = z. Polar: lateral = angle
/// from +z (rad), axial = radius (m), mapped to x = r sin a, z = r cos a.
/// Pixels are indexed p = ix * num_z + iz so axial lines are contiguous.
struct ImagingGrid {
  GridKind kind = GridKind::cartesian;
  std::vector<double> lateral;
  std::vector<double> axial;

  std::size_t num_x() const { return lateral.size(); }
  std::size_t num_z() const { return axial.size(); }
  std::size_t size() const { return lateral.size() * axial.size(); }
  std::size_t index(std::size_t ix, std::size_t iz) const {
    return ix * axial.size() + iz;
  }
  Point2 pixel(std::size_t ix, std::size_t iz) const;
  Point2 pixel(std::size_t p) const {
    return pixel(p / axial.size(), p % axial.size());
  }
  double lateral_spacing() const;
  double axial_spacing() const;

  /// Nearest grid indices (ix, iz) to a Cartesian point.
  std::pair<std::size_t, std::size_t> nearest(Point2 r) const;

  static ImagingGrid cartesian(double x0, double x1, std::size_t nx, double z0,
                               double z1, std::size_t nz);
  static ImagingGrid polar(double a0, double a1, std::size_t na, double r0,
                           double r1, std::size_t nr);

  /// Throws ConfigError if a pixel lies behind or inside the array.
  void validate(const ArrayGeometry &geom) const;
};

/// Raw recordings x_n[t], laid out [transmit][channel][sample].
struct RawChannelData {
  std::size_t num_transmits = 0;
  std::size_t num_channels = 0;
  std::size_t num_samples = 0;
  double t0 = 0.0; ///< time of sample 0 in seconds
  std::vector<double> samples;

  RawChannelData() = default;
  RawChannelData(std::size_t transmits, std::size_t channels,
                 std::size_t length, double start_time = 0.0);

  double &at(std::size_t t, std::size_t ch, std::size_t s) {
    return samples[(t * num_channels + ch) * num_samples + s];
  }
  double at(std::size_t t, std::size_t ch, std::size_t s) const {
    return samples[(t * num_channels + ch) * num_samples + s];
  }
  std::span<const double> trace(std::size_t t, std::size_t ch) const {
    return {samples.data() + (t * num_channels + ch) * num_samples,
            num_samples};
  }
  std::span<double> trace(std::size_t t, std::size_t ch) {
    return {samples.data() + (t * num_channels + ch) * num_samples,
            num_samples};
  }
};

/// Time-of-flight corrected per-pixel channel vectors, one column per pixel.
struct FocusedFrame {
  std::size_t num_x = 0;
  std::size_t num_z = 0;
  Eigen::MatrixXd data;             ///< aperture x (num_x * num_z)
  std::vector<std::uint8_t> mask;   ///< empty = all channels active

  std::size_t aperture() const { return static_cast<std::size_t>(data.rows()); }
  std::size_t pixels() const { return num_x * num_z; }
  bool active(std::size_t ch) const { return mask.empty() || mask[ch] != 0; }
};

/// Two-way travel time from tx to r and back to rx. For plane-wave
/// transmits the outbound leg is the plane-wave travel distance
/// x sin(a) + z cos(a) and tx is ignored.
double time_of_flight(const ArrayGeometry &geom, Point2 tx, Point2 rx,
                      Point2 r);

/// Transmit path length used by time_of_flight for transmit t.
double transmit_distance(const ArrayGeometry &geom, std::size_t t, Point2 r);

/// Samples a trace at fractional index by linear interpolation; indices
/// outside [0, len-1] give 0.
double sample_linear(std::span<const double> trace, double index);

/// Dynamic receive focusing. For synthetic aperture the virtual aperture is
/// the concatenation of every transmit's receive channels (transmit-major).
FocusedFrame focus(const RawChannelData &raw, const ArrayGeometry &geom,
                   const ImagingGrid &grid);

/// Zeroes and flags channels whose mask entry is false.
void apply_mask(FocusedFrame &frame, std::span<const std::uint8_t> mask);

} // namespace beamforge

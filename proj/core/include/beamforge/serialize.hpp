#pragma once

#include "beamforge/beamform.hpp"
#include "beamforge/config.hpp"
#include "beamforge/container.hpp"
#include "beamforge/neural.hpp"
#include "beamforge/simulate.hpp"

#include <string>

namespace beamforge {

// Tensor layouts, all row-major:
//   raw.samples   f64 [transmits, channels, samples]   raw.t0 f64 [1]
//   frame.data    f64 [num_x, num_z, aperture]         frame.mask u8 [aperture]
//   image.values  f64 [num_x, num_z]
//   grid.lateral  f64 [num_x]   grid.axial f64 [num_z]
//   stageK.layerI.weight f64 [fan_in, fan_out]   stageK.layerI.bias f64 [fan_out]
// Text tensors (u8, key=value): "geometry", "grid.meta", "image.meta", "manifest".

std::string geometry_text(const ArrayGeometry &geom);
ArrayGeometry geometry_from_text(std::string_view text);

void add_geometry(Container &c, const ArrayGeometry &geom);
ArrayGeometry read_geometry(const Container &c);
void add_grid(Container &c, const ImagingGrid &grid);
ImagingGrid read_grid(const Container &c);

Container raw_container(const RawChannelData &raw, const ArrayGeometry &geom,
                        const ImagingGrid &grid);
RawChannelData read_raw(const Container &c);

Container frame_container(const FocusedFrame &frame, const ArrayGeometry &geom,
                          const ImagingGrid &grid);
FocusedFrame read_frame(const Container &c);

Container image_container(const BeamformedImage &image, const ImagingGrid &grid);
BeamformedImage read_image(const Container &c);

constexpr std::uint64_t kModelFormat = 1;

/// One stage for ABLE, two for the subsampled two-stage network.
Container model_container(std::span<const MLPParams> stages,
                          std::span<const std::uint8_t> mask = {});
std::vector<MLPParams> read_model(const Container &c);
std::vector<std::uint8_t> read_model_mask(const Container &c);

/// scatterer.I = x z amplitude; region.I = label rect|disk|annulus numbers...
std::string phantom_text(const Phantom &p);
Phantom phantom_from_text(std::string_view text);

} // namespace beamforge

#pragma once

#include "beamforge/metrics.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace beamforge {

/// 8-bit grey levels, row-major with rows along depth (num_z rows, num_x
/// columns). byte = round(255 (clamp(20 log10(env / max env), -DR, 0) + DR) / DR).
struct GreyImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
  bool blank = false; ///< envelope was identically zero
};

std::uint8_t db_to_byte(double db, double dynamic_range_db);
GreyImage log_compress(const EnvelopeImage &env, double dynamic_range_db = 60.0);

std::vector<std::uint8_t> encode_pgm(const GreyImage &img);
GreyImage decode_pgm(std::span<const std::uint8_t> bytes);

/// Returns the image that was written so callers can report `blank`.
GreyImage render(const EnvelopeImage &env, double dynamic_range_db,
                 const std::filesystem::path &path);

} // namespace beamforge

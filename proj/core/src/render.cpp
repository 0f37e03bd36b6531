#include "beamforge/render.hpp"

#include "beamforge/container.hpp"
#include "beamforge/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace beamforge {

std::uint8_t db_to_byte(double db, double dynamic_range_db) {
  if (!(dynamic_range_db > 0.0))
    throw InvalidInput("dynamic range must be positive");
  if (std::isnan(db))
    return 0;
  const double c = std::clamp(db, -dynamic_range_db, 0.0);
  return static_cast<std::uint8_t>(
      std::lround(255.0 * (c + dynamic_range_db) / dynamic_range_db));
}

GreyImage log_compress(const EnvelopeImage &env, double dynamic_range_db) {
  if (static_cast<std::size_t>(env.values.size()) != env.num_x * env.num_z)
    throw InvalidInput("envelope size does not match its dimensions");
  GreyImage img;
  img.width = env.num_x;
  img.height = env.num_z;
  img.pixels.assign(img.width * img.height, 0);
  const double peak = env.values.size() ? env.values.maxCoeff() : 0.0;
  if (!(peak > 0.0)) {
    img.blank = true;
    db_to_byte(0.0, dynamic_range_db); // validates the range
    return img;
  }
  for (std::size_t iz = 0; iz < img.height; ++iz)
    for (std::size_t ix = 0; ix < img.width; ++ix) {
      const double v = env.at(ix, iz);
      const double db = v > 0.0 ? 20.0 * std::log10(v / peak) : -INFINITY;
      img.pixels[iz * img.width + ix] = db_to_byte(db, dynamic_range_db);
    }
  return img;
}

std::vector<std::uint8_t> encode_pgm(const GreyImage &img) {
  if (img.pixels.size() != img.width * img.height)
    throw InvalidInput("grey image size does not match its dimensions");
  const std::string header = "P5\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

GreyImage decode_pgm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n')
          ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char *what) {
    skip_space();
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos]))
      v = v * 10 + (bytes[pos++] - '0');
    if (pos == start)
      throw ParseError(std::string("PGM header missing ") + what, start);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw ParseError("not a binary PGM (P5)", 0);
  pos = 2;
  GreyImage img;
  img.width = number("width");
  img.height = number("height");
  const std::size_t maxval_at = pos;
  if (number("maxval") != 255)
    throw ParseError("only 8-bit PGM is supported", maxval_at);
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    throw ParseError("PGM header not terminated", pos);
  ++pos;
  if (bytes.size() - pos != img.width * img.height)
    throw ParseError("PGM payload size mismatch", pos);
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

GreyImage render(const EnvelopeImage &env, double dynamic_range_db,
                 const std::filesystem::path &path) {
  GreyImage img = log_compress(env, dynamic_range_db);
  write_file(path, encode_pgm(img));
  return img;
}

} // namespace beamforge

#include "beamforge/error.hpp"

namespace beamforge {

ParseError::ParseError(const std::string &what, std::uint64_t offset)
    : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
      offset_(offset) {}

} // namespace beamforge

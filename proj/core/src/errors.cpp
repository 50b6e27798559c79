#include "seasonet/errors.hpp"

namespace seasonet {

CorruptionError::CorruptionError(const std::string& tensor, const std::string& what)
    : Error("checkpoint tensor '" + tensor + "': " + what), tensor_(tensor) {}

ParseError::ParseError(Kind kind, std::uint64_t offset, const std::string& what)
    : Error(what + " (at byte offset " + std::to_string(offset) + ")"), kind_(kind), offset_(offset) {}

}  // namespace seasonet

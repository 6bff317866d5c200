#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "modsiren/field_model.hpp"

namespace modsiren {

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

/// Content hash of a parameter set: configuration, schedule and every
/// parameter value in flat order.
std::string checkpoint_id(const SharedParams& shared);

}  // namespace modsiren

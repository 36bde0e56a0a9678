#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace nilm {

std::string base64_encode(const std::vector<std::uint8_t>& bytes);

/// Throws InvalidInput on characters outside the standard alphabet or bad padding.
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace nilm

#pragma once

#include <string_view>

#include <spdlog/spdlog.h>

namespace nilm {

/// Accepts spdlog level names ("trace".."critical", "off"); throws
/// InvalidInput for anything else.
void set_log_level(std::string_view level);

}  // namespace nilm

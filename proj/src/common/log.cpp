#include "common/log.hpp"

#include <string>

#include "common/error.hpp"

namespace nilm {

void set_log_level(std::string_view level) {
  auto lvl = spdlog::level::from_str(std::string(level));
  if (lvl == spdlog::level::off && level != "off") throw InvalidInput("unknown log level '" + std::string(level) + "'");
  spdlog::set_level(lvl);
}

}  // namespace nilm

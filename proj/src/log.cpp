#include "gridstab/log.hpp"

#include <cstdlib>

#include <spdlog/sinks/stdout_sinks.h>

namespace gridstab {

spdlog::logger& logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto sink = std::make_shared<spdlog::sinks::stderr_sink_mt>();
    auto lg = std::make_shared<spdlog::logger>("gridstab", sink);
    lg->set_pattern("[%H:%M:%S.%e] [%l] %v");
    lg->set_level(spdlog::level::warn);
    if (const char* env = std::getenv("GRIDSTAB_LOG")) {
      lg->set_level(spdlog::level::from_str(env));
    }
    return lg;
  }();
  return *instance;
}

}  // namespace gridstab

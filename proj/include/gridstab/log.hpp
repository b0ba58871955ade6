#pragma once

#include <spdlog/spdlog.h>

namespace gridstab {

// Shared logger. Level comes from GRIDSTAB_LOG (trace|debug|info|warn|error|off),
// default warn. Output goes to stderr so command stdout stays machine-readable.
spdlog::logger& logger();

}  // namespace gridstab

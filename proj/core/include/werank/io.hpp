#pragma once

#include <cstdio>
#include <string>

namespace werank::io {

/// Shortest round-trip-exact decimal form; keeps CSV/JSON output
/// byte-deterministic across runs.
inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace werank::io

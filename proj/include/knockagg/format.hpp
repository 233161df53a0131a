#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>

namespace knockagg {

/// Shortest text that parses back to the same double.
inline std::string format_real(double x) {
    char buf[40];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, x);
        if (std::strtod(buf, nullptr) == x) break;
    }
    return buf;
}

}  // namespace knockagg

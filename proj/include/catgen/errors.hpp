#pragma once

#include <stdexcept>
#include <string>

namespace catgen {

// Error taxonomy mirrored by the CLI exit codes: config -> 2, data -> 3,
// estimation -> 4.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EstimationError : std::runtime_error {
    explicit EstimationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown by the local linear solver when a window holds fewer than two
// distinct support points; carries the in-window count so callers can widen.
struct DegenerateWindowError : EstimationError {
    int in_window;
    explicit DegenerateWindowError(int count)
        : EstimationError("degenerate kernel window: " + std::to_string(count) +
                          " usable point(s), need at least 2 distinct"),
          in_window(count) {}
};

} // namespace catgen

#pragma once

#include <stdexcept>

namespace waveud {

// Every user-visible failure derives from std::runtime_error so the CLI can
// catch one base class and print the diagnostic.
struct shape_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct usage_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or unsupported audio file.
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Sample rate does not match the expected rate.
struct rate_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace waveud

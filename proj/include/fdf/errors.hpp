#ifndef FDF_ERRORS_HPP
#define FDF_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace fdf {

// Bad configuration or bad arguments supplied by the caller.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input data (dataset files, filter-spec files, checkpoints).
struct DataFormatError : std::runtime_error {
    explicit DataFormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filter generation could not satisfy the cell-count budget.
struct GenerationError : std::runtime_error {
    explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor / layer shape mismatch.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fdf

#endif

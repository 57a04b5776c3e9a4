#pragma once

#include <stdexcept>
#include <string>

namespace radiomamba {

// Error taxonomy mirrored by the CLI exit codes:
//   ConfigError/DimensionError -> 2, DataError -> 3, NumericError -> 4.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Misuse of the backward graph (e.g. running backward twice without reset).
struct GraphError : Error {
    explicit GraphError(const std::string& msg) : Error(msg) {}
};

}  // namespace radiomamba

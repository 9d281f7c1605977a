#pragma once

#include <stdexcept>
#include <string>

namespace ssvgp {

// Each category maps onto a CLI exit code (2, 3, 4).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string &what) : std::runtime_error(what) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string &what) : std::runtime_error(what) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string &what) : std::runtime_error(what) {}
};

}  // namespace ssvgp

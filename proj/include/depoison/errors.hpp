#pragma once

#include <stdexcept>
#include <string>

namespace depoison {

// Error taxonomy maps onto CLI exit codes: config=2, data=3, pipeline=4.

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

struct PipelineError : std::runtime_error {
  explicit PipelineError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace depoison

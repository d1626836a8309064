#pragma once

#include <stdexcept>
#include <string>

namespace catnet {

/// Problems with input data: unreadable files, malformed records, mismatched
/// dimensions between data and model. CLI maps these to exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Problems with checkpoint files: bad magic, unsupported version, checksum
/// failure, architecture mismatch. CLI maps these to exit code 3.
class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace catnet

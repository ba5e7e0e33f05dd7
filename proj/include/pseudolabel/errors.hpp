#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pseudolabel {

/// Malformed binary or text input. Carries the byte offset where decoding stopped.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  explicit FormatError(const std::string& what)
      : std::runtime_error(what), offset_(0) {}

  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Failure talking to an external segmenter (timeout, unreadable or invalid response).
class TransportError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid user configuration (maps to CLI exit code 2).
class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Unusable input data (maps to CLI exit code 3).
class DataError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class BehindCameraError : public std::domain_error {
  using std::domain_error::domain_error;
};

class UndefinedResultError : public std::domain_error {
  using std::domain_error::domain_error;
};

}  // namespace pseudolabel

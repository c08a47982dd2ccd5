#pragma once

#include <stdexcept>
#include <string>

namespace cotscope {

/// Input that violates a documented schema or invariant. Maps to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A pipeline stage ran before the artifacts it consumes exist. Exit code 2.
class UpstreamMissingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Chat provider failure after retries, or a replay-cache miss. Exit code 3.
class ProviderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ReplayMissError : public ProviderError {
 public:
  explicit ReplayMissError(std::string key)
      : ProviderError("replay miss: no cached response for key " + key), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace cotscope

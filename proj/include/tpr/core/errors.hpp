#ifndef TPR_CORE_ERRORS_HPP
#define TPR_CORE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace tpr {

// Bad flags, bad config values, misuse of a still-valid object.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Corrupt or mismatched on-disk containers (TPCK / TPRD / CSV headers).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid config that can be detected before running (bad K, impossible
// sprite placement, stride out of range, ...).
struct ConfigError : UsageError {
  explicit ConfigError(const std::string& msg) : UsageError(msg) {}
};

// Tensor rank/dim mismatches between operands.
struct ShapeError : UsageError {
  explicit ShapeError(const std::string& msg) : UsageError(msg) {}
};

// Gradient verification harness failures (non-deterministic loss etc.).
struct VerificationError : std::runtime_error {
  explicit VerificationError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw UsageError(msg);
}

inline void require_shape(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

inline void require_config(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

inline void require_format(bool cond, const std::string& msg) {
  if (!cond) throw FormatError(msg);
}

}  // namespace tpr

#endif

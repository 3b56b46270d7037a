#pragma once

#include <stdexcept>
#include <string>

namespace mdmm {

struct NonFiniteValue : std::runtime_error {
  explicit NonFiniteValue(const std::string& what) : std::runtime_error("non-finite value: " + what) {}
};

struct DimensionMismatch : std::runtime_error {
  explicit DimensionMismatch(const std::string& what) : std::runtime_error("dimension mismatch: " + what) {}
};

struct MultiplierDivergence : std::runtime_error {
  explicit MultiplierDivergence(const std::string& what) : std::runtime_error("multiplier divergence: " + what) {}
};

struct BackwardBeforeForward : std::runtime_error {
  BackwardBeforeForward() : std::runtime_error("backward called before forward") {}
};

struct EmptyBatch : std::runtime_error {
  EmptyBatch() : std::runtime_error("empty batch") {}
};

struct InvalidTarget : std::runtime_error {
  explicit InvalidTarget(const std::string& what) : std::runtime_error("invalid target: " + what) {}
};

struct DivergedRun : std::runtime_error {
  explicit DivergedRun(const std::string& what) : std::runtime_error("diverged run: " + what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error("config error: " + what) {}
};

}  // namespace mdmm

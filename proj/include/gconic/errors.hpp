// SPDX-License-Identifier: MIT
#pragma once

#include <stdexcept>
#include <string>

namespace gconic {

/// Base class for every error raised by the library. `kind()` names the
/// failure category so callers (and the CLI) can dispatch without RTTI.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define GCONIC_ERROR(Name)                                              \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(#Name, what) {}     \
  };

// filtration-tree
GCONIC_ERROR(NonstochasticProbabilities)
GCONIC_ERROR(EmptyLevel)
GCONIC_ERROR(NotBinaryTree)
GCONIC_ERROR(NotSymmetric)
GCONIC_ERROR(LevelMismatch)
GCONIC_ERROR(DegenerateIncrement)
GCONIC_ERROR(NotMartingale)
// drivers
GCONIC_ERROR(ParamOutOfRange)
GCONIC_ERROR(NotRandomWalk)
// bsde-engine
GCONIC_ERROR(DriverInvalid)
GCONIC_ERROR(PreconditionViolated)
GCONIC_ERROR(MeasureNotEquivalent)
// risk-performance
GCONIC_ERROR(BracketInvalid)
// conic-pricing
GCONIC_ERROR(LevelNonpositive)
// market-sim
GCONIC_ERROR(InstanceTooLarge)
GCONIC_ERROR(DepthExceeded)
GCONIC_ERROR(StrategyInvalid)
// cli
GCONIC_ERROR(JobFailed)
GCONIC_ERROR(ArtifactMissing)

#undef GCONIC_ERROR

/// Scenario or CLI configuration error; `key()` is the offending key path.
class ConfigInvalid : public Error {
 public:
  ConfigInvalid(std::string key, const std::string& what)
      : Error("ConfigInvalid", key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace gconic

#pragma once

#include <stdexcept>
#include <string>

namespace icepll {

// Each error condition named by the module contracts gets its own type so
// callers (and tests) can catch them precisely.

struct UnknownSodCode : std::runtime_error {
  explicit UnknownSodCode(int code)
      : std::runtime_error("unknown stage-of-development code " + std::to_string(code)) {}
};

struct InvalidConcentrationCode : std::runtime_error {
  explicit InvalidConcentrationCode(int code)
      : std::runtime_error("invalid concentration code " + std::to_string(code)) {}
};

struct MissingSod : std::runtime_error {
  MissingSod() : std::runtime_error("polygon has neither a stage-of-development code nor the ice-free flag") {}
};

struct MissingConcentration : std::runtime_error {
  explicit MissingConcentration(const std::string& field)
      : std::runtime_error("stage-of-development present without concentration: " + field) {}
};

struct EmptyClass : std::runtime_error {
  explicit EmptyClass(std::size_t index)
      : std::runtime_error("class " + std::to_string(index) + " has zero samples; weights undefined") {}
};

struct LengthMismatch : std::runtime_error {
  LengthMismatch(std::size_t a, std::size_t b)
      : std::runtime_error("length mismatch: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

struct IndexOutOfRange : std::runtime_error {
  IndexOutOfRange(std::size_t index, std::size_t bound)
      : std::runtime_error("class index " + std::to_string(index) + " outside [0, " +
                           std::to_string(bound) + ")") {}
};

struct EmptyMatrix : std::runtime_error {
  EmptyMatrix() : std::runtime_error("confusion matrix has no samples") {}
};

struct ShapeMismatch : std::runtime_error {
  explicit ShapeMismatch(const std::string& what) : std::runtime_error("shape mismatch: " + what) {}
};

struct StaleCache : std::runtime_error {
  explicit StaleCache(const std::string& what) : std::runtime_error("stale forward cache: " + what) {}
};

struct EmptyDataset : std::runtime_error {
  EmptyDataset() : std::runtime_error("dataset is empty") {}
};

struct InvalidSpec : std::runtime_error {
  explicit InvalidSpec(const std::string& what) : std::runtime_error("invalid spec: " + what) {}
};

struct InvalidRatios : std::runtime_error {
  explicit InvalidRatios(const std::string& what) : std::runtime_error("invalid split ratios: " + what) {}
};

struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& what) : std::runtime_error("format error: " + what) {}
};

struct ChannelCountError : std::runtime_error {
  explicit ChannelCountError(std::size_t got)
      : std::runtime_error("raster must have 3 channels, got " + std::to_string(got)) {}
};

}  // namespace icepll

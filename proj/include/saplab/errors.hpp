#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace saplab {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input width does not match the network or tensor it is fed to.
struct ShapeError : Error {
  using Error::Error;
};

// Malformed configuration (bad override index, invalid spec, bad JSON field).
struct ConfigError : Error {
  using Error::Error;
};

struct ArgumentError : Error {
  using Error::Error;
};

// Loss became non-finite during training.
struct TrainingError : Error {
  TrainingError(std::size_t epoch, const std::string& what)
      : Error("training diverged at epoch " + std::to_string(epoch) + ": " + what), epoch(epoch) {}
  std::size_t epoch;
};

struct GenerationError : Error {
  using Error::Error;
};

struct IoError : Error {
  IoError(const std::string& path, const std::string& what) : Error(path + ": " + what), path(path) {}
  std::string path;
};

}  // namespace saplab

#pragma once

#include <stdexcept>
#include <string>

namespace alids {

/// Base for every error the toolkit raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file, row, token or schema.
class DatasetError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (fractions, sizes, strategy combinations).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid algorithm parameter, e.g. LOF with k >= n.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Operation unsupported by the model kind (gradient on a tree ensemble).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// Failed to train a learner.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Snapshot payload could not be restored.
class RestoreError : public Error {
 public:
  using Error::Error;
};

}  // namespace alids

#pragma once

#include <stdexcept>

namespace fh {

/// Invalid architecture, preprocessing or training configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value outside its documented domain (e.g. a height outside the colour range).
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Malformed or unreadable input data (manifests, images, corpora).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fh

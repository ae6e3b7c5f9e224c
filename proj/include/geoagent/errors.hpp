#pragma once

#include <stdexcept>
#include <string>

namespace geoagent {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or extents that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A stitched pixel that no prediction covers.
class CoverageError : public Error {
 public:
  using Error::Error;
};

// Feature-map crop or mask arithmetic that selects nothing.
class GeometryError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// mIoU / mF1 requested over a matrix in which no class occurs.
class UndefinedScoreError : public Error {
 public:
  using Error::Error;
};

}  // namespace geoagent

#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace vimu {

struct LengthMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& path, int line_no, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line_no) + ": " + what),
        line(line_no) {}
  int line;
};

struct NonMonotonicTimestamps : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyOverlap : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Carries the nearest attainable placement so callers can report how far off
// the requested target is.
struct InfeasiblePlacement : std::runtime_error {
  InfeasiblePlacement(const std::string& what, const Eigen::Vector3d& nearest)
      : std::runtime_error(what), nearest_placement(nearest) {}
  Eigen::Vector3d nearest_placement;
};

struct DegenerateNormalization : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonFiniteState : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SingularInnovation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TimestampMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptySeries : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace vimu

#pragma once

#include <stdexcept>
#include <string>

namespace cgsplat {

// Caller broke an API contract (shape mismatch, bad argument combination).
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

// A point required in front of the camera is at or behind the near plane.
struct BehindCameraError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Geometric configuration too degenerate to solve (e.g. collinear points).
struct DegenerateInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace cgsplat

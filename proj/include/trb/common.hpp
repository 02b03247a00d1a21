#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace trb {

// All tensors are dense 4-D (batch, channels, height, width), row-major.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

// Raised on any operand shape mismatch; the message names the operation
// and the offending dimensions.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

[[noreturn]] inline void shape_fail(const std::string& op, const std::string& detail) {
  throw ShapeError(op + ": " + detail);
}

// Finite-value checks after every op. Off by default (hot training loops);
// tests and the gradcheck command turn them on.
bool finite_checks_enabled();
void set_finite_checks(bool on);

void check_finite(const char* op, const float* p, std::size_t n);
void check_finite(const char* op, const double* p, std::size_t n);

}  // namespace trb

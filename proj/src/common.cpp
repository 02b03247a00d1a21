#include "trb/common.hpp"

#include <cmath>
#include <stdexcept>

namespace trb {

namespace {
bool g_finite_checks = false;
}

bool finite_checks_enabled() { return g_finite_checks; }
void set_finite_checks(bool on) { g_finite_checks = on; }

namespace {
template <typename T>
void check_finite_impl(const char* op, const T* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i])) {
      throw std::runtime_error(std::string(op) + ": non-finite value at index " +
                               std::to_string(i));
    }
  }
}
}  // namespace

void check_finite(const char* op, const float* p, std::size_t n) {
  check_finite_impl(op, p, n);
}
void check_finite(const char* op, const double* p, std::size_t n) {
  check_finite_impl(op, p, n);
}

}  // namespace trb

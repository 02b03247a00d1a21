#pragma once

#include <string>
#include <vector>

namespace trb {

struct GradSuiteEntry {
  std::string name;
  double err = 0.0;  // max relative error, analytic vs central difference
  double tol = 0.0;
  bool pass = false;
};

// Finite-difference validation of every op, every block, and a composite
// model, run in both precisions: 64-bit against tolerance 1e-5 and 32-bit
// against 1e-3 (entries suffixed /f64 and /f32). Deterministic; inputs are
// seeded away from the kinks of relu/maxpool/bilinear so the difference
// quotient stays two-sided at either epsilon.
std::vector<GradSuiteEntry> run_gradient_suite();

}  // namespace trb

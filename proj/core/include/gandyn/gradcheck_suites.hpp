#pragma once

// Named batteries of finite-difference checks shared by the test suite, the
// acceptance run and `gandyn gradcheck`.

#include <string>
#include <string_view>
#include <vector>

namespace gandyn {

struct GradCheckCase {
  std::string suite;
  std::string name;
  double error = 0.0;
  double threshold = 0.0;

  bool passed() const { return error < threshold; }
};

/// "primitives": every primitive, first and second order (< 1e-6).
/// "composed":   chains of primitives and the scalar loss f (< 1e-6).
/// "penalties":  grad_psi of R1 and R2 on random two-layer critics (< 1e-5).
/// "models":     MLP, residual block and backbone forward passes.
/// "all":        everything above.
std::vector<GradCheckCase> run_gradcheck_suite(std::string_view suite);

const std::vector<std::string>& gradcheck_suite_names();

}  // namespace gandyn

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace attrxfer {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t cases = 0;
  double tolerance = 1e-4;

  bool ok() const { return max_rel_err < tolerance; }
};

// Central-difference checks (h = 1e-4) of every autodiff op on random small
// tensors. Kinked ops are generated with enforced margins so the window
// never straddles a non-differentiable point.
std::vector<GradCheckResult> gradcheck_ops(std::uint64_t seed,
                                           std::size_t cases_per_op = 100);

// End-to-end checks of each loss term on a toy model, all parameters
// perturbed. Tolerance 1e-3.
std::vector<GradCheckResult> gradcheck_losses(std::uint64_t seed,
                                              std::size_t cases_per_loss = 3);

std::vector<GradCheckResult> gradcheck_all(std::uint64_t seed);

}  // namespace attrxfer

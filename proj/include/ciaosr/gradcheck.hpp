#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ciaosr/tensor.hpp"

namespace ciaosr {

struct GradcheckOptions {
  double eps = 1e-3;
  /// 5: fourth-order central stencil (default); 3: plain central difference.
  int stencil = 5;
  /// Thresholds for single ops and for composed modules / the whole model.
  double op_tolerance = 1e-4;
  double module_tolerance = 1e-3;
  /// Elements probed per input tensor (all of them when smaller).
  std::size_t max_probes = 48;
  std::uint64_t seed = 0;
  /// Adds a check of an op with a deliberately wrong backward rule.
  bool include_faulty = false;
};

struct GradcheckResult {
  std::string suite;
  std::string name;
  double max_rel_error = 0;
  double tolerance = 0;
  std::size_t probes = 0;
  /// Probes dropped because the two evaluations straddled a ReLU/abs kink.
  std::size_t skipped = 0;
  /// Worst probe: input index, element, analytic and numeric derivative.
  std::size_t worst_input = 0;
  std::size_t worst_element = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
  bool passed() const { return max_rel_error < tolerance; }
};

/// |a - n| / max(|a|, |n|, 1e-7)
double relative_error(double analytic, double numeric);

/// Finite-difference check of f against reverse mode. The scalar loss is
/// sum(f() * R) for a fixed random R; inputs are perturbed in place.
GradcheckResult check_gradient(const std::string& name, const std::function<Tensor<double>()>& f,
                               const std::vector<Tensor<double>>& inputs, double tolerance,
                               const GradcheckOptions& opt);

/// x^2 whose backward returns x * grad instead of 2x * grad.
Tensor<double> faulty_square(const Tensor<double>& x);

/// suite: all | tensor | head | nonlocal
std::vector<GradcheckResult> run_gradcheck(const std::string& suite, const GradcheckOptions& opt = {});

}  // namespace ciaosr

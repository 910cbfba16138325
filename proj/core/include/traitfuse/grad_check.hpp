#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "traitfuse/tape.hpp"

namespace traitfuse {

/// Scalar-valued function of one tracked input.
using ScalarFn = std::function<Var(Tape&, const Var&)>;
/// Scalar-valued function of parameters captured by reference.
using ParamScalarFn = std::function<Var(Tape&)>;

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

struct CheckOptions {
  double eps = 1e-6;
  /// Coordinates probed per tensor; 0 probes all of them.
  std::size_t coords_per_tensor = 0;
  std::uint64_t seed = 0;
  /// Coordinates whose analytic and numeric gradients are both below this
  /// magnitude are too small for central differences to resolve at double
  /// precision. They are compared in absolute terms (max_small_abs_error)
  /// and left out of max_rel_error. 0 keeps every coordinate relative.
  double resolution = 0.0;
};

struct CheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t below_resolution = 0;
  double max_small_abs_error = 0.0;
  /// Parameter (or "input") and values at the worst coordinate.
  std::string worst_tensor;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares the tape gradient of f at x against central differences
/// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every coordinate and returns
/// the largest relative_error.
double grad_check(const ScalarFn& f, const Tensor& x, double eps = 1e-6);
CheckResult grad_check_detailed(const ScalarFn& f, const Tensor& x, const CheckOptions& options = {});

/// Same oracle over parameter coordinates. Parameters are perturbed in place
/// and restored before returning.
CheckResult grad_check_parameters(const ParamScalarFn& f, std::span<Parameter* const> params,
                                  const CheckOptions& options = {});

}  // namespace traitfuse

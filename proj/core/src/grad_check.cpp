#include "traitfuse/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "traitfuse/errors.hpp"

namespace traitfuse {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

std::vector<std::size_t> pick_coords(std::size_t n, const CheckOptions& options, std::mt19937_64& rng) {
  std::vector<std::size_t> coords(n);
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (options.coords_per_tensor > 0 && n > options.coords_per_tensor) {
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.coords_per_tensor);
    std::sort(coords.begin(), coords.end());
  }
  return coords;
}

// Perturbs value[i] both ways, evaluates, restores.
template <typename Eval>
double central_difference(double& value, double eps, Eval eval) {
  const double saved = value;
  value = saved + eps;
  const double up = eval();
  value = saved - eps;
  const double down = eval();
  value = saved;
  return (up - down) / (2.0 * eps);
}

void record(CheckResult& r, const CheckOptions& options, const std::string& tensor, std::size_t index,
            double analytic, double numeric) {
  ++r.coords_checked;
  if (std::abs(analytic) < options.resolution && std::abs(numeric) < options.resolution) {
    ++r.below_resolution;
    r.max_small_abs_error = std::max(r.max_small_abs_error, std::abs(analytic - numeric));
    return;
  }
  const double err = relative_error(analytic, numeric);
  if (err >= r.max_rel_error) {
    r.max_rel_error = err;
    r.worst_tensor = tensor;
    r.worst_index = index;
    r.worst_analytic = analytic;
    r.worst_numeric = numeric;
  }
}

}  // namespace

CheckResult grad_check_detailed(const ScalarFn& f, const Tensor& x, const CheckOptions& options) {
  Tape tape;
  const Var in = tape.input(x);
  const Var out = f(tape, in);
  if (out.value().size() != 1) throw UsageError("grad_check: function must be scalar-valued");
  tape.backward(out);
  const Tensor analytic = tape.grad(in);

  std::mt19937_64 rng(options.seed);
  CheckResult result;
  Tensor probe = x;
  auto eval = [&] {
    Tape t;
    return f(t, t.constant(probe)).value().item();
  };
  for (auto i : pick_coords(x.size(), options, rng)) {
    record(result, options, "input", i, analytic[i], central_difference(probe[i], options.eps, eval));
  }
  return result;
}

double grad_check(const ScalarFn& f, const Tensor& x, double eps) {
  CheckOptions options;
  options.eps = eps;
  return grad_check_detailed(f, x, options).max_rel_error;
}

CheckResult grad_check_parameters(const ParamScalarFn& f, std::span<Parameter* const> params,
                                  const CheckOptions& options) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    const Var out = f(tape);
    if (out.value().size() != 1) throw UsageError("grad_check_parameters: function must be scalar-valued");
    tape.backward(out);
    for (const Parameter* p : params) {
      const Tensor* g = tape.gradient(*p);
      analytic.push_back(g ? *g : Tensor(p->value.shape()));
    }
  }

  std::mt19937_64 rng(options.seed);
  CheckResult result;
  auto eval = [&] {
    Tape t;
    return f(t).value().item();
  };
  for (std::size_t n = 0; n < params.size(); ++n) {
    Parameter& p = *params[n];
    for (auto i : pick_coords(p.value.size(), options, rng)) {
      record(result, options, p.name, i, analytic[n][i], central_difference(p.value.data()[i], options.eps, eval));
    }
  }
  return result;
}

}  // namespace traitfuse

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fsr/autodiff.hpp"

namespace fsr {

/// Builds a scalar loss from the input variables on a fresh tape.
using GraphFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;     // perturbed scalars
  std::string worst;           // "input <i> [<j>]" of the worst entry
};

/// Central finite differences against the taped gradient, one scalar at a time:
/// max |analytic - (f(x+eps) - f(x-eps)) / 2eps| / max(1e-8, |analytic|). Every value on
/// every tape is checked for finiteness; the first non-finite one raises NonFiniteError
/// naming its op.
GradCheckReport grad_check(const GraphFn& f, const std::vector<Tensor<double>>& inputs, double eps = 1e-5);

struct GradCase {
  std::string name;
  double tolerance;
  std::function<GradCheckReport(std::uint64_t seed)> run;
};

/// Every registered op plus the composite checks (linear, gelu chain, attention, sampler,
/// encoder, decoder, full pipeline).
const std::vector<GradCase>& grad_suite();

/// Case by name, or nullptr.
const GradCase* find_grad_case(const std::string& name);

}  // namespace fsr

#include "fsr/grad_check.hpp"

#include <cmath>

namespace fsr {

namespace {

double evaluate(const GraphFn& f, const std::vector<Tensor<double>>& inputs) {
  Tape<double> tape;
  tape.set_check_finite(true);
  std::vector<Var<double>> vars;
  for (const auto& x : inputs) vars.push_back(tape.constant(x));
  return f(tape, vars).value()[0];
}

}  // namespace

GradCheckReport grad_check(const GraphFn& f, const std::vector<Tensor<double>>& inputs, double eps) {
  Tape<double> tape;
  tape.set_check_finite(true);
  std::vector<Var<double>> vars;
  for (const auto& x : inputs) vars.push_back(tape.variable(x));
  Var<double> loss = f(tape, vars);
  tape.backward(loss);

  GradCheckReport report;
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor<double>& analytic = vars[i].grad();
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double x0 = probe[i][j];
      probe[i][j] = x0 + eps;
      const double up = evaluate(f, probe);
      probe[i][j] = x0 - eps;
      const double down = evaluate(f, probe);
      probe[i][j] = x0;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = std::abs(analytic[j] - numeric) / std::max(1e-8, std::abs(analytic[j]));
      if (!(err <= report.max_rel_error)) {
        report.max_rel_error = err;
        report.worst = "input " + std::to_string(i) + " [" + std::to_string(j) + "]";
      }
      ++report.checked;
    }
  }
  return report;
}

}  // namespace fsr

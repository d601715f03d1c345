#include "fsr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fsr/spectral.hpp"

namespace fsr {

namespace {

void require_same(const char* op, const Shape& a, const Shape& b) {
  if (a != b) shape_error(op, a, b);
}

}  // namespace

PriorSource parse_prior_source(const std::string& name) {
  if (name == "target") return PriorSource::target;
  if (name == "prediction") return PriorSource::prediction;
  throw Error("unknown prior source '" + name + "' (expected target or prediction)");
}

const char* prior_source_name(PriorSource source) { return source == PriorSource::target ? "target" : "prediction"; }

Tensor<double> compute_prior(const GridField& reference, const GridField& lr) {
  if (reference.channels() != lr.channels()) {
    throw ShapeError("compute_prior: reference has " + std::to_string(reference.channels()) + " channels, input " +
                     std::to_string(lr.channels()));
  }
  Tensor<double> p = spectral::resize(lr.values, reference.ny(), reference.nx());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::abs(reference.values[i] - p[i]);
  return p;
}

Tensor<double> minmax_normalize(const Tensor<double>& p) {
  if (p.size() == 0) throw Error("minmax_normalize: empty input");
  const auto [lo, hi] = std::minmax_element(p.data().begin(), p.data().end());
  const double min = *lo, span = *hi - *lo;
  Tensor<double> out(p.shape());
  if (span == 0.0) return out;
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = (p[i] - min) / span;
  return out;
}

Tensor<double> weight_map(const Tensor<double>& p, double alpha, double beta) {
  if (!(alpha > 0.0)) throw Error("weight_map: alpha must be positive, got " + std::to_string(alpha));
  Tensor<double> w = minmax_normalize(p);
  for (double& v : w.data()) v = alpha * std::exp(beta * v);
  return w;
}

double pearson(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.size() != b.size()) shape_error("pearson", a.shape(), b.shape());
  const double n = double(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

double prior_error_correlation(const Tensor<double>& pred, const Tensor<double>& target, const Tensor<double>& p) {
  require_same("prior_error_correlation", pred.shape(), target.shape());
  Tensor<double> err(pred.shape());
  for (std::size_t i = 0; i < err.size(); ++i) err[i] = std::abs(pred[i] - target[i]);
  return pearson(err, minmax_normalize(p));
}

template <typename T>
Var<T> l1_loss(const Var<T>& pred, const Tensor<T>& target) {
  require_same("l1_loss", pred.shape(), target.shape());
  return mean(abs(sub(pred, pred.tape().constant(target))));
}

template <typename T>
Var<T> l2_loss(const Var<T>& pred, const Tensor<T>& target) {
  require_same("l2_loss", pred.shape(), target.shape());
  const Var<T> d = sub(pred, pred.tape().constant(target));
  return mean(mul(d, d));
}

template <typename T>
Var<T> weighted_l1_loss(const Var<T>& pred, const Tensor<T>& target, const Tensor<T>& weights) {
  require_same("weighted_l1_loss", pred.shape(), target.shape());
  require_same("weighted_l1_loss", pred.shape(), weights.shape());
  Tape<T>& tape = pred.tape();
  return mean(mul(abs(sub(pred, tape.constant(target))), tape.constant(weights)));
}

template <typename T>
Var<T> weighted_l2_loss(const Var<T>& pred, const Tensor<T>& target, const Tensor<T>& weights) {
  require_same("weighted_l2_loss", pred.shape(), target.shape());
  require_same("weighted_l2_loss", pred.shape(), weights.shape());
  Tape<T>& tape = pred.tape();
  const Var<T> d = sub(pred, tape.constant(target));
  return mean(mul(mul(d, d), tape.constant(weights)));
}

template <typename T>
Var<T> focal_composite_loss(const Var<T>& output, const Tensor<T>& target, const Tensor<T>& prior_weights,
                            double alpha_b, double beta_b) {
  require_same("focal_composite_loss", output.shape(), target.shape());
  require_same("focal_composite_loss", output.shape(), prior_weights.shape());
  Tensor<double> err(target.shape());
  for (std::size_t i = 0; i < err.size(); ++i) err[i] = std::abs(double(target[i]) - double(output.value()[i]));
  const Tensor<double> wb = weight_map(err, alpha_b, beta_b);
  Tensor<T> w(target.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = T(double(prior_weights[i]) * wb[i]);
  return weighted_l1_loss(output, target, w);
}

#define FSR_INSTANTIATE(T)                                                                          \
  template Var<T> l1_loss<T>(const Var<T>&, const Tensor<T>&);                                      \
  template Var<T> l2_loss<T>(const Var<T>&, const Tensor<T>&);                                      \
  template Var<T> weighted_l1_loss<T>(const Var<T>&, const Tensor<T>&, const Tensor<T>&);           \
  template Var<T> weighted_l2_loss<T>(const Var<T>&, const Tensor<T>&, const Tensor<T>&);           \
  template Var<T> focal_composite_loss<T>(const Var<T>&, const Tensor<T>&, const Tensor<T>&, double, double);
FSR_INSTANTIATE(float)
FSR_INSTANTIATE(double)
#undef FSR_INSTANTIATE

}  // namespace fsr

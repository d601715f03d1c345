#pragma once

#include <string>

#include "fsr/autodiff.hpp"
#include "fsr/fields.hpp"

namespace fsr {

/// What the prior map compares against the spectral resize of the input.
enum class PriorSource { target, prediction };
PriorSource parse_prior_source(const std::string& name);
const char* prior_source_name(PriorSource source);

/// |reference - resize(lr, reference extents)| elementwise. `reference` is the HR target or a
/// model prediction on the HR grid.
Tensor<double> compute_prior(const GridField& reference, const GridField& lr);

/// (p - min) / (max - min); all zeros when p is constant.
Tensor<double> minmax_normalize(const Tensor<double>& p);

/// alpha * exp(beta * minmax_normalize(p)). Requires alpha > 0.
Tensor<double> weight_map(const Tensor<double>& p, double alpha, double beta);

/// Pearson r of two equally sized tensors; NaN when either has zero variance.
double pearson(const Tensor<double>& a, const Tensor<double>& b);

/// Pearson r between |pred - target| and minmax_normalize(p).
double prior_error_correlation(const Tensor<double>& pred, const Tensor<double>& target, const Tensor<double>& p);

// Means over all entries; `target` and `weights` have the prediction's shape.
template <typename T> Var<T> l1_loss(const Var<T>& pred, const Tensor<T>& target);
template <typename T> Var<T> l2_loss(const Var<T>& pred, const Tensor<T>& target);
template <typename T> Var<T> weighted_l1_loss(const Var<T>& pred, const Tensor<T>& target, const Tensor<T>& weights);
template <typename T> Var<T> weighted_l2_loss(const Var<T>& pred, const Tensor<T>& target, const Tensor<T>& weights);

/// mean(prior_weights * W(|target - output|; alpha_b, beta_b) * |output - target|), where
/// `output` is the residual-mode prediction (model output already including the resize of
/// the input). The error-driven weight is computed from current values and carries no gradient.
template <typename T>
Var<T> focal_composite_loss(const Var<T>& output, const Tensor<T>& target, const Tensor<T>& prior_weights,
                            double alpha_b, double beta_b);

}  // namespace fsr

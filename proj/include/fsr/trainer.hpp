#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fsr/losses.hpp"
#include "fsr/model.hpp"

namespace fsr {

struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 1e-5;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

/// Adam with decoupled weight decay: theta <- theta (1 - lr wd), then the bias-corrected
/// Adam step.
template <typename T>
class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(const ParamStore<T>& params) {
    for (const auto& v : params.values()) {
      m_.emplace_back(v.shape());
      v_.emplace_back(v.shape());
    }
  }

  void step(ParamStore<T>& params, const std::vector<Tensor<T>>& grads, const AdamConfig& cfg, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg.beta1, double(t_)), c2 = 1.0 - std::pow(cfg.beta2, double(t_));
    const double decay = 1.0 - lr * cfg.weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
      T* theta = params.value(i).ptr();
      const T* g = grads[i].ptr();
      T* m = m_[i].ptr();
      T* v = v_[i].ptr();
      for (std::size_t j = 0, n = params.value(i).size(); j < n; ++j) {
        const double gj = double(g[j]);
        const double mj = cfg.beta1 * double(m[j]) + (1.0 - cfg.beta1) * gj;
        const double vj = cfg.beta2 * double(v[j]) + (1.0 - cfg.beta2) * gj * gj;
        m[j] = T(mj);
        v[j] = T(vj);
        const double update = lr * (mj / c1) / (std::sqrt(vj / c2) + cfg.eps);
        theta[j] = T(double(theta[j]) * decay - update);
      }
    }
  }

  std::size_t steps() const { return t_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }

  void save(Checkpoint& c, const ParamStore<T>& names) const {
    c.put_scalar("adam.t", double(t_));
    for (std::size_t i = 0; i < m_.size(); ++i) {
      c.put("adam.m." + names.name(i), m_[i].template cast<float>());
      c.put("adam.v." + names.name(i), v_[i].template cast<float>());
    }
  }

  void load(const Checkpoint& c, const ParamStore<T>& names) {
    t_ = std::size_t(c.scalar("adam.t"));
    for (std::size_t i = 0; i < m_.size(); ++i) {
      m_[i] = c.at("adam.m." + names.name(i)).template cast<T>();
      v_[i] = c.at("adam.v." + names.name(i)).template cast<T>();
    }
  }

 private:
  std::vector<Tensor<T>> m_, v_;
  std::size_t t_ = 0;
};

enum class LossMode { l1, l2, focal, two_stage };
LossMode parse_loss_mode(const std::string& name);
const char* loss_mode_name(LossMode mode);

struct TrainConfig {
  AdamConfig adam;
  std::size_t steps = 2000;
  std::size_t batch = 8;
  std::size_t crop = 16;      // LR crop extent
  std::size_t queries = 256;  // supervised HR pixels per item
  double scale_lo = 1.0, scale_hi = 2.0;
  std::size_t lr_halve_every = 0;  // 0: constant learning rate
  Degradation degradation = Degradation::spectral;

  LossMode loss = LossMode::l1;
  double alpha = 1.0, beta = 0.1;      // prior weight map
  double alpha_b = 1.0, beta_b = 0.1;  // error-driven weight map (focal)
  std::optional<PriorSource> prior_source;  // default: target for focal, prediction for two-stage
  std::size_t split_step = 0;               // two-stage boundary; 0: steps / 2

  std::size_t valid_every = 0;  // 0: validate only at the end
  double valid_scale = 2.0;
  std::size_t threads = 1;
  std::uint64_t seed = 0;

  PriorSource resolved_prior_source() const;
  std::size_t resolved_split() const { return split_step ? split_step : steps / 2; }
};

/// Reads `[train]` and `[loss]`; unknown keys are errors.
TrainConfig train_config_from(const Config& config);

/// Throws on inconsistent settings, including crop * scale_hi above the record extents.
void validate(const TrainConfig& cfg, std::size_t record_ny, std::size_t record_nx);

struct Sample {
  std::size_t record = 0;
  double scale = 1.0;
  SRPair pair;
  std::vector<std::uint32_t> pixels;  // flat row-major HR indices, sorted
};

/// Scale drawn from U[lo, hi] (exactly lo when lo == hi).
double draw_scale(std::mt19937_64& rng, double lo, double hi);

/// Batch for one optimizer step. Every item draws a record, a scale s, an HR crop of extent
/// round(crop s), its degraded LR, and `queries` distinct HR pixels. Pure in (seed, step).
std::vector<Sample> make_batch(const std::vector<GridField>& records, const TrainConfig& cfg, std::uint64_t step);

struct StepResult {
  std::size_t step = 0;  // 1-based index of the finished step
  double loss = 0.0;
  double lr = 0.0;
};

/// Optimizer state and the loop body. A trainer restored from its own checkpoint continues
/// the identical trajectory.
class Trainer {
 public:
  Trainer(Model& model, TrainConfig cfg);

  StepResult step(const std::vector<GridField>& records);

  const TrainConfig& config() const { return cfg_; }
  Model& model() const { return *model_; }

  /// Mean MSE over records at cfg.valid_scale (whole records, 32-bit inference).
  double validate(const std::vector<GridField>& records) const;

  std::size_t completed() const { return completed_; }
  double learning_rate() const;

  /// Number of times the two-stage weight source was (re)built.
  std::size_t weight_refreshes() const { return refreshes_; }

  /// Prior weights for a sample under the current state; empty tensor when the mode uses none.
  Tensor<double> prior_weights(const Sample& sample) const;

  /// Model checkpoint plus optimizer moments, step count and the frozen stage-1 model.
  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

 private:
  double sample_loss(const Sample& sample, std::vector<Tensor<float>>& grads) const;

  Model* model_;
  TrainConfig cfg_;
  AdamW<float> opt_;
  std::size_t completed_ = 0;
  std::optional<Model> frozen_;  // stage-1 snapshot
  std::size_t refreshes_ = 0;
};

struct TrainResult {
  std::vector<StepResult> history;
  Checkpoint final_checkpoint;
  Checkpoint best_checkpoint;
  double best_valid = 0.0;
  std::size_t best_step = 0;
};

/// Runs `trainer` to cfg.steps, appending `step,loss,lr` rows to `log` (header included when
/// the trainer starts at step 0). A non-finite loss aborts with the step number and the
/// parameter norms.
TrainResult train(Trainer& trainer, const std::vector<GridField>& train_records,
                  const std::vector<GridField>& valid_records, std::ostream* log = nullptr);

/// Prediction on the HR grid of a pair.
using Predictor = std::function<GridField(const SRPair&)>;
Predictor model_predictor(const Model& model);

struct Metrics {
  double mse = 0.0, psnr = 0.0, ssim = 0.0;
};

struct EvalRow {
  std::string record;  // index, or "mean"
  double scale = 1.0;
  Metrics model, bicubic, bilinear, nearest;
};

/// Per record and scale, then a "mean" row per scale.
std::vector<EvalRow> evaluate(const Predictor& predict, const std::vector<GridField>& records,
                              const std::vector<double>& scales, Degradation degradation = Degradation::spectral);

Metrics measure(const Tensor<double>& pred, const Tensor<double>& target);

/// `record,scale,mse,psnr,ssim,` then the same three for bicubic, bilinear and nearest.
void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows);

}  // namespace fsr

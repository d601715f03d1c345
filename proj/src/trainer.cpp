#include "fsr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "fsr/layers.hpp"
#include "fsr/rng.hpp"

namespace fsr {

namespace {

constexpr std::uint64_t kBatchStream = 0x6261746368ULL;

// Entries of a (c, H, W) field at the given flat pixels, as a (q, c) matrix.
template <typename T>
Tensor<T> gather_pixels(const Tensor<double>& field, const std::vector<std::uint32_t>& pixels) {
  const std::size_t c = field.dim(0), plane = field.dim(1) * field.dim(2);
  Tensor<T> out(Shape{pixels.size(), c});
  for (std::size_t i = 0; i < pixels.size(); ++i)
    for (std::size_t ch = 0; ch < c; ++ch) out(i, ch) = T(field[ch * plane + pixels[i]]);
  return out;
}

std::string parameter_norms(const ParamStore<float>& params) {
  std::ostringstream out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double s = 0.0;
    for (float v : params.value(i).data()) s += double(v) * double(v);
    out << (i ? ", " : "") << params.name(i) << '=' << std::sqrt(s);
  }
  return out.str();
}

void put_metrics(std::ostream& out, const Metrics& m) { out << ',' << m.mse << ',' << m.psnr << ',' << m.ssim; }

}  // namespace

LossMode parse_loss_mode(const std::string& name) {
  if (name == "l1") return LossMode::l1;
  if (name == "l2") return LossMode::l2;
  if (name == "focal") return LossMode::focal;
  if (name == "two-stage") return LossMode::two_stage;
  throw Error("unknown loss mode '" + name + "' (expected l1, l2, focal or two-stage)");
}

const char* loss_mode_name(LossMode mode) {
  switch (mode) {
    case LossMode::l1: return "l1";
    case LossMode::l2: return "l2";
    case LossMode::focal: return "focal";
    case LossMode::two_stage: return "two-stage";
  }
  return "?";
}

PriorSource TrainConfig::resolved_prior_source() const {
  if (prior_source) return *prior_source;
  return loss == LossMode::two_stage ? PriorSource::prediction : PriorSource::target;
}

TrainConfig train_config_from(const Config& config) {
  config.check_keys("train", {"lr", "weight_decay", "beta1", "beta2", "eps", "steps", "batch", "crop", "queries",
                              "scales", "lr_halve_every", "degradation", "valid_every", "valid_scale", "threads",
                              "seed"});
  config.check_keys("loss", {"mode", "alpha", "beta", "alpha_b", "beta_b", "source", "split_step"});
  TrainConfig t;
  t.adam.lr = config.number("train", "lr", t.adam.lr);
  t.adam.weight_decay = config.number("train", "weight_decay", t.adam.weight_decay);
  t.adam.beta1 = config.number("train", "beta1", t.adam.beta1);
  t.adam.beta2 = config.number("train", "beta2", t.adam.beta2);
  t.adam.eps = config.number("train", "eps", t.adam.eps);
  t.steps = config.count("train", "steps", t.steps);
  t.batch = config.count("train", "batch", t.batch);
  t.crop = config.count("train", "crop", t.crop);
  t.queries = config.count("train", "queries", t.queries);
  const auto scales = config.numbers("train", "scales", {t.scale_lo, t.scale_hi});
  if (scales.size() != 2) throw ConfigError("[train] scales: expected [lo, hi]");
  t.scale_lo = scales[0];
  t.scale_hi = scales[1];
  t.lr_halve_every = config.count("train", "lr_halve_every", t.lr_halve_every);
  t.degradation = parse_degradation(config.string("train", "degradation", "spectral"));
  t.valid_every = config.count("train", "valid_every", t.valid_every);
  t.valid_scale = config.number("train", "valid_scale", t.valid_scale);
  t.threads = config.count("train", "threads", t.threads);
  t.seed = config.count("train", "seed", t.seed);
  t.loss = parse_loss_mode(config.string("loss", "mode", loss_mode_name(t.loss)));
  t.alpha = config.number("loss", "alpha", t.alpha);
  t.beta = config.number("loss", "beta", t.beta);
  t.alpha_b = config.number("loss", "alpha_b", t.alpha_b);
  t.beta_b = config.number("loss", "beta_b", t.beta_b);
  if (config.has("loss", "source")) t.prior_source = parse_prior_source(config.string("loss", "source", ""));
  t.split_step = config.count("loss", "split_step", t.split_step);
  return t;
}

void validate(const TrainConfig& cfg, std::size_t record_ny, std::size_t record_nx) {
  if (cfg.steps == 0 || cfg.batch == 0 || cfg.queries == 0 || cfg.threads == 0) {
    throw Error("train: steps, batch, queries and threads must be positive");
  }
  if (!(cfg.scale_lo >= 1.0) || !(cfg.scale_hi >= cfg.scale_lo)) {
    throw Error("train: scales must satisfy 1 <= lo <= hi, got [" + std::to_string(cfg.scale_lo) + ", " +
                std::to_string(cfg.scale_hi) + "]");
  }
  const auto hr = std::size_t(std::lround(double(cfg.crop) * cfg.scale_hi));
  if (hr > std::min(record_ny, record_nx)) {
    throw Error("train: crop " + std::to_string(cfg.crop) + " at scale " + std::to_string(cfg.scale_hi) + " needs " +
                std::to_string(hr) + " samples, records are " + std::to_string(record_ny) + "x" +
                std::to_string(record_nx));
  }
  if (!(cfg.alpha > 0.0) || !(cfg.alpha_b > 0.0)) throw Error("train: loss alphas must be positive");
  if (cfg.loss == LossMode::two_stage && cfg.resolved_split() >= cfg.steps) {
    throw Error("train: two-stage split step " + std::to_string(cfg.resolved_split()) + " is not below steps " +
                std::to_string(cfg.steps));
  }
}

double draw_scale(std::mt19937_64& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::vector<Sample> make_batch(const std::vector<GridField>& records, const TrainConfig& cfg, std::uint64_t step) {
  if (records.empty()) throw Error("make_batch: no training records");
  auto rng = derived_rng({cfg.seed, step, kBatchStream});
  std::uniform_int_distribution<std::size_t> pick(0, records.size() - 1);
  std::vector<Sample> batch;
  for (std::size_t b = 0; b < cfg.batch; ++b) {
    Sample s;
    s.record = pick(rng);
    s.scale = draw_scale(rng, cfg.scale_lo, cfg.scale_hi);
    const auto extent = std::size_t(std::lround(double(cfg.crop) * s.scale));
    const GridField patch = random_crop(records[s.record], extent, extent, rng);
    s.pair = make_pair(patch, s.scale, cfg.degradation);
    const std::size_t total = extent * extent;
    std::vector<std::uint32_t> all(total);
    std::iota(all.begin(), all.end(), 0u);
    const std::size_t q = std::min(cfg.queries, total);
    for (std::size_t i = 0; i < q; ++i) {
      std::uniform_int_distribution<std::size_t> j(i, total - 1);
      std::swap(all[i], all[j(rng)]);
    }
    s.pixels.assign(all.begin(), all.begin() + std::ptrdiff_t(q));
    std::sort(s.pixels.begin(), s.pixels.end());
    batch.push_back(std::move(s));
  }
  return batch;
}

Trainer::Trainer(Model& model, TrainConfig cfg) : model_(&model), cfg_(std::move(cfg)), opt_(model.params()) {
  if (cfg_.loss == LossMode::focal && !model.config().residual) {
    throw Error("train: focal loss needs the residual output mode ([decoder] residual = true)");
  }
}

double Trainer::learning_rate() const {
  double lr = cfg_.adam.lr;
  if (cfg_.lr_halve_every) lr *= std::pow(0.5, double(completed_ / cfg_.lr_halve_every));
  return lr;
}

Tensor<double> Trainer::prior_weights(const Sample& sample) const {
  if (cfg_.loss != LossMode::two_stage || !frozen_) return {};
  const GridField& hr = sample.pair.hr;
  const Tensor<double> p = cfg_.resolved_prior_source() == PriorSource::target
                               ? compute_prior(hr, sample.pair.lr)
                               : compute_prior(frozen_->predict(sample.pair.lr, hr.ny(), hr.nx()), sample.pair.lr);
  return weight_map(p, cfg_.alpha, cfg_.beta);
}

double Trainer::sample_loss(const Sample& sample, std::vector<Tensor<float>>& grads) const {
  const GridField& hr = sample.pair.hr;
  Tape<float> tape;
  const Bound<float> p(tape, model_->params(), true);
  const Var<float> out = model_->forward(p, sample.pair.lr.values.cast<float>(), hr.ny(), hr.nx());
  const std::vector<float> ones(sample.pixels.size(), 1.0f);
  const Var<float> pred = gather_weighted(field_to_tokens(out), sample.pixels, ones, 1);
  const Tensor<float> target = gather_pixels<float>(hr.values, sample.pixels);

  Var<float> loss;
  switch (cfg_.loss) {
    case LossMode::l1:
      loss = l1_loss(pred, target);
      break;
    case LossMode::l2:
      loss = l2_loss(pred, target);
      break;
    case LossMode::focal: {
      const Tensor<double> prior = cfg_.resolved_prior_source() == PriorSource::target
                                       ? compute_prior(hr, sample.pair.lr)
                                       : compute_prior(GridField(out.value().cast<double>()), sample.pair.lr);
      const Tensor<float> w = gather_pixels<float>(weight_map(prior, cfg_.alpha, cfg_.beta), sample.pixels);
      loss = focal_composite_loss(pred, target, w, cfg_.alpha_b, cfg_.beta_b);
      break;
    }
    case LossMode::two_stage: {
      const Tensor<double> w = prior_weights(sample);
      loss = w.size() ? weighted_l2_loss(pred, target, gather_pixels<float>(w, sample.pixels)) : l2_loss(pred, target);
      break;
    }
  }
  tape.backward(loss);
  grads = p.grads();
  return double(loss.value()[0]);
}

StepResult Trainer::step(const std::vector<GridField>& records) {
  if (cfg_.loss == LossMode::two_stage && completed_ == cfg_.resolved_split() && !frozen_) {
    frozen_ = *model_;
    ++refreshes_;
  }
  const std::vector<Sample> batch = make_batch(records, cfg_, completed_);
  std::vector<double> losses(batch.size());
  std::vector<std::vector<Tensor<float>>> grads(batch.size());
  const std::size_t workers = std::min(cfg_.threads, batch.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < batch.size(); ++i) losses[i] = sample_loss(batch[i], grads[i]);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < batch.size(); i += workers) losses[i] = sample_loss(batch[i], grads[i]);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  // Fixed summation order, so the result does not depend on the worker count.
  const float inv = 1.0f / float(batch.size());
  std::vector<Tensor<float>> total = grads[0];
  for (std::size_t i = 1; i < batch.size(); ++i)
    for (std::size_t k = 0; k < total.size(); ++k) {
      float* dst = total[k].ptr();
      const float* src = grads[i][k].ptr();
      for (std::size_t j = 0, n = total[k].size(); j < n; ++j) dst[j] += src[j];
    }
  for (auto& g : total)
    for (float& v : g.data()) v *= inv;
  double loss = 0.0;
  for (double l : losses) loss += l;
  loss /= double(batch.size());

  StepResult r{completed_ + 1, loss, learning_rate()};
  if (!std::isfinite(loss)) {
    throw NonFiniteError("non-finite loss at step " + std::to_string(r.step) +
                         "; parameter norms: " + parameter_norms(model_->params()));
  }
  opt_.step(model_->params(), total, cfg_.adam, r.lr);
  ++completed_;
  return r;
}

double Trainer::validate(const std::vector<GridField>& records) const {
  if (records.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (const auto& r : records) {
    const SRPair pair = make_pair(r, cfg_.valid_scale, cfg_.degradation);
    total += mse(model_->predict(pair.lr, r.ny(), r.nx()).values, r.values);
  }
  return total / double(records.size());
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c = model_->to_checkpoint();
  c.put_scalar("train.completed", double(completed_));
  c.put_scalar("train.refreshes", double(refreshes_));
  opt_.save(c, model_->params());
  if (frozen_) c.put_params(frozen_->params(), "frozen.");
  return c;
}

void Trainer::restore(const Checkpoint& c) {
  c.get_params(model_->params(), "param.");
  completed_ = std::size_t(c.scalar("train.completed"));
  refreshes_ = std::size_t(c.scalar_or("train.refreshes", 0.0));
  opt_.load(c, model_->params());
  frozen_.reset();
  if (c.find("frozen." + model_->params().name(0))) {
    frozen_ = *model_;
    c.get_params(frozen_->params(), "frozen.");
  }
}

TrainResult train(Trainer& trainer, const std::vector<GridField>& train_records,
                  const std::vector<GridField>& valid_records, std::ostream* log) {
  TrainResult result;
  if (train_records.empty()) throw Error("train: no training records");
  const std::size_t steps = trainer.config().steps, valid_every = trainer.config().valid_every;
  if (log && trainer.completed() == 0) *log << "step,loss,lr\n";
  auto check_valid = [&](std::size_t step) {
    if (valid_records.empty()) return;
    const double v = trainer.validate(valid_records);
    if (result.best_step == 0 || v < result.best_valid) {
      result.best_valid = v;
      result.best_step = step;
      result.best_checkpoint = trainer.checkpoint();
    }
  };
  while (trainer.completed() < steps) {
    const StepResult r = trainer.step(train_records);
    result.history.push_back(r);
    if (log) *log << r.step << ',' << r.loss << ',' << r.lr << '\n';
    if (valid_every && r.step % valid_every == 0 && r.step != steps) check_valid(r.step);
  }
  check_valid(steps);
  result.final_checkpoint = trainer.checkpoint();
  if (valid_records.empty()) {
    result.best_checkpoint = result.final_checkpoint;
    result.best_step = steps;
  }
  return result;
}

Predictor model_predictor(const Model& model) {
  return [&model](const SRPair& pair) { return model.predict(pair.lr, pair.hr.ny(), pair.hr.nx()); };
}

Metrics measure(const Tensor<double>& pred, const Tensor<double>& target) {
  return {mse(pred, target), psnr(pred, target), ssim(pred, target)};
}

std::vector<EvalRow> evaluate(const Predictor& predict, const std::vector<GridField>& records,
                              const std::vector<double>& scales, Degradation degradation) {
  std::vector<EvalRow> rows;
  for (double s : scales) {
    EvalRow mean{"mean", s, {}, {}, {}, {}};
    for (std::size_t i = 0; i < records.size(); ++i) {
      const GridField& hr = records[i];
      const SRPair pair = make_pair(hr, s, degradation);
      EvalRow row{std::to_string(i), s, {}, {}, {}, {}};
      const GridField pred = predict(pair);
      if (pred.values.shape() != hr.values.shape()) shape_error("evaluate", hr.values.shape(), pred.values.shape());
      row.model = measure(pred.values, hr.values);
      row.bicubic = measure(interpolate(pair.lr, hr.ny(), hr.nx(), Interp::bicubic).values, hr.values);
      row.bilinear = measure(interpolate(pair.lr, hr.ny(), hr.nx(), Interp::bilinear).values, hr.values);
      row.nearest = measure(interpolate(pair.lr, hr.ny(), hr.nx(), Interp::nearest).values, hr.values);
      for (auto [acc, m] : {std::pair{&mean.model, &row.model}, {&mean.bicubic, &row.bicubic},
                            {&mean.bilinear, &row.bilinear}, {&mean.nearest, &row.nearest}}) {
        acc->mse += m->mse / double(records.size());
        acc->psnr += m->psnr / double(records.size());
        acc->ssim += m->ssim / double(records.size());
      }
      rows.push_back(row);
    }
    rows.push_back(mean);
  }
  return rows;
}

void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows) {
  out << "record,scale,mse,psnr,ssim";
  for (const char* m : {"bicubic", "bilinear", "nearest"}) out << ',' << m << "_mse," << m << "_psnr," << m << "_ssim";
  out << '\n';
  const auto precision = out.precision(10);
  for (const auto& r : rows) {
    out << r.record << ',' << r.scale;
    put_metrics(out, r.model);
    put_metrics(out, r.bicubic);
    put_metrics(out, r.bilinear);
    put_metrics(out, r.nearest);
    out << '\n';
  }
  out.precision(precision);
}

}  // namespace fsr

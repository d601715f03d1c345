#include "fsr/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <tuple>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "fsr/datagen.hpp"
#include "fsr/grad_check.hpp"
#include "fsr/spectral.hpp"
#include "fsr/trainer.hpp"

namespace fsr::cli {

namespace fs = std::filesystem;

namespace {

const std::initializer_list<const char*> kSections = {"data",    "grf",       "turb",  "splits", "encoder",
                                                      "decoder", "hierarchy", "train", "loss"};

Config load_config(const std::string& path) {
  Config c = Config::load(path);
  c.check_sections(kSections);
  return c;
}

// A dataset argument is either an SFB file or a directory holding <split>.sfb.
fs::path split_file(const fs::path& data, const std::string& split) {
  return fs::is_directory(data) ? data / (split + ".sfb") : data;
}

std::vector<GridField> read_split(const fs::path& data, const std::string& split) {
  const fs::path file = split_file(data, split);
  if (!fs::exists(file)) throw Error("missing dataset file " + file.string());
  return read_sfb(file);
}

Model load_model(const std::string& path) { return Model::from_checkpoint(Checkpoint::read(path)); }

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  return f;
}

// Writes to `path`, or to `fallback` when the path is empty.
template <typename Fn>
void emit(const std::string& path, std::ostream& fallback, Fn write) {
  if (path.empty()) {
    write(fallback);
    return;
  }
  std::ofstream f = open_output(path);
  write(f);
}

struct SeedFlag {
  std::uint64_t value = 0;
  CLI::Option* option = nullptr;

  void attach(CLI::App* app) { option = app->add_option("--seed", value, "Random seed")->capture_default_str(); }
  bool given() const { return option && option->count() > 0; }
};

bool feasible(const std::vector<GridField>& records, double s) {
  for (const auto& r : records) {
    if (std::min(r.ny(), r.nx()) < std::size_t(std::lround(double(kMinLrExtent) * s))) return false;
  }
  return true;
}

}  // namespace

std::size_t scaled_extent(std::size_t n, double s) { return std::size_t(std::floor(double(n) * s + 0.5)); }

void configure_process() {
#ifdef __GLIBC__
  // Keep freed tape buffers in the heap for reuse instead of returning them to the kernel.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

std::pair<std::size_t, std::size_t> parse_extents(const std::string& text) {
  const auto x = text.find('x');
  std::size_t h = 0, w = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument("no x");
    std::size_t used_h = 0, used_w = 0;
    h = std::stoul(text.substr(0, x), &used_h);
    w = std::stoul(text.substr(x + 1), &used_w);
    if (used_h != x || used_w != text.size() - x - 1) throw std::invalid_argument("trailing");
  } catch (const std::logic_error&) {
    throw Error("bad extents '" + text + "' (expected HxW, e.g. 101x101)");
  }
  if (h == 0 || w == 0) throw Error("bad extents '" + text + "': extents must be positive");
  return {h, w};
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Arbitrary-scale super-resolution of 2D fields with a hierarchical neural operator", "fsr"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every command");

  // gen-data
  std::string gen_config, gen_out;
  SeedFlag gen_seed;
  CLI::App* gen = app.add_subcommand("gen-data", "Write train/valid/test SFB datasets from a config");
  gen->add_option("--config", gen_config, "Config file ([data], [grf], [turb], [splits])")->required();
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen_seed.attach(gen);

  // train
  std::string train_config, train_data, train_out, train_resume;
  std::optional<std::size_t> train_steps, train_threads;
  SeedFlag train_seed;
  CLI::App* tr = app.add_subcommand("train", "Train a model; writes model.ckpt, best.ckpt and train_log.csv");
  tr->add_option("--config", train_config, "Config file ([encoder], [decoder], [hierarchy], [train], [loss])")->required();
  tr->add_option("--data", train_data, "Dataset directory with train.sfb and valid.sfb")->required();
  tr->add_option("--out", train_out, "Output directory")->required();
  tr->add_option("--steps", train_steps, "Override [train] steps");
  tr->add_option("--threads", train_threads, "Override [train] threads");
  tr->add_option("--resume", train_resume, "Continue from a checkpoint written by train");
  train_seed.attach(tr);

  // eval
  std::string eval_ckpt, eval_data, eval_out, eval_degradation = "spectral";
  std::vector<double> eval_scales{4.6, 8.2, 15.7, 32};
  SeedFlag eval_seed;
  CLI::App* ev = app.add_subcommand("eval", "Metric CSV for a checkpoint and the interpolation baselines");
  ev->add_option("--ckpt", eval_ckpt, "Model checkpoint")->required();
  ev->add_option("--data", eval_data, "test.sfb, or a dataset directory holding it")->required();
  ev->add_option("--scales", eval_scales, "Comma-separated scale factors")->delimiter(',')->capture_default_str();
  ev->add_option("--degradation", eval_degradation, "spectral or bicubic")->capture_default_str();
  ev->add_option("--out", eval_out, "CSV path (default: stdout)");
  eval_seed.attach(ev);

  // infer
  std::string infer_ckpt, infer_in, infer_out, infer_extents;
  double infer_scale = 0.0;
  SeedFlag infer_seed;
  CLI::App* inf = app.add_subcommand("infer", "Super-resolve every record of an SFB file");
  inf->add_option("--ckpt", infer_ckpt, "Model checkpoint")->required();
  inf->add_option("--in", infer_in, "Input SFB file")->required();
  inf->add_option("--out", infer_out, "Output SFB file")->required();
  auto* scale_opt = inf->add_option("--scale", infer_scale, "Scale factor; extents are floor(n s + 0.5)");
  auto* extents_opt = inf->add_option("--out-extents", infer_extents, "Explicit output extents HxW");
  scale_opt->excludes(extents_opt);
  infer_seed.attach(inf);

  // bench-attn
  std::vector<std::size_t> bench_sizes{256, 1024, 4096};
  std::size_t bench_d = 32, bench_heads = 4, bench_reps = 20;
  bool bench_no_vanilla = false, bench_no_timing = false;
  std::string bench_out;
  SeedFlag bench_seed;
  CLI::App* bench = app.add_subcommand("bench-attn", "Galerkin vs softmax attention cost table");
  bench->add_option("--sizes", bench_sizes, "Comma-separated token counts m")->delimiter(',')->capture_default_str();
  bench->add_option("--d", bench_d, "Token width")->capture_default_str();
  bench->add_option("--heads", bench_heads, "Attention heads")->capture_default_str();
  bench->add_option("--reps", bench_reps, "Timed repetitions per size")->capture_default_str();
  bench->add_flag("--no-vanilla", bench_no_vanilla, "Skip softmax attention");
  bench->add_flag("--no-timing", bench_no_timing, "Omit the median_seconds column");
  bench->add_option("--out", bench_out, "CSV path (default: stdout)");
  bench_seed.attach(bench);

  // spectra
  std::vector<std::string> spectra_in;
  std::string spectra_out;
  SeedFlag spectra_seed;
  CLI::App* spec = app.add_subcommand("spectra", "Radial power spectrum per input, averaged over records and channels");
  spec->add_option("--in", spectra_in, "Square-grid SFB file (repeatable)")->required();
  spec->add_option("--out", spectra_out, "Output directory; writes <stem>_spectrum.csv")->required();
  spectra_seed.attach(spec);

  // grad-check
  bool gc_all = false;
  std::vector<std::string> gc_ops;
  std::size_t gc_seeds = 1;
  bool gc_list = false;
  SeedFlag gc_seed;
  CLI::App* gc = app.add_subcommand("grad-check", "Finite-difference gradient checks");
  gc->add_flag("--all", gc_all, "Every registered op and composite");
  gc->add_option("--op", gc_ops, "Case name (repeatable)");
  gc->add_flag("--list", gc_list, "Print case names and exit");
  gc->add_option("--seeds", gc_seeds, "Seeds per case, starting at --seed")->capture_default_str();
  gc_seed.attach(gc);

  // prior-corr
  std::string pc_ckpt, pc_data, pc_out, pc_source = "prediction";
  std::vector<double> pc_alpha{1.0}, pc_beta{0.1};
  double pc_scale = 2.0;
  SeedFlag pc_seed;
  CLI::App* pc = app.add_subcommand("prior-corr", "Pearson correlation of |pred - target| with the weight map W(p)");
  pc->add_option("--ckpt", pc_ckpt, "Model checkpoint")->required();
  pc->add_option("--data", pc_data, "test.sfb, or a dataset directory holding it")->required();
  pc->add_option("--alpha", pc_alpha, "Comma-separated alpha values")->delimiter(',')->capture_default_str();
  pc->add_option("--beta", pc_beta, "Comma-separated beta values")->delimiter(',')->capture_default_str();
  pc->add_option("--scale", pc_scale, "Scale factor of the LR inputs")->capture_default_str();
  pc->add_option("--source", pc_source, "Prior reference: prediction or target")->capture_default_str();
  pc->add_option("--out", pc_out, "CSV path (default: stdout)");
  pc_seed.attach(pc);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*gen) {
      DatasetSpec ds = dataset_spec_from_config(load_config(gen_config));
      if (gen_seed.given()) ds.seed = gen_seed.value;
      const DatasetSummary summary = build_dataset(ds, gen_out);
      for (std::size_t i = 0; i < summary.files.size(); ++i)
        out << summary.files[i].string() << ": " << summary.counts[i] << " records\n";
    } else if (*tr) {
      const Config config = load_config(train_config);
      const ModelConfig mc = model_config_from(config);
      TrainConfig tc = train_config_from(config);
      if (train_seed.given()) tc.seed = train_seed.value;
      if (train_steps) tc.steps = *train_steps;
      if (train_threads) tc.threads = *train_threads;
      const auto train_records = read_split(train_data, "train");
      const fs::path valid_file = split_file(train_data, "valid");
      const auto valid_records = fs::exists(valid_file) && fs::is_directory(train_data) ? read_sfb(valid_file)
                                                                                          : std::vector<GridField>{};
      if (train_records.empty()) throw Error("no training records in " + train_data);
      validate(tc, train_records[0].ny(), train_records[0].nx());

      Model model = Model::create(mc, tc.seed);
      Trainer trainer(model, tc);
      if (!train_resume.empty()) trainer.restore(Checkpoint::read(train_resume));
      fs::create_directories(train_out);
      std::ofstream log = open_output(fs::path(train_out) / "train_log.csv");
      if (trainer.completed() > 0) log << "step,loss,lr\n";
      const TrainResult result = train(trainer, train_records, valid_records, &log);
      result.final_checkpoint.write(fs::path(train_out) / "model.ckpt");
      result.best_checkpoint.write(fs::path(train_out) / "best.ckpt");
      out << "steps " << trainer.completed() << ", parameters " << model.params().scalar_count();
      if (!result.history.empty()) out << ", final loss " << result.history.back().loss;
      if (!valid_records.empty()) out << ", best valid mse " << result.best_valid << " at step " << result.best_step;
      out << '\n';
    } else if (*ev) {
      const Model model = load_model(eval_ckpt);
      const auto records = read_split(eval_data, "test");
      std::vector<double> scales;
      for (double s : eval_scales) {
        if (!(s >= 1.0)) throw Error("scale must be >= 1, got " + std::to_string(s));
        if (feasible(records, s)) {
          scales.push_back(s);
        } else {
          err << "skipping scale " << s << ": LR extent would fall below " << kMinLrExtent << '\n';
        }
      }
      if (scales.empty()) throw Error("no evaluable scale for these records");
      const auto rows = evaluate(model_predictor(model), records, scales, parse_degradation(eval_degradation));
      emit(eval_out, out, [&](std::ostream& o) { write_eval_csv(o, rows); });
    } else if (*inf) {
      if (!scale_opt->count() && !extents_opt->count()) {
        err << "error: one of --scale or --out-extents is required\n";
        return kUsage;
      }
      const Model model = load_model(infer_ckpt);
      const auto records = read_sfb(infer_in);
      std::vector<GridField> results;
      std::size_t ty = 0, tx = 0;
      for (const auto& r : records) {
        if (extents_opt->count()) {
          std::tie(ty, tx) = parse_extents(infer_extents);
        } else {
          if (!(infer_scale > 0.0)) throw Error("--scale must be positive");
          ty = scaled_extent(r.ny(), infer_scale);
          tx = scaled_extent(r.nx(), infer_scale);
          if (ty == 0 || tx == 0) throw Error("--scale " + std::to_string(infer_scale) + " gives empty extents");
        }
        GridField y = model.predict(r, ty, tx);
        if (!y.values.all_finite()) throw NonFiniteError("infer: non-finite output for record " + std::to_string(results.size()));
        results.push_back(std::move(y));
      }
      write_sfb(infer_out, results);
      out << "wrote " << results.size() << " records at " << ty << 'x' << tx << " to " << infer_out << '\n';
    } else if (*bench) {
      const auto rows = bench_attention(bench_sizes, bench_d, bench_heads, bench_reps, bench_seed.value, !bench_no_vanilla);
      emit(bench_out, out, [&](std::ostream& o) { write_bench_csv(o, rows, !bench_no_timing); });
      if (!bench_no_timing && bench_sizes.size() >= 2) {
        err << "loglog slope galerkin " << loglog_slope(rows, "galerkin");
        if (!bench_no_vanilla) err << ", vanilla " << loglog_slope(rows, "vanilla");
        err << '\n';
      }
    } else if (*spec) {
      fs::create_directories(spectra_out);
      for (const auto& in : spectra_in) {
        const auto records = read_sfb(in);
        if (records.empty()) throw Error(in + ": no records");
        const std::size_t n = records[0].nx();
        if (records[0].ny() != n) throw Error(in + ": radial spectra need square grids");
        spectral::RadialSpectrum mean;
        std::size_t planes = 0;
        for (const auto& r : records) {
          for (std::size_t c = 0; c < r.channels(); ++c) {
            const auto plane = r.values.data().subspan(c * n * n, n * n);
            const auto s = spectral::radial_power_spectrum(plane, n);
            if (mean.k.empty()) {
              mean = s;
            } else {
              for (std::size_t b = 0; b < s.power.size(); ++b) mean.power[b] += s.power[b];
            }
            ++planes;
          }
        }
        for (double& p : mean.power) p /= double(planes);
        const fs::path path = fs::path(spectra_out) / (fs::path(in).stem().string() + "_spectrum.csv");
        std::ofstream f = open_output(path);
        spectral::write_spectrum_csv(f, mean);
        out << path.string() << '\n';
      }
    } else if (*gc) {
      if (int(gc_all) + int(!gc_ops.empty()) + int(gc_list) > 1) {
        err << "error: --all, --op and --list are mutually exclusive\n";
        return kUsage;
      }
      if (gc_list) {
        for (const auto& c : grad_suite()) out << c.name << '\n';
        return kOk;
      }
      if (!gc_all && gc_ops.empty()) {
        err << "error: one of --all or --op is required\n";
        return kUsage;
      }
      std::vector<const GradCase*> cases;
      if (gc_all) {
        for (const auto& c : grad_suite()) cases.push_back(&c);
      } else {
        for (const auto& name : gc_ops) {
          const GradCase* c = find_grad_case(name);
          if (!c) {
            err << "error: unknown grad-check case '" << name << "' (see --list)\n";
            return kUsage;
          }
          cases.push_back(c);
        }
      }
      bool ok = true;
      out << "case,seeds,max_rel_error,tolerance,status\n";
      for (const GradCase* c : cases) {
        double worst = 0.0;
        for (std::size_t s = 0; s < gc_seeds; ++s) worst = std::max(worst, c->run(gc_seed.value + s).max_rel_error);
        const bool pass = worst < c->tolerance;
        ok = ok && pass;
        out << c->name << ',' << gc_seeds << ',' << worst << ',' << c->tolerance << ',' << (pass ? "pass" : "FAIL") << '\n';
      }
      return ok ? kOk : kFailure;
    } else if (*pc) {
      const PriorSource source = parse_prior_source(pc_source);
      const Model model = load_model(pc_ckpt);
      const auto records = read_split(pc_data, "test");
      if (!(pc_scale >= 1.0)) throw Error("--scale must be >= 1");
      struct Row {
        std::string record;
        double alpha, beta, r;
      };
      std::vector<Row> rows;
      std::vector<double> sums(pc_alpha.size() * pc_beta.size(), 0.0);
      std::vector<std::size_t> counts(sums.size(), 0);
      for (std::size_t i = 0; i < records.size(); ++i) {
        const SRPair pair = make_pair(records[i], pc_scale);
        const GridField pred = model.predict(pair.lr, pair.hr.ny(), pair.hr.nx());
        const Tensor<double> p = compute_prior(source == PriorSource::target ? pair.hr : pred, pair.lr);
        Tensor<double> err_map(pred.values.shape());
        for (std::size_t j = 0; j < err_map.size(); ++j) err_map[j] = std::abs(pred.values[j] - pair.hr.values[j]);
        for (std::size_t a = 0; a < pc_alpha.size(); ++a) {
          for (std::size_t b = 0; b < pc_beta.size(); ++b) {
            const double r = pearson(err_map, weight_map(p, pc_alpha[a], pc_beta[b]));
            rows.push_back({std::to_string(i), pc_alpha[a], pc_beta[b], r});
            if (std::isfinite(r)) {
              sums[a * pc_beta.size() + b] += r;
              ++counts[a * pc_beta.size() + b];
            }
          }
        }
      }
      for (std::size_t a = 0; a < pc_alpha.size(); ++a)
        for (std::size_t b = 0; b < pc_beta.size(); ++b) {
          const std::size_t k = a * pc_beta.size() + b;
          rows.push_back({"mean", pc_alpha[a], pc_beta[b],
                          counts[k] ? sums[k] / double(counts[k]) : std::numeric_limits<double>::quiet_NaN()});
        }
      emit(pc_out, out, [&](std::ostream& o) {
        o << "record,alpha,beta,pearson_r\n";
        const auto precision = o.precision(10);
        for (const auto& r : rows) o << r.record << ',' << r.alpha << ',' << r.beta << ',' << r.r << '\n';
        o.precision(precision);
      });
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}

}  // namespace fsr::cli

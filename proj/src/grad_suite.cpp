#include <random>

#include "fsr/grad_check.hpp"
#include "suite_cases.hpp"

namespace fsr {

namespace {

using V = Var<double>;
using Inputs = std::vector<V>;

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Weighted sum with fixed random weights, so every output entry reaches the loss with a
// distinct generic coefficient.
V probe_loss(const V& out, std::mt19937_64& rng) {
  return sum(mul(out, out.tape().constant(random_tensor(out.shape(), rng))));
}

GradCase op_case(std::string name, double tol,
                 std::function<std::pair<std::vector<Tensor<double>>, std::function<V(const Inputs&)>>(std::mt19937_64&)> make) {
  return GradCase{name, tol, [make](std::uint64_t seed) {
                    std::mt19937_64 rng(seed);
                    auto [inputs, op] = make(rng);
                    const std::uint64_t probe_seed = rng();
                    return grad_check(
                        [op, probe_seed](Tape<double>&, const Inputs& v) {
                          std::mt19937_64 r(probe_seed);
                          return probe_loss(op(v), r);
                        },
                        inputs);
                  }};
}

std::vector<GradCase> build_suite() {
  std::vector<GradCase> cases;
  auto unary = [&](std::string name, auto fn, bool away_from_zero) {
    cases.push_back(op_case(name, 1e-4, [fn, away_from_zero](std::mt19937_64& rng) {
      const Shape s{pick(rng, 1, 5), pick(rng, 1, 5)};
      Tensor<double> x = away_from_zero ? random_away_from_zero(s, rng) : random_tensor(s, rng);
      return std::make_pair(std::vector<Tensor<double>>{x}, std::function<V(const Inputs&)>([fn](const Inputs& v) { return fn(v[0]); }));
    }));
  };
  auto binary = [&](std::string name, auto fn) {
    cases.push_back(op_case(name, 1e-4, [fn](std::mt19937_64& rng) {
      const Shape s{pick(rng, 1, 5), pick(rng, 1, 5)};
      return std::make_pair(std::vector<Tensor<double>>{random_tensor(s, rng), random_tensor(s, rng)},
                            std::function<V(const Inputs&)>([fn](const Inputs& v) { return fn(v[0], v[1]); }));
    }));
  };

  binary("add", [](const V& a, const V& b) { return add(a, b); });
  binary("sub", [](const V& a, const V& b) { return sub(a, b); });
  binary("mul", [](const V& a, const V& b) { return mul(a, b); });
  unary("scale", [](const V& a) { return scale(a, -1.75); }, false);
  unary("abs", [](const V& a) { return abs(a); }, true);
  unary("exp", [](const V& a) { return exp(a); }, false);
  for (auto kind : {Activation::relu, Activation::gelu, Activation::leaky_relu, Activation::elu, Activation::selu}) {
    unary(std::string(activation_name(kind)), [kind](const V& a) { return activate(a, kind); }, true);
  }
  unary("transpose", [](const V& a) { return transpose(a); }, false);
  unary("sum", [](const V& a) { return sum(a); }, false);
  unary("mean", [](const V& a) { return mean(a); }, false);
  unary("reshape", [](const V& a) { return reshape(a, Shape{a.value().size()}); }, false);
  unary("layer_stat_normalize", [](const V& a) { return layer_stat_normalize(a); }, false);

  cases.push_back(op_case("column_standardize", 1e-4, [](std::mt19937_64& rng) {
    const Shape s{pick(rng, 2, 8), pick(rng, 1, 5)};
    return std::make_pair(std::vector<Tensor<double>>{random_tensor(s, rng)},
                          std::function<V(const Inputs&)>([](const Inputs& v) { return column_standardize(v[0]); }));
  }));
  cases.push_back(op_case("add_bias", 1e-4, [](std::mt19937_64& rng) {
    const std::size_t m = pick(rng, 1, 5), n = pick(rng, 1, 5);
    return std::make_pair(std::vector<Tensor<double>>{random_tensor({m, n}, rng), random_tensor({n}, rng)},
                          std::function<V(const Inputs&)>([](const Inputs& v) { return add_bias(v[0], v[1]); }));
  }));
  cases.push_back(op_case("matmul", 1e-4, [](std::mt19937_64& rng) {
    const std::size_t m = pick(rng, 1, 5), k = pick(rng, 1, 5), n = pick(rng, 1, 5);
    return std::make_pair(std::vector<Tensor<double>>{random_tensor({m, k}, rng), random_tensor({k, n}, rng)},
                          std::function<V(const Inputs&)>([](const Inputs& v) { return matmul(v[0], v[1]); }));
  }));
  cases.push_back(op_case("concat", 1e-4, [](std::mt19937_64& rng) {
    const std::size_t axis = pick(rng, 0, 2);
    Shape a{pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3)}, b = a;
    b[axis] = pick(rng, 1, 3);
    return std::make_pair(std::vector<Tensor<double>>{random_tensor(a, rng), random_tensor(b, rng)},
                          std::function<V(const Inputs&)>([axis](const Inputs& v) { return concat<double>({v[0], v[1]}, axis); }));
  }));
  cases.push_back(op_case("slice", 1e-4, [](std::mt19937_64& rng) {
    const std::size_t axis = pick(rng, 0, 1);
    Shape s{pick(rng, 2, 5), pick(rng, 2, 5)};
    const std::size_t start = pick(rng, 0, s[axis] - 1), len = pick(rng, 1, s[axis] - start);
    return std::make_pair(std::vector<Tensor<double>>{random_tensor(s, rng)},
                          std::function<V(const Inputs&)>([=](const Inputs& v) { return slice(v[0], axis, start, len); }));
  }));
  cases.push_back(op_case("conv2d", 1e-4, [](std::mt19937_64& rng) {
    const std::size_t b = pick(rng, 1, 2), ci = pick(rng, 1, 3), co = pick(rng, 1, 3), h = pick(rng, 2, 5), w = pick(rng, 2, 5);
    const std::size_t k = pick(rng, 0, 1) ? 3 : 1;
    return std::make_pair(
        std::vector<Tensor<double>>{random_tensor({b, ci, h, w}, rng), random_tensor({co, ci, k, k}, rng), random_tensor({co}, rng)},
        std::function<V(const Inputs&)>([](const Inputs& v) { return conv2d(v[0], v[1], v[2]); }));
  }));
  cases.push_back(op_case("gather_weighted", 1e-4, [](std::mt19937_64& rng) {
    const std::size_t n = pick(rng, 1, 6), d = pick(rng, 1, 4), q = pick(rng, 1, 6), k = pick(rng, 1, 4);
    std::vector<std::uint32_t> idx(q * k);
    std::vector<double> w(q * k);
    for (auto& i : idx) i = std::uint32_t(pick(rng, 0, n - 1));
    for (auto& x : w) x = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    return std::make_pair(std::vector<Tensor<double>>{random_tensor({n, d}, rng)},
                          std::function<V(const Inputs&)>([=](const Inputs& v) { return gather_weighted(v[0], idx, w, k); }));
  }));
  cases.push_back(op_case("spectral_resize", 1e-4, [](std::mt19937_64& rng) {
    const Shape s{pick(rng, 1, 2), pick(rng, 2, 7), pick(rng, 2, 7)};
    const std::size_t ty = pick(rng, 2, 9), tx = pick(rng, 2, 9);
    return std::make_pair(std::vector<Tensor<double>>{random_tensor(s, rng)},
                          std::function<V(const Inputs&)>([=](const Inputs& v) { return spectral_resize(v[0], ty, tx); }));
  }));
  cases.push_back(op_case("zero_interleave", 1e-4, [](std::mt19937_64& rng) {
    const Shape s{pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 4)};
    const std::size_t n = pick(rng, 1, 3);
    return std::make_pair(std::vector<Tensor<double>>{random_tensor(s, rng)},
                          std::function<V(const Inputs&)>([=](const Inputs& v) { return zero_interleave(v[0], n); }));
  }));
  cases.push_back(op_case("descend", 1e-4, [](std::mt19937_64& rng) {
    const Shape s{pick(rng, 1, 2), pick(rng, 2, 9), pick(rng, 2, 9)};
    return std::make_pair(std::vector<Tensor<double>>{random_tensor(s, rng)},
                          std::function<V(const Inputs&)>([](const Inputs& v) { return descend(v[0]); }));
  }));
  cases.push_back(op_case("ascend", 1e-4, [](std::mt19937_64& rng) {
    const Shape s{pick(rng, 1, 2), pick(rng, 1, 5), pick(rng, 1, 5)};
    const std::size_t ty = 2 * s[1] - pick(rng, 0, 1), tx = 2 * s[2] - pick(rng, 0, 1);
    return std::make_pair(std::vector<Tensor<double>>{random_tensor(s, rng)},
                          std::function<V(const Inputs&)>([=](const Inputs& v) { return ascend(v[0], ty, tx); }));
  }));

  append_composite_cases(cases);
  return cases;
}

}  // namespace

const std::vector<GradCase>& grad_suite() {
  static const std::vector<GradCase> suite = build_suite();
  return suite;
}

const GradCase* find_grad_case(const std::string& name) {
  for (const auto& c : grad_suite())
    if (c.name == name) return &c;
  return nullptr;
}

}  // namespace fsr

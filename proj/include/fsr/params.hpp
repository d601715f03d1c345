#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fsr/autodiff.hpp"

namespace fsr {

/// Named learnable tensors in a fixed insertion order (the order used for checkpoints and
/// gradient reduction).
template <typename T>
class ParamStore {
 public:
  std::size_t add(std::string name, Tensor<T> value) {
    if (index_.contains(name)) throw Error("duplicate parameter '" + name + "'");
    index_.emplace(name, names_.size());
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return names_.size() - 1;
  }

  /// Uniform in +-sqrt(6 / (fan_in + fan_out)).
  std::size_t glorot(std::string name, Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor<T> value(std::move(shape));
    for (auto& v : value.data()) v = T(dist(rng));
    return add(std::move(name), std::move(value));
  }

  std::size_t zeros(std::string name, Shape shape) { return add(std::move(name), Tensor<T>(std::move(shape))); }

  std::size_t size() const { return values_.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor<T>& value(std::size_t i) { return values_[i]; }
  const Tensor<T>& value(std::size_t i) const { return values_[i]; }
  const std::vector<Tensor<T>>& values() const { return values_; }
  std::vector<Tensor<T>>& values() { return values_; }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], values_[i].template cast<U>());
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> values_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// A parameter store placed on one tape, as variables (trainable) or constants (inference).
template <typename T>
class Bound {
 public:
  Bound(Tape<T>& tape, const ParamStore<T>& store, bool trainable) : tape_(&tape) {
    vars_.reserve(store.size());
    for (const auto& v : store.values()) vars_.push_back(trainable ? tape.variable(v) : tape.constant(v));
  }
  /// Variables already on `tape`, in store order.
  Bound(Tape<T>& tape, std::vector<Var<T>> vars) : tape_(&tape), vars_(std::move(vars)) {}

  Var<T> operator[](std::size_t i) const { return vars_[i]; }
  Tape<T>& tape() const { return *tape_; }
  std::size_t size() const { return vars_.size(); }

  std::vector<Tensor<T>> grads() const {
    std::vector<Tensor<T>> out;
    out.reserve(vars_.size());
    for (const auto& v : vars_) out.push_back(v.grad());
    return out;
  }

 private:
  Tape<T>* tape_;
  std::vector<Var<T>> vars_;
};

/// Ordered name -> tensor entries in the FSRCKPT1 layout.
class Checkpoint {
 public:
  void put(const std::string& name, Tensor<float> value);
  void put_scalar(const std::string& name, double value) { put(name, Tensor<float>::scalar(float(value))); }

  const Tensor<float>* find(const std::string& name) const;
  const Tensor<float>& at(const std::string& name) const;
  double scalar(const std::string& name) const { return at(name)[0]; }
  double scalar_or(const std::string& name, double fallback) const {
    const auto* t = find(name);
    return t ? double((*t)[0]) : fallback;
  }

  const std::vector<std::pair<std::string, Tensor<float>>>& entries() const { return entries_; }

  /// Stores every parameter under `prefix` + name.
  template <typename T>
  void put_params(const ParamStore<T>& store, const std::string& prefix = "") {
    for (std::size_t i = 0; i < store.size(); ++i) put(prefix + store.name(i), store.value(i).template cast<float>());
  }

  /// Overwrites every parameter of `store` from entries under `prefix`; shapes must match.
  template <typename T>
  void get_params(ParamStore<T>& store, const std::string& prefix = "") const {
    for (std::size_t i = 0; i < store.size(); ++i) {
      const Tensor<float>& src = at(prefix + store.name(i));
      if (src.shape() != store.value(i).shape()) shape_error("checkpoint '" + store.name(i) + "'", src.shape(), store.value(i).shape());
      store.value(i) = src.template cast<T>();
    }
  }

  void write(const std::filesystem::path& path) const;
  static Checkpoint read(const std::filesystem::path& path);

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes, const std::string& origin = "<memory>");

 private:
  std::vector<std::pair<std::string, Tensor<float>>> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

}  // namespace fsr

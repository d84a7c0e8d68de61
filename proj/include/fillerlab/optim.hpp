// SPDX-License-Identifier: Apache-2.0
//
// Named parameter store, global-norm clipping and Adam with decoupled
// weight decay. Header-only and templated on scalar like the tape.

#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "fillerlab/tensor.hpp"

namespace fillerlab {

template <class S>
struct Parameter {
  Tensor<S> value;
  Tensor<S> grad;
  bool trainable = true;
};

// Parameters keyed by name; iteration order is insertion order so that
// checkpoints, optimizer state and reductions are stable.
template <class S>
class ParameterStore {
 public:
  Parameter<S>& add(const std::string& name, Tensor<S> value) {
    if (index_.count(name)) throw ConfigError("duplicate parameter " + name);
    index_.emplace(name, names_.size());
    names_.push_back(name);
    params_.push_back(Parameter<S>{std::move(value), {}, true});
    return params_.back();
  }

  bool contains(const std::string& name) const { return index_.count(name); }

  Parameter<S>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("no parameter " + name);
    return params_[it->second];
  }
  const Parameter<S>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("no parameter " + name);
    return params_[it->second];
  }

  const std::vector<std::string>& names() const { return names_; }
  size_t size() const { return params_.size(); }
  Parameter<S>& operator[](size_t i) { return params_[i]; }
  const Parameter<S>& operator[](size_t i) const { return params_[i]; }

  long param_count() const {
    long c = 0;
    for (const auto& p : params_) c += p.value.size();
    return c;
  }

  void zero_grad() {
    for (auto& p : params_) {
      if (!p.trainable) continue;
      if (p.grad.shape != p.value.shape) p.grad = Tensor<S>(p.value.shape);
      p.grad.zero();
    }
  }

  // Tape leaf for a parameter: frozen ones get no gradient sink.
  NodeP<S> leaf(Tape<S>& tape, const std::string& name) {
    Parameter<S>& p = at(name);
    return tape.leaf(p.value, p.trainable ? &p.grad : nullptr);
  }

  void set_trainable(const std::function<bool(const std::string&)>& pred) {
    for (size_t i = 0; i < params_.size(); ++i)
      params_[i].trainable = pred(names_[i]);
  }

 private:
  std::vector<std::string> names_;
  std::vector<Parameter<S>> params_;
  std::map<std::string, size_t> index_;
};

// Scales trainable gradients so their global L2 norm is at most max_norm.
// Returns the applied factor (1 when already inside the ball).
template <class S>
S clip_global_norm(ParameterStore<S>& params, S max_norm) {
  if (max_norm <= S(0)) throw ConfigError("clip: max_norm must be positive");
  double sq = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (!p.trainable) continue;
    for (long j = 0; j < p.grad.size(); ++j) {
      const double g = static_cast<double>(p.grad.v[j]);
      sq += g * g;
    }
  }
  if (!std::isfinite(sq)) throw NumericError("non-finite gradient norm");
  const double norm = std::sqrt(sq);
  if (norm <= static_cast<double>(max_norm)) return S(1);
  const S factor = static_cast<S>(static_cast<double>(max_norm) / norm);
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable) continue;
    for (long j = 0; j < p.grad.size(); ++j) p.grad.v[j] *= factor;
  }
  return factor;
}

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled: p -= lr * wd * p
};

template <class S>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  long step_count() const { return step_; }

  void step(ParameterStore<S>& params) {
    if (state_.empty()) init_state(params);
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, step_);
    for (size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      if (!p.trainable) continue;
      if (p.grad.shape != p.value.shape)
        throw NumericError("missing gradient for trainable parameter " +
                           params.names()[i]);
      Slot& s = state_[params.names()[i]];
      if (s.m.shape != p.value.shape)
        throw ConfigError("optimizer state shape mismatch for " +
                          params.names()[i]);
      for (long j = 0; j < p.value.size(); ++j) {
        const double g = static_cast<double>(p.grad.v[j]);
        s.m.v[j] = cfg_.beta1 * s.m.v[j] + (1.0 - cfg_.beta1) * g;
        s.v.v[j] = cfg_.beta2 * s.v.v[j] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = s.m.v[j] / bc1;
        const double vhat = s.v.v[j] / bc2;
        double x = static_cast<double>(p.value.v[j]);
        x -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        x -= cfg_.lr * cfg_.weight_decay * static_cast<double>(p.value.v[j]);
        p.value.v[j] = static_cast<S>(x);
      }
    }
  }

  // Flat state access for checkpointing: per parameter, moments in double.
  struct Slot {
    Tensor<double> m, v;
  };
  std::map<std::string, Slot>& state() { return state_; }
  void set_step(long step) { step_ = step; }

  void init_state(const ParameterStore<S>& params) {
    for (size_t i = 0; i < params.size(); ++i) {
      Slot& s = state_[params.names()[i]];
      s.m = Tensor<double>(params[i].value.shape);
      s.v = Tensor<double>(params[i].value.shape);
    }
  }

 private:
  AdamConfig cfg_;
  long step_ = 0;
  std::map<std::string, Slot> state_;
};

}  // namespace fillerlab

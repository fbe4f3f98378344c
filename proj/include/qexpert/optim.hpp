#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "qexpert/tensor.hpp"

namespace qexpert {

enum class OptimizerKind { sgd, adam };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd" || s == "SGD") return OptimizerKind::sgd;
  if (s == "adam" || s == "Adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer '" + s + "' (expected sgd or adam)");
}

/// Learning rate, Adam constants and per-parameter moment buffers.
template <typename T>
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step_count = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (kind == OptimizerKind::adam) {
      if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
        throw std::invalid_argument("Adam betas must lie in (0, 1)");
      if (!(epsilon > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
    }
  }
};

namespace optim {

namespace detail {
template <typename T>
bool all_zero(const std::vector<Tensor<T>*>& params) {
  for (const auto* p : params)
    for (auto g : p->grad())
      if (g != T(0)) return false;
  return true;
}
}  // namespace detail

/// p <- p - lr * g over every parameter that carries a gradient buffer.
template <typename T>
void sgd_step(const std::vector<Tensor<T>*>& params, OptimizerState<T>& state) {
  if (state.kind != OptimizerKind::sgd) throw std::logic_error("sgd_step called with a non-SGD state");
  ++state.step_count;
  const T lr = T(state.learning_rate);
  for (auto* p : params) {
    if (!p->has_grad()) continue;
    auto d = p->data();
    auto g = p->grad();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= lr * g[i];
  }
}

/// Bias-corrected Adam. When every gradient in the step is zero the moments
/// still decay but parameters are left untouched.
template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, OptimizerState<T>& state) {
  if (state.kind != OptimizerKind::adam) throw std::logic_error("adam_step called with a non-Adam state");
  if (state.first_moment.size() != params.size()) {
    state.first_moment.assign(params.size(), {});
    state.second_moment.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.first_moment[i].assign(params[i]->size(), T(0));
      state.second_moment[i].assign(params[i]->size(), T(0));
    }
  }
  ++state.step_count;
  const bool frozen = detail::all_zero(params);
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, double(state.step_count));
  const double c2 = 1.0 - std::pow(b2, double(state.step_count));
  const T lr = T(state.learning_rate), eps = T(state.epsilon);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto* p = params[pi];
    if (!p->has_grad()) continue;
    auto& m = state.first_moment[pi];
    auto& v = state.second_moment[pi];
    if (m.size() != p->size()) throw ShapeError("Adam moment buffer does not match its parameter");
    auto d = p->data();
    auto g = p->grad();
    for (std::size_t i = 0; i < d.size(); ++i) {
      m[i] = T(b1) * m[i] + T(1 - b1) * g[i];
      v[i] = T(b2) * v[i] + T(1 - b2) * g[i] * g[i];
      if (frozen) continue;
      const T m_hat = m[i] / T(c1);
      const T v_hat = v[i] / T(c2);
      d[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template <typename T>
void step(const std::vector<Tensor<T>*>& params, OptimizerState<T>& state) {
  if (state.kind == OptimizerKind::sgd)
    sgd_step(params, state);
  else
    adam_step(params, state);
}

}  // namespace optim
}  // namespace qexpert

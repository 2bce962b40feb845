#pragma once

#include <cmath>
#include <map>
#include <string>

#include "fairrec/common.hpp"
#include "fairrec/graph.hpp"
#include "fairrec/params.hpp"

namespace fairrec {

// Bias-corrected Adam. One state per optimized parameter group; the step
// counter advances once per adam_apply call.
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long t = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

// Applies one Adam step for every entry of `grads` to the matching parameter.
inline void adam_apply(AdamState& state, ParameterStore& params,
                       const GradientMap& grads) {
  state.t += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    if (p.shape != g.shape)
      throw ShapeError("adam_apply: '" + name + "' parameter " +
                       shape_str(p.shape) + " vs gradient " + shape_str(g.shape));
    Tensor& m = state.m.try_emplace(name, Tensor::zeros(p.shape)).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor::zeros(p.shape)).first->second;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      double gi = g.values[i];
      m.values[i] = state.beta1 * m.values[i] + (1.0 - state.beta1) * gi;
      v.values[i] = state.beta2 * v.values[i] + (1.0 - state.beta2) * gi * gi;
      double mhat = m.values[i] / bc1;
      double vhat = v.values[i] / bc2;
      p.values[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

// Scales all gradients so their joint L2 norm is at most max_norm.
// Returns the factor applied (1.0 when already within bound).
inline double clip_global_norm(GradientMap& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) sq += l2_norm_sq(g.values);
  double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return 1.0;
  double factor = max_norm / norm;
  for (auto& [name, g] : grads)
    for (double& x : g.values) x *= factor;
  return factor;
}

inline double global_grad_norm(const GradientMap& grads) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) sq += l2_norm_sq(g.values);
  return std::sqrt(sq);
}

}  // namespace fairrec

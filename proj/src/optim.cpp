#include "attrxfer/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace attrxfer {

void AdamState::init(const ParamList& params) {
  m.clear();
  v.clear();
  step = 0;
  for (const auto& p : params) {
    m.emplace_back(p.tensor.numel(), 0.0);
    v.emplace_back(p.tensor.numel(), 0.0);
  }
}

void adam_step(ParamList& params, AdamState& state) {
  if (!state.initialized()) state.init(params);
  if (state.m.size() != params.size())
    throw std::invalid_argument("adam_step: state built for " +
                                std::to_string(state.m.size()) +
                                " params, got " + std::to_string(params.size()));
  for (const auto& p : params) {
    if (!p.tensor.requires_grad() || p.tensor.grad().empty())
      throw std::invalid_argument("adam_step: parameter '" + p.name +
                                  "' has no gradient");
  }
  state.step += 1;
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& value = params[k].tensor.raw_value();
    auto& grad = params[k].tensor.raw_grad();
    auto& mk = state.m[k];
    auto& vk = state.v[k];
    if (mk.size() != value.size())
      throw std::invalid_argument("adam_step: parameter '" + params[k].name +
                                  "' changed size");
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      mk[i] = b1 * mk[i] + (1.0 - b1) * g;
      vk[i] = b2 * vk[i] + (1.0 - b2) * g * g;
      const double mhat = mk[i] / bc1;
      const double vhat = vk[i] / bc2;
      value[i] -= state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps);
      grad[i] = 0.0;
    }
  }
}

double clip_grad_norm(ParamList& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.tensor.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& p : params)
      for (double& g : p.tensor.raw_grad()) g *= s;
  }
  return norm;
}

void zero_grads(ParamList& params) {
  for (auto& p : params)
    for (double& g : p.tensor.raw_grad()) g = 0.0;
}

bool has_nonzero_grad(const Tensor& t) {
  for (double g : t.grad())
    if (g != 0.0) return true;
  return false;
}

}  // namespace attrxfer

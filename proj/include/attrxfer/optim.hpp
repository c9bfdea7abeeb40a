#pragma once

#include <string>
#include <vector>

#include "attrxfer/tensor.hpp"

namespace attrxfer {

struct NamedParam {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedParam>;

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moment buffers are index-aligned with the ParamList they were initialized
// from; the step counter is shared across all parameters.
struct AdamState {
  AdamConfig cfg;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m, v;

  void init(const ParamList& params);
  bool initialized() const { return !m.empty(); }
};

// One Adam update over all params. Every parameter must carry a gradient
// buffer; grads are zeroed after the update.
void adam_step(ParamList& params, AdamState& state);

// Scales all grads so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_grad_norm(ParamList& params, double max_norm);

void zero_grads(ParamList& params);

// True iff the tensor has at least one nonzero gradient entry.
bool has_nonzero_grad(const Tensor& t);

}  // namespace attrxfer

// Adam with decoupled weight decay.
#pragma once

#include "mdgmix/model.hpp"

namespace mdgmix {

/// One update: p <- p - lr*wd*p, then the usual bias-corrected Adam step.
/// Moments are allocated on the first call.
inline void adam_step(AdamState& st, const std::vector<NamedParam>& params, const std::vector<Matrix>& grads) {
  if (params.size() != grads.size()) throw DimensionError("adam_step: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i].value->rows() || grads[i].cols() != params[i].value->cols())
      throw DimensionError("adam_step: gradient shape mismatch for " + std::string(params[i].name));
    if (!grads[i].allFinite())
      throw NumericalError("adam_step: non-finite gradient at step " + std::to_string(st.step + 1) + " in " +
                           std::string(params[i].name));
  }
  if (st.m.empty()) {
    for (const auto& p : params) {
      st.m.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
      st.v.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    }
  }
  if (st.m.size() != params.size()) throw DimensionError("adam_step: optimizer state does not match parameters");
  ++st.step;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i].value;
    const Matrix& g = grads[i];
    if (st.weight_decay != 0.0) p *= 1.0 - st.lr * st.weight_decay;
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g.cwiseProduct(g);
    p.array() -= st.lr * (st.m[i].array() / bc1) / ((st.v[i].array() / bc2).sqrt() + st.eps);
  }
}

}  // namespace mdgmix

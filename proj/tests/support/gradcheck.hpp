// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <langtrack/autodiff.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

namespace testsupport {

// Relative error with an absolute floor so near-zero gradients are compared
// absolutely instead of amplifying central-difference noise.
inline double rel_err(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), 1e-2});
  return std::abs(analytic - numeric) / denom;
}

struct GradReport {
  double max_err = 0.0;
  std::string where = "(none)";
};

// Central-difference check of every trainable parameter entry against the
// analytic gradient left in Param::grad by `backprop`. `forward` must
// recompute the scalar loss from the current parameter values.
inline GradReport check_param_grads(langtrack::ParamStore& store,
                                    const std::function<double()>& forward,
                                    const std::function<void()>& backprop,
                                    double h = 1e-5, int stride = 1) {
  backprop();
  GradReport rep;
  for (langtrack::Param* p : store.trainable()) {
    for (Eigen::Index i = 0; i < p->value.size(); i += stride) {
      double* x = p->value.data() + i;
      const double orig = *x;
      const double step = h * std::max(1.0, std::abs(orig));
      *x = orig + step;
      const double up = forward();
      *x = orig - step;
      const double down = forward();
      *x = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p->grad(i);
      const double e = rel_err(analytic, numeric);
      if (e > rep.max_err) {
        rep.max_err = e;
        rep.where = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

// Convenience: the loss is rebuilt from scratch on a fresh tape each call.
using LossBuilder = std::function<langtrack::ad::Var(langtrack::ad::Tape&)>;

inline double eval_loss(const LossBuilder& build) {
  langtrack::ad::Tape t;
  return t.scalar(build(t));
}

inline void backprop_loss(langtrack::ParamStore& store,
                          const LossBuilder& build) {
  store.zero_grads();
  langtrack::ad::Tape t;
  langtrack::ad::Var loss = build(t);
  t.backward(loss);
}

inline GradReport gradcheck(langtrack::ParamStore& store,
                            const LossBuilder& build, double h = 1e-5,
                            int stride = 1) {
  return check_param_grads(
      store, [&] { return eval_loss(build); },
      [&] { backprop_loss(store, build); }, h, stride);
}

}  // namespace testsupport

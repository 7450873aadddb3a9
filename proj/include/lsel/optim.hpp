#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "lsel/matrix.hpp"

namespace lsel::optim {

struct CosineSchedule {
  double lr0 = 1e-4;
  double lr_min = 0.0;
  std::size_t total_steps = 1;
};

// lr_min + (lr0 - lr_min) * (1 + cos(pi * step / total)) / 2; steps past the
// end stay at lr_min.
double cosine_lr(const CosineSchedule& sched, std::size_t step);

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  bool operator==(const AdamWHyper&) const = default;
};

struct AdamWState {
  AdamWHyper hyper;
  std::size_t step = 0;
  std::vector<Vector> m;
  std::vector<Vector> v;

  bool operator==(const AdamWState&) const = default;
};

using ParamList = std::vector<std::span<double>>;
using GradList = std::vector<std::span<const double>>;

// One decoupled-weight-decay Adam step over every parameter group. Moments are
// allocated on first use. A non-finite gradient refuses the whole step and
// leaves parameters and state untouched; the return value reports it.
bool adamw_step(const ParamList& params, const GradList& grads, AdamWState& state, double lr);

// Rescales `grads` so their joint L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(const std::vector<std::span<double>>& grads, double max_norm);

using LossFn = std::function<double(std::span<const double>)>;

// Central differences (L(t + eps e_i) - L(t - eps e_i)) / (2 eps) against
// `analytic`; returns max_i |a_i - f_i| / max(|a_i|, |f_i|, 1e-12).
double finite_diff_check(const LossFn& loss, std::span<const double> params, std::span<const double> analytic,
                         double eps);

Vector flatten(const GradList& parts);

// Writes `flat` back into the spans, in order.
void unflatten(std::span<const double> flat, const ParamList& parts);

}  // namespace lsel::optim

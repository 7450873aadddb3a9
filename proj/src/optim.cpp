#include "lsel/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lsel/errors.hpp"

namespace lsel::optim {

double cosine_lr(const CosineSchedule& sched, std::size_t step) {
  if (sched.total_steps == 0) throw DomainError("cosine schedule needs total_steps >= 1");
  if (step >= sched.total_steps) return sched.lr_min;
  const double t = static_cast<double>(step) / static_cast<double>(sched.total_steps);
  return sched.lr_min + 0.5 * (sched.lr0 - sched.lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

bool adamw_step(const ParamList& params, const GradList& grads, AdamWState& state, double lr) {
  if (params.size() != grads.size()) throw DomainError("adamw_step: parameter/gradient group count mismatch");
  for (std::size_t g = 0; g < params.size(); ++g) {
    if (params[g].size() != grads[g].size()) throw DomainError("adamw_step: group shape mismatch");
    for (double x : grads[g]) {
      if (!std::isfinite(x)) return false;
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw DomainError("adamw_step: state does not match parameters");

  const auto& h = state.hyper;
  const std::size_t t = state.step + 1;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  for (std::size_t g = 0; g < params.size(); ++g) {
    auto& m = state.m[g];
    auto& v = state.v[g];
    for (std::size_t i = 0; i < params[g].size(); ++i) {
      const double grad = grads[g][i];
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * grad;
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * grad * grad;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      double& theta = params[g][i];
      theta -= lr * (m_hat / (std::sqrt(v_hat) + h.eps) + h.weight_decay * theta);
    }
  }
  state.step = t;
  return true;
}

double clip_grad_norm(const std::vector<std::span<double>>& grads, double max_norm) {
  double ss = 0.0;
  for (const auto& g : grads) {
    for (double x : g) ss += x * x;
  }
  const double total = std::sqrt(ss);
  if (max_norm > 0.0 && total > max_norm) {
    const double s = max_norm / total;
    for (const auto& g : grads) {
      for (double& x : g) x *= s;
    }
  }
  return total;
}

double finite_diff_check(const LossFn& loss, std::span<const double> params, std::span<const double> analytic,
                         double eps) {
  if (!(eps > 0.0)) throw DomainError("finite_diff_check: eps must be > 0");
  if (params.size() != analytic.size()) throw DomainError("finite_diff_check: gradient size mismatch");
  Vector theta(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + eps;
    const double up = loss(theta);
    theta[i] = saved - eps;
    const double down = loss(theta);
    theta[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) throw NumericalError("finite_diff_check: non-finite loss");
    const double fd = (up - down) / (2.0 * eps);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(fd), 1e-12});
    worst = std::max(worst, std::abs(a - fd) / denom);
  }
  return worst;
}

Vector flatten(const GradList& parts) {
  Vector out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

void unflatten(std::span<const double> flat, const ParamList& parts) {
  std::size_t pos = 0;
  for (const auto& p : parts) {
    if (pos + p.size() > flat.size()) throw DomainError("unflatten: flat vector too short");
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), p.size(), p.begin());
    pos += p.size();
  }
  if (pos != flat.size()) throw DomainError("unflatten: flat vector too long");
}

}  // namespace lsel::optim

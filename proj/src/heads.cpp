#include "lsel/heads.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lsel/errors.hpp"

namespace lsel::heads {

namespace {

void check_dim(std::size_t expected, std::size_t got, const char* who) {
  if (expected != got) {
    throw DomainError(std::string(who) + ": input has dimension " + std::to_string(got) + ", expected " +
                      std::to_string(expected));
  }
}

Matrix he_normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(cols)));
  Matrix m(rows, cols);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

Vector relu_trunk(const Matrix& w1, const Vector& b1, std::span<const double> h) {
  Vector z = matvec(w1, h);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = std::max(0.0, z[i] + b1[i]);
  return z;
}

// Backprop d(out)/d(trunk activations) `dact` through relu(W1 h + b1).
void trunk_backward(const Vector& act, std::span<const double> h, Vector dact, Matrix& gw1, Vector& gb1) {
  for (std::size_t j = 0; j < act.size(); ++j) {
    if (act[j] <= 0.0) dact[j] = 0.0;
    gb1[j] += dact[j];
  }
  add_outer(gw1, dact, h);
}

}  // namespace

DetectionHead DetectionHead::initialize(std::size_t in_dim, std::size_t hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DetectionHead head;
  head.w1 = he_normal(hidden, in_dim, rng);
  head.b1.assign(hidden, 0.0);
  std::normal_distribution<double> out(0.0, 1.0 / std::sqrt(static_cast<double>(hidden)));
  head.w2.resize(hidden);
  for (double& v : head.w2) v = out(rng);
  return head;
}

std::vector<std::span<double>> DetectionHead::parameters() { return {w1.values(), b1, w2, {&b2, 1}}; }

QualityHead QualityHead::initialize(std::size_t in_dim, std::size_t hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  QualityHead head;
  head.w1 = he_normal(hidden, in_dim, rng);
  head.b1.assign(hidden, 0.0);
  // Zero output layer: predictions start at the bias and the trunk's random
  // features contribute nothing until the regression starts fitting.
  head.w2 = Matrix(kQualityDims, hidden);
  head.b2.assign(kQualityDims, 0.0);
  return head;
}

std::vector<std::span<double>> QualityHead::parameters() { return {w1.values(), b1, w2.values(), b2}; }

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double detect_logit(const DetectionHead& head, std::span<const double> h, Vector* hidden) {
  check_dim(head.in_dim(), h.size(), "detect");
  Vector act = relu_trunk(head.w1, head.b1, h);
  const double logit = dot(head.w2, act) + head.b2;
  if (hidden) *hidden = std::move(act);
  return logit;
}

double detect(const DetectionHead& head, std::span<const double> h) {
  // Keep the result strictly inside (0, 1) even when the logit saturates.
  return std::clamp(logistic(detect_logit(head, h)), kProbClamp, 1.0 - kProbClamp);
}

double bce_loss(double p, int y) {
  const double c = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return y == 1 ? -std::log(c) : -std::log1p(-c);
}

double bce_grad(double p, int y) {
  const double c = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return (c - static_cast<double>(y)) / (c * (1.0 - c));
}

QualityScores predict_quality(const QualityHead& head, std::span<const double> h, Vector* hidden) {
  check_dim(head.in_dim(), h.size(), "predict_quality");
  Vector act = relu_trunk(head.w1, head.b1, h);
  QualityScores out;
  for (std::size_t k = 0; k < kQualityDims; ++k) out[k] = dot(head.w2.row(k), act) + head.b2[k];
  if (hidden) *hidden = std::move(act);
  return out;
}

double quality_loss(std::span<const QualityScores> preds, std::span<const QualityScores> targets) {
  if (preds.size() != targets.size()) throw DomainError("quality_loss: length mismatch");
  if (preds.empty()) throw DomainError("quality_loss: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (std::size_t k = 0; k < kQualityDims; ++k) {
      const double d = preds[i][k] - targets[i][k];
      sum += d * d;
    }
  }
  return sum / static_cast<double>(preds.size());
}

double detection_batch_grad(const DetectionHead& head, std::span<const Vector> inputs,
                            std::span<const int> labels, DetectionGrad& grad) {
  if (inputs.size() != labels.size() || inputs.empty()) {
    throw DomainError("detection_batch_grad: empty batch or label count mismatch");
  }
  const double inv_n = 1.0 / static_cast<double>(inputs.size());
  double loss = 0.0;
  Vector act;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const double logit = detect_logit(head, inputs[i], &act);
    const double p = logistic(logit);
    loss += bce_loss(p, labels[i]);
    // d bce / d logit = p - y, exact for the unclamped logistic.
    const double dlogit = (p - static_cast<double>(labels[i])) * inv_n;
    grad.b2 += dlogit;
    Vector dact(act.size());
    for (std::size_t j = 0; j < act.size(); ++j) {
      grad.w2[j] += dlogit * act[j];
      dact[j] = dlogit * head.w2[j];
    }
    trunk_backward(act, inputs[i], std::move(dact), grad.w1, grad.b1);
  }
  return loss * inv_n;
}

double quality_batch_grad(const QualityHead& head, std::span<const Vector> inputs,
                          std::span<const QualityScores> targets, QualityGrad& grad) {
  if (inputs.size() != targets.size() || inputs.empty()) {
    throw DomainError("quality_batch_grad: empty batch or target count mismatch");
  }
  const double inv_n = 1.0 / static_cast<double>(inputs.size());
  double loss = 0.0;
  Vector act;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const QualityScores pred = predict_quality(head, inputs[i], &act);
    Vector dact(act.size(), 0.0);
    for (std::size_t k = 0; k < kQualityDims; ++k) {
      const double diff = pred[k] - targets[i][k];
      loss += diff * diff;
      const double dout = 2.0 * diff * inv_n;
      grad.b2[k] += dout;
      auto gw2 = grad.w2.row(k);
      const auto w2 = head.w2.row(k);
      for (std::size_t j = 0; j < act.size(); ++j) {
        gw2[j] += dout * act[j];
        dact[j] += dout * w2[j];
      }
    }
    trunk_backward(act, inputs[i], std::move(dact), grad.w1, grad.b1);
  }
  return loss * inv_n;
}

}  // namespace lsel::heads

#pragma once

// Task decoders on the selected layer's (encoded) features.
//
//   detection: p = logistic(w2 . relu(W1 h + b1) + b2)
//   quality:   s = W2 relu(W1 h + b1) + b2, three outputs (s_q, s_e, s_p)

#include <cstdint>
#include <span>
#include <vector>

#include "lsel/matrix.hpp"
#include "lsel/tensor_io.hpp"

namespace lsel::heads {

struct DetectionHead {
  Matrix w1;  // hidden x in
  Vector b1;  // hidden
  Vector w2;  // hidden
  double b2 = 0.0;

  // He-normal trunk, small output layer, zero biases.
  static DetectionHead initialize(std::size_t in_dim, std::size_t hidden, std::uint64_t seed);

  std::size_t in_dim() const noexcept { return w1.cols(); }
  std::size_t hidden() const noexcept { return w1.rows(); }
  std::vector<std::span<double>> parameters();

  bool operator==(const DetectionHead&) const = default;
};

struct DetectionGrad {
  Matrix w1;
  Vector b1;
  Vector w2;
  double b2 = 0.0;

  explicit DetectionGrad(const DetectionHead& head)
      : w1(head.w1.rows(), head.w1.cols()), b1(head.b1.size(), 0.0), w2(head.w2.size(), 0.0) {}

  std::vector<std::span<const double>> views() const { return {w1.values(), b1, w2, {&b2, 1}}; }
};

struct QualityHead {
  Matrix w1;  // hidden x in
  Vector b1;  // hidden
  Matrix w2;  // 3 x hidden
  Vector b2;  // 3

  static QualityHead initialize(std::size_t in_dim, std::size_t hidden, std::uint64_t seed);

  std::size_t in_dim() const noexcept { return w1.cols(); }
  std::size_t hidden() const noexcept { return w1.rows(); }
  std::vector<std::span<double>> parameters();

  bool operator==(const QualityHead&) const = default;
};

struct QualityGrad {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;

  explicit QualityGrad(const QualityHead& head)
      : w1(head.w1.rows(), head.w1.cols()),
        b1(head.b1.size(), 0.0),
        w2(head.w2.rows(), head.w2.cols()),
        b2(head.b2.size(), 0.0) {}

  std::vector<std::span<const double>> views() const { return {w1.values(), b1, w2.values(), b2}; }
};

double logistic(double x);

// Pre-sigmoid output. `hidden` receives the post-ReLU trunk activations.
double detect_logit(const DetectionHead& head, std::span<const double> h, Vector* hidden = nullptr);

// Probability that `h` comes from an edited sample, strictly inside (0, 1).
double detect(const DetectionHead& head, std::span<const double> h);

inline constexpr double kProbClamp = 1e-7;

// -[y ln p + (1-y) ln(1-p)] with p clamped to [1e-7, 1 - 1e-7].
double bce_loss(double p, int y);

// dL/dp of bce_loss (inside the clamp range).
double bce_grad(double p, int y);

QualityScores predict_quality(const QualityHead& head, std::span<const double> h, Vector* hidden = nullptr);

// (1/N) sum_i || pred_i - target_i ||^2 over the three components.
double quality_loss(std::span<const QualityScores> preds, std::span<const QualityScores> targets);

// Mean BCE over the batch; accumulates the gradient of that mean into `grad`.
double detection_batch_grad(const DetectionHead& head, std::span<const Vector> inputs,
                            std::span<const int> labels, DetectionGrad& grad);

// quality_loss over the batch; accumulates its gradient into `grad`.
double quality_batch_grad(const QualityHead& head, std::span<const Vector> inputs,
                          std::span<const QualityScores> targets, QualityGrad& grad);

}  // namespace lsel::heads

#pragma once

// Low-rank adapted projection encoder trained with a supervised triplet
// contrastive objective. The encoder stands in for a frozen backbone whose
// projection receives trainable rank-decomposition matrices:
//
//   y = W x + b + (alpha / r) * B (A x)
//
// W, b are frozen at construction; only A (r x in) and B (out x r) train.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lsel/matrix.hpp"

namespace lsel::adapter {

struct EncoderConfig {
  std::size_t in_dim = 0;
  std::size_t out_dim = 256;
  std::size_t rank = 8;
  double lora_alpha = 16.0;
  double tau = 0.07;
  std::uint64_t init_seed = 0;

  double scale() const { return lora_alpha / static_cast<double>(rank); }
  void validate() const;
};

class LoraLinear {
 public:
  LoraLinear() = default;
  LoraLinear(Matrix base_weight, Vector base_bias, Matrix a, Matrix b, double scale);

  // Frozen base ~ N(0, 1/in_dim) with bias ~ N(0, 1); A ~ N(0, 0.02^2); B = 0.
  static LoraLinear initialize(const EncoderConfig& cfg);

  std::size_t in_dim() const noexcept { return base_weight_.cols(); }
  std::size_t out_dim() const noexcept { return base_weight_.rows(); }
  std::size_t rank() const noexcept { return a_.rows(); }
  double scale() const noexcept { return scale_; }

  const Matrix& base_weight() const noexcept { return base_weight_; }
  const Vector& base_bias() const noexcept { return base_bias_; }
  const Matrix& a() const noexcept { return a_; }
  const Matrix& b() const noexcept { return b_; }
  Matrix& a() noexcept { return a_; }
  Matrix& b() noexcept { return b_; }

  // base(x) + scale * B(A x). When `hidden` is given it receives A x.
  Vector forward(std::span<const double> x, Vector* hidden = nullptr) const;

  // Trainable parameters in a fixed order: A then B.
  std::vector<std::span<double>> parameters();

  bool operator==(const LoraLinear&) const = default;

 private:
  Matrix base_weight_;
  Vector base_bias_;
  Matrix a_;
  Matrix b_;
  double scale_ = 1.0;
};

struct LoraGrad {
  Matrix a;
  Matrix b;

  explicit LoraGrad(const LoraLinear& layer)
      : a(layer.a().rows(), layer.a().cols()), b(layer.b().rows(), layer.b().cols()) {}

  std::vector<std::span<const double>> views() const { return {a.values(), b.values()}; }
};

// Accumulates dL/dA, dL/dB given dL/dy for one input x with cached A x.
void accumulate_lora_grad(const LoraLinear& layer, std::span<const double> x, std::span<const double> hidden,
                          std::span<const double> dy, LoraGrad& grad);

// u.v / (|u| |v|); throws DomainError("degenerate embedding") on a zero vector.
double cosine_sim(std::span<const double> u, std::span<const double> v);

struct Triplet {
  Vector f_src;
  Vector f_pos;
  Vector f_edit;
};

// -ln( e^{s+/tau} / (e^{s+/tau} + e^{s-/tau}) ), evaluated with max-subtraction.
double contrastive_loss(double sim_pos, double sim_neg, double tau);

// Loss of one triplet after encoding its three members.
double contrastive_loss(const LoraLinear& encoder, const Triplet& t, double tau);

struct ContrastiveResult {
  double loss = 0.0;       // mean over used triplets
  LoraGrad grad;           // mean over used triplets
  std::size_t used = 0;
  std::size_t skipped = 0;  // triplets with a zero-norm embedding
};

// Mean loss and analytic gradient over the batch. With `in_batch_negatives`
// each anchor's denominator holds every edited sample in the batch instead of
// only its own.
ContrastiveResult contrastive_grad(const LoraLinear& encoder, std::span<const Triplet> batch, double tau,
                                   bool in_batch_negatives = false);

// Mean loss only; same skipping rule as contrastive_grad.
double contrastive_objective(const LoraLinear& encoder, std::span<const Triplet> batch, double tau,
                             bool in_batch_negatives = false);

struct TripletIndex {
  std::size_t anchor;
  std::size_t positive;
  std::size_t negative;
};

// labels[i] is 0 for real and 1 for edited. Anchors are drawn without
// replacement from the real samples, the positive is a different real sample
// and the negative an edited sample, all uniformly. Deterministic per seed.
std::vector<TripletIndex> sample_triplet_indices(std::span<const int> labels, std::size_t batch,
                                                 std::uint64_t seed);

std::vector<Triplet> sample_triplets(std::span<const Vector> feats, std::span<const int> labels,
                                     std::size_t batch, std::uint64_t seed);

}  // namespace lsel::adapter

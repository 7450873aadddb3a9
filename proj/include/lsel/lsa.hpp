#pragma once

// Layer sensitivity analysis: score every layer of a feature stack by the
// distributional shift between real and edited samples (histogram KL), class
// separability (local discriminant ratio) and information richness (pooled
// activation entropy), min-max normalise each metric across layers and pick
// the layer with the largest sum.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lsel/matrix.hpp"
#include "lsel/tensor_io.hpp"

namespace lsel::lsa {

struct Histogram {
  std::vector<double> edges;  // n_bins + 1, strictly increasing
  std::vector<double> mass;   // n_bins, sums to 1
  double alpha = 0.0;

  std::size_t bins() const noexcept { return mass.size(); }
};

// Equal-width bins over [lo, hi]; values outside the range land in the
// boundary bins. mass_b = (count_b + alpha) / (N + alpha * n_bins).
Histogram estimate_histogram(std::span<const double> values, std::size_t n_bins, double lo, double hi,
                             double alpha);

// sum_b p_b ln(p_b / q_b), in nats.
double kl_divergence(const Histogram& p, const Histogram& q);

// Samples are rows; both matrices share the column (feature) dimension.
struct KlResult {
  double value = 0.0;
  std::size_t constant_dims = 0;  // dimensions with lo == hi, contributing 0
};
KlResult layer_kl(const Matrix& real_feats, const Matrix& edit_feats, std::size_t n_bins, double alpha);

double local_discriminant_ratio(const Matrix& real_feats, const Matrix& edit_feats, double eps);

struct EntropyResult {
  double value = 0.0;
  bool degenerate_range = false;
};
EntropyResult feature_entropy(const Matrix& feats, std::size_t n_bins);

std::vector<double> minmax_normalize(std::span<const double> values);

struct LsaConfig {
  std::size_t bins = 64;
  double alpha = 1e-6;
  double eps = 1e-6;
};

struct LayerProfile {
  std::size_t layer = 0;
  double d_kl = 0.0;
  double ldr = 0.0;
  double entropy = 0.0;
  double d_kl_hat = 0.0;
  double ldr_hat = 0.0;
  double entropy_hat = 0.0;
  double score = 0.0;
};

struct ProfileResult {
  std::vector<LayerProfile> profiles;
  std::vector<std::string> warnings;
};

// Fills the hatted fields and score from the raw metrics.
void normalize_profiles(std::vector<LayerProfile>& profiles);

ProfileResult profile_layers(const FeatureStack& real, const FeatureStack& edited, const LsaConfig& cfg = {});

// Index of the maximum score; ties go to the deeper layer.
std::size_t select_layer(std::span<const LayerProfile> profiles);

// Layer `layer` of every sample as a (samples x dim) matrix.
Matrix layer_matrix(const FeatureStack& stack, std::size_t layer);

}  // namespace lsel::lsa

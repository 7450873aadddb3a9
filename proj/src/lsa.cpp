#include "lsel/lsa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lsel/errors.hpp"

namespace lsel::lsa {

namespace {

std::size_t bin_index(double v, double lo, double hi, std::size_t n_bins) {
  const double t = (v - lo) / (hi - lo) * static_cast<double>(n_bins);
  if (!(t > 0.0)) return 0;  // also catches NaN
  const auto idx = static_cast<std::size_t>(t);
  return std::min(idx, n_bins - 1);
}

std::vector<double> column(const Matrix& m, std::size_t c) {
  std::vector<double> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = m(r, c);
  return out;
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // population
};

Moments column_moments(const Matrix& m, std::size_t c) {
  const double n = static_cast<double>(m.rows());
  double sum = 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) sum += m(r, c);
  const double mean = sum / n;
  double ss = 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double d = m(r, c) - mean;
    ss += d * d;
  }
  return {mean, ss / n};
}

}  // namespace

Histogram estimate_histogram(std::span<const double> values, std::size_t n_bins, double lo, double hi,
                             double alpha) {
  if (!(lo < hi)) throw DomainError("histogram range must satisfy lo < hi");
  if (n_bins < 2) throw DomainError("histogram needs at least 2 bins");
  if (!(alpha >= 0.0)) throw DomainError("smoothing alpha must be non-negative");
  if (values.empty() && alpha == 0.0) throw DomainError("empty input with alpha = 0 has no histogram");

  Histogram h;
  h.alpha = alpha;
  h.edges.resize(n_bins + 1);
  const double width = (hi - lo) / static_cast<double>(n_bins);
  for (std::size_t i = 0; i < n_bins; ++i) h.edges[i] = lo + static_cast<double>(i) * width;
  h.edges[n_bins] = hi;

  std::vector<std::size_t> counts(n_bins, 0);
  for (double v : values) ++counts[bin_index(v, lo, hi, n_bins)];

  const double denom = static_cast<double>(values.size()) + alpha * static_cast<double>(n_bins);
  h.mass.resize(n_bins);
  for (std::size_t i = 0; i < n_bins; ++i) h.mass[i] = (static_cast<double>(counts[i]) + alpha) / denom;
  return h;
}

double kl_divergence(const Histogram& p, const Histogram& q) {
  if (p.edges != q.edges) throw DomainError("kl_divergence: histograms have mismatched edges");
  double kl = 0.0;
  for (std::size_t b = 0; b < p.bins(); ++b) {
    if (p.mass[b] == 0.0) continue;
    if (q.mass[b] == 0.0) throw DomainError("kl_divergence: zero-mass q bin under nonzero p");
    kl += p.mass[b] * std::log(p.mass[b] / q.mass[b]);
  }
  // Rounding can leave a tiny negative residue when p == q up to ulps.
  return std::max(kl, 0.0);
}

KlResult layer_kl(const Matrix& real_feats, const Matrix& edit_feats, std::size_t n_bins, double alpha) {
  if (real_feats.cols() != edit_feats.cols()) throw DomainError("layer_kl: feature dimensions differ");
  if (real_feats.cols() == 0) throw DomainError("layer_kl: zero feature dimension");
  KlResult result;
  double sum = 0.0;
  for (std::size_t d = 0; d < real_feats.cols(); ++d) {
    const auto r = column(real_feats, d);
    const auto e = column(edit_feats, d);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double v : r) lo = std::min(lo, v), hi = std::max(hi, v);
    for (double v : e) lo = std::min(lo, v), hi = std::max(hi, v);
    if (!(lo < hi)) {
      ++result.constant_dims;
      continue;
    }
    sum += kl_divergence(estimate_histogram(r, n_bins, lo, hi, alpha),
                         estimate_histogram(e, n_bins, lo, hi, alpha));
  }
  result.value = sum / static_cast<double>(real_feats.cols());
  return result;
}

double local_discriminant_ratio(const Matrix& real_feats, const Matrix& edit_feats, double eps) {
  if (real_feats.cols() != edit_feats.cols()) throw DomainError("ldr: feature dimensions differ");
  if (real_feats.cols() == 0) throw DomainError("ldr: zero feature dimension");
  if (real_feats.rows() < 2 || edit_feats.rows() < 2) throw DomainError("ldr: each class needs >= 2 samples");
  double sum = 0.0;
  for (std::size_t d = 0; d < real_feats.cols(); ++d) {
    const auto r = column_moments(real_feats, d);
    const auto e = column_moments(edit_feats, d);
    const double gap = r.mean - e.mean;
    const double within = r.var + e.var + eps;
    if (within > 0.0) sum += gap * gap / within;
  }
  return sum / static_cast<double>(real_feats.cols());
}

EntropyResult feature_entropy(const Matrix& feats, std::size_t n_bins) {
  if (feats.empty()) throw DomainError("feature_entropy: empty matrix");
  const auto values = feats.values();
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  if (!(*mn < *mx)) return {0.0, true};
  const Histogram h = estimate_histogram(values, n_bins, *mn, *mx, 0.0);
  double entropy = 0.0;
  for (double p : h.mass) {
    if (p > 0.0) entropy -= p * std::log(p);
  }
  return {std::max(entropy, 0.0), false};
}

std::vector<double> minmax_normalize(std::span<const double> values) {
  if (values.empty()) return {};
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  const double lo = *mn;
  const double range = *mx - *mn;
  std::vector<double> out(values.size(), 0.0);
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - lo) / range;
  return out;
}

void normalize_profiles(std::vector<LayerProfile>& profiles) {
  std::vector<double> kl, ldr, ent;
  for (const auto& p : profiles) {
    kl.push_back(p.d_kl);
    ldr.push_back(p.ldr);
    ent.push_back(p.entropy);
  }
  const auto kl_hat = minmax_normalize(kl);
  const auto ldr_hat = minmax_normalize(ldr);
  const auto ent_hat = minmax_normalize(ent);
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    profiles[i].d_kl_hat = kl_hat[i];
    profiles[i].ldr_hat = ldr_hat[i];
    profiles[i].entropy_hat = ent_hat[i];
    profiles[i].score = kl_hat[i] + ldr_hat[i] + ent_hat[i];
  }
}

Matrix layer_matrix(const FeatureStack& stack, std::size_t layer) {
  Matrix m(stack.n_samples, stack.dim);
  for (std::size_t s = 0; s < stack.n_samples; ++s) {
    const auto f = stack.features(s, layer);
    auto row = m.row(s);
    std::copy(f.begin(), f.end(), row.begin());
  }
  return m;
}

ProfileResult profile_layers(const FeatureStack& real, const FeatureStack& edited, const LsaConfig& cfg) {
  if (real.n_layers != edited.n_layers || real.dim != edited.dim) {
    throw DataError("profile_layers: real and edited stacks differ in n_layers or dim");
  }
  if (real.n_layers == 0) throw DataError("profile_layers: stacks have no layers");

  ProfileResult out;
  out.profiles.resize(real.n_layers);
  for (std::size_t l = 0; l < real.n_layers; ++l) {
    const Matrix r = layer_matrix(real, l);
    const Matrix e = layer_matrix(edited, l);

    auto& p = out.profiles[l];
    p.layer = l;
    const auto kl = layer_kl(r, e, cfg.bins, cfg.alpha);
    p.d_kl = kl.value;
    p.ldr = local_discriminant_ratio(r, e, cfg.eps);
    // Richness is a property of the representation itself, so only the
    // unedited activations enter the entropy term.
    const auto ent = feature_entropy(r, cfg.bins);
    p.entropy = ent.value;
    if (kl.constant_dims > 0) {
      out.warnings.push_back("layer " + std::to_string(l) + ": " + std::to_string(kl.constant_dims) +
                             " constant dimension(s) excluded from KL");
    }
    if (ent.degenerate_range) {
      out.warnings.push_back("layer " + std::to_string(l) + ": all activations identical, entropy 0");
    }
  }
  if (real.n_layers == 1) {
    out.warnings.push_back("single-layer stack: normalisation is degenerate, all scores are 0");
  }
  normalize_profiles(out.profiles);
  return out;
}

std::size_t select_layer(std::span<const LayerProfile> profiles) {
  if (profiles.empty()) throw DomainError("select_layer: no profiles");
  std::size_t best = 0;
  for (std::size_t i = 1; i < profiles.size(); ++i) {
    if (profiles[i].score >= profiles[best].score) best = i;
  }
  return profiles[best].layer;
}

}  // namespace lsel::lsa

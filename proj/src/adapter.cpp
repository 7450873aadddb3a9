#include "lsel/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lsel/errors.hpp"

namespace lsel::adapter {

void EncoderConfig::validate() const {
  if (in_dim == 0 || out_dim == 0) throw DomainError("encoder dimensions must be positive");
  if (rank == 0 || rank > std::min(in_dim, out_dim)) {
    throw DomainError("LoRA rank must be in [1, min(in_dim, out_dim)]");
  }
  if (!(tau > 0.0)) throw DomainError("temperature tau must be > 0");
}

LoraLinear::LoraLinear(Matrix base_weight, Vector base_bias, Matrix a, Matrix b, double scale)
    : base_weight_(std::move(base_weight)),
      base_bias_(std::move(base_bias)),
      a_(std::move(a)),
      b_(std::move(b)),
      scale_(scale) {
  if (base_bias_.size() != base_weight_.rows() || a_.cols() != base_weight_.cols() ||
      b_.rows() != base_weight_.rows() || b_.cols() != a_.rows()) {
    throw DomainError("LoraLinear: inconsistent matrix shapes");
  }
}

LoraLinear LoraLinear::initialize(const EncoderConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.init_seed);
  std::normal_distribution<double> base_dist(0.0, 1.0 / std::sqrt(static_cast<double>(cfg.in_dim)));
  std::normal_distribution<double> bias_dist(0.0, 1.0);
  std::normal_distribution<double> a_dist(0.0, 0.02);

  Matrix w(cfg.out_dim, cfg.in_dim);
  for (double& v : w.values()) v = base_dist(rng);
  Vector bias(cfg.out_dim);
  for (double& v : bias) v = bias_dist(rng);
  Matrix a(cfg.rank, cfg.in_dim);
  for (double& v : a.values()) v = a_dist(rng);
  return {std::move(w), std::move(bias), std::move(a), Matrix(cfg.out_dim, cfg.rank), cfg.scale()};
}

Vector LoraLinear::forward(std::span<const double> x, Vector* hidden) const {
  if (x.size() != in_dim()) {
    throw DomainError("lora_forward: input has dimension " + std::to_string(x.size()) + ", expected " +
                      std::to_string(in_dim()));
  }
  Vector y = matvec(base_weight_, x);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += base_bias_[i];
  Vector h = matvec(a_, x);
  const Vector delta = matvec(b_, h);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += scale_ * delta[i];
  if (hidden) *hidden = std::move(h);
  return y;
}

std::vector<std::span<double>> LoraLinear::parameters() { return {a_.values(), b_.values()}; }

void accumulate_lora_grad(const LoraLinear& layer, std::span<const double> x, std::span<const double> hidden,
                          std::span<const double> dy, LoraGrad& grad) {
  add_outer(grad.b, dy, hidden, layer.scale());
  const Vector back = matvec_transposed(layer.b(), dy);
  add_outer(grad.a, back, x, layer.scale());
}

double cosine_sim(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DomainError("cosine_sim: dimension mismatch");
  const double nu = norm(u);
  const double nv = norm(v);
  if (nu == 0.0 || nv == 0.0) throw DomainError("degenerate embedding");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

double contrastive_loss(double sim_pos, double sim_neg, double tau) {
  if (!(tau > 0.0)) throw DomainError("contrastive_loss: tau must be > 0");
  if (std::isnan(sim_pos) || std::isnan(sim_neg)) throw DomainError("contrastive_loss: NaN similarity");
  const double a = sim_pos / tau;
  const double b = sim_neg / tau;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m)) - a;
}

double contrastive_loss(const LoraLinear& encoder, const Triplet& t, double tau) {
  const Vector src = encoder.forward(t.f_src);
  const Vector pos = encoder.forward(t.f_pos);
  const Vector neg = encoder.forward(t.f_edit);
  return contrastive_loss(cosine_sim(src, pos), cosine_sim(src, neg), tau);
}

namespace {

struct Encoded {
  Vector y;
  Vector hidden;
  double norm = 0.0;
};

Encoded encode(const LoraLinear& enc, std::span<const double> x) {
  Encoded e;
  e.y = enc.forward(x, &e.hidden);
  e.norm = lsel::norm(e.y);
  return e;
}

// d cos(u, v) / du, scaled by `coef` and added into `out`.
void add_cos_grad(const Encoded& u, const Encoded& v, double cos, double coef, Vector& out) {
  const double inv = 1.0 / (u.norm * v.norm);
  const double self = cos / (u.norm * u.norm);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += coef * (v.y[i] * inv - u.y[i] * self);
}

struct BatchPass {
  double loss_sum = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;
};

// Shared forward (and optional backward) over a batch of triplets.
BatchPass run_batch(const LoraLinear& enc, std::span<const Triplet> batch, double tau, bool in_batch_negatives,
                    LoraGrad* grad) {
  if (!(tau > 0.0)) throw DomainError("contrastive: tau must be > 0");
  struct Item {
    const Triplet* t;
    Encoded src, pos, edit;
  };
  std::vector<Item> items;
  BatchPass pass;
  for (const auto& t : batch) {
    Item it{&t, encode(enc, t.f_src), encode(enc, t.f_pos), encode(enc, t.f_edit)};
    if (it.src.norm == 0.0 || it.pos.norm == 0.0 || it.edit.norm == 0.0) {
      ++pass.skipped;
      continue;
    }
    items.push_back(std::move(it));
  }
  pass.used = items.size();
  if (items.empty()) return pass;

  const double inv_n = 1.0 / static_cast<double>(items.size());
  // Gradients w.r.t. every embedding; edits may receive contributions from
  // several anchors when negatives are shared.
  std::vector<Vector> d_src, d_pos, d_edit;
  if (grad) {
    d_src.assign(items.size(), Vector(enc.out_dim(), 0.0));
    d_pos = d_src;
    d_edit = d_src;
  }

  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    const double s_pos = std::clamp(dot(it.src.y, it.pos.y) / (it.src.norm * it.pos.norm), -1.0, 1.0);

    std::vector<std::size_t> negs;
    if (in_batch_negatives) {
      negs.resize(items.size());
      std::iota(negs.begin(), negs.end(), 0);
    } else {
      negs = {i};
    }
    std::vector<double> s_neg(negs.size());
    for (std::size_t k = 0; k < negs.size(); ++k) {
      const auto& e = items[negs[k]].edit;
      s_neg[k] = std::clamp(dot(it.src.y, e.y) / (it.src.norm * e.norm), -1.0, 1.0);
    }

    // Stable log-sum-exp over {pos} U negs.
    double m = s_pos / tau;
    for (double s : s_neg) m = std::max(m, s / tau);
    double z = std::exp(s_pos / tau - m);
    std::vector<double> w(negs.size());
    for (std::size_t k = 0; k < negs.size(); ++k) z += (w[k] = std::exp(s_neg[k] / tau - m));
    const double loss = m + std::log(z) - s_pos / tau;
    if (!std::isfinite(loss)) throw NumericalError("contrastive loss is not finite");
    pass.loss_sum += loss;

    if (!grad) continue;
    // dL/ds_pos = (p_pos - 1)/tau, dL/ds_neg_k = p_k/tau.
    const double p_pos = std::exp(s_pos / tau - m) / z;
    const double g_pos = (p_pos - 1.0) / tau * inv_n;
    add_cos_grad(it.src, it.pos, s_pos, g_pos, d_src[i]);
    add_cos_grad(it.pos, it.src, s_pos, g_pos, d_pos[i]);
    for (std::size_t k = 0; k < negs.size(); ++k) {
      const double g_neg = w[k] / z / tau * inv_n;
      const auto& e = items[negs[k]].edit;
      add_cos_grad(it.src, e, s_neg[k], g_neg, d_src[i]);
      add_cos_grad(e, it.src, s_neg[k], g_neg, d_edit[negs[k]]);
    }
  }

  if (grad) {
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto& it = items[i];
      accumulate_lora_grad(enc, it.t->f_src, it.src.hidden, d_src[i], *grad);
      accumulate_lora_grad(enc, it.t->f_pos, it.pos.hidden, d_pos[i], *grad);
      accumulate_lora_grad(enc, it.t->f_edit, it.edit.hidden, d_edit[i], *grad);
    }
  }
  return pass;
}

}  // namespace

ContrastiveResult contrastive_grad(const LoraLinear& encoder, std::span<const Triplet> batch, double tau,
                                   bool in_batch_negatives) {
  if (batch.empty()) throw DomainError("contrastive_grad: empty batch");
  ContrastiveResult result{0.0, LoraGrad(encoder), 0, 0};
  const BatchPass pass = run_batch(encoder, batch, tau, in_batch_negatives, &result.grad);
  result.used = pass.used;
  result.skipped = pass.skipped;
  if (pass.used > 0) result.loss = pass.loss_sum / static_cast<double>(pass.used);
  return result;
}

double contrastive_objective(const LoraLinear& encoder, std::span<const Triplet> batch, double tau,
                             bool in_batch_negatives) {
  const BatchPass pass = run_batch(encoder, batch, tau, in_batch_negatives, nullptr);
  return pass.used > 0 ? pass.loss_sum / static_cast<double>(pass.used) : 0.0;
}

std::vector<TripletIndex> sample_triplet_indices(std::span<const int> labels, std::size_t batch,
                                                 std::uint64_t seed) {
  std::vector<std::size_t> reals, edits;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 0 ? reals : edits).push_back(i);
  if (reals.size() < 2 || edits.empty()) {
    throw DataError("sample_triplets: need >= 2 real and >= 1 edited sample, have " +
                    std::to_string(reals.size()) + " real and " + std::to_string(edits.size()) + " edited");
  }
  if (batch > reals.size()) {
    throw DataError("sample_triplets: batch " + std::to_string(batch) + " exceeds the " +
                    std::to_string(reals.size()) + " available anchors");
  }

  std::mt19937_64 rng(seed);
  std::vector<TripletIndex> out;
  out.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    // Partial Fisher-Yates: reals[0, i) hold the anchors already used.
    std::uniform_int_distribution<std::size_t> pick_anchor(i, reals.size() - 1);
    std::swap(reals[i], reals[pick_anchor(rng)]);
    const std::size_t anchor = reals[i];

    std::uniform_int_distribution<std::size_t> pick_pos(0, reals.size() - 2);
    std::size_t j = pick_pos(rng);
    if (j >= i) ++j;  // skip the anchor's slot
    std::uniform_int_distribution<std::size_t> pick_neg(0, edits.size() - 1);
    out.push_back({anchor, reals[j], edits[pick_neg(rng)]});
  }
  return out;
}

std::vector<Triplet> sample_triplets(std::span<const Vector> feats, std::span<const int> labels,
                                     std::size_t batch, std::uint64_t seed) {
  if (feats.size() != labels.size()) throw DataError("sample_triplets: feature/label count mismatch");
  std::vector<Triplet> out;
  for (const auto& idx : sample_triplet_indices(labels, batch, seed)) {
    out.push_back({feats[idx.anchor], feats[idx.positive], feats[idx.negative]});
  }
  return out;
}

}  // namespace lsel::adapter

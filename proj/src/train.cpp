#include "lsel/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include <nlohmann/json.hpp>

#include "lsel/seed.hpp"

namespace lsel::optim {

namespace {

enum Stream : std::uint64_t {
  kEncoderInit = 1,
  kDetectionInit = 2,
  kQualityInit = 3,
  kValTriplets = 4,
  kTripletBase = 1'000'000,
  kShuffleBase = 2'000'000,
};

constexpr std::size_t kValTripletCap = 256;

std::vector<Vector> normalize_all(const Normalizer& n, const LabeledFeatures& data) {
  std::vector<Vector> out;
  out.reserve(data.size());
  for (const auto& f : data.feats) out.push_back(n.apply(f));
  return out;
}

std::vector<Vector> embed_all(const Checkpoint& c, const LabeledFeatures& data) {
  std::vector<Vector> out;
  out.reserve(data.size());
  for (const auto& f : data.feats) out.push_back(c.embed(f));
  return out;
}

bool can_sample_triplets(const LabeledFeatures& d) { return d.count(0) >= 2 && d.count(1) >= 1; }

[[noreturn]] void diverged(const std::string& stage, std::size_t step, std::vector<LossRecord>& trace) {
  throw TrainingDiverged(stage + " stage diverged at step " + std::to_string(step), std::move(trace));
}

}  // namespace

Checkpoint initialize_checkpoint(const LabeledFeatures& train_set, const TrainConfig& cfg) {
  if (train_set.size() == 0) throw DataError("training split is empty");
  Checkpoint c;
  c.layer = cfg.layer;
  c.hidden = cfg.hidden;
  c.normalizer = Normalizer::fit(train_set.feats);

  c.encoder_config.in_dim = train_set.feats.front().size();
  c.encoder_config.out_dim = cfg.embed_dim;
  c.encoder_config.rank = cfg.rank;
  c.encoder_config.lora_alpha = cfg.lora_alpha;
  c.encoder_config.tau = cfg.tau;
  c.encoder_config.init_seed = derive_seed(cfg.seed, kEncoderInit);
  c.encoder = adapter::LoraLinear::initialize(c.encoder_config);

  c.detection = heads::DetectionHead::initialize(cfg.embed_dim, cfg.hidden, derive_seed(cfg.seed, kDetectionInit));
  c.quality = heads::QualityHead::initialize(cfg.embed_dim, cfg.hidden, derive_seed(cfg.seed, kQualityInit));

  QualityScores mean{};
  std::size_t n = 0;
  for (const auto& s : train_set.scores) {
    if (!s) continue;
    for (std::size_t k = 0; k < kQualityDims; ++k) mean[k] += (*s)[k];
    ++n;
  }
  if (n > 0) {
    for (std::size_t k = 0; k < kQualityDims; ++k) c.quality.b2[k] = mean[k] / static_cast<double>(n);
  }
  return c;
}

double heads_objective(const Checkpoint& ckpt, const std::vector<Vector>& embedded, const LabeledFeatures& data) {
  double bce = 0.0;
  std::vector<QualityScores> preds, targets;
  for (std::size_t i = 0; i < embedded.size(); ++i) {
    bce += heads::bce_loss(heads::detect(ckpt.detection, embedded[i]), data.labels[i]);
    if (data.scores[i]) {
      preds.push_back(heads::predict_quality(ckpt.quality, embedded[i]));
      targets.push_back(*data.scores[i]);
    }
  }
  double obj = embedded.empty() ? 0.0 : bce / static_cast<double>(embedded.size());
  if (!preds.empty()) obj += heads::quality_loss(preds, targets);
  return obj;
}

TrainResult train(const LabeledFeatures& train_set, const LabeledFeatures& val_set, const TrainConfig& cfg) {
  if (cfg.batch == 0) throw DataError("batch size must be positive");
  TrainResult result;
  result.checkpoint = initialize_checkpoint(train_set, cfg);
  Checkpoint& ckpt = result.checkpoint;
  auto& trace = result.trace;

  // ---- stage 1: contrastive tuning of the adapter -------------------------
  const auto train_x = normalize_all(ckpt.normalizer, train_set);
  if (cfg.adapter_epochs > 0) {
    if (!can_sample_triplets(train_set)) {
      throw DataError("contrastive stage needs >= 2 real and >= 1 edited training sample");
    }
    const std::size_t n_real = train_set.count(0);
    const std::size_t batch = std::min(cfg.batch, n_real);
    const std::size_t steps_per_epoch = std::max<std::size_t>(1, n_real / batch);
    const CosineSchedule sched{cfg.lr_adapter, cfg.lr_min, cfg.adapter_epochs * steps_per_epoch};

    const bool val_ok = can_sample_triplets(val_set);
    const LabeledFeatures& val_source = val_ok ? val_set : train_set;
    const auto val_x = val_ok ? normalize_all(ckpt.normalizer, val_set) : train_x;
    const auto val_triplets = adapter::sample_triplets(
        val_x, val_source.labels, std::min(kValTripletCap, val_source.count(0)), derive_seed(cfg.seed, kValTriplets));
    if (!val_ok) result.warnings.push_back("validation split cannot form triplets; selecting on training triplets");

    adapter::LoraLinear best = ckpt.encoder;
    result.best_adapter_val =
        adapter::contrastive_objective(ckpt.encoder, val_triplets, cfg.tau, cfg.in_batch_negatives);
    AdamWState state;
    state.hyper = cfg.hyper;
    std::size_t step = 0;
    std::size_t skipped = 0;
    for (std::size_t epoch = 1; epoch <= cfg.adapter_epochs; ++epoch) {
      for (std::size_t s = 0; s < steps_per_epoch; ++s, ++step) {
        const auto triplets = adapter::sample_triplets(train_x, train_set.labels, batch,
                                                       derive_seed(cfg.seed, kTripletBase + step));
        auto res = adapter::contrastive_grad(ckpt.encoder, triplets, cfg.tau, cfg.in_batch_negatives);
        skipped += res.skipped;
        const double lr = cosine_lr(sched, step);
        trace.push_back({step, "contrastive", lr, res.loss});
        if (!std::isfinite(res.loss)) diverged("contrastive", step, trace);
        if (cfg.clip_norm > 0.0) clip_grad_norm({res.grad.a.values(), res.grad.b.values()}, cfg.clip_norm);
        if (!adamw_step(ckpt.encoder.parameters(), res.grad.views(), state, lr)) diverged("contrastive", step, trace);
      }
      const double val = adapter::contrastive_objective(ckpt.encoder, val_triplets, cfg.tau, cfg.in_batch_negatives);
      if (!std::isfinite(val)) diverged("contrastive", step, trace);
      if (val < result.best_adapter_val) {
        result.best_adapter_val = val;
        result.best_adapter_epoch = epoch;
        best = ckpt.encoder;
      }
    }
    ckpt.encoder = std::move(best);
    if (skipped > 0) {
      result.warnings.push_back(std::to_string(skipped) + " triplet(s) skipped for degenerate embeddings");
    }
  }

  // ---- stage 2: heads on the frozen encoder ------------------------------
  const auto train_h = embed_all(ckpt, train_set);
  const bool has_val = val_set.size() > 0;
  const auto val_h = has_val ? embed_all(ckpt, val_set) : train_h;
  const LabeledFeatures& head_val = has_val ? val_set : train_set;
  result.best_head_val = heads_objective(ckpt, val_h, head_val);

  if (cfg.head_epochs > 0) {
    const std::size_t n = train_set.size();
    const std::size_t steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
    const CosineSchedule sched{cfg.lr_heads, cfg.lr_min, cfg.head_epochs * steps_per_epoch};
    AdamWState det_state;
    det_state.hyper = cfg.hyper;
    AdamWState qual_state;
    qual_state.hyper = cfg.hyper;
    heads::DetectionHead best_det = ckpt.detection;
    heads::QualityHead best_qual = ckpt.quality;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::size_t step = 0;
    std::vector<Vector> det_in, qual_in;
    std::vector<int> det_y;
    std::vector<QualityScores> qual_y;
    for (std::size_t epoch = 1; epoch <= cfg.head_epochs; ++epoch) {
      std::mt19937_64 rng(derive_seed(cfg.seed, kShuffleBase + epoch));
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t begin = 0; begin < n; begin += cfg.batch, ++step) {
        det_in.clear();
        det_y.clear();
        qual_in.clear();
        qual_y.clear();
        for (std::size_t j = begin; j < std::min(n, begin + cfg.batch); ++j) {
          const std::size_t i = order[j];
          det_in.push_back(train_h[i]);
          det_y.push_back(train_set.labels[i]);
          if (train_set.scores[i]) {
            qual_in.push_back(train_h[i]);
            qual_y.push_back(*train_set.scores[i]);
          }
        }
        const double lr = cosine_lr(sched, step);
        heads::DetectionGrad dg(ckpt.detection);
        double loss = heads::detection_batch_grad(ckpt.detection, det_in, det_y, dg);
        heads::QualityGrad qg(ckpt.quality);
        if (!qual_in.empty()) loss += heads::quality_batch_grad(ckpt.quality, qual_in, qual_y, qg);
        trace.push_back({step, "heads", lr, loss});
        if (!std::isfinite(loss)) diverged("heads", step, trace);
        if (cfg.clip_norm > 0.0) {
          clip_grad_norm({dg.w1.values(), dg.b1, dg.w2, {&dg.b2, 1}}, cfg.clip_norm);
          clip_grad_norm({qg.w1.values(), qg.b1, qg.w2.values(), qg.b2}, cfg.clip_norm);
        }
        if (!adamw_step(ckpt.detection.parameters(), dg.views(), det_state, lr)) diverged("heads", step, trace);
        if (!qual_in.empty() && !adamw_step(ckpt.quality.parameters(), qg.views(), qual_state, lr)) {
          diverged("heads", step, trace);
        }
      }
      const double val = heads_objective(ckpt, val_h, head_val);
      if (!std::isfinite(val)) diverged("heads", step, trace);
      if (val < result.best_head_val) {
        result.best_head_val = val;
        result.best_head_epoch = epoch;
        best_det = ckpt.detection;
        best_qual = ckpt.quality;
      }
    }
    ckpt.detection = std::move(best_det);
    ckpt.quality = std::move(best_qual);
  }
  return result;
}

void write_loss_trace(const std::vector<LossRecord>& trace, std::ostream& out) {
  for (const auto& r : trace) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["stage"] = r.stage;
    j["lr"] = r.lr;
    j["loss"] = r.loss;
    out << j.dump() << '\n';
  }
}

}  // namespace lsel::optim

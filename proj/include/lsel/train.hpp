#pragma once

// Two-stage training: the LoRA encoder is tuned with the triplet contrastive
// objective first, then frozen while the detection and quality heads train on
// its outputs. Each stage runs AdamW under a cosine-annealed learning rate and
// keeps the epoch with the best validation objective.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lsel/adapter.hpp"
#include "lsel/checkpoint.hpp"
#include "lsel/dataset.hpp"
#include "lsel/errors.hpp"
#include "lsel/optim.hpp"

namespace lsel::optim {

struct TrainConfig {
  std::size_t layer = 0;
  std::size_t embed_dim = 256;
  std::size_t rank = 8;
  double lora_alpha = 16.0;
  double tau = 0.07;
  std::size_t hidden = 256;
  std::size_t adapter_epochs = 30;
  std::size_t head_epochs = 30;
  std::size_t batch = 32;
  double lr_adapter = 1e-4;
  double lr_heads = 5e-5;
  double lr_min = 0.0;
  AdamWHyper hyper;
  double clip_norm = 0.0;  // 0 disables clipping
  bool in_batch_negatives = false;
  std::uint64_t seed = 0;
};

struct LossRecord {
  std::size_t step = 0;
  std::string stage;  // "contrastive" or "heads"
  double lr = 0.0;
  double loss = 0.0;

  bool operator==(const LossRecord&) const = default;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> trace;
  std::size_t best_adapter_epoch = 0;  // 0 = initialization kept
  std::size_t best_head_epoch = 0;
  double best_adapter_val = 0.0;
  double best_head_val = 0.0;
  std::vector<std::string> warnings;
};

class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, std::vector<LossRecord> trace)
      : NumericalError(what), trace_(std::move(trace)) {}
  const std::vector<LossRecord>& trace() const noexcept { return trace_; }

 private:
  std::vector<LossRecord> trace_;
};

// Untrained model for `train_set`: normalizer fitted on it, fresh encoder and
// heads, quality output bias set to the mean training target.
Checkpoint initialize_checkpoint(const LabeledFeatures& train_set, const TrainConfig& cfg);

TrainResult train(const LabeledFeatures& train_set, const LabeledFeatures& val_set, const TrainConfig& cfg);

// Validation objective of the heads stage: mean BCE + quality MSE.
double heads_objective(const Checkpoint& ckpt, const std::vector<Vector>& embedded, const LabeledFeatures& data);

void write_loss_trace(const std::vector<LossRecord>& trace, std::ostream& out);

}  // namespace lsel::optim

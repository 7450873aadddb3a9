#pragma once

// Synthetic benchmark with planted ground truth. Every layer draws real and
// edited features from the same per-layer Gaussian except the informative
// layer, where the edited class is shifted by `shift` standard deviations in
// a random quarter of the dimensions, its spread is inflated by 1 + 0.05 *
// shift, and a standardized quality latent z is written along a unit
// direction inside the shifted dimensions. Quality scores are
// intercept + slope * z + N(0, noise^2), clipped to [1, 5]. The latent mean
// of each editor is a fixed, strictly decreasing bias, so editor_00 is the
// best-ranked model by construction.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "lsel/matrix.hpp"
#include "lsel/tensor_io.hpp"

namespace lsel::synth {

struct SynthConfig {
  std::size_t n_editors = 17;
  std::size_t samples_per_editor = 100;
  std::size_t n_layers = 12;
  std::size_t dim = 64;
  std::optional<std::size_t> informative_layer;  // drawn from the seed when unset
  double shift = 2.0;
  double noise = 0.2;
  std::uint64_t seed = 1;
  SplitRatios split;

  void validate() const;
};

struct PlantedTruth {
  std::size_t informative_layer = 0;
  std::vector<std::size_t> shifted_dims;  // sorted
  Vector direction;                       // length dim, unit norm, zero outside shifted_dims
  double shift = 0.0;
  double variance_inflation = 1.0;        // std multiplier of the edited class on shifted dims
  double latent_sd = 1.0;                 // sd of (bias + within-editor noise) before standardizing
  double within_editor_sd = 0.5;
  double noise = 0.0;
  std::array<double, 3> intercept{};
  std::array<double, 3> slope{};
  std::vector<std::string> editors;
  Vector editor_bias;  // latent units, strictly decreasing
  Matrix layer_mean;   // n_layers x dim
  Matrix layer_std;    // n_layers x dim
};

PlantedTruth describe_planted_truth(const SynthConfig& cfg);

nlohmann::json truth_to_json(const PlantedTruth& truth);

struct Benchmark {
  FeatureStack real;
  FeatureStack edited;
  DatasetManifest manifest;
  PlantedTruth truth;
  Vector latent;                              // standardized z per edited sample
  std::vector<QualityScores> latent_scores;   // per edited sample, before clipping
};

Benchmark generate_benchmark(const SynthConfig& cfg);

}  // namespace lsel::synth

#include "lsel/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "lsel/errors.hpp"
#include "lsel/seed.hpp"

namespace lsel::synth {

namespace {

constexpr double kWithinEditorSd = 0.5;
constexpr double kBiasSpan = 1.5;  // editor biases cover [-1.5, 1.5]
constexpr std::array<double, 3> kIntercept = {3.0, 3.0, 3.0};
constexpr std::array<double, 3> kSlope = {0.8, 0.7, 0.6};

constexpr const char* kPrompts[] = {
    "raise the left arm above the head", "make the person sit down",  "turn the body to face left",
    "cross both arms over the chest",    "put both hands on the hips", "lift the right knee",
    "wave with the right hand",          "lean forward slightly",      "spread both arms wide",
    "tilt the head to one side",
};

std::string numbered(const char* prefix, std::size_t k, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, k);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_editors == 0 || samples_per_editor == 0) throw DataError("synth: need at least one editor and sample");
  if (n_layers == 0 || dim == 0) throw DataError("synth: n_layers and dim must be positive");
  if (informative_layer && *informative_layer >= n_layers) throw DataError("synth: informative_layer >= n_layers");
  if (!(shift >= 0.0)) throw DataError("synth: shift must be >= 0");
  if (!(noise >= 0.0)) throw DataError("synth: noise must be >= 0");
}

PlantedTruth describe_planted_truth(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(cfg.seed, 0));
  PlantedTruth t;

  if (cfg.informative_layer) {
    t.informative_layer = *cfg.informative_layer;
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, cfg.n_layers - 1);
    t.informative_layer = pick(rng);
  }

  const auto n_shift = static_cast<std::size_t>(std::llround(0.25 * static_cast<double>(cfg.dim)));
  std::vector<std::size_t> dims(cfg.dim);
  std::iota(dims.begin(), dims.end(), 0);
  std::shuffle(dims.begin(), dims.end(), rng);
  t.shifted_dims.assign(dims.begin(), dims.begin() + static_cast<std::ptrdiff_t>(n_shift));
  std::sort(t.shifted_dims.begin(), t.shifted_dims.end());

  // Quality direction: random on the shifted dims, orthogonal to their
  // all-ones (shift) direction when there is room for it.
  std::normal_distribution<double> gauss(0.0, 1.0);
  t.direction.assign(cfg.dim, 0.0);
  if (n_shift > 0) {
    Vector w(n_shift);
    for (double& v : w) v = gauss(rng);
    if (n_shift >= 2) {
      const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(n_shift);
      for (double& v : w) v -= mean;
    }
    const double len = norm(w);
    for (std::size_t i = 0; i < n_shift; ++i) t.direction[t.shifted_dims[i]] = w[i] / len;
  }

  t.shift = cfg.shift;
  t.variance_inflation = 1.0 + 0.05 * cfg.shift;
  t.noise = cfg.noise;
  t.within_editor_sd = kWithinEditorSd;
  t.intercept = kIntercept;
  t.slope = kSlope;

  const std::size_t n_ed = cfg.n_editors;
  double bias_var = 0.0;
  for (std::size_t e = 0; e < n_ed; ++e) {
    t.editors.push_back(numbered("editor_", e, 2));
    const double b = n_ed == 1 ? 0.0 : kBiasSpan - 2.0 * kBiasSpan * static_cast<double>(e) / static_cast<double>(n_ed - 1);
    t.editor_bias.push_back(b);
    bias_var += b * b / static_cast<double>(n_ed);
  }
  t.latent_sd = std::sqrt(bias_var + kWithinEditorSd * kWithinEditorSd);

  std::uniform_real_distribution<double> spread(0.5, 1.5);
  t.layer_mean = Matrix(cfg.n_layers, cfg.dim);
  t.layer_std = Matrix(cfg.n_layers, cfg.dim);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    for (std::size_t d = 0; d < cfg.dim; ++d) {
      t.layer_mean(l, d) = gauss(rng);
      t.layer_std(l, d) = spread(rng);
    }
  }
  return t;
}

nlohmann::json truth_to_json(const PlantedTruth& t) {
  nlohmann::ordered_json j;
  j["informative_layer"] = t.informative_layer;
  j["shifted_dims"] = t.shifted_dims;
  j["direction"] = t.direction;
  j["shift"] = t.shift;
  j["variance_inflation"] = t.variance_inflation;
  j["latent_sd"] = t.latent_sd;
  j["within_editor_sd"] = t.within_editor_sd;
  j["noise"] = t.noise;
  j["intercept"] = t.intercept;
  j["slope"] = t.slope;
  j["editors"] = t.editors;
  j["editor_bias"] = t.editor_bias;
  return j;
}

Benchmark generate_benchmark(const SynthConfig& cfg) {
  Benchmark bm;
  bm.truth = describe_planted_truth(cfg);
  const auto& t = bm.truth;
  const std::size_t per = cfg.samples_per_editor;
  const std::size_t total = cfg.n_editors * per;

  bm.real = FeatureStack(total, cfg.n_layers, cfg.dim);
  bm.edited = FeatureStack(total, cfg.n_layers, cfg.dim);
  bm.latent.resize(total);
  bm.latent_scores.resize(total);

  std::vector<bool> shifted(cfg.dim, false);
  for (std::size_t d : t.shifted_dims) shifted[d] = true;
  const std::size_t L = t.informative_layer;

  auto fill_plain = [&](std::span<float> out, std::size_t layer, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t d = 0; d < cfg.dim; ++d) {
      out[d] = static_cast<float>(t.layer_mean(layer, d) + t.layer_std(layer, d) * g(rng));
    }
  };

  for (std::size_t e = 0; e < cfg.n_editors; ++e) {
    std::mt19937_64 rng(derive_seed(cfg.seed, e + 1));
    std::normal_distribution<double> g(0.0, 1.0);

    // Within-editor latent noise, centred so each editor's mean is its bias.
    Vector u(per);
    for (double& v : u) v = kWithinEditorSd * g(rng);
    const double u_mean = std::accumulate(u.begin(), u.end(), 0.0) / static_cast<double>(per);
    for (double& v : u) v -= u_mean;

    for (std::size_t i = 0; i < per; ++i) {
      const std::size_t k = e * per + i;
      const std::string src = numbered("src_", k, 5);
      const std::string edit = numbered("edit_", k, 5);
      bm.real.sample_ids[k] = numbered("real_", k, 5);
      bm.edited.sample_ids[k] = edit;

      for (std::size_t l = 0; l < cfg.n_layers; ++l) fill_plain(bm.real.features(k, l), l, rng);
      for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        if (l != L) fill_plain(bm.edited.features(k, l), l, rng);
      }

      // Informative layer of the edited sample: residual r ~ N(0, I) with its
      // component along the quality direction replaced by z.
      const double z = (t.editor_bias[e] + u[i]) / t.latent_sd;
      Vector r(cfg.dim);
      for (double& v : r) v = g(rng);
      const double along = dot(r, t.direction);
      auto out = bm.edited.features(k, L);
      for (std::size_t d = 0; d < cfg.dim; ++d) {
        if (shifted[d]) {
          const double rd = r[d] + (z - along) * t.direction[d];
          out[d] = static_cast<float>(t.layer_mean(L, d) +
                                      t.layer_std(L, d) * (t.shift + t.variance_inflation * rd));
        } else {
          out[d] = static_cast<float>(t.layer_mean(L, d) + t.layer_std(L, d) * r[d]);
        }
      }

      bm.latent[k] = z;
      QualityScores latent, clipped;
      for (std::size_t q = 0; q < kQualityDims; ++q) {
        latent[q] = t.intercept[q] + t.slope[q] * z + cfg.noise * g(rng);
        clipped[q] = std::clamp(latent[q], 1.0, 5.0);
      }
      bm.latent_scores[k] = latent;

      SampleRecord real_rec;
      real_rec.sample_id = bm.real.sample_ids[k];
      real_rec.src_id = src;
      real_rec.y_auth = 0;
      bm.manifest.records.push_back(std::move(real_rec));

      SampleRecord edit_rec;
      edit_rec.sample_id = edit;
      edit_rec.src_id = src;
      edit_rec.edit_id = edit;
      edit_rec.prompt = kPrompts[k % std::size(kPrompts)];
      edit_rec.y_auth = 1;
      edit_rec.scores = clipped;
      edit_rec.editor = t.editors[e];
      bm.manifest.records.push_back(std::move(edit_rec));
    }
  }
  bm.manifest.rebuild_editors();
  bm.manifest = split_dataset(bm.manifest, cfg.split, cfg.seed);
  return bm;
}

}  // namespace lsel::synth

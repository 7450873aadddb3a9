#include "lsel/dataset.hpp"

#include <algorithm>

#include "lsel/errors.hpp"

namespace lsel {

namespace {

void check_compatible(const FeatureStack& real, const FeatureStack& edited) {
  if (real.n_layers != edited.n_layers || real.dim != edited.dim) {
    throw DataError("real stack (" + std::to_string(real.n_layers) + " layers, dim " + std::to_string(real.dim) +
                    ") and edited stack (" + std::to_string(edited.n_layers) + " layers, dim " +
                    std::to_string(edited.dim) + ") are incompatible");
  }
}

bool in_split(const SampleRecord& r, std::optional<Split> split) { return !split || r.split == *split; }

}  // namespace

std::size_t LabeledFeatures::count(int label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

LabeledFeatures gather_layer(const DatasetManifest& manifest, const FeatureStack& real, const FeatureStack& edited,
                             std::size_t layer, std::optional<Split> split) {
  check_compatible(real, edited);
  if (layer >= real.n_layers) {
    throw DataError("layer " + std::to_string(layer) + " out of range for a " + std::to_string(real.n_layers) +
                    "-layer stack");
  }
  const auto real_idx = real.index();
  const auto edit_idx = edited.index();
  LabeledFeatures out;
  for (const auto& r : manifest.records) {
    if (!in_split(r, split)) continue;
    const auto& idx = r.edited() ? edit_idx : real_idx;
    const auto it = idx.find(r.sample_id);
    if (it == idx.end()) throw DataError("sample '" + r.sample_id + "' has no row in the feature stack");
    const auto f = (r.edited() ? edited : real).features(it->second, layer);
    out.feats.emplace_back(f.begin(), f.end());
    out.labels.push_back(r.y_auth);
    out.scores.push_back(r.scores);
    out.sample_ids.push_back(r.sample_id);
    out.src_ids.push_back(r.src_id);
    out.editors.push_back(r.editor);
  }
  return out;
}

std::pair<FeatureStack, FeatureStack> select_split(const DatasetManifest& manifest, const FeatureStack& real,
                                                   const FeatureStack& edited, std::optional<Split> split) {
  check_compatible(real, edited);
  const auto real_idx = real.index();
  const auto edit_idx = edited.index();
  std::vector<std::size_t> real_rows, edit_rows;
  for (const auto& r : manifest.records) {
    if (!in_split(r, split)) continue;
    const auto& idx = r.edited() ? edit_idx : real_idx;
    const auto it = idx.find(r.sample_id);
    if (it == idx.end()) throw DataError("sample '" + r.sample_id + "' has no row in the feature stack");
    (r.edited() ? edit_rows : real_rows).push_back(it->second);
  }
  return {real.select(real_rows), edited.select(edit_rows)};
}

}  // namespace lsel

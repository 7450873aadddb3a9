#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lsel/matrix.hpp"
#include "lsel/tensor_io.hpp"

namespace lsel {

// One layer's raw features for a set of manifest records, with labels.
struct LabeledFeatures {
  std::vector<Vector> feats;
  std::vector<int> labels;  // 1 = edited
  std::vector<std::optional<QualityScores>> scores;
  std::vector<std::string> sample_ids;
  std::vector<std::string> src_ids;
  std::vector<std::string> editors;

  std::size_t size() const noexcept { return feats.size(); }
  std::size_t count(int label) const;
};

// Rows of `layer` for every record in `split` (all records when nullopt), in
// manifest order. Real records are looked up in `real`, edited ones in
// `edited`; a record with no feature row is a DataError.
LabeledFeatures gather_layer(const DatasetManifest& manifest, const FeatureStack& real, const FeatureStack& edited,
                             std::size_t layer, std::optional<Split> split);

// The real and edited stacks restricted to the records of `split`.
std::pair<FeatureStack, FeatureStack> select_split(const DatasetManifest& manifest, const FeatureStack& real,
                                                   const FeatureStack& edited, std::optional<Split> split);

}  // namespace lsel

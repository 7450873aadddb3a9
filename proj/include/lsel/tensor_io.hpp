#pragma once

// Feature-stack container ("LFS1") and the line-delimited dataset manifest.
//
// LFS1 layout, all integers little-endian:
//
//   offset  size  field
//   0       4     magic "LFS1"
//   4       4     u32 n_samples
//   8       4     u32 n_layers
//   12      4     u32 dim
//   16      4     u32 id_table_bytes
//   20      ...   id table: n_samples x (u32 byte length, UTF-8 bytes)
//   ...     ...   payload: n_samples * n_layers * dim IEEE-754 f32, (sample, layer, feature) order
//
// The file ends exactly after the payload; trailing bytes are a size mismatch.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace lsel {

inline constexpr char kStackMagic[4] = {'L', 'F', 'S', '1'};
inline constexpr std::size_t kStackHeaderBytes = 20;  // magic + four u32 fields

struct FeatureStack {
  std::size_t n_samples = 0;
  std::size_t n_layers = 0;
  std::size_t dim = 0;
  std::vector<float> data;
  std::vector<std::string> sample_ids;

  FeatureStack() = default;
  FeatureStack(std::size_t samples, std::size_t layers, std::size_t features);

  std::span<const float> features(std::size_t sample, std::size_t layer) const {
    return {data.data() + (sample * n_layers + layer) * dim, dim};
  }
  std::span<float> features(std::size_t sample, std::size_t layer) {
    return {data.data() + (sample * n_layers + layer) * dim, dim};
  }

  // Throws DataError / FormatError(non_finite) when an invariant is broken.
  void validate() const;

  // Row index of every sample id.
  std::unordered_map<std::string, std::size_t> index() const;

  // Copy of the rows at `rows`, all layers.
  FeatureStack select(std::span<const std::size_t> rows) const;

  bool operator==(const FeatureStack&) const = default;
};

struct StackHeader {
  std::uint32_t n_samples = 0;
  std::uint32_t n_layers = 0;
  std::uint32_t dim = 0;
  std::uint32_t id_table_bytes = 0;
};

void write_feature_stack(const FeatureStack& stack, const std::filesystem::path& path);
FeatureStack read_feature_stack(const std::filesystem::path& path);

// Header only; validates the magic but not the payload.
StackHeader read_stack_header(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Manifest

enum class Split { unassigned, train, val, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct QualityScores {
  double s_q = 0.0;  // perceptual quality
  double s_e = 0.0;  // editing alignment
  double s_p = 0.0;  // attribute preservation

  double operator[](std::size_t k) const { return k == 0 ? s_q : (k == 1 ? s_e : s_p); }
  double& operator[](std::size_t k) { return k == 0 ? s_q : (k == 1 ? s_e : s_p); }
  bool operator==(const QualityScores&) const = default;
};

inline constexpr std::size_t kQualityDims = 3;
inline constexpr std::string_view kQualityNames[kQualityDims] = {"s_q", "s_e", "s_p"};

struct SampleRecord {
  std::string sample_id;
  std::string src_id;
  std::string edit_id;  // empty for pristine samples
  std::string prompt;
  int y_auth = 0;  // 1 = edited, 0 = real
  std::optional<QualityScores> scores;
  std::string editor;  // empty for pristine samples
  Split split = Split::unassigned;

  bool edited() const noexcept { return y_auth == 1; }
  bool operator==(const SampleRecord&) const = default;
};

inline constexpr int kManifestSchemaVersion = 1;

struct DatasetManifest {
  std::vector<SampleRecord> records;
  std::vector<std::string> editors;  // distinct, in order of first appearance
  int schema_version = kManifestSchemaVersion;

  // Throws DataError on the first violated record invariant and recomputes
  // nothing; call rebuild_editors() after editing records by hand.
  void validate() const;
  void rebuild_editors();

  bool operator==(const DatasetManifest&) const = default;
};

DatasetManifest parse_manifest(std::istream& in);
DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, std::ostream& out);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct SplitRatios {
  double train = 4.0;
  double val = 1.0;
  double test = 1.0;
};

// Stratified, leakage-free, deterministic split. Records sharing a src_id form
// one group and always receive the same split; groups are stratified by the
// set of editors they contain (pristine-only groups form their own stratum).
// Within a stratum of n groups the boundaries are round(n*train/total) and
// round(n*(train+val)/total).
DatasetManifest split_dataset(const DatasetManifest& manifest, const SplitRatios& ratios,
                              std::uint64_t seed);

}  // namespace lsel

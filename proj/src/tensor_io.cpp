#include "lsel/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lsel/errors.hpp"

namespace lsel {

namespace {

using FK = FormatError::Kind;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw DataError(std::string(what) + " does not fit in a u32 header field");
  }
  return static_cast<std::uint32_t>(v);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FK::io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw FormatError(FK::io, "read failure on " + path.string());
  return std::move(buf).str();
}

StackHeader parse_header(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kStackMagic, 4) != 0) {
    throw FormatError(FK::bad_magic, "bad magic: not an LFS1 feature stack");
  }
  if (bytes.size() < kStackHeaderBytes) {
    throw FormatError(FK::truncated_payload, "truncated payload: header incomplete");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + 4;
  return {get_u32(p), get_u32(p + 4), get_u32(p + 8), get_u32(p + 12)};
}

}  // namespace

FeatureStack::FeatureStack(std::size_t samples, std::size_t layers, std::size_t features)
    : n_samples(samples), n_layers(layers), dim(features), data(samples * layers * features, 0.0f) {
  sample_ids.reserve(samples);
  for (std::size_t i = 0; i < samples; ++i) sample_ids.push_back("s" + std::to_string(i));
}

void FeatureStack::validate() const {
  if (data.size() != n_samples * n_layers * dim) {
    throw DataError("feature stack data length " + std::to_string(data.size()) +
                    " != n_samples*n_layers*dim");
  }
  if (sample_ids.size() != n_samples) throw DataError("sample id count does not match n_samples");
  std::set<std::string_view> seen;
  for (const auto& id : sample_ids) {
    if (!seen.insert(id).second) throw DataError("duplicate sample id '" + id + "'");
  }
  for (float v : data) {
    if (!std::isfinite(v)) throw FormatError(FK::non_finite, "non-finite payload");
  }
}

std::unordered_map<std::string, std::size_t> FeatureStack::index() const {
  std::unordered_map<std::string, std::size_t> out;
  out.reserve(sample_ids.size());
  for (std::size_t i = 0; i < sample_ids.size(); ++i) out.emplace(sample_ids[i], i);
  return out;
}

FeatureStack FeatureStack::select(std::span<const std::size_t> rows) const {
  FeatureStack out;
  out.n_samples = rows.size();
  out.n_layers = n_layers;
  out.dim = dim;
  out.data.reserve(rows.size() * n_layers * dim);
  for (std::size_t r : rows) {
    const auto begin = data.begin() + static_cast<std::ptrdiff_t>(r * n_layers * dim);
    out.data.insert(out.data.end(), begin, begin + static_cast<std::ptrdiff_t>(n_layers * dim));
    out.sample_ids.push_back(sample_ids[r]);
  }
  return out;
}

void write_feature_stack(const FeatureStack& stack, const std::filesystem::path& path) {
  stack.validate();

  std::string ids;
  for (const auto& id : stack.sample_ids) {
    put_u32(ids, checked_u32(id.size(), "sample id length"));
    ids += id;
  }

  std::string bytes(kStackMagic, 4);
  put_u32(bytes, checked_u32(stack.n_samples, "n_samples"));
  put_u32(bytes, checked_u32(stack.n_layers, "n_layers"));
  put_u32(bytes, checked_u32(stack.dim, "dim"));
  put_u32(bytes, checked_u32(ids.size(), "id table"));
  bytes += ids;
  bytes.reserve(bytes.size() + stack.data.size() * 4);
  for (float v : stack.data) put_u32(bytes, std::bit_cast<std::uint32_t>(v));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FK::io, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FK::io, "write failure on " + path.string());
}

StackHeader read_stack_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FK::io, "cannot open " + path.string());
  std::string head(kStackHeaderBytes, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  return parse_header(head);
}

FeatureStack read_feature_stack(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const StackHeader h = parse_header(bytes);
  const auto* base = reinterpret_cast<const unsigned char*>(bytes.data());

  const std::uint64_t payload_values =
      static_cast<std::uint64_t>(h.n_samples) * h.n_layers * h.dim;
  const std::uint64_t expected = kStackHeaderBytes + std::uint64_t{h.id_table_bytes} + payload_values * 4;
  if (bytes.size() < expected) {
    throw FormatError(FK::truncated_payload, "truncated payload: expected " + std::to_string(expected) +
                                                 " bytes, found " + std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw FormatError(FK::size_mismatch, "size mismatch: " + std::to_string(bytes.size() - expected) +
                                             " trailing bytes after payload");
  }

  FeatureStack stack;
  stack.n_samples = h.n_samples;
  stack.n_layers = h.n_layers;
  stack.dim = h.dim;

  std::size_t pos = kStackHeaderBytes;
  const std::size_t table_end = kStackHeaderBytes + h.id_table_bytes;
  stack.sample_ids.reserve(h.n_samples);
  for (std::uint32_t i = 0; i < h.n_samples; ++i) {
    if (pos + 4 > table_end) throw FormatError(FK::bad_header, "id table shorter than n_samples entries");
    const std::uint32_t len = get_u32(base + pos);
    pos += 4;
    if (pos + len > table_end) throw FormatError(FK::bad_header, "id table entry overruns table");
    stack.sample_ids.emplace_back(bytes.data() + pos, len);
    pos += len;
  }
  if (pos != table_end) throw FormatError(FK::bad_header, "id table length disagrees with header");

  stack.data.resize(payload_values);
  for (std::size_t i = 0; i < stack.data.size(); ++i, pos += 4) {
    stack.data[i] = std::bit_cast<float>(get_u32(base + pos));
  }
  stack.validate();
  return stack;
}

// ---------------------------------------------------------------------------
// Manifest

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::unassigned: break;
  }
  return "";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  if (text.empty()) return Split::unassigned;
  throw DataError("unknown split '" + std::string(text) + "'");
}

namespace {

void validate_record(const SampleRecord& r) {
  if (r.sample_id.empty()) throw DataError("empty sample_id");
  if (r.src_id.empty()) throw DataError("record " + r.sample_id + ": empty src_id");
  if (r.y_auth != 0 && r.y_auth != 1) throw DataError("record " + r.sample_id + ": label out of range");
  if (r.y_auth == 0) {
    if (!r.editor.empty()) throw DataError("record " + r.sample_id + ": real sample carries an editor");
    if (r.scores) throw DataError("record " + r.sample_id + ": real sample carries quality scores");
  } else {
    if (r.editor.empty()) throw DataError("record " + r.sample_id + ": edited sample without editor");
    if (!r.scores) throw DataError("record " + r.sample_id + ": edited sample without quality scores");
  }
  if (r.scores) {
    for (std::size_t k = 0; k < kQualityDims; ++k) {
      const double s = (*r.scores)[k];
      if (!(s >= 1.0 && s <= 5.0)) throw DataError("record " + r.sample_id + ": score out of [1,5]");
    }
  }
}

std::string required_string(const nlohmann::json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw DataError(std::string("missing required field ") + key);
  if (!it->is_string()) throw DataError(std::string("field ") + key + " must be a string");
  return it->get<std::string>();
}

std::string optional_string(const nlohmann::json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) throw DataError(std::string("field ") + key + " must be a string");
  return it->get<std::string>();
}

std::optional<double> optional_number(const nlohmann::json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw DataError(std::string("field ") + key + " must be a number");
  return it->get<double>();
}

SampleRecord record_from_json(const nlohmann::json& obj) {
  SampleRecord r;
  r.sample_id = required_string(obj, "sample_id");
  r.src_id = required_string(obj, "src_id");
  r.edit_id = optional_string(obj, "edit_id");
  r.prompt = optional_string(obj, "prompt");
  const auto y = obj.find("y_auth");
  if (y == obj.end()) throw DataError("missing required field y_auth");
  if (!y->is_number_integer()) throw DataError("label out of range: y_auth must be 0 or 1");
  const auto label = y->get<std::int64_t>();
  if (label != 0 && label != 1) throw DataError("label out of range: y_auth must be 0 or 1");
  r.y_auth = static_cast<int>(label);

  const auto sq = optional_number(obj, "s_q");
  const auto se = optional_number(obj, "s_e");
  const auto sp = optional_number(obj, "s_p");
  const int present = int(sq.has_value()) + int(se.has_value()) + int(sp.has_value());
  if (present == 3) {
    r.scores = QualityScores{*sq, *se, *sp};
  } else if (present != 0) {
    throw DataError("quality scores must be given for all of s_q, s_e, s_p or none");
  }
  r.editor = optional_string(obj, "editor");
  r.split = parse_split(optional_string(obj, "split"));
  validate_record(r);
  return r;
}

}  // namespace

void DatasetManifest::validate() const {
  std::set<std::string_view> ids;
  for (const auto& r : records) {
    validate_record(r);
    if (!ids.insert(r.sample_id).second) throw DataError("duplicate sample_id '" + r.sample_id + "'");
  }
}

void DatasetManifest::rebuild_editors() {
  editors.clear();
  std::set<std::string_view> seen;
  for (const auto& r : records) {
    if (!r.editor.empty() && seen.insert(r.editor).second) editors.push_back(r.editor);
  }
}

DatasetManifest parse_manifest(std::istream& in) {
  DatasetManifest manifest;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      if (!obj.is_object()) throw DataError("expected a JSON object");
      if (obj.contains("schema_version") && !obj.contains("sample_id")) {
        manifest.schema_version = obj.at("schema_version").get<int>();
        if (manifest.schema_version != kManifestSchemaVersion) {
          throw DataError("unsupported schema_version " + std::to_string(manifest.schema_version));
        }
        continue;
      }
      manifest.records.push_back(record_from_json(obj));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest line " + std::to_string(line_no) + ": malformed record: " + e.what());
    } catch (const DataError& e) {
      throw DataError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  manifest.rebuild_editors();
  manifest.validate();
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  return parse_manifest(in);
}

void write_manifest(const DatasetManifest& manifest, std::ostream& out) {
  out << nlohmann::ordered_json{{"schema_version", manifest.schema_version}}.dump() << '\n';
  for (const auto& r : manifest.records) {
    nlohmann::ordered_json obj;
    obj["sample_id"] = r.sample_id;
    obj["src_id"] = r.src_id;
    obj["edit_id"] = r.edit_id;
    obj["prompt"] = r.prompt;
    obj["y_auth"] = r.y_auth;
    if (r.scores) {
      obj["s_q"] = r.scores->s_q;
      obj["s_e"] = r.scores->s_e;
      obj["s_p"] = r.scores->s_p;
    }
    obj["editor"] = r.editor;
    obj["split"] = std::string(to_string(r.split));
    out << obj.dump() << '\n';
  }
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_manifest(manifest, out);
  if (!out) throw DataError("write failure on " + path.string());
}

// ---------------------------------------------------------------------------
// Splitting

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

DatasetManifest split_dataset(const DatasetManifest& manifest, const SplitRatios& ratios,
                              std::uint64_t seed) {
  const double parts[3] = {ratios.train, ratios.val, ratios.test};
  double total = 0.0;
  int positive = 0;
  for (double p : parts) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw DataError("split ratios must be finite and non-negative");
    total += p;
    positive += p > 0.0;
  }
  if (total <= 0.0) throw DataError("split ratios sum to zero");

  // Group records by source image.
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    groups[manifest.records[i].src_id].push_back(i);
  }

  // Stratum key: sorted editor set of the group; pristine-only groups share "".
  std::map<std::string, std::vector<const std::string*>> strata;
  for (const auto& [src, members] : groups) {
    std::set<std::string> eds;
    for (std::size_t i : members) {
      if (manifest.records[i].edited()) eds.insert(manifest.records[i].editor);
    }
    std::string key;
    for (const auto& e : eds) key += (key.empty() ? "" : "|") + e;
    strata[key].push_back(&src);
  }

  DatasetManifest out = manifest;
  for (auto& [key, srcs] : strata) {
    if (srcs.size() < static_cast<std::size_t>(positive)) {
      throw DataError("stratum '" + (key.empty() ? std::string("real") : key) + "' has " +
                      std::to_string(srcs.size()) + " source groups; need at least " +
                      std::to_string(positive) + " to split");
    }
    std::mt19937_64 rng(seed ^ fnv1a(key));
    std::shuffle(srcs.begin(), srcs.end(), rng);

    const double n = static_cast<double>(srcs.size());
    const auto train_end = static_cast<std::size_t>(std::llround(n * parts[0] / total));
    const auto val_end = static_cast<std::size_t>(std::llround(n * (parts[0] + parts[1]) / total));
    for (std::size_t g = 0; g < srcs.size(); ++g) {
      const Split s = g < train_end ? Split::train : (g < val_end ? Split::val : Split::test);
      for (std::size_t i : groups[*srcs[g]]) out.records[i].split = s;
    }
  }
  return out;
}

}  // namespace lsel

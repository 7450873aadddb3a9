#include "lsel/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lsel/errors.hpp"

namespace lsel {

namespace {

using FK = FormatError::Kind;
constexpr std::size_t kHeaderBytes = 4 + 5 * 4 + 3 * 4;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_f32(std::string& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

std::size_t payload_floats(std::size_t in, std::size_t out, std::size_t rank, std::size_t hidden) {
  return 2 * in + out * in + out + rank * in + out * rank + (hidden * out + 2 * hidden + 1) +
         (hidden * out + hidden + kQualityDims * hidden + kQualityDims);
}

// Every payload block after the frozen base, in file order.
template <typename Ckpt, typename Fn>
void for_each_trainable_block(Ckpt& c, Fn&& fn) {
  fn(c.encoder.a().values());
  fn(c.encoder.b().values());
  fn(c.detection.w1.values());
  fn(std::span(c.detection.b1));
  fn(std::span(c.detection.w2));
  fn(std::span(&c.detection.b2, 1));
  fn(c.quality.w1.values());
  fn(std::span(c.quality.b1));
  fn(c.quality.w2.values());
  fn(std::span(c.quality.b2));
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FK::io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

CheckpointHeader parse_header(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError(FK::bad_magic, "bad magic: not an LLM1 checkpoint");
  }
  if (bytes.size() < kHeaderBytes) throw FormatError(FK::truncated_payload, "truncated payload: header incomplete");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + 4;
  CheckpointHeader h;
  h.in_dim = get_u32(p);
  h.out_dim = get_u32(p + 4);
  h.rank = get_u32(p + 8);
  h.hidden = get_u32(p + 12);
  h.layer = get_u32(p + 16);
  h.scale = std::bit_cast<float>(get_u32(p + 20));
  h.lora_alpha = std::bit_cast<float>(get_u32(p + 24));
  h.tau = std::bit_cast<float>(get_u32(p + 28));
  h.payload_floats = payload_floats(h.in_dim, h.out_dim, h.rank, h.hidden);
  return h;
}

}  // namespace

Normalizer Normalizer::fit(std::span<const Vector> rows) {
  if (rows.empty()) throw DataError("cannot fit a normalizer on zero rows");
  const std::size_t dim = rows.front().size();
  Normalizer n;
  n.mean.assign(dim, 0.0);
  n.scale.assign(dim, 0.0);
  for (const auto& r : rows) {
    for (std::size_t d = 0; d < dim; ++d) n.mean[d] += r[d];
  }
  for (double& m : n.mean) m /= static_cast<double>(rows.size());
  for (const auto& r : rows) {
    for (std::size_t d = 0; d < dim; ++d) n.scale[d] += (r[d] - n.mean[d]) * (r[d] - n.mean[d]);
  }
  for (double& s : n.scale) {
    s = std::sqrt(s / static_cast<double>(rows.size()));
    if (!(s > 1e-12)) s = 1.0;  // constant feature
  }
  return n;
}

Vector Normalizer::apply(std::span<const double> x) const {
  if (x.size() != mean.size()) throw DomainError("normalizer: dimension mismatch");
  Vector out(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) out[d] = (x[d] - mean[d]) / scale[d];
  return out;
}

Vector Checkpoint::embed(std::span<const double> raw) const { return encoder.forward(normalizer.apply(raw)); }

namespace {

std::string encode(const Checkpoint& c) {
  std::string bytes(kCheckpointMagic, 4);
  put_u32(bytes, static_cast<std::uint32_t>(c.encoder.in_dim()));
  put_u32(bytes, static_cast<std::uint32_t>(c.encoder.out_dim()));
  put_u32(bytes, static_cast<std::uint32_t>(c.encoder.rank()));
  put_u32(bytes, static_cast<std::uint32_t>(c.hidden));
  put_u32(bytes, static_cast<std::uint32_t>(c.layer));
  put_f32(bytes, c.encoder.scale());
  put_f32(bytes, c.encoder_config.lora_alpha);
  put_f32(bytes, c.encoder_config.tau);
  auto emit = [&](std::span<const double> block) {
    for (double v : block) {
      if (!std::isfinite(v)) throw FormatError(FK::non_finite, "non-finite payload");
      put_f32(bytes, v);
    }
  };
  emit(c.normalizer.mean);
  emit(c.normalizer.scale);
  emit(c.encoder.base_weight().values());
  emit(c.encoder.base_bias());
  for_each_trainable_block(c, emit);
  const auto expected =
      kHeaderBytes + 4 * payload_floats(c.encoder.in_dim(), c.encoder.out_dim(), c.encoder.rank(), c.hidden);
  if (bytes.size() != expected) throw DataError("checkpoint parameter shapes disagree with its header");
  return bytes;
}

Checkpoint decode(std::string_view bytes, const std::string& origin) {
  const CheckpointHeader h = parse_header(bytes);
  if (h.rank == 0 || h.in_dim == 0 || h.out_dim == 0) {
    throw FormatError(FK::bad_header, "checkpoint has zero dimensions");
  }
  const std::size_t expected = kHeaderBytes + 4 * h.payload_floats;
  if (bytes.size() < expected) throw FormatError(FK::truncated_payload, "truncated payload in " + origin);
  if (bytes.size() > expected) throw FormatError(FK::size_mismatch, "size mismatch: trailing bytes in " + origin);

  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + kHeaderBytes;
  auto fill = [&](std::span<double> block) {
    for (double& v : block) {
      const float f = std::bit_cast<float>(get_u32(p));
      p += 4;
      if (!std::isfinite(f)) throw FormatError(FK::non_finite, "non-finite payload");
      v = static_cast<double>(f);
    }
  };

  Checkpoint c;
  c.encoder_config.in_dim = h.in_dim;
  c.encoder_config.out_dim = h.out_dim;
  c.encoder_config.rank = h.rank;
  c.encoder_config.lora_alpha = h.lora_alpha;
  c.encoder_config.tau = h.tau;
  c.layer = h.layer;
  c.hidden = h.hidden;

  c.normalizer.mean.resize(h.in_dim);
  c.normalizer.scale.resize(h.in_dim);
  fill(c.normalizer.mean);
  fill(c.normalizer.scale);
  Matrix w(h.out_dim, h.in_dim);
  fill(w.values());
  Vector bias(h.out_dim);
  fill(bias);
  c.encoder = adapter::LoraLinear(std::move(w), std::move(bias), Matrix(h.rank, h.in_dim),
                                  Matrix(h.out_dim, h.rank), h.scale);

  c.detection.w1 = Matrix(h.hidden, h.out_dim);
  c.detection.b1.resize(h.hidden);
  c.detection.w2.resize(h.hidden);
  c.quality.w1 = Matrix(h.hidden, h.out_dim);
  c.quality.b1.resize(h.hidden);
  c.quality.w2 = Matrix(kQualityDims, h.hidden);
  c.quality.b2.resize(kQualityDims);
  for_each_trainable_block(c, fill);
  return c;
}

}  // namespace

void write_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const std::string bytes = encode(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FK::io, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FK::io, "write failure on " + path.string());
}

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FK::io, "cannot open " + path.string());
  std::string head(kHeaderBytes, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  return parse_header(head);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode(read_all(path), path.string()); }

Checkpoint round_to_f32(const Checkpoint& ckpt) { return decode(encode(ckpt), "memory"); }

}  // namespace lsel

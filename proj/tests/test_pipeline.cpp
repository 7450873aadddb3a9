#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <cstring>
#include <iterator>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lsel/checkpoint.hpp"
#include "lsel/dataset.hpp"
#include "lsel/evaluation.hpp"
#include "lsel/synth.hpp"
#include "lsel/train.hpp"
#include "support.hpp"

using lsel::FormatError;
using lsel::testing::slurp;
using lsel::testing::spit;
using lsel::testing::TempDir;

namespace {

using FK = FormatError::Kind;

lsel::synth::Benchmark small_benchmark(std::uint64_t seed, double shift = 2.0, std::size_t per_editor = 30) {
  lsel::synth::SynthConfig cfg;
  cfg.seed = seed;
  cfg.shift = shift;
  cfg.samples_per_editor = per_editor;
  cfg.n_layers = 4;
  cfg.dim = 32;
  cfg.informative_layer = 2;
  return lsel::synth::generate_benchmark(cfg);
}

lsel::optim::TrainConfig small_train_config(std::size_t epochs, std::size_t width = 32) {
  lsel::optim::TrainConfig cfg;
  cfg.layer = 2;
  cfg.embed_dim = width;
  cfg.hidden = width;
  cfg.rank = 4;
  cfg.adapter_epochs = epochs;
  cfg.head_epochs = epochs;
  cfg.seed = 11;
  return cfg;
}

lsel::LabeledFeatures split_of(const lsel::synth::Benchmark& bm, lsel::Split s, std::size_t layer = 2) {
  return lsel::gather_layer(bm.manifest, bm.real, bm.edited, layer, s);
}

lsel::Checkpoint fresh_checkpoint() {
  const auto bm = small_benchmark(3);
  return lsel::optim::initialize_checkpoint(split_of(bm, lsel::Split::train), small_train_config(0));
}

FK read_kind(const std::filesystem::path& p) {
  try {
    lsel::read_checkpoint(p);
  } catch (const FormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "checkpoint was accepted";
  return FK::io;
}

constexpr std::size_t kHeaderBytes = 4 + 5 * 4 + 3 * 4;

lsel::eval::Predictions oracle_predictions(const lsel::LabeledFeatures& set) {
  lsel::eval::Predictions p;
  for (std::size_t i = 0; i < set.size(); ++i) {
    p.probability.push_back(set.labels[i] == 1 ? 1.0 : 0.0);
    p.quality.push_back(set.scores[i].value_or(lsel::QualityScores{}));
  }
  return p;
}

}  // namespace

TEST(Checkpoint, RoundTripMatchesF32Rounding) {
  TempDir dir("ckpt");
  const auto ckpt = fresh_checkpoint();
  lsel::write_checkpoint(ckpt, dir / "m.llm1");
  const auto back = lsel::read_checkpoint(dir / "m.llm1");
  EXPECT_TRUE(back == lsel::round_to_f32(ckpt));
  EXPECT_EQ(back.layer, 2u);

  // A second cycle is the identity on bytes.
  lsel::write_checkpoint(back, dir / "again.llm1");
  EXPECT_EQ(slurp(dir / "m.llm1"), slurp(dir / "again.llm1"));
}

TEST(Checkpoint, HeaderFieldsAndSize) {
  TempDir dir("ckpt");
  const auto ckpt = fresh_checkpoint();
  lsel::write_checkpoint(ckpt, dir / "m.llm1");
  const auto h = lsel::read_checkpoint_header(dir / "m.llm1");
  EXPECT_EQ(h.in_dim, 32u);
  EXPECT_EQ(h.out_dim, 32u);
  EXPECT_EQ(h.rank, 4u);
  EXPECT_EQ(h.hidden, 32u);
  EXPECT_EQ(h.layer, 2u);
  EXPECT_FLOAT_EQ(h.lora_alpha, 16.0f);
  EXPECT_FLOAT_EQ(h.scale, 4.0f);
  EXPECT_FLOAT_EQ(h.tau, 0.07f);

  const std::size_t in = 32, out = 32, r = 4, hid = 32;
  const std::size_t floats = 2 * in + out * in + out + r * in + out * r + (hid * out + hid + hid + 1) +
                             (hid * out + hid + 3 * hid + 3);
  EXPECT_EQ(h.payload_floats, floats);
  EXPECT_EQ(slurp(dir / "m.llm1").size(), kHeaderBytes + 4 * floats);
}

TEST(Checkpoint, CorruptFilesRejectedWithTheirKind) {
  TempDir dir("ckpt");
  lsel::write_checkpoint(fresh_checkpoint(), dir / "good.llm1");
  const std::string good = slurp(dir / "good.llm1");

  std::string bad = good;
  bad[3] = '2';
  spit(dir / "magic.llm1", bad);
  EXPECT_EQ(read_kind(dir / "magic.llm1"), FK::bad_magic);

  spit(dir / "short.llm1", good.substr(0, good.size() - 1));
  EXPECT_EQ(read_kind(dir / "short.llm1"), FK::truncated_payload);

  spit(dir / "header.llm1", good.substr(0, 10));
  EXPECT_EQ(read_kind(dir / "header.llm1"), FK::truncated_payload);

  spit(dir / "long.llm1", good + "x");
  EXPECT_EQ(read_kind(dir / "long.llm1"), FK::size_mismatch);

  bad = good;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bad.data() + kHeaderBytes + 8, &nan, 4);
  spit(dir / "nan.llm1", bad);
  EXPECT_EQ(read_kind(dir / "nan.llm1"), FK::non_finite);

  bad = good;
  std::memset(bad.data() + 4, 0, 4);
  spit(dir / "zero.llm1", bad);
  EXPECT_EQ(read_kind(dir / "zero.llm1"), FK::bad_header);

  EXPECT_EQ(read_kind(dir / "missing.llm1"), FK::io);
}

TEST(Checkpoint, EmbedAppliesNormalizerThenEncoder) {
  const auto ckpt = fresh_checkpoint();
  std::mt19937_64 rng(5);
  const auto x = lsel::testing::gaussian_vector(32, rng);
  lsel::Vector z(32);
  for (std::size_t d = 0; d < 32; ++d) z[d] = (x[d] - ckpt.normalizer.mean[d]) / ckpt.normalizer.scale[d];
  const auto expect = ckpt.encoder.forward(z);
  const auto got = ckpt.embed(x);
  ASSERT_EQ(got.size(), expect.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], expect[i], 1e-12);
}

TEST(Predict, ShapesAndRanges) {
  const auto bm = small_benchmark(4);
  const auto test = split_of(bm, lsel::Split::test);
  const auto ckpt = fresh_checkpoint();
  const auto preds = lsel::eval::predict(ckpt, test);
  ASSERT_EQ(preds.probability.size(), test.size());
  ASSERT_EQ(preds.quality.size(), test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    EXPECT_GT(preds.probability[i], 0.0);
    EXPECT_LT(preds.probability[i], 1.0);
    EXPECT_DOUBLE_EQ(preds.probability[i], lsel::heads::detect(ckpt.detection, ckpt.embed(test.feats[i])));
  }
}

TEST(Evaluate, GroundTruthAgainstItselfIsPerfect) {
  const auto bm = small_benchmark(5);
  const auto test = split_of(bm, lsel::Split::test);
  const auto report = lsel::eval::evaluate(test, oracle_predictions(test), bm.manifest.editors);

  ASSERT_EQ(report.detection.size(), bm.manifest.editors.size() + 1);
  EXPECT_EQ(report.detection.back().group, "Overall");
  for (const auto& d : report.detection) {
    EXPECT_DOUBLE_EQ(d.acc, 1.0) << d.group;
    EXPECT_DOUBLE_EQ(d.f1.value, 1.0) << d.group;
  }
  ASSERT_EQ(report.quality.size(), 3u);
  for (const auto& q : report.quality) {
    EXPECT_NEAR(q.srcc, 1.0, 1e-12) << q.dimension;
    EXPECT_NEAR(q.krcc, 1.0, 1e-12) << q.dimension;
    EXPECT_NEAR(q.plcc, 1.0, 1e-12) << q.dimension;
  }
  for (const auto& d : report.ranking.dimensions) {
    EXPECT_NEAR(d.srcc_to_human, 1.0, 1e-12) << d.name;
    EXPECT_NEAR(d.rmse_to_human, 0.0, 1e-12) << d.name;
  }
}

TEST(Evaluate, EditorGroupsHoldTheirEditsAndMatchingSources) {
  const auto bm = small_benchmark(6);
  const auto test = split_of(bm, lsel::Split::test);
  const auto report = lsel::eval::evaluate(test, oracle_predictions(test), bm.manifest.editors);

  std::map<std::string, std::set<std::string>> sources;
  std::map<std::string, std::size_t> edits;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test.labels[i] == 1) {
      sources[test.editors[i]].insert(test.src_ids[i]);
      ++edits[test.editors[i]];
    }
  }
  for (std::size_t e = 0; e < bm.manifest.editors.size(); ++e) {
    const auto& name = bm.manifest.editors[e];
    std::size_t reals = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      if (test.labels[i] == 0 && sources[name].contains(test.src_ids[i])) ++reals;
    }
    EXPECT_EQ(report.detection[e].group, name);
    EXPECT_EQ(report.detection[e].n, edits[name] + reals);
  }
  EXPECT_EQ(report.detection.back().n, test.size());
}

TEST(Evaluate, PositiveClassSelectsTheF1Label) {
  const auto bm = small_benchmark(7);
  const auto test = split_of(bm, lsel::Split::test);
  auto preds = oracle_predictions(test);
  // Call every sample edited: F1 on the edited class is 2P/(P+1) with
  // P the edited fraction, F1 on the real class is 0.
  for (double& p : preds.probability) p = 0.9;
  const double frac = static_cast<double>(test.count(1)) / static_cast<double>(test.size());

  const auto edited = lsel::eval::evaluate(test, preds, bm.manifest.editors, 1);
  EXPECT_NEAR(edited.detection.back().f1.value, 2 * frac / (frac + 1), 1e-12);
  EXPECT_NEAR(edited.detection.back().acc, frac, 1e-12);

  const auto real = lsel::eval::evaluate(test, preds, bm.manifest.editors, 0);
  EXPECT_EQ(real.detection.back().f1.value, 0.0);
  EXPECT_TRUE(real.detection.back().f1.degenerate);
  EXPECT_EQ(real.positive_class, 0);
}

TEST(Evaluate, MissingEditorIsADataError) {
  const auto bm = small_benchmark(8);
  const auto test = split_of(bm, lsel::Split::test);
  auto editors = bm.manifest.editors;
  editors.push_back("editor_absent");
  EXPECT_THROW(lsel::eval::evaluate(test, oracle_predictions(test), editors), lsel::DataError);
}

TEST(Evaluate, QualityPredictionsAreClampedToTheScoreRange) {
  const auto bm = small_benchmark(9);
  const auto test = split_of(bm, lsel::Split::test);
  auto preds = oracle_predictions(test);
  // Throw every prediction far outside [1, 5]: above for true scores over 3,
  // below otherwise. After clamping an editor's mean is 1 + 4 * (share > 3).
  std::map<std::string, std::array<double, 3>> above;
  std::map<std::string, double> count;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test.labels[i] != 1) continue;
    count[test.editors[i]] += 1;
    for (std::size_t k = 0; k < 3; ++k) {
      const bool high = (*test.scores[i])[k] > 3.0;
      preds.quality[i][k] += high ? 100.0 : -100.0;
      above[test.editors[i]][k] += high ? 1.0 : 0.0;
    }
  }
  const auto report = lsel::eval::evaluate(test, preds, bm.manifest.editors);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& d = report.ranking.dimensions[k];
    for (std::size_t e = 0; e < report.ranking.editors.size(); ++e) {
      const auto& name = report.ranking.editors[e];
      EXPECT_NEAR(d.pred_mean[e], 1.0 + 4.0 * above[name][k] / count[name], 1e-12) << name << " dim " << k;
    }
  }
}

TEST(Report, TableHasDetectionColumnsAndOverallRow) {
  const auto bm = small_benchmark(10);
  const auto test = split_of(bm, lsel::Split::test);
  const auto report = lsel::eval::evaluate(test, oracle_predictions(test), bm.manifest.editors);
  const std::string text = lsel::eval::format_report(report);

  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "Detection (positive class: edited)");
  std::getline(in, line);
  std::istringstream cols(line);
  std::vector<std::string> header{std::istream_iterator<std::string>(cols), {}};
  EXPECT_EQ(header, (std::vector<std::string>{"Editor", "N", "Acc", "F1"}));
  for (const auto& name : bm.manifest.editors) {
    std::getline(in, line);
    EXPECT_EQ(line.rfind(name, 0), 0u) << line;
    EXPECT_NE(line.find("100.00"), std::string::npos);
  }
  std::getline(in, line);
  EXPECT_EQ(line.rfind("Overall", 0), 0u);
  EXPECT_NE(text.find("SRCC"), std::string::npos);
  EXPECT_NE(text.find("KRCC"), std::string::npos);
  EXPECT_NE(text.find("PLCC"), std::string::npos);
}

TEST(Report, RecordsAreOneJsonObjectPerRow) {
  const auto bm = small_benchmark(10);
  const auto test = split_of(bm, lsel::Split::test);
  const auto report = lsel::eval::evaluate(test, oracle_predictions(test), bm.manifest.editors);
  std::ostringstream out;
  lsel::eval::write_report_records(report, out);
  std::istringstream in(out.str());
  std::map<std::string, int> kinds;
  for (std::string line; std::getline(in, line);) {
    const auto j = nlohmann::json::parse(line);
    ++kinds[j.at("kind").get<std::string>()];
  }
  EXPECT_EQ(kinds["detection"], 18);
  EXPECT_EQ(kinds["quality"], 3);
  EXPECT_EQ(kinds["ranking"], 4);
}

TEST(Pipeline, NullShiftDetectionStaysAtChance) {
  // With no planted signal every layer carries the same distribution for both
  // classes; a trained detector must not beat a coin beyond sampling error.
  const auto bm = small_benchmark(12, 0.0, 60);
  const auto train = split_of(bm, lsel::Split::train);
  const auto val = split_of(bm, lsel::Split::val);
  const auto test = split_of(bm, lsel::Split::test);
  const auto result = lsel::optim::train(train, val, small_train_config(30, 256));
  const auto report =
      lsel::eval::evaluate(test, lsel::eval::predict(result.checkpoint, test), bm.manifest.editors);
  const double n = static_cast<double>(test.size());
  const double band = 3.0 * std::sqrt(0.25 / n);
  EXPECT_NEAR(report.detection.back().acc, 0.5, band) << "n = " << n;
}

TEST(Pipeline, TrainedModelSeparatesAPlantedLayer) {
  const auto bm = small_benchmark(13);
  const auto train = split_of(bm, lsel::Split::train);
  const auto val = split_of(bm, lsel::Split::val);
  const auto test = split_of(bm, lsel::Split::test);
  const auto result = lsel::optim::train(train, val, small_train_config(30, 256));
  const auto report =
      lsel::eval::evaluate(test, lsel::eval::predict(result.checkpoint, test), bm.manifest.editors);
  EXPECT_GT(report.detection.back().acc, 0.9);
}

TEST(Pipeline, RerunIsBitIdentical) {
  TempDir dir("det");
  std::string ckpt_bytes[2], report_bytes[2];
  for (int run = 0; run < 2; ++run) {
    const auto bm = small_benchmark(14);
    const auto train = split_of(bm, lsel::Split::train);
    const auto val = split_of(bm, lsel::Split::val);
    const auto test = split_of(bm, lsel::Split::test);
    const auto result = lsel::optim::train(train, val, small_train_config(3));
    const auto path = dir / ("m" + std::to_string(run) + ".llm1");
    lsel::write_checkpoint(result.checkpoint, path);
    ckpt_bytes[run] = slurp(path);
    std::ostringstream rec;
    lsel::eval::write_report_records(
        lsel::eval::evaluate(test, lsel::eval::predict(lsel::read_checkpoint(path), test), bm.manifest.editors), rec);
    report_bytes[run] = rec.str();
  }
  EXPECT_EQ(ckpt_bytes[0], ckpt_bytes[1]);
  EXPECT_EQ(report_bytes[0], report_bytes[1]);
}

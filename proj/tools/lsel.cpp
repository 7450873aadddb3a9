// lsel: layer-selective forensic evaluation pipeline.
//
//   lsel synth   --out DIR                      synthetic benchmark with planted truth
//   lsel lsa     --data DIR [--out DIR]         per-layer sensitivity profile + selected layer
//   lsel train   --data DIR --out DIR           contrastive adapter, then detection/quality heads
//   lsel eval    --data DIR --checkpoint FILE   Acc/F1, SRCC/KRCC/PLCC and editor ranking
//   lsel inspect FILE                           header/metadata of an LFS1 or LLM1 file
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lsel/checkpoint.hpp"
#include "lsel/dataset.hpp"
#include "lsel/errors.hpp"
#include "lsel/evaluation.hpp"
#include "lsel/lsa.hpp"
#include "lsel/synth.hpp"
#include "lsel/tensor_io.hpp"
#include "lsel/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

constexpr const char* kRealFile = "real.lfs";
constexpr const char* kEditedFile = "edited.lfs";
constexpr const char* kManifestFile = "manifest.jsonl";
constexpr const char* kTruthFile = "truth.json";
constexpr const char* kConfigFile = "config.jsonl";
constexpr const char* kProfilesFile = "profiles.jsonl";
constexpr const char* kSelectionFile = "selected_layer.json";
constexpr const char* kCheckpointFile = "checkpoint.llm1";
constexpr const char* kTraceFile = "loss_trace.jsonl";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Overlays `key: value` records from a line-delimited config file onto every
// option of `cmd` the command line left unset (flags > file > defaults).
void apply_config_file(CLI::App& cmd, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw lsel::DataError("cannot open config file " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw lsel::DataError("config line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object()) throw lsel::DataError("config line " + std::to_string(line_no) + ": expected an object");
    for (const auto& [key, value] : obj.items()) {
      if (key == "command") continue;
      CLI::Option* opt = cmd.get_option_no_throw("--" + key);
      if (!opt) throw UsageError("config file: unknown option '" + key + "' for " + cmd.get_name());
      if (opt->count() > 0) continue;
      std::string text = value.is_string() ? value.get<std::string>() : value.dump();
      if (value.is_array()) {
        opt->clear();
        for (const auto& v : value) opt->add_result(v.is_string() ? v.get<std::string>() : v.dump());
      } else {
        opt->add_result(text);
      }
      opt->run_callback();
    }
  }
}

// Resolved options of `cmd` as one record per line, loadable with --config.
void echo_config(const CLI::App& cmd, const fs::path& dir) {
  std::ofstream out(dir / kConfigFile, std::ios::trunc);
  out << json{{"command", cmd.get_name()}}.dump() << '\n';
  for (const CLI::Option* opt : cmd.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config" || name.empty()) continue;
    json rec;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      rec[name] = res.size() == 1 ? json(res.front()) : json(res);
    } else if (opt->get_expected_max() > 1) {
      rec[name] = json::parse(opt->get_default_str(), nullptr, false);
    } else {
      rec[name] = opt->get_default_str();
    }
    out << rec.dump() << '\n';
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw lsel::DataError("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".lsel_write_probe";
  {
    std::ofstream p(probe);
    if (!p) throw lsel::DataError("output directory " + dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

std::optional<lsel::Split> parse_split_filter(const std::string& s) {
  if (s == "all") return std::nullopt;
  const lsel::Split split = lsel::parse_split(s);
  if (split == lsel::Split::unassigned) throw UsageError("split must be train, val, test or all");
  return split;
}

struct DataPaths {
  std::string dir;
  std::string real;
  std::string edited;
  std::string manifest;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--data", dir, "Dataset directory (real.lfs, edited.lfs, manifest.jsonl)");
    cmd.add_option("--real", real, "Real-sample feature stack (overrides --data)");
    cmd.add_option("--edited", edited, "Edited-sample feature stack (overrides --data)");
    cmd.add_option("--manifest", manifest, "Manifest file (overrides --data)");
  }

  fs::path resolve(const std::string& explicit_path, const char* file) const {
    if (!explicit_path.empty()) return explicit_path;
    if (dir.empty()) throw UsageError(std::string("either --data or an explicit path for ") + file + " is required");
    return fs::path(dir) / file;
  }
};

struct Dataset {
  lsel::FeatureStack real;
  lsel::FeatureStack edited;
  lsel::DatasetManifest manifest;
};

Dataset load_dataset(const DataPaths& p) {
  Dataset d;
  d.real = lsel::read_feature_stack(p.resolve(p.real, kRealFile));
  d.edited = lsel::read_feature_stack(p.resolve(p.edited, kEditedFile));
  d.manifest = lsel::load_manifest(p.resolve(p.manifest, kManifestFile));
  if (d.real.n_layers != d.edited.n_layers || d.real.dim != d.edited.dim) {
    throw lsel::DataError("incompatible stacks: real has " + std::to_string(d.real.n_layers) + " layers x " +
                          std::to_string(d.real.dim) + ", edited has " + std::to_string(d.edited.n_layers) +
                          " layers x " + std::to_string(d.edited.dim));
  }
  return d;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string out;
  lsel::synth::SynthConfig cfg;
  long informative = -1;
  std::vector<double> split{4, 1, 1};
};

int run_synth(const CLI::App& cmd, SynthArgs& a) {
  if (a.split.size() != 3) throw UsageError("--split takes three ratios");
  if (a.informative >= 0) a.cfg.informative_layer = static_cast<std::size_t>(a.informative);
  a.cfg.split = {a.split[0], a.split[1], a.split[2]};
  const fs::path dir = a.out;
  ensure_dir(dir);
  const auto bm = lsel::synth::generate_benchmark(a.cfg);
  lsel::write_feature_stack(bm.real, dir / kRealFile);
  lsel::write_feature_stack(bm.edited, dir / kEditedFile);
  lsel::save_manifest(bm.manifest, dir / kManifestFile);
  std::ofstream(dir / kTruthFile, std::ios::trunc) << lsel::synth::truth_to_json(bm.truth).dump(2) << '\n';
  echo_config(cmd, dir);
  if (a.cfg.n_layers == 1) std::cerr << "warning: single-layer stack, LSA is degenerate (all scores 0)\n";
  std::size_t edited = 0;
  for (const auto& r : bm.manifest.records) edited += r.edited();
  std::cout << "wrote " << bm.manifest.records.size() << " records (" << edited << " edited, "
            << bm.manifest.editors.size() << " editors, " << a.cfg.n_layers << " layers x " << a.cfg.dim
            << ") to " << dir.string() << "\n"
            << "planted informative layer: " << bm.truth.informative_layer << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// lsa

struct LsaArgs {
  DataPaths data;
  lsel::lsa::LsaConfig cfg;
  std::string split = "train";
  std::string checkpoint;
  long layer_override = -1;
  std::string out;
  bool jsonl = false;
};

json profile_record(const lsel::lsa::LayerProfile& p) {
  return json{{"layer", p.layer},       {"d_kl", p.d_kl},         {"ldr", p.ldr},
              {"entropy", p.entropy},   {"d_kl_hat", p.d_kl_hat}, {"ldr_hat", p.ldr_hat},
              {"entropy_hat", p.entropy_hat}, {"score", p.score}};
}

// Every layer's rows passed through the checkpoint's encoder after per-layer
// standardization.
lsel::FeatureStack encode_stack(const lsel::FeatureStack& s, const lsel::FeatureStack& pool,
                                const lsel::Checkpoint& ckpt) {
  if (s.dim != ckpt.encoder.in_dim()) throw lsel::DataError("checkpoint input dimension does not match the stacks");
  lsel::FeatureStack out(s.n_samples, s.n_layers, ckpt.encoder.out_dim());
  out.sample_ids = s.sample_ids;
  for (std::size_t l = 0; l < s.n_layers; ++l) {
    std::vector<lsel::Vector> rows;
    for (const auto* st : {&s, &pool}) {
      for (std::size_t i = 0; i < st->n_samples; ++i) {
        const auto f = st->features(i, l);
        rows.emplace_back(f.begin(), f.end());
      }
    }
    const auto norm = lsel::Normalizer::fit(rows);
    for (std::size_t i = 0; i < s.n_samples; ++i) {
      const auto f = s.features(i, l);
      const auto y = ckpt.encoder.forward(norm.apply(lsel::Vector(f.begin(), f.end())));
      auto dst = out.features(i, l);
      for (std::size_t d = 0; d < y.size(); ++d) dst[d] = static_cast<float>(y[d]);
    }
  }
  return out;
}

int run_lsa(const CLI::App& cmd, LsaArgs& a) {
  const auto filter = parse_split_filter(a.split);
  const Dataset d = load_dataset(a.data);
  auto [real, edited] = lsel::select_split(d.manifest, d.real, d.edited, filter);
  if (!a.checkpoint.empty()) {
    const auto ckpt = lsel::read_checkpoint(a.checkpoint);
    auto enc_real = encode_stack(real, edited, ckpt);
    auto enc_edit = encode_stack(edited, real, ckpt);
    real = std::move(enc_real);
    edited = std::move(enc_edit);
  }
  const auto result = lsel::lsa::profile_layers(real, edited, a.cfg);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";

  std::size_t selected = lsel::lsa::select_layer(result.profiles);
  const bool overridden = a.layer_override >= 0;
  if (overridden) {
    if (static_cast<std::size_t>(a.layer_override) >= d.real.n_layers) throw UsageError("--layer-override out of range");
    selected = static_cast<std::size_t>(a.layer_override);
  }

  if (a.jsonl) {
    for (const auto& p : result.profiles) std::cout << profile_record(p).dump() << '\n';
    std::cout << json{{"selected_layer", selected}, {"override", overridden}}.dump() << '\n';
  } else {
    std::printf("%-6s %12s %12s %12s %8s %8s %8s %8s\n", "layer", "D_KL", "LDR", "E", "D_KL^", "LDR^", "E^",
                "score");
    for (const auto& p : result.profiles) {
      std::printf("%-6zu %12.6g %12.6g %12.6g %8.4f %8.4f %8.4f %8.4f\n", p.layer, p.d_kl, p.ldr, p.entropy,
                  p.d_kl_hat, p.ldr_hat, p.entropy_hat, p.score);
    }
    std::printf("selected_layer %zu%s\n", selected, overridden ? " (override)" : "");
  }

  if (!a.out.empty()) {
    const fs::path dir = a.out;
    ensure_dir(dir);
    std::ofstream prof(dir / kProfilesFile, std::ios::trunc);
    for (const auto& p : result.profiles) prof << profile_record(p).dump() << '\n';
    std::ofstream(dir / kSelectionFile, std::ios::trunc)
        << json{{"selected_layer", selected}, {"override", overridden}}.dump() << '\n';
    echo_config(cmd, dir);
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  DataPaths data;
  std::string out;
  long layer = -1;
  long layer_override = -1;
  std::string profiles;
  lsel::optim::TrainConfig cfg;
  long epochs = -1;
  lsel::lsa::LsaConfig lsa;
};

std::size_t read_selection(const std::string& path) {
  fs::path p = path;
  if (fs::is_directory(p)) p /= kSelectionFile;
  std::ifstream in(p);
  if (!in) throw lsel::DataError("cannot open layer selection " + p.string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("selected_layer")) throw lsel::DataError("malformed layer selection " + p.string());
  return j.at("selected_layer").get<std::size_t>();
}

int run_train(const CLI::App& cmd, TrainArgs& a) {
  const Dataset d = load_dataset(a.data);
  if (a.epochs >= 0) {
    if (cmd.count("--adapter-epochs") == 0) a.cfg.adapter_epochs = static_cast<std::size_t>(a.epochs);
    if (cmd.count("--head-epochs") == 0) a.cfg.head_epochs = static_cast<std::size_t>(a.epochs);
  }

  std::size_t layer = 0;
  std::string how;
  if (a.layer_override >= 0) {
    layer = static_cast<std::size_t>(a.layer_override);
    how = "override";
  } else if (a.layer >= 0) {
    layer = static_cast<std::size_t>(a.layer);
    how = "--layer";
  } else if (!a.profiles.empty()) {
    layer = read_selection(a.profiles);
    how = "selection file";
  } else {
    auto [real, edited] = lsel::select_split(d.manifest, d.real, d.edited, lsel::Split::train);
    layer = lsel::lsa::select_layer(lsel::lsa::profile_layers(real, edited, a.lsa).profiles);
    how = "LSA on train split";
  }
  if (layer >= d.real.n_layers) throw UsageError("layer " + std::to_string(layer) + " out of range");
  a.cfg.layer = layer;

  const auto train_set = lsel::gather_layer(d.manifest, d.real, d.edited, layer, lsel::Split::train);
  const auto val_set = lsel::gather_layer(d.manifest, d.real, d.edited, layer, lsel::Split::val);
  if (train_set.size() == 0) throw lsel::DataError("manifest has no train split; run a split first");

  const fs::path dir = a.out;
  ensure_dir(dir);
  lsel::optim::TrainResult result;
  try {
    result = lsel::optim::train(train_set, val_set, a.cfg);
  } catch (const lsel::optim::TrainingDiverged& e) {
    std::ofstream trace(dir / kTraceFile, std::ios::trunc);
    lsel::optim::write_loss_trace(e.trace(), trace);
    throw;
  }
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";

  lsel::write_checkpoint(result.checkpoint, dir / kCheckpointFile);
  {
    std::ofstream trace(dir / kTraceFile, std::ios::trunc);
    lsel::optim::write_loss_trace(result.trace, trace);
  }
  std::ofstream(dir / "train_summary.json", std::ios::trunc)
      << json{{"layer", layer},
              {"layer_source", how},
              {"train_samples", train_set.size()},
              {"val_samples", val_set.size()},
              {"best_adapter_epoch", result.best_adapter_epoch},
              {"best_adapter_val", result.best_adapter_val},
              {"best_head_epoch", result.best_head_epoch},
              {"best_head_val", result.best_head_val}}
             .dump(2)
      << '\n';
  echo_config(cmd, dir);
  std::cout << "layer " << layer << " (" << how << "), " << result.trace.size() << " steps; best adapter epoch "
            << result.best_adapter_epoch << " (val " << result.best_adapter_val << "), best head epoch "
            << result.best_head_epoch << " (val " << result.best_head_val << ")\n"
            << "checkpoint: " << (dir / kCheckpointFile).string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  DataPaths data;
  std::string checkpoint;
  std::string out;
  std::string split = "test";
  std::string positive = "edited";
  bool oracle = false;
};

int run_eval(const CLI::App& cmd, EvalArgs& a) {
  const Dataset d = load_dataset(a.data);
  const auto filter = parse_split_filter(a.split);
  const int positive = a.positive == "edited" ? 1 : 0;

  lsel::LabeledFeatures set;
  lsel::eval::Predictions preds;
  if (a.oracle) {
    set = lsel::gather_layer(d.manifest, d.real, d.edited, 0, filter);
    for (std::size_t i = 0; i < set.size(); ++i) {
      preds.probability.push_back(set.labels[i] == 1 ? 1.0 : 0.0);
      preds.quality.push_back(set.scores[i].value_or(lsel::QualityScores{}));
    }
  } else {
    if (a.checkpoint.empty()) throw UsageError("--checkpoint is required unless --oracle is given");
    const auto ckpt = lsel::read_checkpoint(a.checkpoint);
    set = lsel::gather_layer(d.manifest, d.real, d.edited, ckpt.layer, filter);
    preds = lsel::eval::predict(ckpt, set);
  }
  const auto report = lsel::eval::evaluate(set, preds, d.manifest.editors, positive);
  const std::string table = lsel::eval::format_report(report);
  std::cout << table;
  if (!a.out.empty()) {
    const fs::path dir = a.out;
    ensure_dir(dir);
    std::ofstream rec(dir / "report.jsonl", std::ios::trunc);
    lsel::eval::write_report_records(report, rec);
    std::ofstream(dir / "report.txt", std::ios::trunc) << table;
    std::ofstream pred(dir / "predictions.jsonl", std::ios::trunc);
    for (std::size_t i = 0; i < set.size(); ++i) {
      pred << json{{"sample_id", set.sample_ids[i]},
                   {"p_edited", preds.probability[i]},
                   {"s_q", preds.quality[i].s_q},
                   {"s_e", preds.quality[i].s_e},
                   {"s_p", preds.quality[i].s_p}}
                  .dump()
           << '\n';
    }
    echo_config(cmd, dir);
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// inspect

int run_inspect(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw lsel::DataError("cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (std::memcmp(magic, lsel::kStackMagic, 4) == 0) {
    const auto s = lsel::read_feature_stack(path);
    std::cout << json{{"format", "LFS1"},
                      {"n_samples", s.n_samples},
                      {"n_layers", s.n_layers},
                      {"dim", s.dim},
                      {"payload_bytes", s.data.size() * 4},
                      {"first_id", s.sample_ids.empty() ? "" : s.sample_ids.front()},
                      {"last_id", s.sample_ids.empty() ? "" : s.sample_ids.back()}}
                     .dump(2)
              << '\n';
    return kOk;
  }
  if (std::memcmp(magic, lsel::kCheckpointMagic, 4) == 0) {
    const auto h = lsel::read_checkpoint_header(path);
    lsel::read_checkpoint(path);  // full validation
    std::cout << json{{"format", "LLM1"},      {"in_dim", h.in_dim}, {"out_dim", h.out_dim},
                      {"rank", h.rank},        {"hidden", h.hidden}, {"layer", h.layer},
                      {"scale", h.scale},      {"lora_alpha", h.lora_alpha},
                      {"tau", h.tau},          {"payload_floats", h.payload_floats}}
                     .dump(2)
              << '\n';
    return kOk;
  }
  throw lsel::FormatError(lsel::FormatError::Kind::bad_magic, "bad magic: " + path + " is neither LFS1 nor LLM1");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layer-selective forensic evaluation toolkit"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  std::string config;

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic benchmark with planted ground truth");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--seed", synth.cfg.seed, "Random seed");
  s->add_option("--editors", synth.cfg.n_editors, "Number of editing models");
  s->add_option("--per-editor", synth.cfg.samples_per_editor, "Edited samples per editor");
  s->add_option("--layers", synth.cfg.n_layers, "Number of layers");
  s->add_option("--dim", synth.cfg.dim, "Feature dimension");
  s->add_option("--informative-layer", synth.informative, "Planted layer (-1: drawn from the seed)");
  s->add_option("--shift", synth.cfg.shift, "Class-mean shift in standard deviations");
  s->add_option("--noise", synth.cfg.noise, "Quality score noise sigma");
  s->add_option("--split", synth.split, "train/val/test ratios")->expected(3);
  s->add_option("--config", config, "Line-delimited config file");

  LsaArgs lsa;
  auto* l = app.add_subcommand("lsa", "Profile layers and select the optimal one");
  lsa.data.add_to(*l);
  l->add_option("--bins", lsa.cfg.bins, "Histogram bins")->check(CLI::Range(2, 1 << 20));
  l->add_option("--alpha", lsa.cfg.alpha, "Histogram smoothing");
  l->add_option("--eps", lsa.cfg.eps, "LDR epsilon");
  l->add_option("--split", lsa.split, "Split to profile (train, val, test, all)");
  l->add_option("--checkpoint", lsa.checkpoint, "Profile encoder outputs of this checkpoint instead of raw features");
  l->add_option("--layer-override", lsa.layer_override, "Force the selected layer");
  l->add_option("--out", lsa.out, "Write profiles.jsonl and selected_layer.json here");
  l->add_flag("--jsonl", lsa.jsonl, "Print records instead of a table");
  l->add_option("--config", config, "Line-delimited config file");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Contrastive adapter tuning followed by head training");
  tr.data.add_to(*t);
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--layer", tr.layer, "Layer to train on");
  t->add_option("--profiles", tr.profiles, "selected_layer.json (or lsa output directory)");
  t->add_option("--layer-override", tr.layer_override, "Force the layer, ignoring any selection");
  t->add_option("--seed", tr.cfg.seed, "Random seed");
  t->add_option("--epochs", tr.epochs, "Epochs for both stages (default 30)");
  t->add_option("--adapter-epochs", tr.cfg.adapter_epochs, "Contrastive-stage epochs");
  t->add_option("--head-epochs", tr.cfg.head_epochs, "Head-stage epochs");
  t->add_option("--batch", tr.cfg.batch, "Batch size")->check(CLI::PositiveNumber);
  t->add_option("--rank", tr.cfg.rank, "LoRA rank");
  t->add_option("--lora-alpha", tr.cfg.lora_alpha, "LoRA alpha (scale = alpha / rank)");
  t->add_option("--tau", tr.cfg.tau, "Contrastive temperature");
  t->add_option("--embed-dim", tr.cfg.embed_dim, "Encoder output width");
  t->add_option("--hidden", tr.cfg.hidden, "Head hidden width");
  t->add_option("--lr-adapter", tr.cfg.lr_adapter, "Adapter learning rate");
  t->add_option("--lr-heads", tr.cfg.lr_heads, "Head learning rate");
  t->add_option("--weight-decay", tr.cfg.hyper.weight_decay, "AdamW weight decay");
  t->add_option("--clip-norm", tr.cfg.clip_norm, "Gradient-norm clipping (0 = off)");
  t->add_flag("--in-batch-negatives", tr.cfg.in_batch_negatives, "Use every edited sample in the batch as a negative");
  t->add_option("--bins", tr.lsa.bins, "LSA histogram bins when selecting the layer here");
  t->add_option("--config", config, "Line-delimited config file");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  ev.data.add_to(*e);
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file");
  e->add_option("--out", ev.out, "Write report.jsonl, report.txt and predictions.jsonl here");
  e->add_option("--split", ev.split, "Split to evaluate (train, val, test, all)");
  e->add_option("--positive-class", ev.positive, "F1 positive class")->check(CLI::IsMember({"edited", "real"}));
  e->add_flag("--oracle", ev.oracle, "Score the ground truth against itself");
  e->add_option("--config", config, "Line-delimited config file");

  std::string inspect_path;
  auto* in = app.add_subcommand("inspect", "Print header and metadata of an LFS1 or LLM1 file");
  in->add_option("file", inspect_path, "File to inspect")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    for (CLI::App* cmd : app.get_subcommands()) {
      if (!config.empty()) apply_config_file(*cmd, config);
    }
    if (*s) return run_synth(*s, synth);
    if (*l) return run_lsa(*l, lsa);
    if (*t) return run_train(*t, tr);
    if (*e) return run_eval(*e, ev);
    if (*in) return run_inspect(inspect_path);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return kUsage;
  } catch (const CLI::Error& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return kUsage;
  } catch (const lsel::NumericalError& err) {
    std::cerr << "numerical failure: " << err.what() << "\n";
    return kNumeric;
  } catch (const lsel::DomainError& err) {
    std::cerr << "numerical failure: " << err.what() << "\n";
    return kNumeric;
  } catch (const lsel::DataError& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kData;
  } catch (const std::exception& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kData;
  }
  return kUsage;
}

#include "lsel/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>

#include <nlohmann/json.hpp>

#include "lsel/errors.hpp"

namespace lsel::eval {

Predictions predict(const Checkpoint& ckpt, const LabeledFeatures& data) {
  Predictions p;
  p.probability.reserve(data.size());
  p.quality.reserve(data.size());
  for (const auto& f : data.feats) {
    const Vector h = ckpt.embed(f);
    p.probability.push_back(heads::detect(ckpt.detection, h));
    p.quality.push_back(heads::predict_quality(ckpt.quality, h));
  }
  return p;
}

namespace {

DetectionRow detection_row(std::string group, const std::vector<metrics::DetectionOutcome>& outcomes,
                           int positive_class) {
  return {std::move(group), outcomes.size(), metrics::accuracy(outcomes), metrics::f1(outcomes, positive_class)};
}

}  // namespace

EvalReport evaluate(const LabeledFeatures& data, const Predictions& preds, const std::vector<std::string>& editors,
                    int positive_class) {
  if (preds.probability.size() != data.size() || preds.quality.size() != data.size()) {
    throw DataError("prediction count does not match the evaluation set");
  }
  if (data.size() == 0) throw DataError("evaluation split is empty");
  EvalReport report;
  report.positive_class = positive_class;

  std::vector<metrics::DetectionOutcome> all;
  std::map<std::string, std::set<std::string>> sources_of;  // editor -> src_ids of its edits
  for (std::size_t i = 0; i < data.size(); ++i) {
    all.push_back(metrics::make_outcome(preds.probability[i], data.labels[i], data.editors[i]));
    if (data.labels[i] == 1) sources_of[data.editors[i]].insert(data.src_ids[i]);
  }
  for (const auto& e : editors) {
    const auto it = sources_of.find(e);
    if (it == sources_of.end()) throw DataError("editor '" + e + "' is absent from the evaluation split");
    std::vector<metrics::DetectionOutcome> group;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const bool mine = data.labels[i] == 1 ? data.editors[i] == e : it->second.contains(data.src_ids[i]);
      if (mine) group.push_back(all[i]);
    }
    report.detection.push_back(detection_row(e, group, positive_class));
  }
  report.detection.push_back(detection_row("Overall", all, positive_class));

  std::vector<std::string> q_editors;
  std::vector<QualityScores> q_pred, q_human;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.scores[i]) continue;
    QualityScores p = preds.quality[i];
    for (std::size_t k = 0; k < kQualityDims; ++k) p[k] = std::clamp(p[k], 1.0, 5.0);
    q_pred.push_back(p);
    q_human.push_back(*data.scores[i]);
    q_editors.push_back(data.editors[i]);
  }
  if (q_pred.size() < 2) throw DataError("evaluation split has fewer than 2 scored samples");
  for (std::size_t k = 0; k < kQualityDims; ++k) {
    Vector x, y;
    for (std::size_t i = 0; i < q_pred.size(); ++i) {
      x.push_back(q_pred[i][k]);
      y.push_back(q_human[i][k]);
    }
    report.quality.push_back(
        {std::string(kQualityNames[k]), x.size(), metrics::srcc(x, y), metrics::krcc(x, y), metrics::plcc(x, y)});
  }
  report.ranking = metrics::model_rank_report(editors, q_editors, q_pred, q_human);
  return report;
}

void write_report_records(const EvalReport& r, std::ostream& out) {
  for (const auto& d : r.detection) {
    nlohmann::ordered_json j;
    j["kind"] = "detection";
    j["group"] = d.group;
    j["n"] = d.n;
    j["acc"] = d.acc;
    j["f1"] = d.f1.value;
    j["f1_degenerate"] = d.f1.degenerate;
    j["positive_class"] = r.positive_class == 1 ? "edited" : "real";
    out << j.dump() << '\n';
  }
  for (const auto& q : r.quality) {
    nlohmann::ordered_json j;
    j["kind"] = "quality";
    j["dimension"] = q.dimension;
    j["n"] = q.n;
    j["srcc"] = q.srcc;
    j["krcc"] = q.krcc;
    j["plcc"] = q.plcc;
    out << j.dump() << '\n';
  }
  for (const auto& d : r.ranking.dimensions) {
    nlohmann::ordered_json j;
    j["kind"] = "ranking";
    j["dimension"] = d.name;
    j["editors"] = r.ranking.editors;
    j["human_mean"] = d.human_mean;
    j["pred_mean"] = d.pred_mean;
    j["human_rank"] = d.human_rank;
    j["pred_rank"] = d.pred_rank;
    j["srcc_to_human"] = d.srcc_to_human;
    j["rmse_to_human"] = d.rmse_to_human;
    out << j.dump() << '\n';
  }
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

}  // namespace

std::string format_report(const EvalReport& r) {
  std::size_t w = 8;
  for (const auto& d : r.detection) w = std::max(w, d.group.size() + 2);

  std::string out = "Detection (positive class: ";
  out += r.positive_class == 1 ? "edited" : "real";
  out += ")\n" + pad("Editor", w) + pad("N", 7) + pad("Acc", 9) + "F1\n";
  for (const auto& d : r.detection) {
    out += pad(d.group, w) + pad(std::to_string(d.n), 7) + pad(fmt("%.2f", 100.0 * d.acc), 9) +
           fmt("%.2f", 100.0 * d.f1.value) + (d.f1.degenerate ? " (degenerate)" : "") + "\n";
  }

  out += "\nQuality\n" + pad("Dim", 6) + pad("N", 7) + pad("SRCC", 9) + pad("KRCC", 9) + "PLCC\n";
  for (const auto& q : r.quality) {
    out += pad(q.dimension, 6) + pad(std::to_string(q.n), 7) + pad(fmt("%.4f", q.srcc), 9) +
           pad(fmt("%.4f", q.krcc), 9) + fmt("%.4f", q.plcc) + "\n";
  }

  out += "\nEditor ranking (mean scores on 0-100, rank 1 = best)\n" + pad("Editor", w);
  for (const auto& d : r.ranking.dimensions) {
    if (d.name == "overall") {
      out += pad("Human", 7) + "Ours";
    } else {
      out += pad(d.name + ":human", 11) + pad("ours", 8);
    }
  }
  out += "\n";
  for (std::size_t e = 0; e < r.ranking.editors.size(); ++e) {
    out += pad(r.ranking.editors[e], w);
    for (const auto& d : r.ranking.dimensions) {
      if (d.name == "overall") {
        out += pad(fmt("%g", d.human_rank[e]), 7) + fmt("%g", d.pred_rank[e]);
      } else {
        out += pad(fmt("%.2f", metrics::to_percent_scale(d.human_mean[e])), 11) +
               pad(fmt("%.2f", metrics::to_percent_scale(d.pred_mean[e])), 8);
      }
    }
    out += "\n";
  }
  out += pad("SRCC", w);
  for (const auto& d : r.ranking.dimensions) {
    out += d.name == "overall" ? fmt("%.3f", d.srcc_to_human) : pad("", 11) + pad(fmt("%.3f", d.srcc_to_human), 8);
  }
  out += "\n" + pad("RMSE", w);
  for (const auto& d : r.ranking.dimensions) {
    out += d.name == "overall" ? fmt("%.3f", d.rmse_to_human) : pad("", 11) + pad(fmt("%.3f", d.rmse_to_human), 8);
  }
  out += "\n";
  return out;
}

}  // namespace lsel::eval

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "lsel/checkpoint.hpp"
#include "lsel/dataset.hpp"
#include "lsel/metrics.hpp"

namespace lsel::eval {

struct Predictions {
  std::vector<double> probability;      // of the edited class
  std::vector<QualityScores> quality;   // raw head outputs
};

Predictions predict(const Checkpoint& ckpt, const LabeledFeatures& data);

struct DetectionRow {
  std::string group;  // editor name or "Overall"
  std::size_t n = 0;
  double acc = 0.0;
  metrics::F1Score f1;
};

struct CorrelationRow {
  std::string dimension;
  std::size_t n = 0;
  double srcc = 0.0;
  double krcc = 0.0;
  double plcc = 0.0;
};

struct EvalReport {
  int positive_class = 1;
  std::vector<DetectionRow> detection;  // one per editor, then "Overall"
  std::vector<CorrelationRow> quality;  // s_q, s_e, s_p
  metrics::ModelRankReport ranking;
};

// Per-editor detection groups hold the editor's edited samples plus the real
// samples sharing their src_id. Quality predictions are clamped to [1, 5]
// before correlation and ranking.
EvalReport evaluate(const LabeledFeatures& data, const Predictions& preds, const std::vector<std::string>& editors,
                    int positive_class = 1);

void write_report_records(const EvalReport& report, std::ostream& out);

// Aligned plain-text tables: detection (Acc, F1 per editor + Overall),
// quality correlations, and the editor ranking.
std::string format_report(const EvalReport& report);

}  // namespace lsel::eval

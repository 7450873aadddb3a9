#pragma once

// Detection and correlation metrics plus the editor-ranking protocol: rank
// editing models by their mean predicted score and compare against the human
// ranking.

#include <span>
#include <string>
#include <vector>

#include "lsel/matrix.hpp"
#include "lsel/tensor_io.hpp"

namespace lsel::metrics {

inline constexpr double kDecisionThreshold = 0.5;

struct DetectionOutcome {
  double probability = 0.0;  // of the edited class
  int predicted = 0;
  int truth = 0;
  std::string editor;
};

DetectionOutcome make_outcome(double probability, int truth, std::string editor = {});

double accuracy(std::span<const DetectionOutcome> outcomes);

struct F1Score {
  double value = 0.0;
  bool degenerate = false;  // precision + recall == 0; value is 0 by convention
};

F1Score f1(std::span<const DetectionOutcome> outcomes, int positive_class = 1);

// Fractional (average) ranks, 1-based. With `descending` the largest value
// gets rank 1.
Vector average_ranks(std::span<const double> values, bool descending = false);

double srcc(std::span<const double> x, std::span<const double> y);

// Kendall tau-b, O(n log n).
double krcc(std::span<const double> x, std::span<const double> y);

double plcc(std::span<const double> x, std::span<const double> y);

double rmse(std::span<const double> x, std::span<const double> y);

// Maps a 1-5 score onto 0-100.
inline double to_percent_scale(double score) { return (score - 1.0) / 4.0 * 100.0; }

struct RankDimension {
  std::string name;
  Vector human_mean;  // per editor, 1-5 scale (rank "overall": mean of the three)
  Vector pred_mean;
  Vector human_rank;  // 1 = best
  Vector pred_rank;
  double srcc_to_human = 0.0;
  double rmse_to_human = 0.0;
};

struct ModelRankReport {
  std::vector<std::string> editors;
  std::vector<RankDimension> dimensions;  // s_q, s_e, s_p, overall
};

// Ranking from per-editor means on the 1-5 scale. Per-dimension RMSE is taken
// on the 0-100 scale; the overall entry ranks editors by the mean of their
// three dimension means and reports SRCC and RMSE between rank vectors.
ModelRankReport rank_report_from_means(std::vector<std::string> editors,
                                       std::span<const QualityScores> human_means,
                                       std::span<const QualityScores> pred_means);

// Per-sample inputs: editor of each sample, predicted and human scores.
// Throws DataError if an editor in `editors` has no samples.
ModelRankReport model_rank_report(const std::vector<std::string>& editors,
                                  std::span<const std::string> sample_editors,
                                  std::span<const QualityScores> preds, std::span<const QualityScores> human);

}  // namespace lsel::metrics

#include "lsel/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "lsel/errors.hpp"

namespace lsel::metrics {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y, const char* who) {
  if (x.size() != y.size()) throw DomainError(std::string(who) + ": length mismatch");
  if (x.size() < 2) throw DomainError(std::string(who) + ": need at least 2 observations");
}

double pearson_unchecked(std::span<const double> x, std::span<const double> y, const char* who) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DomainError(std::string(who) + ": zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// Counts inversions in v (strictly decreasing pairs) while merge-sorting it.
std::uint64_t merge_count(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t swaps = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += mid - i;
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

// Sum over runs of equal adjacent values of t(t-1)/2.
template <typename Eq>
std::uint64_t tied_pairs(std::size_t n, Eq equal) {
  std::uint64_t total = 0;
  std::size_t run = 1;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i < n && equal(i - 1, i)) {
      ++run;
    } else {
      total += static_cast<std::uint64_t>(run) * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

}  // namespace

DetectionOutcome make_outcome(double probability, int truth, std::string editor) {
  return {probability, probability >= kDecisionThreshold ? 1 : 0, truth, std::move(editor)};
}

double accuracy(std::span<const DetectionOutcome> outcomes) {
  if (outcomes.empty()) throw DomainError("accuracy: no outcomes");
  const auto correct =
      std::count_if(outcomes.begin(), outcomes.end(), [](const auto& o) { return o.predicted == o.truth; });
  return static_cast<double>(correct) / static_cast<double>(outcomes.size());
}

F1Score f1(std::span<const DetectionOutcome> outcomes, int positive_class) {
  if (outcomes.empty()) throw DomainError("f1: no outcomes");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& o : outcomes) {
    const bool pred = o.predicted == positive_class;
    const bool truth = o.truth == positive_class;
    tp += pred && truth;
    fp += pred && !truth;
    fn += !pred && truth;
  }
  const double precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  const double recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  if (precision + recall == 0.0) return {0.0, true};
  return {2.0 * precision * recall / (precision + recall), false};
}

Vector average_ranks(std::span<const double> values, bool descending) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return descending ? values[a] > values[b] : values[a] < values[b];
  });
  Vector ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

double srcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "srcc");
  const Vector rx = average_ranks(x);
  const Vector ry = average_ranks(y);
  return pearson_unchecked(rx, ry, "srcc");
}

double krcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "krcc");
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });

  const std::uint64_t pairs = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const std::uint64_t ties_x = tied_pairs(n, [&](std::size_t i, std::size_t j) { return x[order[i]] == x[order[j]]; });
  const std::uint64_t ties_xy = tied_pairs(n, [&](std::size_t i, std::size_t j) {
    return x[order[i]] == x[order[j]] && y[order[i]] == y[order[j]];
  });

  std::vector<double> ys(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  const std::uint64_t swaps = merge_count(ys, buf, 0, n);
  const std::uint64_t ties_y = tied_pairs(n, [&](std::size_t i, std::size_t j) { return ys[i] == ys[j]; });

  const double denom = std::sqrt(static_cast<double>(pairs - ties_x) * static_cast<double>(pairs - ties_y));
  if (denom == 0.0) throw DomainError("krcc: all-tied input");
  // concordant - discordant = pairs - ties_x - ties_y + ties_xy - 2 * discordant
  const double num = static_cast<double>(pairs) - static_cast<double>(ties_x) - static_cast<double>(ties_y) +
                     static_cast<double>(ties_xy) - 2.0 * static_cast<double>(swaps);
  return std::clamp(num / denom, -1.0, 1.0);
}

double plcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "plcc");
  return pearson_unchecked(x, y, "plcc");
}

double rmse(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("rmse: length mismatch");
  if (x.empty()) throw DomainError("rmse: empty input");
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) ss += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

ModelRankReport rank_report_from_means(std::vector<std::string> editors,
                                       std::span<const QualityScores> human_means,
                                       std::span<const QualityScores> pred_means) {
  const std::size_t n = editors.size();
  if (human_means.size() != n || pred_means.size() != n) {
    throw DomainError("rank report: per-editor means do not match the editor list");
  }
  ModelRankReport report;
  report.editors = std::move(editors);

  Vector human_overall(n, 0.0), pred_overall(n, 0.0);
  for (std::size_t k = 0; k < kQualityDims; ++k) {
    RankDimension dim;
    dim.name = std::string(kQualityNames[k]);
    Vector h_pct(n), p_pct(n);
    for (std::size_t e = 0; e < n; ++e) {
      dim.human_mean.push_back(human_means[e][k]);
      dim.pred_mean.push_back(pred_means[e][k]);
      h_pct[e] = to_percent_scale(human_means[e][k]);
      p_pct[e] = to_percent_scale(pred_means[e][k]);
      human_overall[e] += human_means[e][k] / static_cast<double>(kQualityDims);
      pred_overall[e] += pred_means[e][k] / static_cast<double>(kQualityDims);
    }
    dim.human_rank = average_ranks(dim.human_mean, true);
    dim.pred_rank = average_ranks(dim.pred_mean, true);
    dim.srcc_to_human = srcc(dim.pred_mean, dim.human_mean);
    dim.rmse_to_human = rmse(p_pct, h_pct);
    report.dimensions.push_back(std::move(dim));
  }

  RankDimension overall;
  overall.name = "overall";
  overall.human_mean = human_overall;
  overall.pred_mean = pred_overall;
  overall.human_rank = average_ranks(human_overall, true);
  overall.pred_rank = average_ranks(pred_overall, true);
  overall.srcc_to_human = srcc(overall.pred_rank, overall.human_rank);
  overall.rmse_to_human = rmse(overall.pred_rank, overall.human_rank);
  report.dimensions.push_back(std::move(overall));
  return report;
}

ModelRankReport model_rank_report(const std::vector<std::string>& editors,
                                  std::span<const std::string> sample_editors,
                                  std::span<const QualityScores> preds, std::span<const QualityScores> human) {
  if (sample_editors.size() != preds.size() || preds.size() != human.size()) {
    throw DomainError("model_rank_report: per-sample inputs differ in length");
  }
  std::vector<QualityScores> h_mean(editors.size()), p_mean(editors.size());
  std::vector<std::size_t> count(editors.size(), 0);
  for (std::size_t i = 0; i < sample_editors.size(); ++i) {
    const auto it = std::find(editors.begin(), editors.end(), sample_editors[i]);
    if (it == editors.end()) continue;
    const auto e = static_cast<std::size_t>(it - editors.begin());
    ++count[e];
    for (std::size_t k = 0; k < kQualityDims; ++k) {
      h_mean[e][k] += human[i][k];
      p_mean[e][k] += preds[i][k];
    }
  }
  for (std::size_t e = 0; e < editors.size(); ++e) {
    if (count[e] == 0) throw DataError("editor '" + editors[e] + "' is missing from the evaluation split");
    for (std::size_t k = 0; k < kQualityDims; ++k) {
      h_mean[e][k] /= static_cast<double>(count[e]);
      p_mean[e][k] /= static_cast<double>(count[e]);
    }
  }
  return rank_report_from_means(editors, h_mean, p_mean);
}

}  // namespace lsel::metrics

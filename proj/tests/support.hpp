#pragma once
// Independent reference implementations and fixtures shared by the unit
// tests and the acceptance runner. Nothing here calls the code it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "lsel/adapter.hpp"
#include "lsel/heads.hpp"
#include "lsel/matrix.hpp"
#include "lsel/optim.hpp"

namespace lsel::testing {

// Unique scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("lsel_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Vector gaussian_vector(std::size_t n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  Vector v(n);
  for (double& x : v) x = g(rng);
  return v;
}

inline Matrix gaussian_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double sd = 1.0) {
  Matrix m(r, c);
  std::normal_distribution<double> g(0.0, sd);
  for (double& x : m.values()) x = g(rng);
  return m;
}

// ---------------------------------------------------------------------------
// Correlation oracles

// O(n^2) tau-b straight from pair counts.
inline double brute_krcc(const std::vector<double>& x, const std::vector<double>& y) {
  long long c = 0, d = 0, tx = 0, ty = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0 && dy == 0) continue;
      if (dx == 0) {
        ++tx;
      } else if (dy == 0) {
        ++ty;
      } else if ((dx > 0) == (dy > 0)) {
        ++c;
      } else {
        ++d;
      }
    }
  }
  return static_cast<double>(c - d) / std::sqrt(static_cast<double>(c + d + tx) * static_cast<double>(c + d + ty));
}

// Average ranks by counting: rank_i = #{j: v_j < v_i} + (#{j: v_j == v_i} + 1) / 2.
inline std::vector<double> counting_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) {
      less += w < v[i];
      equal += w == v[i];
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

// Single-pass raw-moment Pearson formula.
inline double direct_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

// ---------------------------------------------------------------------------
// Finite-difference fixtures. Each returns the max relative error of the
// library's analytic gradient against central differences at eps = 1e-5.

inline constexpr double kFdEps = 1e-5;

inline double contrastive_fd_error(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t in = 6, out = 5, rank = 2;
  adapter::LoraLinear enc(gaussian_matrix(out, in, rng, 0.4), gaussian_vector(out, rng, 0.5),
                          gaussian_matrix(rank, in, rng, 0.5), gaussian_matrix(out, rank, rng, 0.5), 1.5);
  std::vector<adapter::Triplet> batch;
  for (int i = 0; i < 3; ++i) {
    batch.push_back({gaussian_vector(in, rng), gaussian_vector(in, rng), gaussian_vector(in, rng)});
  }
  const double tau = 0.5;
  const auto res = adapter::contrastive_grad(enc, batch, tau);
  const Vector analytic = optim::flatten(res.grad.views());
  const Vector theta = optim::flatten({enc.a().values(), enc.b().values()});
  auto loss = [&](std::span<const double> p) {
    adapter::LoraLinear probe = enc;
    optim::unflatten(p, probe.parameters());
    return adapter::contrastive_objective(probe, batch, tau);
  };
  return optim::finite_diff_check(loss, theta, analytic, kFdEps);
}

inline double detection_fd_error(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t in = 4, hidden = 6, n = 5;
  heads::DetectionHead head;
  head.w1 = gaussian_matrix(hidden, in, rng, 0.8);
  head.b1 = gaussian_vector(hidden, rng, 0.3);
  head.w2 = gaussian_vector(hidden, rng, 0.8);
  head.b2 = 0.1;
  std::vector<Vector> xs;
  std::vector<int> ys;
  for (std::size_t i = 0; i < n; ++i) {
    xs.push_back(gaussian_vector(in, rng));
    ys.push_back(static_cast<int>(i % 2));
  }
  heads::DetectionGrad grad(head);
  heads::detection_batch_grad(head, xs, ys, grad);
  const Vector analytic = optim::flatten(grad.views());
  const Vector theta = optim::flatten({head.w1.values(), head.b1, head.w2, {&head.b2, 1}});
  auto loss = [&](std::span<const double> p) {
    heads::DetectionHead probe = head;
    optim::unflatten(p, probe.parameters());
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) total += heads::bce_loss(heads::detect(probe, xs[i]), ys[i]);
    return total / static_cast<double>(n);
  };
  return optim::finite_diff_check(loss, theta, analytic, kFdEps);
}

inline double quality_fd_error(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t in = 4, hidden = 6, n = 5;
  heads::QualityHead head;
  head.w1 = gaussian_matrix(hidden, in, rng, 0.8);
  head.b1 = gaussian_vector(hidden, rng, 0.3);
  head.w2 = gaussian_matrix(3, hidden, rng, 0.8);
  head.b2 = gaussian_vector(3, rng, 0.5);
  std::vector<Vector> xs;
  std::vector<QualityScores> ys;
  std::uniform_real_distribution<double> score(1.0, 5.0);
  for (std::size_t i = 0; i < n; ++i) {
    xs.push_back(gaussian_vector(in, rng));
    ys.push_back({score(rng), score(rng), score(rng)});
  }
  heads::QualityGrad grad(head);
  heads::quality_batch_grad(head, xs, ys, grad);
  const Vector analytic = optim::flatten(grad.views());
  const Vector theta = optim::flatten({head.w1.values(), head.b1, head.w2.values(), head.b2});
  auto loss = [&](std::span<const double> p) {
    heads::QualityHead probe = head;
    optim::unflatten(p, probe.parameters());
    std::vector<QualityScores> preds;
    for (const auto& x : xs) preds.push_back(heads::predict_quality(probe, x));
    return heads::quality_loss(preds, ys);
  };
  return optim::finite_diff_check(loss, theta, analytic, kFdEps);
}

}  // namespace lsel::testing

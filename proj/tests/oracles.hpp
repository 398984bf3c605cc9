#pragma once

// Independent reference computations used only by the tests. None of these
// call into the library code paths they are used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

namespace flowplug::testing {

// Central differences of f at x with step h.
inline std::vector<double> central_differences(const std::function<double(std::span<const double>)>& f,
                                               std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// |a - b| relative to the larger magnitude, with a floor for entries that are
// essentially zero.
inline double relative_error(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_relative_error(std::span<const double> a, std::span<const double> b,
                                 double floor = 1e-3) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], b[i], floor));
  return worst;
}

// log|det A| by Gaussian elimination with partial pivoting. A is row-major n x n.
inline double log_abs_det(std::vector<double> a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a[i * n + k]) > std::abs(a[piv * n + k])) piv = i;
    if (piv != k)
      for (std::size_t j = 0; j < n; ++j) std::swap(a[k * n + j], a[piv * n + j]);
    const double p = a[k * n + k];
    acc += std::log(std::abs(p));
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a[i * n + k] / p;
      for (std::size_t j = k; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
    }
  }
  return acc;
}

// Finite-difference Jacobian of f: R^n -> R^n, row-major.
inline std::vector<double> jacobian(const std::function<std::vector<double>(std::span<const double>)>& f,
                                    std::vector<double> x, double h = 1e-5) {
  const std::size_t n = x.size();
  std::vector<double> jac(n * n);
  for (std::size_t j = 0; j < n; ++j) {
    const double keep = x[j];
    x[j] = keep + h;
    const auto up = f(x);
    x[j] = keep - h;
    const auto down = f(x);
    x[j] = keep;
    for (std::size_t i = 0; i < n; ++i) jac[i * n + j] = (up[i] - down[i]) / (2.0 * h);
  }
  return jac;
}

// Sum over ordered pairs i != j of |s_i - s_j|^2, computed pair by pair.
inline double pairwise_contrastive(const std::vector<std::vector<double>>& s) {
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (i == j) continue;
      for (std::size_t c = 0; c < s[i].size(); ++c) acc += (s[i][c] - s[j][c]) * (s[i][c] - s[j][c]);
    }
  return acc;
}

// Average ranks by counting: rank = 1 + #less + (#equal - 1) / 2.
inline std::vector<double> counting_ranks(std::span<const double> v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) {
      if (w < v[i]) less += 1;
      if (w == v[i]) equal += 1;
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double pearson_on_ranks(std::span<const double> a, std::span<const double> b) {
  const auto ra = counting_ranks(a);
  const auto rb = counting_ranks(b);
  return pearson(ra, rb);
}

}  // namespace flowplug::testing

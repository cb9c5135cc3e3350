#pragma once

// Independent reference computations shared by the unit and acceptance
// tests. Nothing here calls into the code under test.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

struct GridOptimum {
  Eigen::Vector3d w = Eigen::Vector3d::Zero();
  double objective = std::numeric_limits<double>::infinity();
  double squared_error = 0.0;
  bool found = false;
};

// Exhaustive scan of the 3-weight simplex at step 1/steps for one peak
// position (0, 1, 2): weights rise up to the peak and fall after it, and the
// peak weight is at least floor_units/steps.
inline GridOptimum simplex_grid(const Eigen::Matrix3d& gram, const Eigen::Vector3d& cross, double rr, double lambda,
                                int peak, int floor_units, int steps = 1000) {
  GridOptimum best;
  const double h = 1.0 / steps;
  for (int i = 0; i <= steps; ++i) {
    for (int j = 0; i + j <= steps; ++j) {
      const int k = steps - i - j;
      const int v[3] = {i, j, k};
      bool ok = v[peak] >= floor_units;
      if (peak == 0) ok = ok && i >= j && j >= k;
      if (peak == 1) ok = ok && i <= j && j >= k;
      if (peak == 2) ok = ok && i <= j && j <= k;
      if (!ok) continue;
      Eigen::Vector3d w(i * h, j * h, k * h);
      const double se = std::max(0.0, w.dot(gram * w) - 2.0 * cross.dot(w) + rr);
      const double obj = se + lambda * w.squaredNorm();
      if (obj < best.objective) {
        best.objective = obj;
        best.squared_error = se;
        best.w = w;
        best.found = true;
      }
    }
  }
  return best;
}

// Worst-case amount by which the best grid point can exceed the continuous
// optimum: every feasible point has a feasible grid point within L1 distance
// 3/steps, and the objective's gradient is bounded on the simplex.
inline double grid_resolution_bound(const Eigen::Matrix3d& gram, const Eigen::Vector3d& cross, double lambda,
                                    int steps = 1000) {
  const double h = 3.0 / steps;
  const double grad = 2.0 * gram.cwiseAbs().maxCoeff() + 2.0 * cross.cwiseAbs().maxCoeff() + 2.0 * lambda;
  const double curv = 2.0 * (gram.cwiseAbs().maxCoeff() + lambda);
  return h * grad + 0.5 * curv * h * h;
}

// Mean of the t lowest (t <= n) or 2n-t highest (t > n) values, 1-based t.
inline std::vector<double> extremal_means(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  std::vector<double> e;
  for (std::size_t t = 1; t < 2 * n; ++t) {
    const std::size_t lo = t <= n ? 0 : t - n, hi = t <= n ? t : n;
    double s = 0.0;
    for (std::size_t j = lo; j < hi; ++j) s += x[j];
    e.push_back(s / static_cast<double>(hi - lo));
  }
  return e;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    sa += a[k];
    sb += b[k];
    saa += a[k] * a[k];
    sbb += b[k] * b[k];
    sab += a[k] * b[k];
  }
  return (n * sab - sa * sb) / std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
}

inline double sample_sd(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace oracle

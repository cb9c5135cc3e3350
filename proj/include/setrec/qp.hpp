#pragma once

// Dense primal active-set solver for small convex QPs, and the per-user
// extremal-subset weight fit built on it.
//
//   minimize   0.5 x'Hx + g'x
//   subject to A_eq x  = b_eq
//              A_in x >= b_in
//
// The solver needs a feasible starting point. Equalities stay in the working
// set permanently, which is the same as eliminating them by substitution.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "setrec/core.hpp"

namespace setrec {

struct QpOptions {
  double tolerance = 1e-8;  // KKT residual / multiplier sign tolerance
  int max_iterations = 1000;
};

struct QpResult {
  Eigen::VectorXd x;
  double objective = 0.0;  // 0.5 x'Hx + g'x
  int iterations = 0;
  double kkt_residual = 0.0;
  std::vector<int> active;  // indices into the inequality rows
};

class ActiveSetQp {
 public:
  ActiveSetQp(Eigen::MatrixXd H, Eigen::VectorXd g, Eigen::MatrixXd A_eq, Eigen::VectorXd b_eq,
              Eigen::MatrixXd A_in, Eigen::VectorXd b_in)
      : H_(std::move(H)),
        g_(std::move(g)),
        Aeq_(std::move(A_eq)),
        beq_(std::move(b_eq)),
        Ain_(std::move(A_in)),
        bin_(std::move(b_in)) {}

  QpResult solve(const Eigen::VectorXd& x0, const QpOptions& opt = {}) const {
    const Eigen::Index n = H_.rows();
    const Eigen::Index n_eq = Aeq_.rows();
    const Eigen::Index n_in = Ain_.rows();
    const double scale = 1.0 + H_.cwiseAbs().maxCoeff() + (g_.size() ? g_.cwiseAbs().maxCoeff() : 0.0);
    const double feas_tol = 1e-12 * (1.0 + x0.cwiseAbs().maxCoeff());

    Eigen::VectorXd x = x0;
    for (Eigen::Index i = 0; i < n_in; ++i) {
      if (Ain_.row(i).dot(x) < bin_[i] - 1e-9)
        throw NumericalError("active-set QP: starting point violates inequality " + std::to_string(i));
    }

    std::vector<int> working;
    std::vector<char> in_working(static_cast<std::size_t>(n_in), 0);
    QpResult res;

    for (int it = 0; it < opt.max_iterations; ++it) {
      res.iterations = it + 1;
      const Eigen::Index m = n_eq + static_cast<Eigen::Index>(working.size());
      Eigen::MatrixXd A(m, n);
      if (n_eq) A.topRows(n_eq) = Aeq_;
      for (std::size_t k = 0; k < working.size(); ++k) A.row(n_eq + static_cast<Eigen::Index>(k)) = Ain_.row(working[k]);

      // [H -A'; A 0] [p; lambda] = [-(Hx+g); 0]
      const Eigen::VectorXd grad = H_ * x + g_;
      Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + m, n + m);
      K.topLeftCorner(n, n) = H_;
      K.topRightCorner(n, m) = -A.transpose();
      K.bottomLeftCorner(m, n) = A;
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + m);
      rhs.head(n) = -grad;
      Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
      if (!lu.isInvertible())
        throw NumericalError("active-set QP: singular KKT system at iteration " + std::to_string(it));
      Eigen::VectorXd sol = lu.solve(rhs);
      sol += lu.solve(rhs - K * sol);  // one refinement step; Gram blocks can be ill-conditioned
      const Eigen::VectorXd p = sol.head(n);
      const Eigen::VectorXd lambda = sol.tail(m);

      if (p.cwiseAbs().maxCoeff() <= opt.tolerance * (1.0 + x.cwiseAbs().maxCoeff())) {
        // Stationary on the working set: check inequality multipliers.
        int drop = -1;
        double most_negative = -opt.tolerance * scale;
        for (std::size_t k = 0; k < working.size(); ++k) {
          const double lam = lambda[n_eq + static_cast<Eigen::Index>(k)];
          if (lam < most_negative) {
            most_negative = lam;
            drop = static_cast<int>(k);
          }
        }
        if (drop < 0) {
          res.x = x;
          res.objective = 0.5 * x.dot(H_ * x) + g_.dot(x);
          const Eigen::VectorXd stat = grad - A.transpose() * lambda;
          // Relative to the terms being balanced, so large multipliers do not
          // read as solver failure.
          const double balance = scale + (A.transpose() * lambda).cwiseAbs().maxCoeff();
          res.kkt_residual = stat.size() ? stat.cwiseAbs().maxCoeff() / balance : 0.0;
          res.active = working;
          if (res.kkt_residual > opt.tolerance) {
            std::ostringstream os;
            os << "active-set QP: KKT residual " << res.kkt_residual << " above tolerance";
            throw NumericalError(os.str());
          }
          return res;
        }
        in_working[static_cast<std::size_t>(working[static_cast<std::size_t>(drop)])] = 0;
        working.erase(working.begin() + drop);
        continue;
      }

      // Longest feasible step along p.
      double alpha = 1.0;
      int blocking = -1;
      for (Eigen::Index i = 0; i < n_in; ++i) {
        if (in_working[static_cast<std::size_t>(i)]) continue;
        const double ap = Ain_.row(i).dot(p);
        if (ap >= -1e-14 * (1.0 + p.cwiseAbs().maxCoeff())) continue;
        const double slack = std::max(0.0, Ain_.row(i).dot(x) - bin_[i]);
        const double step = slack / -ap;
        if (step < alpha) {
          alpha = step;
          blocking = static_cast<int>(i);
        }
      }
      x += alpha * p;
      if (blocking >= 0) {
        // Snap onto the blocking face to stop drift.
        const double viol = Ain_.row(blocking).dot(x) - bin_[blocking];
        if (std::abs(viol) <= feas_tol && viol < 0.0) {
          const Eigen::VectorXd a = Ain_.row(blocking).transpose();
          x -= (viol / a.squaredNorm()) * a;
        }
        working.push_back(blocking);
        in_working[static_cast<std::size_t>(blocking)] = 1;
      }
    }
    throw NumericalError("active-set QP: no convergence after " + std::to_string(opt.max_iterations) +
                         " iterations");
  }

 private:
  Eigen::MatrixXd H_;
  Eigen::VectorXd g_;
  Eigen::MatrixXd Aeq_;
  Eigen::VectorXd beq_;
  Eigen::MatrixXd Ain_;
  Eigen::VectorXd bin_;
};

// --- Extremal-subset weight fit -------------------------------------------

/// One candidate-peak problem: min ||E w - r||^2 + lambda ||w||^2 over
/// unimodal simplex weights peaking at `peak` with w_peak >= c.
struct QpProblem {
  Eigen::MatrixXd E;  // n_obs x (2n_s - 1)
  Eigen::VectorXd r;
  double lambda = 0.0;
  double c = 0.0;
  std::size_t peak = 0;  // 0-based candidate argmax
};

/// Sufficient statistics of a user's sets: E'E, E'r, r'r and the row count.
struct WeightFitStats {
  Eigen::MatrixXd gram;
  Eigen::VectorXd cross;
  double rr = 0.0;
  std::size_t n_obs = 0;

  static WeightFitStats from(const Eigen::MatrixXd& E, const Eigen::VectorXd& r) {
    if (E.rows() != r.size()) throw std::invalid_argument("weight fit: E and r row counts differ");
    WeightFitStats s;
    s.gram = E.transpose() * E;
    s.cross = E.transpose() * r;
    s.rr = r.squaredNorm();
    s.n_obs = static_cast<std::size_t>(E.rows());
    return s;
  }

  double squared_error(const Eigen::VectorXd& w) const {
    return std::max(0.0, w.dot(gram * w) - 2.0 * cross.dot(w) + rr);
  }
  double rmse(const Eigen::VectorXd& w) const {
    return std::sqrt(squared_error(w) / static_cast<double>(n_obs));
  }
  double objective(const Eigen::VectorXd& w, double lambda) const {
    return squared_error(w) + lambda * w.squaredNorm();
  }
};

struct PeakSolution {
  Eigen::VectorXd w;
  double objective = 0.0;  // ||Ew - r||^2 + lambda ||w||^2
  double rmse = 0.0;
  int iterations = 0;
  double kkt_residual = 0.0;
};

struct UserWeightSolution {
  Eigen::VectorXd w;
  std::size_t peak = 0;
  double rmse = 0.0;
  double objective = 0.0;
  std::vector<PeakSolution> per_peak;
};

namespace detail {

// Inequalities for a unimodal simplex vector peaking at k with w_k >= c.
// Redundant rows are left out so the working set stays independent:
// nonnegativity is only needed at the two ends of the chain, and w_k >= 0
// is implied when c == 0.
inline void peak_constraints(std::size_t m, std::size_t k, double c, Eigen::MatrixXd& A,
                             Eigen::VectorXd& b) {
  std::vector<std::pair<Eigen::VectorXd, double>> rows;
  auto unit = [m](std::size_t j) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    v[static_cast<Eigen::Index>(j)] = 1.0;
    return v;
  };
  if (!(k == 0 && c > 0.0)) rows.emplace_back(unit(0), 0.0);
  if (m > 1 && !(k == m - 1 && c > 0.0)) rows.emplace_back(unit(m - 1), 0.0);
  for (std::size_t j = 0; j + 1 < m; ++j) {
    // rising up to the peak, falling after it
    if (j < k) rows.emplace_back(unit(j + 1) - unit(j), 0.0);
    else rows.emplace_back(unit(j) - unit(j + 1), 0.0);
  }
  if (c > 0.0) rows.emplace_back(unit(k), c);
  A.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m));
  b.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    A.row(static_cast<Eigen::Index>(i)) = rows[i].first.transpose();
    b[static_cast<Eigen::Index>(i)] = rows[i].second;
  }
}

inline Eigen::VectorXd peak_start(std::size_t m, std::size_t k, double c) {
  const double md = static_cast<double>(m);
  if (c <= 1.0 / md) return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m), 1.0 / md);
  Eigen::VectorXd w = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m), (1.0 - c) / (md - 1.0));
  w[static_cast<Eigen::Index>(k)] = c;
  return w;
}

}  // namespace detail

inline PeakSolution solve_peak_qp(const WeightFitStats& st, double lambda, double c, std::size_t peak,
                                  const QpOptions& opt = {}) {
  const std::size_t m = static_cast<std::size_t>(st.gram.rows());
  if (m == 0) throw std::invalid_argument("weight fit: no extremal subsets");
  if (st.n_obs == 0) throw std::invalid_argument("weight fit: user has no sets (n_obs >= 1 required)");
  if (peak >= m) throw std::invalid_argument("weight fit: peak index out of range");
  if (!(c >= 0.0 && c <= 1.0)) throw std::invalid_argument("weight fit: peak floor must lie in [0,1]");

  PeakSolution out;
  if (m == 1) {
    out.w = Eigen::VectorXd::Ones(1);
  } else {
    // With lambda == 0 the Hessian may be singular; a ridge far below the
    // solver tolerance keeps the KKT systems invertible.
    Eigen::MatrixXd H = 2.0 * (st.gram + lambda * Eigen::MatrixXd::Identity(st.gram.rows(), st.gram.cols()));
    const double ridge = 1e-12 * (1.0 + H.diagonal().cwiseAbs().maxCoeff());
    if (2.0 * lambda < ridge) H.diagonal().array() += ridge;
    Eigen::VectorXd g = -2.0 * st.cross;
    Eigen::MatrixXd A_in;
    Eigen::VectorXd b_in;
    detail::peak_constraints(m, peak, c, A_in, b_in);
    ActiveSetQp qp(H, g, Eigen::MatrixXd::Ones(1, static_cast<Eigen::Index>(m)), Eigen::VectorXd::Ones(1),
                   A_in, b_in);
    QpResult r = qp.solve(detail::peak_start(m, peak, c), opt);
    out.w = r.x;
    out.iterations = r.iterations;
    out.kkt_residual = r.kkt_residual;
    // Clear round-off below zero left by the chain constraints.
    for (Eigen::Index j = 0; j < out.w.size(); ++j)
      if (out.w[j] < 0.0 && out.w[j] > -1e-12) out.w[j] = 0.0;
  }
  out.objective = st.objective(out.w, lambda);
  out.rmse = st.rmse(out.w);
  return out;
}

inline PeakSolution solve_peak_qp(const QpProblem& p, const QpOptions& opt = {}) {
  return solve_peak_qp(WeightFitStats::from(p.E, p.r), p.lambda, p.c, p.peak, opt);
}

/// Solves one QP per candidate peak and keeps the lowest-RMSE solution;
/// near-ties keep the smaller peak index.
inline UserWeightSolution solve_user_weights(const WeightFitStats& st, double lambda, double c,
                                             const QpOptions& opt = {}) {
  const std::size_t m = static_cast<std::size_t>(st.gram.rows());
  if (st.n_obs == 0) throw std::invalid_argument("weight fit: user has no sets (n_obs >= 1 required)");
  UserWeightSolution best;
  best.rmse = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < m; ++k) {
    PeakSolution s = solve_peak_qp(st, lambda, c, k, opt);
    const double tie = 1e-12 * (1.0 + s.rmse);
    if (s.rmse < best.rmse - tie) {
      best.w = s.w;
      best.peak = k;
      best.rmse = s.rmse;
      best.objective = s.objective;
    }
    best.per_peak.push_back(std::move(s));
  }
  return best;
}

inline UserWeightSolution solve_user_weights(const Eigen::MatrixXd& E, const Eigen::VectorXd& r,
                                             double lambda, double c, const QpOptions& opt = {}) {
  if (E.rows() == 0) throw std::invalid_argument("weight fit: user has no sets (n_obs >= 1 required)");
  return solve_user_weights(WeightFitStats::from(E, r), lambda, c, opt);
}

/// Checks the ESARM weight invariants for one vector; returns an empty string
/// when they hold to `tol`.
inline std::string check_weight_invariants(const Eigen::VectorXd& w, double c, double tol = 1e-9) {
  if (w.size() == 0) return "empty weight vector";
  if (std::abs(w.sum() - 1.0) > tol) return "weights do not sum to 1";
  if (w.minCoeff() < -tol) return "negative weight";
  Eigen::Index k = 0;
  const double top = w.maxCoeff(&k);
  if (top < c - tol) return "peak weight below floor";
  // Non-decreasing up to some peak and non-increasing after it. The first
  // maximum may sit on a plateau, so test the falling part from there.
  for (Eigen::Index j = 0; j < k; ++j)
    if (w[j] > w[j + 1] + tol) return "weights not unimodal";
  for (Eigen::Index j = k; j + 1 < w.size(); ++j)
    if (w[j + 1] > w[j] + tol) return "weights not unimodal";
  return {};
}

}  // namespace setrec

#include "dm2/lp.hpp"

#include <cmath>
#include <limits>

#include "dm2/errors.hpp"

namespace dm2 {

std::string to_string(LpStatus s) {
  switch (s) {
    case LpStatus::kOptimal: return "optimal";
    case LpStatus::kInfeasible: return "infeasible";
    case LpStatus::kUnbounded: return "unbounded";
  }
  return "unknown";
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kReducedCostTolerance = 1e-10;
constexpr int kDegenerateRunBeforeBland = 50;

// Dense tableau. Rows 0..m-1 are constraints, row m holds reduced costs;
// the last column is the right-hand side (row m: minus the objective).
struct Tableau {
  RowMatrix t;
  std::vector<int> basis;
  int m = 0;
  int cols = 0;
  int pivots = 0;

  int rhs() const { return cols; }

  void pivot(int row, int col) {
    const double inv = 1.0 / t(row, col);
    t.row(row) *= inv;
    t(row, col) = 1.0;
    for (int i = 0; i <= m; ++i) {
      if (i == row) continue;
      const double f = t(i, col);
      if (f == 0.0) continue;
      t.row(i) -= f * t.row(row);
      t(i, col) = 0.0;
    }
    basis[row] = col;
    ++pivots;
  }

  // Returns false on unboundedness.
  bool run(int allowed_cols, const LpOptions& opt) {
    int degenerate_run = 0;
    bool bland = false;
    while (true) {
      int enter = -1;
      double best = -kReducedCostTolerance;
      for (int j = 0; j < allowed_cols; ++j) {
        const double d = t(m, j);
        if (d < best) {
          enter = j;
          if (bland) break;
          best = d;
        }
      }
      if (enter < 0) return true;
      int leave = -1;
      double ratio = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i) {
        const double a = t(i, enter);
        if (a <= opt.pivot_tolerance) continue;
        const double r = std::max(0.0, t(i, rhs())) / a;
        if (r < ratio - 1e-14) {
          ratio = r;
          leave = i;
        } else if (r <= ratio + 1e-14 && basis[i] < basis[leave]) {
          ratio = std::min(ratio, r);
          leave = i;
        }
      }
      if (leave < 0) return false;
      if (ratio == 0.0) {
        if (++degenerate_run > kDegenerateRunBeforeBland) bland = true;
      } else {
        degenerate_run = 0;
      }
      pivot(leave, enter);
      if (pivots > opt.max_pivots) throw NumericError("simplex exceeded its pivot cap");
      if (!std::isfinite(t(m, rhs()))) throw NumericError("simplex tableau became non-finite");
    }
  }
};

}  // namespace

LpResult solve_lp(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& c,
                  const LpOptions& opt) {
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  if (b.size() != m || c.size() != n) throw InputError("LP dimensions do not agree");
  if (!A.allFinite() || !b.allFinite() || !c.allFinite()) throw InputError("LP data must be finite");

  Tableau tab;
  tab.m = m;
  tab.cols = n + m;
  tab.t = RowMatrix::Zero(m + 1, n + m + 1);
  tab.basis.resize(m);
  for (int i = 0; i < m; ++i) {
    const double sign = b(i) < 0.0 ? -1.0 : 1.0;
    tab.t.row(i).head(n) = sign * A.row(i);
    tab.t(i, n + i) = 1.0;
    tab.t(i, tab.rhs()) = sign * b(i);
    tab.basis[i] = n + i;
  }
  // Phase one: minimize the sum of artificials.
  for (int i = 0; i < m; ++i) tab.t.row(m) -= tab.t.row(i);
  for (int i = 0; i < m; ++i) tab.t(m, n + i) = 0.0;
  tab.run(n + m, opt);

  LpResult res;
  double infeas = 0.0;
  for (int i = 0; i < m; ++i) {
    if (tab.basis[i] >= n) infeas += std::abs(tab.t(i, tab.rhs()));
  }
  res.infeasibility = infeas;
  res.pivots = tab.pivots;
  auto extract = [&] {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < m; ++i) {
      if (tab.basis[i] < n) x(tab.basis[i]) = std::max(0.0, tab.t(i, tab.rhs()));
    }
    return x;
  };
  if (infeas > opt.feasibility_tolerance) {
    res.status = LpStatus::kInfeasible;
    res.x = extract();
    return res;
  }

  // Drive remaining artificials out of the basis; rows where that is
  // impossible are redundant and stay inert.
  for (int i = 0; i < m; ++i) {
    if (tab.basis[i] < n) continue;
    int col = -1;
    double best = opt.pivot_tolerance;
    for (int j = 0; j < n; ++j) {
      if (std::abs(tab.t(i, j)) > best) {
        best = std::abs(tab.t(i, j));
        col = j;
      }
    }
    if (col >= 0) tab.pivot(i, col);
  }

  // Phase two.
  tab.t.row(m).setZero();
  tab.t.row(m).head(n) = c.transpose();
  for (int i = 0; i < m; ++i) {
    if (tab.basis[i] < n) {
      const double cb = c(tab.basis[i]);
      if (cb != 0.0) tab.t.row(m) -= cb * tab.t.row(i);
    }
  }
  const bool bounded = tab.run(n, opt);
  res.pivots = tab.pivots;
  res.x = extract();
  if (!bounded) {
    res.status = LpStatus::kUnbounded;
    return res;
  }
  res.status = LpStatus::kOptimal;
  res.objective = c.dot(res.x);
  return res;
}

}  // namespace dm2

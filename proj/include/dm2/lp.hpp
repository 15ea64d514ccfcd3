#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dm2 {

enum class LpStatus { kOptimal, kInfeasible, kUnbounded };
std::string to_string(LpStatus s);

struct LpResult {
  LpStatus status = LpStatus::kInfeasible;
  Eigen::VectorXd x;
  double objective = 0.0;
  // Optimal phase-one value: minimum total violation sum_i |A x - b|_i over
  // x >= 0. Zero (up to roundoff) exactly when the system is feasible.
  double infeasibility = 0.0;
  int pivots = 0;
};

struct LpOptions {
  double feasibility_tolerance = 1e-8;
  double pivot_tolerance = 1e-11;
  int max_pivots = 200'000;
};

// minimize c.x subject to A x = b, x >= 0, by the two-phase tableau simplex.
// Dantzig pricing, falling back to Bland's rule after a run of degenerate
// pivots. Throws NumericError when the pivot cap is hit or values blow up.
LpResult solve_lp(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& c,
                  const LpOptions& options = {});

}  // namespace dm2

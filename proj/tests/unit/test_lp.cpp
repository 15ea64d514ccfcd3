#include <doctest.h>

#include <cmath>

#include "dm2/errors.hpp"
#include "dm2/lp.hpp"
#include "dm2/rng.hpp"

using namespace dm2;

TEST_CASE("small LP with a known optimum") {
  // min -x - y  s.t.  x + 2y + s1 = 4,  3x + y + s2 = 6
  Eigen::MatrixXd A(2, 4);
  A << 1, 2, 1, 0, 3, 1, 0, 1;
  Eigen::VectorXd b(2), c(4);
  b << 4, 6;
  c << -1, -1, 0, 0;
  auto r = solve_lp(A, b, c);
  REQUIRE(r.status == LpStatus::kOptimal);
  CHECK(std::abs(r.objective + 2.8) <= 1e-10);
  CHECK(std::abs(r.x(0) - 1.6) <= 1e-10);
  CHECK(std::abs(r.x(1) - 1.2) <= 1e-10);
  CHECK(r.infeasibility <= 1e-12);
}

TEST_CASE("infeasible and unbounded systems") {
  Eigen::MatrixXd A(2, 2);
  A << 1, 1, 1, 1;
  Eigen::VectorXd b(2), c = Eigen::VectorXd::Zero(2);
  b << 1, 2;
  auto r = solve_lp(A, b, c);
  CHECK(r.status == LpStatus::kInfeasible);
  CHECK(std::abs(r.infeasibility - 1.0) <= 1e-9);

  Eigen::MatrixXd A2(1, 2);
  A2 << 1, -1;
  Eigen::VectorXd b2(1), c2(2);
  b2 << 0;
  c2 << -1, 0;
  CHECK(solve_lp(A2, b2, c2).status == LpStatus::kUnbounded);
}

TEST_CASE("negative right-hand sides and redundant rows") {
  Eigen::MatrixXd A(3, 2);
  A << -1, -1, 2, 2, 1, 0;
  Eigen::VectorXd b(3), c(2);
  b << -2, 4, 0.5;
  c << 1, 3;
  auto r = solve_lp(A, b, c);
  REQUIRE(r.status == LpStatus::kOptimal);
  CHECK(std::abs(r.x(0) - 0.5) <= 1e-10);
  CHECK(std::abs(r.x(1) - 1.5) <= 1e-10);
  CHECK(std::abs(r.objective - 5.0) <= 1e-10);
}

TEST_CASE("random feasible transportation problems match the brute-force vertex optimum") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    double supply[2] = {0.2 + rng.uniform(), 0.2 + rng.uniform()};
    double d0 = rng.uniform(), d1 = rng.uniform();
    double tot = supply[0] + supply[1];
    double demand[3] = {d0 / (d0 + d1 + 1) * tot, d1 / (d0 + d1 + 1) * tot, 1 / (d0 + d1 + 1) * tot};
    double cost[6];
    for (double& x : cost) x = rng.uniform();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(5, 6);
    Eigen::VectorXd b(5), c(6);
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 3; ++j) {
        A(i, 3 * i + j) = 1;
        A(2 + j, 3 * i + j) = 1;
        c(3 * i + j) = cost[3 * i + j];
      }
      b(i) = supply[i];
    }
    for (int j = 0; j < 3; ++j) b(2 + j) = demand[j];
    auto r = solve_lp(A, b, c);
    REQUIRE(r.status == LpStatus::kOptimal);
    CHECK((A * r.x - b).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(r.x.minCoeff() >= -1e-12);
    // Vertex enumeration: the constraint matrix has rank 4, so every basic
    // solution picks 4 of the 6 columns.
    double best = 1e300;
    for (int mask = 0; mask < 64; ++mask) {
      if (__builtin_popcount(mask) != 4) continue;
      Eigen::MatrixXd B(5, 4);
      int col = 0;
      for (int k = 0; k < 6; ++k) {
        if (mask >> k & 1) B.col(col++) = A.col(k);
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
      if (lu.rank() < 4) continue;
      Eigen::VectorXd xb = B.colPivHouseholderQr().solve(b);
      if ((B * xb - b).cwiseAbs().maxCoeff() > 1e-9 || xb.minCoeff() < -1e-12) continue;
      double v = 0.0;
      col = 0;
      for (int k = 0; k < 6; ++k) {
        if (mask >> k & 1) v += cost[k] * xb(col++);
      }
      best = std::min(best, v);
    }
    CHECK(r.objective <= best + 1e-9);
    CHECK(r.objective >= best - 1e-9);
  }
}

TEST_CASE("input validation") {
  Eigen::MatrixXd A(1, 2);
  A << 1, 1;
  Eigen::VectorXd b(2), c(2);
  b << 1, 1;
  c << 0, 0;
  CHECK_THROWS_AS(solve_lp(A, b, c), InputError);
  Eigen::VectorXd b1(1);
  b1 << std::nan("");
  CHECK_THROWS_AS(solve_lp(A, b1, c), InputError);
}

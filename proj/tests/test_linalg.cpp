#include <doctest.h>

#include <random>

#include "dms/linalg.hpp"

using namespace dms;

namespace {

Mat random_hpd(int m, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Mat B(m, m);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c) B(r, c) = cplx(g(rng), g(rng));
  return B * B.adjoint() + 0.1 * Mat::Identity(m, m);
}

}  // namespace

TEST_CASE("mat_power examples") {
  CHECK((mat_power(Mat::Identity(3, 3), 0.5) - Mat::Identity(3, 3)).norm() < 1e-15);
  Mat D = Mat::Zero(2, 2);
  D(0, 0) = 4.0;
  D(1, 1) = 1.0;
  Mat S = mat_power(D, 0.5);
  CHECK(std::abs(S(0, 0) - cplx(2.0)) < 1e-14);
  CHECK(std::abs(S(1, 1) - cplx(1.0)) < 1e-14);
  CHECK(std::abs(S(0, 1)) < 1e-14);
}

TEST_CASE("mat_power group law and positivity") {
  std::mt19937_64 rng(3);
  for (int m = 1; m <= 3; ++m) {
    for (int t = 0; t < 20; ++t) {
      Mat A = random_hpd(m, rng);
      const double nA = A.norm();
      Mat h = mat_power(A, 0.5);
      CHECK((h * h - A).norm() <= 1e-10 * nA);
      CHECK((mat_power(A, 1.0) - A).norm() <= 1e-10 * nA);
      Mat ab = mat_power(A, 0.3) * mat_power(A, -1.1);
      CHECK((ab - mat_power(A, -0.8)).norm() <= 1e-9 * mat_power(A, -0.8).norm());
      CHECK_NOTHROW(require_hpd(mat_power(A, 0.7)));
    }
  }
}

TEST_CASE("jacobi_eigh reconstructs and orders") {
  std::mt19937_64 rng(5);
  Mat A = random_hpd(3, rng);
  auto e = jacobi_eigh(A);
  CHECK(e.values(0) <= e.values(1));
  CHECK(e.values(1) <= e.values(2));
  Mat R = e.vectors * e.values.cast<cplx>().asDiagonal() * e.vectors.adjoint();
  CHECK((R - A).norm() <= 1e-12 * A.norm());
  CHECK((e.vectors.adjoint() * e.vectors - Mat::Identity(3, 3)).norm() < 1e-12);
  auto e2 = jacobi_eigh(A);
  CHECK(e2.values == e.values);
  CHECK(e2.sweeps == e.sweeps);
}

TEST_CASE("non-PD input is rejected") {
  Mat A = Mat::Identity(2, 2);
  A(1, 1) = -1.0;
  CHECK_THROWS_AS(mat_power(A, 0.5), std::exception);
  Mat B = Mat::Identity(2, 2);
  B(0, 1) = 1.0;
  CHECK_FALSE(is_hermitian(B));
  CHECK_THROWS_AS(require_hpd(B), std::exception);
}

TEST_CASE("op_norm") {
  Mat D = Mat::Zero(2, 2);
  D(0, 0) = 3.0;
  D(1, 1) = -5.0;
  CHECK(op_norm(D) == doctest::Approx(5.0).epsilon(1e-14));
}

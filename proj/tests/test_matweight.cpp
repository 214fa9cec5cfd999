#include <doctest.h>

#include <cmath>
#include <random>

#include "dms/matweight.hpp"

using namespace dms;

namespace {

Mat diag2(double a, double b) {
  Mat D = Mat::Zero(2, 2);
  D(0, 0) = a;
  D(1, 1) = b;
  return D;
}

Mat hpd2() {
  Mat A(2, 2);
  A << cplx(2.0, 0.0), cplx(0.5, 0.3), cplx(0.5, -0.3), cplx(1.0, 0.0);
  return A;
}

// exp( mean_y log mean_x w(x)/w(y) ) with N midpoint nodes per slot (scalar weight, p = 1).
double dense_double_average(double (*w)(double), double olo, double ohi, double ilo, double ihi, int N) {
  double inner = 0.0;
  for (int a = 0; a < N; ++a) inner += w(ilo + (a + 0.5) * (ihi - ilo) / N);
  inner /= N;
  double s = 0.0;
  for (int b = 0; b < N; ++b) s += std::log(inner / w(olo + (b + 0.5) * (ohi - olo) / N));
  return std::exp(s / N);
}

double w_id(double x) { return x; }
double w_abs(double x) { return std::abs(x); }
double w_sqrt(double x) { return std::sqrt(std::abs(x)); }

}  // namespace

TEST_CASE("apinf_cube_value closed forms") {
  Cube Q(0, {0});
  CHECK(apinf_cube_value(identity_weight(1, 2), Q, 2.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(apinf_cube_value(constant_weight(1, hpd2()), Q, 1.5) == doctest::Approx(1.0).epsilon(1e-12));
  // w(x) = x on [0,1), p = 1: exp(int log(1/(2y)) dy) = e/2
  QuadratureSpec fine{QuadRule::midpoint, 12};
  auto w = scalar_power_weight(1, 1, 1.0, 0);
  CHECK(apinf_cube_value(w, Q, 1.0, fine) == doctest::Approx(std::exp(1.0) / 2).epsilon(1e-4));
  CHECK(apinf_cube_value(w, Q, 1.0, fine) ==
        doctest::Approx(dense_double_average(w_id, 0, 1, 0, 1, 4096)).epsilon(1e-12));
}

TEST_CASE("apinf_cube_value is invariant under scaling and at least 1") {
  auto w = diag_power_weight(1, {0.5, -0.3});
  for (const Cube& Q : {Cube(0, {0}), Cube(1, {-1}), Cube(-1, {1}), Cube(2, {5})}) {
    double v = apinf_cube_value(w, Q, 2.0);
    CHECK(v >= 1.0 - 1e-12);
    CHECK(apinf_cube_value(scaled(w, 3.7), Q, 2.0) == doctest::Approx(v).epsilon(1e-10));
  }
}

TEST_CASE("apinf_characteristic") {
  LatticeWindow w{1, -1, 2, -2.0, 2.0};
  CHECK(apinf_characteristic(identity_weight(1, 2), 2.0, w).value == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(apinf_characteristic(scalar_power_weight(1, 1, 0.0, -1, 4.0), 1.0, w).value ==
        doctest::Approx(1.0).epsilon(1e-14));
  auto abs1 = scalar_power_weight(1, 1, 1.0);
  auto small = apinf_characteristic(abs1, 1.0, w);
  auto big = apinf_characteristic(abs1, 1.0, w.refined());
  CHECK(std::isfinite(small.value));
  CHECK(big.value >= small.value);
  // dense cross-check on three cubes
  QuadratureSpec q{QuadRule::midpoint, 10};
  for (const Cube& Q : {Cube(0, {0}), Cube(0, {-1}), Cube(1, {3})}) {
    double lo = Q.corner()[0], hi = lo + Q.side();
    CHECK(apinf_cube_value(abs1, Q, 1.0, q) ==
          doctest::Approx(dense_double_average(w_abs, lo, hi, lo, hi, 1024)).epsilon(1e-12));
  }
}

TEST_CASE("dimension estimates") {
  auto w = LatticeWindow::standard(1);
  std::vector<double> lams = {1, 2, 4, 8};
  for (const auto& W : {identity_weight(1, 2), constant_weight(1, 3.0 * hpd2())}) {
    for (auto side : {DimSide::lower, DimSide::upper}) {
      LatticeWindow small{1, 0, 1, -8.0, 8.0};
      auto e = dimension_estimate(W, 2.0, small, lams, side);
      CHECK(std::abs(e.d_raw) < 1e-8);
      CHECK(e.d_hat == 0.0);
      CHECK(e.residual < 1e-8);
    }
  }
  // |x|^{1/2}, p = 1, base Q = [1,2): table against a dense double integral
  auto W = scalar_power_weight(1, 1, 0.5);
  std::vector<Cube> base = {Cube(0, {1})};
  QuadratureSpec q{QuadRule::midpoint, 9};
  auto lower = dimension_estimate(W, 1.0, w, lams, DimSide::lower, q, &base);
  auto upper = dimension_estimate(W, 1.0, w, lams, DimSide::upper, q, &base);
  REQUIRE(lower.table.size() == 4);
  double xm = 0, ym = 0, sxy = 0, sxx = 0;
  std::vector<double> ref;
  for (std::size_t i = 0; i < 4; ++i) {
    const double l = lams[i], c = 1.5, h = 0.5 * l;
    ref.push_back(dense_double_average(w_sqrt, c - h, c + h, 1.0, 2.0, 512));
    CHECK(lower.table[i].value == doctest::Approx(ref[i]).epsilon(1e-12));
    CHECK(upper.table[i].value == doctest::Approx(dense_double_average(w_sqrt, 1.0, 2.0, c - h, c + h, 512))
                                      .epsilon(1e-12));
    xm += std::log(l) / 4;
    ym += std::log(ref[i]) / 4;
  }
  for (std::size_t i = 0; i < 4; ++i) {
    sxy += (std::log(lams[i]) - xm) * (std::log(ref[i]) - ym);
    sxx += (std::log(lams[i]) - xm) * (std::log(lams[i]) - xm);
  }
  CHECK(lower.d_raw == doctest::Approx(sxy / sxx).epsilon(1e-10));
  CHECK(lower.d_hat >= 0.0);
  CHECK(upper.d_hat >= 0.0);
  CHECK_THROWS_AS(dimension_estimate(W, 1.0, w, {1, 2}, DimSide::lower), Error);
  std::vector<Cube> outside = {Cube(0, {7})};
  CHECK_THROWS_AS(dimension_estimate(W, 1.0, w, lams, DimSide::lower, q, &outside), Error);
}

TEST_CASE("reducing operators, p = 2 exact path") {
  auto W = diag_power_weight(1, {0.5, -0.4});
  auto dirs = unit_directions(2, 100, 21);
  QuadratureSpec quad;
  for (const Cube& Q : {Cube(0, {1}), Cube(2, {-3})}) {
    auto r = reducing_operator(W, Q, 2.0);
    auto nodes = box_nodes(cube_box(Q), quad);
    Mat avg = Mat::Zero(2, 2);
    for (std::size_t i = 0; i < nodes.size(); ++i) avg += nodes.w[i] * W.at(nodes.point(i));
    for (const auto& z : dirs) {
      double lhs = (r.A * z).squaredNorm();
      double rhs = (z.adjoint() * avg * z)(0, 0).real();
      CHECK(std::abs(lhs - rhs) <= 1e-10 * rhs);
    }
  }
  auto C = reducing_operator(constant_weight(1, hpd2()), Cube(0, {0}), 2.0);
  CHECK((C.A - mat_power(hpd2(), 0.5)).norm() < 1e-12);
}

TEST_CASE("reducing operators, general p") {
  // scalar w I_m: A_Q = (avg w)^{1/p} I
  auto w = scalar_power_weight(1, 2, 1.0);
  Cube Q(0, {1});
  auto r = reducing_operator(w, Q, 1.0);
  double avg = 1.5;
  CHECK(r.ratio <= std::sqrt(2.0) * 1.05);
  Mat I = avg * Mat::Identity(2, 2);
  CHECK((r.A - I).norm() <= EllipsoidFitSpec{}.tol * I.norm());

  // diag(1, x^2) on [1,2), p = 1, held-out ratio against 720 angles
  auto W = diag_power_weight(1, {0.0, 2.0});
  auto red = reducing_operator(W, Q, 1.0);
  CHECK(red.ratio <= std::sqrt(2.0) * 1.05);
  double lo = 1e300, hi = 0.0;
  for (int a = 0; a < 720; ++a) {
    double t = M_PI * a / 720;
    Vec z(2);
    z << std::cos(t), std::sin(t);
    double r_val = rho(W, Q, 1.0, z);
    double ratio = (red.A * z).norm() / r_val;
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  CHECK(hi / lo <= std::sqrt(2.0) * 1.05);
}

TEST_CASE("reducing growth certificate") {
  LatticeWindow w{1, -1, 2, -2.0, 2.0};
  auto cubes = w.cubes();
  auto pairs = all_pairs(cubes);
  for (double p : {1.0, 2.0}) {
    auto fam = build_reducing_family(identity_weight(1, 2), cubes, p);
    CHECK(reducing_growth_certificate(fam, pairs, 0.0, 0.0).C == 1.0);
    CHECK(reducing_growth_certificate(fam, pairs, 1.0, 2.5).C == 1.0);
  }
  // |x|, p = 1, beta1 = beta2 = 1: stable under one refinement
  auto W = scalar_power_weight(1, 1, 1.0);
  auto fam = build_reducing_family(W, cubes, 1.0);
  double c0 = reducing_growth_certificate(fam, pairs, 1.0, 1.0).C;
  auto fine = w.refined().cubes();
  auto fam1 = build_reducing_family(W, fine, 1.0);
  double c1 = reducing_growth_certificate(fam1, all_pairs(fine), 1.0, 1.0).C;
  CHECK(std::isfinite(c0));
  CHECK(c1 / c0 <= 1.1);
  CHECK(c1 / c0 >= 1.0 / 1.1);
}

TEST_CASE("weights reject non-PD evaluation") {
  Mat A = diag2(1.0, -1.0);
  CHECK_THROWS(constant_weight(1, A));
}

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "dms/wavelets.hpp"

using namespace dms;

namespace {

double riemann_moment(const std::vector<double>& s, double h, int gamma) {
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double a = i * h, b = (i + 1) * h;
    acc += s[i] * (std::pow(b, gamma + 1) - std::pow(a, gamma + 1)) / (gamma + 1);
  }
  return acc;
}

}  // namespace

TEST_CASE("Haar filter") {
  auto f = daubechies_filter(1);
  REQUIRE(f.h.size() == 2);
  CHECK(f.h[0] == doctest::Approx(1.0 / std::numbers::sqrt2).epsilon(1e-15));
  CHECK(f.h[1] == doctest::Approx(1.0 / std::numbers::sqrt2).epsilon(1e-15));
  auto c = cascade_samples(f, 6);
  for (std::size_t i = 0; i < c.phi.size(); ++i) CHECK(c.phi[i] == 1.0);
  for (std::size_t i = 0; i < c.psi.size(); ++i) CHECK(c.psi[i] == (i < c.psi.size() / 2 ? 1.0 : -1.0));
  auto k0 = find_k0(f, c);
  CHECK(k0.k0 == 0);
  CHECK(k0.phi_value == 1.0);
}

TEST_CASE("filter conditions for k = 1..10") {
  for (int k = 1; k <= 10; ++k) {
    CAPTURE(k);
    auto f = daubechies_filter(k);
    REQUIRE(f.h.size() == std::size_t(2 * k));
    double sum = 0.0;
    for (double v : f.h) sum += v;
    CHECK(std::abs(sum - std::numbers::sqrt2) <= 1e-12);
    CHECK(orthonormality_residual(f) <= 1e-12);
    // independent check of sum_j h_j h_{j-2l} = delta_{0l}
    for (int l = 0; l < k; ++l) {
      double acc = 0.0;
      for (int j = 2 * l; j < 2 * k; ++j) acc += f.h[j] * f.h[j - 2 * l];
      CHECK(std::abs(acc - (l == 0 ? 1.0 : 0.0)) <= 1e-12);
    }
    // k vanishing moments of g
    for (int g = 0; g < k; ++g) {
      double acc = 0.0, scale = 0.0;
      for (int j = 0; j < 2 * k; ++j) {
        acc += f.g[j] * std::pow(j, g);
        scale += std::abs(f.g[j]) * std::pow(j, g);
      }
      CHECK(std::abs(acc) <= 1e-10 * std::max(1.0, scale));
    }
  }
  CHECK_THROWS_AS(daubechies_filter(0), Error);
  CHECK_THROWS_AS(daubechies_filter(11), Error);
}

TEST_CASE("D4 closed form") {
  auto f = daubechies_filter(2);
  const double r3 = std::sqrt(3.0), d = 4.0 * std::numbers::sqrt2;
  CHECK(f.h[0] == doctest::Approx((1 + r3) / d).epsilon(1e-13));
  CHECK(f.h[1] == doctest::Approx((3 + r3) / d).epsilon(1e-13));
  CHECK(f.h[2] == doctest::Approx((3 - r3) / d).epsilon(1e-13));
  CHECK(f.h[3] == doctest::Approx((1 - r3) / d).epsilon(1e-13));
  auto p = phi_at_integers(f);
  CHECK(p[1] == doctest::Approx((1 + r3) / 2).epsilon(1e-12));
  CHECK(p[2] == doctest::Approx((1 - r3) / 2).epsilon(1e-12));
}

TEST_CASE("cascade moments and two-scale refinement") {
  for (int k : {2, 3}) {
    CAPTURE(k);
    auto f = daubechies_filter(k);
    auto c = cascade_samples(f, 10);
    CHECK(c.phi_integral() == doctest::Approx(1.0).epsilon(1e-10));
    for (int g = 0; g < k; ++g) CHECK(std::abs(riemann_moment(c.psi, c.step(), g)) <= 1e-6);
  }
  auto f3 = daubechies_filter(3);
  double prev = two_scale_residual(f3, cascade_samples(f3, 5));
  for (int L = 6; L <= 10; ++L) {
    CAPTURE(L);
    double r = two_scale_residual(f3, cascade_samples(f3, L));
    CHECK(r <= 0.5 * prev);
    prev = r;
  }
  // k = 2 approaches halving from above
  auto f2 = daubechies_filter(2);
  double p2 = two_scale_residual(f2, cascade_samples(f2, 5)), last = 1.0;
  for (int L = 6; L <= 10; ++L) {
    CAPTURE(L);
    double r = two_scale_residual(f2, cascade_samples(f2, L));
    CHECK(r / p2 <= 0.55);
    CHECK(r / p2 < last);
    last = r / p2;
    p2 = r;
  }
}

TEST_CASE("k0") {
  auto f = daubechies_filter(2);
  auto c = cascade_samples(f, 10);
  auto a = find_k0(f, c), b = find_k0(f, c);
  CHECK((a.k0 == -1 || a.k0 == -2));
  CHECK(a.k0 == b.k0);
  CHECK(a.phi_value == b.phi_value);
  double mx = 0.0;
  for (double v : c.phi) mx = std::max(mx, std::abs(v));
  CHECK(std::abs(a.phi_value) > 0.1 * mx);
  WaveletSystem sys(2, 10, 0, 0);
  CHECK(sys.k0().k0 == a.k0);
  CHECK(sys.k0().phi_value == a.phi_value);
}

TEST_CASE("Gram and vanishing moments") {
  for (int k : {1, 2, 3}) {
    CAPTURE(k);
    WaveletSystem sys(k, 10, 0, 2);
    LatticeWindow w{1, 0, 2, -2.0, 2.0};
    auto cubes = w.cubes();
    double worst = 0.0;
    for (const auto& Q : cubes)
      for (const auto& R : cubes) {
        if (std::abs(Q.corner()[0] - R.corner()[0]) > 2.0 * k + 1) continue;
        double v = sys.inner(1, Q, 1, R);
        worst = std::max(worst, std::abs(v - (Q == R ? 1.0 : 0.0)));
      }
    CHECK(worst <= 1e-6);
    for (const auto& Q : cubes)
      for (int g = 0; g < k; ++g) CHECK(std::abs(sys.moment(1, Q, {g})) <= 1e-6 * std::pow(4.0, g));
  }
  WaveletSystem sys2(2, 8, 0, 1);
  LatticeWindow w2{2, 0, 1, -1.0, 1.0};
  auto cubes = w2.cubes();
  double worst = 0.0;
  for (int l : lambdas(2))
    for (int m : lambdas(2))
      for (const auto& Q : cubes)
        for (const auto& R : cubes)
          worst = std::max(worst, std::abs(sys2.inner(l, Q, m, R) - (l == m && Q == R ? 1.0 : 0.0)));
  CHECK(worst <= 1e-6);
  for (int l : lambdas(2))
    for (const auto& Q : cubes)
      for (int g0 = 0; g0 < 2; ++g0)
        for (int g1 = 0; g1 < 2; ++g1) CHECK(std::abs(sys2.moment(l, Q, {g0, g1})) <= 1e-6);
}

TEST_CASE("tensor factorization") {
  WaveletSystem sys(2, 8, 0, 1);
  Cube Q(1, {1, -2});
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int l : lambdas(2))
    for (int t = 0; t < 50; ++t) {
      std::vector<double> x = {u(rng), u(rng)};
      double prod = sys.value_1d(l & 1, 1, 1, x[0]) * sys.value_1d((l >> 1) & 1, 1, -2, x[1]);
      CHECK(sys.value(l, Q, x) == prod);
    }
  CHECK(lambdas(1) == std::vector<int>{1});
  CHECK(lambdas(2) == std::vector<int>{1, 2, 3});
}

TEST_CASE("analyze and synthesize") {
  WaveletSystem sys(3, 10, 0, 1);
  LatticeWindow w{1, 0, 1, -1.0, 1.0};
  const int G = sys.finest();
  std::vector<std::int64_t> lo, hi;
  covering_cells(sys, w, G, lo, hi);

  auto zero = analyze(SampledFunction::zeros(1, 2, G, lo, hi), sys, w);
  for (const auto& [key, v] : zero.entries) CHECK(v.norm() == 0.0);

  WaveletCoeffs single;
  single.n = 1;
  single.m = 1;
  const Cube Q0(1, {0});
  single.set(1, Q0, 1.0);
  auto self = analyze(synthesize(single, sys, G, lo, hi), sys, w);
  for (const auto& [key, v] : self.entries) {
    double expect = key.Q == Q0 ? 1.0 : 0.0;
    CHECK(std::abs(v(0) - expect) <= 1e-8);
  }

  std::mt19937_64 rng(12);
  std::normal_distribution<double> g;
  WaveletCoeffs c;
  c.n = 1;
  c.m = 2;
  for (const auto& Q : w.cubes()) {
    Vec v(2);
    v << cplx(g(rng), g(rng)), cplx(g(rng), g(rng));
    c.set(1, Q, v);
  }
  auto back = analyze(synthesize(c, sys, G, lo, hi), sys, w);
  CHECK(max_abs_diff(back, c) <= 1e-6);

  auto coarse = SampledFunction::zeros(1, 1, w.j_max + 1, {0}, {4});
  CHECK_THROWS_AS(analyze(coarse, sys, w), Error);
}

TEST_CASE("coefficient arithmetic") {
  WaveletCoeffs a, b;
  a.n = b.n = 1;
  a.m = b.m = 1;
  a.set(1, Cube(0, {0}), 2.0);
  b.set(1, Cube(0, {0}), 1.0);
  b.set(1, Cube(1, {3}), cplx(0, 1));
  auto s = a + scaled(b, -2.0);
  CHECK(std::abs(s.entries.at({1, Cube(0, {0})})(0)) == 0.0);
  CHECK(max_abs_diff(a, a) == 0.0);
  CHECK_THROWS_AS(a.set(2, Cube(0, {0}), 1.0), Error);
}

TEST_CASE("band-limited pair") {
  auto bp = build_bandlimited_pair();
  CHECK(BandlimitedPair::phi_hat(0.49) == 0.0);
  CHECK(BandlimitedPair::phi_hat(2.01) == 0.0);
  CHECK(BandlimitedPair::phi_hat(-0.49) == 0.0);
  for (double xi : bp.mesh) CHECK(BandlimitedPair::dilation_sum(xi) > 0.0);
  CHECK(bp.cond3_residual() <= 1e-10);
  // oracle: direct sum over the octaves that meet the support
  double s = 0.0;
  for (int j = -3; j <= 3; ++j) {
    double x = std::ldexp(1.0, j);
    s += BandlimitedPair::phi_hat(x) * BandlimitedPair::psi_hat(x);
  }
  CHECK(std::abs(s - 1.0) <= 1e-12);
  double mn = 1.0;
  for (double xi = 0.6; xi <= 5.0 / 3.0; xi += 1e-3) mn = std::min(mn, BandlimitedPair::phi_hat(xi));
  CHECK(mn > 0.0);
  CHECK_THROWS_AS(build_bandlimited_pair(1024, 0.5, 4.0), Error);
}

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dms/almostdiag.hpp"
#include "dms/matweight.hpp"
#include "dms/molecules.hpp"
#include "dms/operators.hpp"
#include "dms/quadrature.hpp"
#include "dms/seqspace.hpp"
#include "dms/wavelets.hpp"

using namespace dms;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double time_limit;  // seconds, 0 for none
  std::function<Outcome()> run;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

WaveletCoeffs random_coeffs(const LatticeWindow& w, int count, std::mt19937_64& rng) {
  const auto cubes = w.cubes();
  std::uniform_int_distribution<std::size_t> pick(0, cubes.size() - 1);
  std::normal_distribution<double> g;
  WaveletCoeffs c;
  c.n = w.n;
  c.m = 1;
  for (int i = 0; i < count; ++i) c.set(1, cubes[pick(rng)], cplx(g(rng), g(rng)));
  return c;
}

// 1. Gram orthonormality and vanishing moments at levels = 10.
Outcome wavelet_system() {
  double gram = 0.0, mom = 0.0;
  for (int k : {1, 2, 3}) {
    WaveletSystem sys(k, 10, 0, 2);
    const auto cubes = LatticeWindow{1, 0, 2, -2.0, 2.0}.cubes();
    for (const auto& Q : cubes) {
      for (const auto& R : cubes) {
        const double gap = std::abs(Q.corner()[0] - R.corner()[0]);
        if (gap > sys.support() * std::max(Q.side(), R.side()) + 1.0) continue;
        gram = std::max(gram, std::abs(sys.inner(1, Q, 1, R) - (Q == R ? 1.0 : 0.0)));
      }
      for (int g = 0; g < k; ++g) mom = std::max(mom, std::abs(sys.moment(1, Q, {g})));
    }
  }
  return {gram <= 1e-6 && mom <= 1e-6, "gram " + fmt(gram) + ", moments " + fmt(mom)};
}

// 2. Tr o Ext on 100 random inputs per system.
Outcome trace_ext() {
  LatticeWindow w{1, 0, 2, -2.0, 2.0};
  double worst = 0.0;
  for (int k : {1, 2}) {
    WaveletSystem sys(k, 8, w.j_min, w.j_max + 1);
    std::mt19937_64 rng(100 + k);
    for (int i = 0; i < 100; ++i) {
      auto c = random_coeffs(w, i % 2 ? 6 : 1, rng);
      worst = std::max(worst, max_abs_diff(trace_coeffs(ext_coeffs(c, sys), sys, w), c));
    }
  }
  return {worst <= 1e-6, "max residual " + fmt(worst)};
}

// 3. Identity weights: C = 1 for gamma = 1, growth >= 2^{j_max-1} for gamma = 0.
Outcome compat() {
  LatticeWindow w{1, 0, 4, -2.0, 2.0};
  auto W = identity_weight(2, 2);
  auto V = identity_weight(1, 2);
  auto tr = weight_compat_certificate(V, W, 2.0, 1.0, w, CompatDirection::trace);
  auto ex = weight_compat_certificate(V, W, 2.0, 1.0, w, CompatDirection::ext);
  auto t0 = weight_compat_certificate(V, W, 2.0, 0.0, w, CompatDirection::trace);
  const bool ok = std::abs(tr.C - 1.0) <= 1e-12 && std::abs(ex.C - 1.0) <= 1e-12 &&
                  t0.growth >= std::ldexp(1.0, w.j_max - 1);
  return {ok, "C_trace " + fmt(tr.C) + ", C_ext " + fmt(ex.C) + ", gamma=0 growth " + fmt(t0.growth)};
}

struct RefThr {
  double J, Delta, D, E, F;
};

RefThr reference_thresholds(bool f_family, int n, double s, double p, double q, double d1, double d2, double om,
                            double dl, double du) {
  const double ip = 1.0 / p;
  double J;
  if (d1 > ip || (d1 == ip && std::isinf(q))) {
    J = n;
  } else if (f_family && d1 == ip && d2 == ip) {
    J = n / std::min(1.0, q);
  } else {
    const double G = f_family ? std::min(p, q) : p;
    J = n / std::min(1.0, G);
  }
  double Delta = d2 - ip + dl / (n * p);
  if (Delta < 0.0) Delta = 0.0;
  double D = J + std::min(n * Delta, om + dl / p) + du / p;
  double E = n / 2.0 + s + n * Delta;
  double ex = d1 - ip;
  if (ex < 0.0) ex = 0.0;
  double F = J - n / 2.0 - s - n * ex + du / p;
  return {J, Delta, D, E, F};
}

// 4. Baseline thresholds and 20 random tuples against the straight-line formulas.
Outcome threshold_formulas() {
  auto b = thresholds(make_params(Family::B, 0, 2, 2, 1, 1), 0, 0);
  bool ok = b.J == 1.0 && b.Delta == 0.0 && b.D_star == 1.0 && b.E_star == 0.5 && b.F_star == 0.5;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double ps[] = {0.5, 0.8, 1.0, 1.5, 2.0, 3.0, 4.0};
  const double qs[] = {0.5, 1.0, 2.0, 3.0, kInf};
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const bool f = i % 2;
    const int n = 1 + static_cast<int>(u(rng) * 3);
    const double p = ps[static_cast<int>(u(rng) * 7)];
    const double q = qs[static_cast<int>(u(rng) * 5)];
    const double s = -2.0 + 4.0 * u(rng);
    double d1, d2;
    switch (i % 4) {
      case 0: d1 = 1.0 / p - 0.1 - u(rng); d2 = std::max(0.0, d1) + u(rng); break;
      case 1: d1 = 1.0 / p + 0.1 + u(rng); d2 = d1 + u(rng); break;
      case 2: d1 = d2 = 1.0 / p; break;
      default: d1 = 1.0 / p; d2 = d1 + 0.1 + u(rng); break;
    }
    const double om = n * (d2 - d1) * u(rng);
    const double dl = n * 0.9 * u(rng), du = 2.0 * u(rng);
    auto sp = make_params(f ? Family::F : Family::B, s, p, q, n, 1);
    sp.upsilon.cls = {d1, d2, om};
    auto t = thresholds(sp, dl, du);
    auto r = reference_thresholds(f, n, s, p, q, d1, d2, om, dl, du);
    for (double d : {t.J - r.J, t.Delta - r.Delta, t.D_star - r.D, t.E_star - r.E, t.F_star - r.F})
      worst = std::max(worst, std::abs(d));
  }
  ok = ok && worst <= 1e-12;
  return {ok, "baseline (" + fmt(b.J) + ", " + fmt(b.Delta) + ", " + fmt(b.D_star) + ", " + fmt(b.E_star) + ", " +
                  fmt(b.F_star) + "), random max diff " + fmt(worst)};
}

// 5. udef envelopes 0.5 above thresholds, N = 50, one-scale refinement.
Outcome almost_diagonal() {
  LatticeWindow w{1, -1, 3, -2.0, 2.0};
  EnsembleSpec es;
  es.N = 50;
  es.seed = 20240601;
  double worst = 0.0;
  std::string d;
  auto drift = [&](Family fam, double q) {
    auto sp = make_params(fam, 0, 2, q, 1, 1);
    auto env = thresholds(sp, 0, 0).above(0.5);
    return empirical_boundedness([&](const LatticeWindow& x) { return udef_operator(x.cubes(), env); }, nullptr, sp,
                                 w, es)
        .drift;
  };
  for (auto [fam, q] : {std::pair{Family::B, 2.0}, std::pair{Family::F, 4.0}}) {
    double r = drift(fam, q);
    worst = std::max(worst, r);
    d += std::string(fam == Family::B ? "b" : "f") + "(2," + fmt(q) + ") drift " + fmt(r) + ", ";
  }
  // reported only: at q = 1 the first added scale carries more mass
  d += "probe f(2,1) drift " + fmt(drift(Family::F, 1.0));
  return {worst <= 0.10, d};
}

// 6. Weighted vs reducing-operator norm ratio interval under refinement.
Outcome norm_equivalence() {
  LatticeWindow w{1, -1, 2, -2.0, 2.0};
  auto W = diag_power_weight(1, {0.5, -0.4});
  EnsembleSpec es;
  es.N = 50;
  es.seed = 66;
  es.support_fraction = 0.3;
  const std::vector<CoeffSequence> ens[2] = {random_ensemble(w, 2, es), random_ensemble(w.refined(), 2, es)};
  double worst = 0.0;
  std::string d;
  for (double p : {2.0, 1.5}) {
    auto sp = make_params(Family::F, 0.3, p, 1, 1, 2);
    double lo[2] = {1e300, 1e300}, hi[2] = {0.0, 0.0};
    for (int r = 0; r < 2; ++r) {
      const auto win = r == 0 ? w : w.refined();
      auto fam = build_reducing_family(W, win.cubes(), p);
      for (const auto& t : ens[r]) {
        double a = weighted_norm(t, W, sp, win).value, b = averaging_norm(t, fam, sp, win).value;
        if (b == 0.0) continue;
        lo[r] = std::min(lo[r], a / b);
        hi[r] = std::max(hi[r], a / b);
      }
    }
    double dl = std::abs(lo[1] / lo[0] - 1.0), dh = std::abs(hi[1] / hi[0] - 1.0);
    worst = std::max({worst, dl, dh});
    d += "p=" + fmt(p) + " [" + fmt(lo[0]) + ", " + fmt(hi[0]) + "] -> [" + fmt(lo[1]) + ", " + fmt(hi[1]) + "] ";
  }
  return {worst <= 0.15, d + "max endpoint drift " + fmt(worst)};
}

// 7. Reducing operators.
Outcome reducing_operators() {
  auto W = diag_power_weight(1, {0.5, -0.4});
  auto dirs = unit_directions(2, 100, 21);
  QuadratureSpec quad;
  double exact = 0.0;
  for (const Cube& Q : {Cube(0, {1}), Cube(2, {-3}), Cube(-1, {0})}) {
    auto r = reducing_operator(W, Q, 2.0);
    auto nodes = box_nodes(cube_box(Q), quad);
    Mat avg = Mat::Zero(2, 2);
    for (std::size_t i = 0; i < nodes.size(); ++i) avg += nodes.w[i] * W.at(nodes.point(i));
    for (const auto& z : dirs) {
      double rhs = (z.adjoint() * avg * z)(0, 0).real();
      exact = std::max(exact, std::abs((r.A * z).squaredNorm() - rhs) / rhs);
    }
  }
  double ratio = 0.0;
  ratio = std::max(ratio, reducing_operator(diag_power_weight(1, {0.0, 2.0}), Cube(0, {1}), 1.0).ratio);
  ratio = std::max(ratio, reducing_operator(W, Cube(1, {-1}), 1.5).ratio);
  LatticeWindow w{1, -1, 2, -2.0, 2.0};
  auto cubes = w.cubes();
  auto fam = build_reducing_family(identity_weight(1, 2), cubes, 2.0);
  double cert = reducing_growth_certificate(fam, all_pairs(cubes), 1.0, 1.0).C;
  const bool ok = exact <= 1e-10 && ratio <= std::sqrt(2.0) * 1.05 && cert == 1.0;
  return {ok, "p=2 rel err " + fmt(exact) + ", held-out ratio " + fmt(ratio) + ", identity certificate " + fmt(cert)};
}

// 8. Identity symbol and |xi| molecule constants.
Outcome psido() {
  auto pair = build_bandlimited_pair();
  std::vector<Cube> cubes = {Cube(0, {0}), Cube(1, {0}), Cube(2, {0})};
  double id = 0.0;
  auto one = symbol_one();
  for (const auto& Q : cubes) {
    std::vector<double> xs;
    for (int i = 0; i <= 64; ++i) xs.push_back(Q.corner()[0] + Q.side() * (-8.0 + 16.0 * i / 64));
    auto v = psido_apply(one, pair, Q, xs);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      double ref = std::sqrt(std::ldexp(1.0, Q.j)) * BandlimitedPair::psi(std::ldexp(xs[i], Q.j) - Q.k[0], 0, 4096);
      id = std::max(id, std::abs(v[i] - ref));
    }
  }
  auto rep = psido_molecule_experiment(symbol_abs_power(1), pair, cubes, 3.0, 1.5);
  return {id <= 1e-6 && rep.spread <= 1.2,
          "identity residual " + fmt(id) + ", |xi| constant " + fmt(rep.constant) + " spread " + fmt(rep.spread)};
}

// 9. Hilbert kernel constants and atom-image far field.
Outcome czo() {
  const auto K = hilbert_kernel();
  auto tab = czk_condition_residuals(K, 2.0, 1.0, 1);
  const auto* a0 = tab.find("i", {0});
  const auto* a1 = tab.find("i", {1});
  double c0 = a0 ? a0->C : 0.0, c1 = a1 ? a1->C : 0.0;
  auto thr = thresholds(make_params(Family::B, 0, 2, 2, 1, 1), 0, 0);
  AtomImageSpec spec;
  auto rep = czo_atom_image_experiment(K, thr, 2.0, 1, 0.0, 0.0, spec);
  auto red = far_field_fit(K, make_atom(rep.cubes.front(), bracket_fns(spec.F - 1.0).strict_floor, spec.atom_N),
                           rep.cz.mol.K, spec);
  const bool ok = std::abs(c0 - 1.0) <= 1e-10 && std::abs(c1 - 1.0) <= 1e-10 && rep.cz.compliant && rep.far.pass &&
                  red.monotone_increasing && red.growth > rep.far.growth && !red.pass;
  return {ok, "C_i(0) " + fmt(c0) + ", C_i(1) " + fmt(c1) + ", far growth " + fmt(rep.far.growth) +
                  ", reduced-F growth " + fmt(red.growth) + (red.monotone_increasing ? " (monotone)" : "")};
}

// 10. Sequence-space identities.
Outcome seqspace_identities() {
  LatticeWindow w{1, -1, 3, -2.0, 2.0};
  EnsembleSpec es;
  es.N = 50;
  es.seed = 31;
  es.support_fraction = 0.3;
  auto ens = random_ensemble(w, 1, es);
  double bf = 0.0, hom = 0.0, ups = 0.0;
  for (double p : {0.5, 1.0, 2.0, 3.0})
    for (const auto& t : ens) {
      double b = sequence_norm(t, make_params(Family::B, 0.4, p, p, 1, 1), w).value;
      double f = sequence_norm(t, make_params(Family::F, 0.4, p, p, 1, 1), w).value;
      if (b > 0.0) bf = std::max(bf, std::abs(f / b - 1.0));
    }
  auto u = power_growth(1, 0.2);
  auto uc = scaled(u, 3.0);
  const cplx lam(-2.0, 1.5);
  for (auto fam : {Family::B, Family::F}) {
    auto sp = make_params(fam, 0.3, 1.5, 2, 1, 1, &u);
    auto spc = make_params(fam, 0.3, 1.5, 2, 1, 1, &uc);
    for (const auto& t : ens) {
      double n0 = sequence_norm(t, sp, w).value;
      if (n0 == 0.0) continue;
      hom = std::max(hom, std::abs(sequence_norm(t.scaled(lam), sp, w).value / (std::abs(lam) * n0) - 1.0));
      ups = std::max(ups, std::abs(sequence_norm(t, spc, w).value * 3.0 / n0 - 1.0));
    }
  }
  CoeffSequence two;
  two.n = 1;
  two.m = 1;
  two.set(Cube(0, {0}), 1.0);
  two.set(Cube(1, {0}), 1.0);
  double hand = sequence_norm(two, make_params(Family::B, 0, 1, 1, 1, 1), LatticeWindow::standard(1)).value;
  double he = std::abs(hand - (1.0 + std::pow(2.0, -0.5)));
  const bool ok = bf <= 1e-12 && hom <= 1e-12 && ups <= 1e-12 && he <= 1e-12;
  return {ok, "b=f " + fmt(bf) + ", homogeneity " + fmt(hom) + ", scaling " + fmt(ups) + ", hand example " + fmt(he)};
}

}  // namespace

int main() {
  const std::vector<Criterion> all = {
      {1, "wavelet orthonormality and moments", 30.0, wavelet_system},
      {2, "trace inverts extension", 60.0, trace_ext},
      {3, "weight compatibility closed form", 0.0, compat},
      {4, "threshold formulas", 0.0, threshold_formulas},
      {5, "almost-diagonal boundedness", 300.0, almost_diagonal},
      {6, "weighted vs averaging norm equivalence", 0.0, norm_equivalence},
      {7, "reducing operators", 0.0, reducing_operators},
      {8, "pseudo-differential identity and molecules", 0.0, psido},
      {9, "Calderon-Zygmund kernel and atom images", 0.0, czo},
      {10, "sequence-space identities", 0.0, seqspace_identities},
  };
  int failed = 0;
  for (const auto& c : all) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool pass = o.pass && (c.time_limit == 0.0 || sec <= c.time_limit);
    if (o.pass && !pass) o.detail += ", over the " + fmt(c.time_limit) + " s limit";
    if (!pass) ++failed;
    std::printf("%s %2d %s: %s (%.1f s)\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(), o.detail.c_str(), sec);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
  return failed == 0 ? 0 : 1;
}

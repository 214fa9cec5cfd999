#include "dms/operators.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <random>

#include "dms/parallel.hpp"
#include "dms/quadrature.hpp"

namespace dms {

namespace {

void accumulate(WaveletCoeffs& out, int lambda, const Cube& Q, const Vec& v) {
  auto& slot = out.entries[WKey{lambda, Q}];
  if (slot.size() == 0) slot = Vec::Zero(v.size());
  slot += v;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

// Translates r at scale jc whose 1-D support meets that of phi_{j, a}.
std::pair<std::int64_t, std::int64_t> overlap_range(std::int64_t a, int j, int jc, std::int64_t width) {
  const std::int64_t f = std::int64_t(1) << (j - jc);
  return {floor_div(a, f) - width, floor_div(a + width, f) + 1};
}

void orders_of(int n, int total, std::vector<std::vector<int>>& out, std::vector<int>& cur, int axis) {
  if (axis == n - 1) {
    cur[axis] = total;
    out.push_back(cur);
    return;
  }
  for (int t = total; t >= 0; --t) {
    cur[axis] = t;
    orders_of(n, total - t, out, cur, axis + 1);
  }
}

// Multi-indices of order exactly k.
std::vector<std::vector<int>> exact_order(int n, int k) {
  std::vector<std::vector<int>> out;
  if (k < 0) return out;
  std::vector<int> cur(n, 0);
  orders_of(n, k, out, cur, 0);
  return out;
}

int order(const std::vector<int>& a) {
  int s = 0;
  for (int v : a) s += v;
  return s;
}

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

// ---- trace and extension ---------------------------------------------------

WaveletCoeffs ext_coeffs(const WaveletCoeffs& c, int k0, double phi_at_minus_k0) {
  if (!(std::abs(phi_at_minus_k0) > 1e-8)) throw Error("ext_coeffs: phi(-k0) is below the 1e-8 threshold");
  WaveletCoeffs out;
  out.n = c.n + 1;
  out.m = c.m;
  for (const auto& [key, v] : c.entries) {
    if (key.Q.dim() != c.n) throw Error("ext_coeffs: cube dimension differs from the sequence dimension");
    if (key.lambda <= 0 || key.lambda >= (1 << c.n)) throw Error("ext_coeffs: lambda outside Lambda_n");
    const double f = std::sqrt(key.Q.side()) / phi_at_minus_k0;
    out.entries[WKey{key.lambda, lift(key.Q, k0)}] = v * f;
  }
  return out;
}

WaveletCoeffs ext_coeffs(const WaveletCoeffs& c, const WaveletSystem& sys) {
  return ext_coeffs(c, sys.k0().k0, sys.k0().phi_value);
}

WaveletCoeffs trace_coeffs(const WaveletCoeffs& c, const WaveletSystem& sys, const LatticeWindow& window) {
  const int n = c.n - 1;
  if (n < 1) throw Error("trace_coeffs needs coefficients on R^{n+1}, n >= 1");
  if (window.n != n) throw Error("trace_coeffs: window dimension must be n");
  if (window.j_min < sys.j_min() || window.j_max > sys.j_max())
    throw Error("trace_coeffs: window scales " + std::to_string(window.j_min) + ".." + std::to_string(window.j_max) +
                " exceed the wavelet system range " + std::to_string(sys.j_min()) + ".." +
                std::to_string(sys.j_max()));
  const std::int64_t M = sys.band();
  const std::int64_t width = 2 * sys.k() - 1;
  const int mask = (1 << n) - 1;
  const auto mus = lambdas(n);
  WaveletCoeffs out;
  out.n = n;
  out.m = c.m;
  for (const auto& [key, v] : c.entries) {
    const Cube& P = key.Q;
    if (P.dim() != c.n) throw Error("trace_coeffs: cube dimension mismatch");
    if (P.j < sys.j_min() || P.j > sys.j_max()) throw Error("trace_coeffs: input scale outside the system range");
    const std::int64_t i = P.k[n];
    if (i < -M || i > M) continue;
    const int e = (key.lambda >> n) & 1;
    const int lp = key.lambda & mask;
    const double f = std::sqrt(std::ldexp(1.0, P.j)) * sys.factor_at_integer(e, -i);
    if (f == 0.0) continue;
    const Cube Qp = project(P);
    const Vec w = v * f;
    if (lp != 0) {
      if (window.contains(Qp)) accumulate(out, lp, Qp, w);
      continue;
    }
    // phi^{(x) n}_{Q'} expanded on the window wavelets of coarser scales
    for (int jc = window.j_min; jc < P.j; ++jc) {
      std::vector<std::pair<std::int64_t, std::int64_t>> rng(n);
      for (int a = 0; a < n; ++a) rng[a] = overlap_range(Qp.k[a], P.j, jc, width);
      for (int mu : mus) {
        std::vector<std::int64_t> r(n);
        for (int a = 0; a < n; ++a) r[a] = rng[a].first;
        while (true) {
          double prod = 1.0;
          for (int a = 0; a < n && prod != 0.0; ++a)
            prod *= sys.inner_1d(0, P.j, Qp.k[a], (mu >> a) & 1, jc, r[a]);
          if (prod != 0.0) {
            Cube R(jc, r);
            if (window.contains(R)) accumulate(out, mu, R, w * prod);
          }
          int a = n - 1;
          for (; a >= 0; --a) {
            if (++r[a] <= rng[a].second) break;
            r[a] = rng[a].first;
          }
          if (a < 0) break;
        }
      }
    }
  }
  return out;
}

std::vector<std::pair<int, CoeffSequence>> split_by_lambda(const WaveletCoeffs& c) {
  std::map<int, CoeffSequence> by;
  for (const auto& [key, v] : c.entries) {
    auto& t = by[key.lambda];
    t.n = c.n;
    t.m = c.m;
    t.entries[key.Q] = v;
  }
  return {by.begin(), by.end()};
}

WaveletCoeffs from_sequence(int lambda, const CoeffSequence& t) {
  WaveletCoeffs c;
  c.n = t.n;
  c.m = t.m;
  for (const auto& [Q, v] : t.entries) c.entries[WKey{lambda, Q}] = v;
  return c;
}

CompatCertificate weight_compat_certificate(const MatrixWeight& V, const MatrixWeight& W, double p, double gamma,
                                            const LatticeWindow& window, CompatDirection dir, int directions,
                                            std::uint64_t seed, const QuadratureSpec& quad) {
  if (V.m != W.m) throw Error("weight_compat_certificate: V and W have different m");
  if (W.n != V.n + 1) throw Error("weight_compat_certificate: W must live on R^{n+1} for V on R^n");
  if (window.n != V.n) throw Error("weight_compat_certificate: window dimension must match V");
  if (!(p > 0.0)) throw Error("weight_compat_certificate needs p > 0");
  const auto dirs = unit_directions(V.m, directions, seed);
  CompatCertificate cert;
  cert.direction = dir;
  cert.directions = dirs.size();
  for (int j = window.j_min; j <= window.j_max; ++j) {
    const auto cubes = window.cubes(j);
    auto best = parallel_argmax(cubes.size(), [&](std::size_t c) {
      const Cube& Qp = cubes[c];
      const Cube P = lift(Qp, 0);
      double worst = 0.0;
      for (const auto& z : dirs) {
        double lv = Qp.volume() * std::pow(rho(V, Qp, p, z, quad), p);
        double lw = std::pow(2.0, j * gamma) * P.volume() * std::pow(rho(W, P, p, z, quad), p);
        double num = dir == CompatDirection::trace ? lv : lw;
        double den = dir == CompatDirection::trace ? lw : lv;
        if (!(den > 0.0)) throw Error("weight_compat_certificate: zero denominator on " + to_string(Qp));
        worst = std::max(worst, num / den);
      }
      return worst;
    });
    if (best.empty) continue;
    cert.per_scale.push_back({j, best.value, cubes[best.index]});
  }
  if (cert.per_scale.empty()) throw Error("weight_compat_certificate: empty window");
  double lo = cert.per_scale.front().C, hi = lo;
  for (const auto& s : cert.per_scale) {
    lo = std::min(lo, s.C);
    hi = std::max(hi, s.C);
  }
  cert.C = hi;
  cert.growth = hi / lo;
  return cert;
}

SpaceParams trace_target_params(const SpaceParams& source, double gamma) {
  if (source.n < 2) throw Error("trace source must have dimension >= 2");
  SpaceParams t = source;
  t.n = source.n - 1;
  t.family = Family::B;
  t.s = source.s - gamma / source.p;
  t.q = source.family == Family::F ? source.p : source.q;
  t.upsilon = restrict_growth(source.upsilon);
  return t;
}

double trace_s_threshold(const SpaceParams& source, double gamma, double d_upper_V) {
  const int n = source.n - 1;
  const double p = source.p, d1 = source.upsilon.cls.delta1;
  const double ip = 1.0 / p;
  const bool eq = std::abs(d1 - ip) <= 1e-12;
  bool first = d1 > ip && !eq;
  if (source.family == Family::B && eq && std::isinf(source.q)) first = true;
  const double E = first ? n * (ip - d1) : n * std::max(ip - 1.0, 0.0);
  return gamma / p + E + d_upper_V / p;
}

LatticeWindow trace_source_window(const LatticeWindow& target, const WaveletSystem& sys) {
  LatticeWindow w = target.with_dim(target.n + 1);
  const std::int64_t M = sys.band();
  if (w.k_begin(w.j_min) > -M || w.k_end(w.j_min) <= M)
    throw Error("trace source window does not cover the band |i| <= " + std::to_string(M) + " at scale " +
                std::to_string(w.j_min));
  return w;
}

double wavelet_norm(const WaveletCoeffs& c, const SpaceParams& params, const MatrixWeight* W,
                    const LatticeWindow& window, const QuadratureSpec& quad) {
  double s = 0.0;
  for (const auto& [lambda, t] : split_by_lambda(c))
    s += W ? weighted_norm(t, *W, params, window, quad).value : sequence_norm(t, params, window).value;
  return s;
}

RatioStats trace_ratios(const TraceExperiment& exp, const LatticeWindow& window,
                        const std::vector<WaveletCoeffs>& ensemble) {
  const auto target = trace_target_params(exp.source, exp.gamma);
  const auto src_window = trace_source_window(window, *exp.sys);
  RatioStats st;
  std::vector<double> r(ensemble.size(), -1.0);
  parallel_for(ensemble.size(), [&](std::size_t i) {
    double den = wavelet_norm(ensemble[i], exp.source, exp.W, src_window, exp.quad);
    if (!(den > 0.0)) return;
    auto tr = trace_coeffs(ensemble[i], *exp.sys, window);
    r[i] = wavelet_norm(tr, target, exp.V, window, exp.quad) / den;
  });
  for (double v : r) {
    if (v < 0.0) {
      ++st.skipped;
      continue;
    }
    st.ratios.push_back(v);
  }
  st.used = st.ratios.size();
  if (st.ratios.empty()) return st;
  auto s = st.ratios;
  std::sort(s.begin(), s.end());
  st.min = s.front();
  st.max = s.back();
  st.median = s.size() % 2 ? s[s.size() / 2] : 0.5 * (s[s.size() / 2 - 1] + s[s.size() / 2]);
  return st;
}

std::vector<WaveletCoeffs> random_wavelet_ensemble(const LatticeWindow& source_window, int m, std::int64_t band,
                                                   const EnsembleSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n1 = source_window.n;
  const auto lams = lambdas(n1);
  std::vector<Cube> cubes;
  for (const auto& P : source_window.cubes())
    if (std::abs(P.k[n1 - 1]) <= band) cubes.push_back(P);
  std::vector<WaveletCoeffs> out;
  for (int e = 0; e < spec.N; ++e) {
    WaveletCoeffs c;
    c.n = n1;
    c.m = m;
    for (const auto& P : cubes)
      for (int lam : lams) {
        if (spec.support_fraction < 1.0 && u(rng) >= spec.support_fraction) continue;
        Vec v(m);
        for (int a = 0; a < m; ++a) v(a) = cplx(g(rng), g(rng)) / std::sqrt(2.0);
        c.entries[WKey{lam, P}] = v;
      }
    out.push_back(std::move(c));
  }
  return out;
}

TraceReport trace_norm_experiment(const TraceExperiment& exp, const EnsembleSpec& spec) {
  if (!exp.sys) throw Error("trace experiment needs a wavelet system");
  exp.source.validate();
  TraceReport rep;
  rep.target = trace_target_params(exp.source, exp.gamma);
  rep.threshold = trace_s_threshold(exp.source, exp.gamma, exp.d_upper_V);
  if (!(exp.source.s > rep.threshold)) {
    rep.below_threshold = true;
    rep.warning = "s = " + std::to_string(exp.source.s) + " is not above the trace threshold " +
                  std::to_string(rep.threshold);
  }
  const int m = exp.W ? exp.W->m : exp.source.m;
  const auto fine = exp.window.refined();
  auto ens = random_wavelet_ensemble(trace_source_window(exp.window, *exp.sys), m, exp.sys->band(), spec);
  rep.base = trace_ratios(exp, exp.window, ens);
  auto ens_fine = spec.redraw_on_refine
                      ? random_wavelet_ensemble(trace_source_window(fine, *exp.sys), m, exp.sys->band(), spec)
                      : ens;
  rep.refined = trace_ratios(exp, fine, ens_fine);
  if (rep.base.max > 0.0) rep.drift = std::abs(rep.refined.max / rep.base.max - 1.0);
  return rep;
}

// ---- pseudo-differential operators -----------------------------------------

namespace {

cplx fd_symbol(const SymbolHandle& s, double x, double xi, int alpha, int beta) {
  if (alpha == 0 && beta == 0) return s.eval(x, xi);
  if (alpha > 0) {
    const double h = 1e-3;
    return (fd_symbol(s, x + h, xi, alpha - 1, beta) - fd_symbol(s, x - h, xi, alpha - 1, beta)) / (2.0 * h);
  }
  const double h = 1e-3 * std::abs(xi);
  return (fd_symbol(s, x, xi + h, 0, beta - 1) - fd_symbol(s, x, xi - h, 0, beta - 1)) / (2.0 * h);
}

double falling(int eta, int beta) {
  double f = 1.0;
  for (int b = 0; b < beta; ++b) f *= eta - b;
  return f;
}

struct Mesh1 {
  std::vector<double> xi;  // positive branch 2^{j+u}
  std::vector<double> w;   // ln2 xi du, times psi-hat(xi 2^{-j}) 2^{-j/2} / (2 pi)
};

Mesh1 annulus(int j, const PsidoMesh& mesh) {
  if (mesh.per_octave < 64) throw Error("psido mesh needs at least 64 points per octave");
  Mesh1 m;
  const int N = 2 * mesh.per_octave;
  const double du = 2.0 / N;
  const double amp = std::pow(2.0, -0.5 * j) / (2.0 * std::numbers::pi);
  for (int i = 1; i < N; ++i) {
    double u = -1.0 + i * du;
    double xi = std::exp2(j + u);
    double ph = BandlimitedPair::psi_hat(std::exp2(u));
    if (ph == 0.0) continue;
    m.xi.push_back(xi);
    m.w.push_back(std::numbers::ln2 * xi * du * amp * ph);
  }
  return m;
}

void check_phase(const Cube& Q, double x, const PsidoMesh& mesh) {
  const double l = Q.side();
  const double dist = std::abs(x - Q.corner()[0]) / l;
  // phase advance between neighbouring mesh nodes at the top of the annulus
  if (dist * 2.0 * std::numbers::ln2 / mesh.per_octave > std::numbers::pi / 4)
    throw Error("psido mesh too coarse for |x - x_Q| = " + std::to_string(dist) + " l(Q)");
}

cplx psido_value(const SymbolHandle& sym, const Cube& Q, double x, const Mesh1& m, const PsidoMesh& mesh) {
  check_phase(Q, x, mesh);
  const double d = x - Q.corner()[0];
  cplx s = 0.0;
  for (std::size_t t = 0; t < m.xi.size(); ++t) {
    const double xi = m.xi[t];
    const cplx e = std::polar(1.0, xi * d);
    s += m.w[t] * (sym.eval(x, xi) * e + sym.eval(x, -xi) * std::conj(e));
  }
  return s;
}

}  // namespace

cplx SymbolHandle::derivative(double x, double xi, int alpha, int beta) const {
  if (xi == 0.0) throw Error("symbol derivative at xi = 0");
  if (deriv) return deriv(x, xi, alpha, beta);
  return fd_symbol(*this, x, xi, alpha, beta);
}

SymbolHandle symbol_one() {
  SymbolHandle s;
  s.label = "one";
  s.eta = 0;
  s.x_independent = true;
  s.eval = [](double, double) { return cplx(1.0); };
  s.deriv = [](double, double, int a, int b) { return cplx(a == 0 && b == 0 ? 1.0 : 0.0); };
  return s;
}

SymbolHandle symbol_abs_power(int eta) {
  if (eta < 0) throw Error("symbol order must be nonnegative");
  SymbolHandle s;
  s.label = "abs_xi^" + std::to_string(eta);
  s.eta = eta;
  s.x_independent = true;
  s.eval = [eta](double, double xi) { return cplx(std::pow(std::abs(xi), eta)); };
  s.deriv = [eta](double, double xi, int a, int b) {
    if (a > 0) return cplx(0.0);
    double sg = (b % 2 && xi < 0.0) ? -1.0 : 1.0;
    return cplx(sg * falling(eta, b) * std::pow(std::abs(xi), eta - b));
  };
  return s;
}

SymbolHandle symbol_sin_abs() {
  SymbolHandle s;
  s.label = "sin_x_abs_xi";
  s.eta = 1;
  s.eval = [](double x, double xi) { return cplx(std::sin(x) * std::abs(xi)); };
  s.deriv = [](double x, double xi, int a, int b) {
    double dx = std::sin(x + a * std::numbers::pi / 2.0);
    double dxi = b == 0 ? std::abs(xi) : b == 1 ? (xi < 0.0 ? -1.0 : 1.0) : 0.0;
    return cplx(dx * dxi);
  };
  return s;
}

SymbolHandle operator+(const SymbolHandle& a, const SymbolHandle& b) {
  SymbolHandle s;
  s.label = a.label + "+" + b.label;
  s.eta = std::max(a.eta, b.eta);
  s.x_independent = a.x_independent && b.x_independent;
  s.eval = [a, b](double x, double xi) { return a.eval(x, xi) + b.eval(x, xi); };
  if (a.deriv && b.deriv)
    s.deriv = [a, b](double x, double xi, int al, int be) { return a.deriv(x, xi, al, be) + b.deriv(x, xi, al, be); };
  return s;
}

std::vector<cplx> psido_apply(const SymbolHandle& sym, const BandlimitedPair& pair, const Cube& Q,
                              const std::vector<double>& x, const PsidoMesh& mesh) {
  if (Q.dim() != 1) throw Error("psido_apply is implemented for n = 1");
  if (pair.xi_min > 0.5 || pair.xi_max < 2.0) throw Error("band-limited pair mesh does not cover the annulus");
  const auto m = annulus(Q.j, mesh);
  std::vector<cplx> out(x.size());
  parallel_for(x.size(), [&](std::size_t i) { out[i] = psido_value(sym, Q, x[i], m, mesh); });
  return out;
}

double psido_derivative(const SymbolHandle& sym, const Cube& Q, double x, int r, const PsidoMesh& mesh) {
  if (Q.dim() != 1) throw Error("psido_derivative is implemented for n = 1");
  if (!sym.x_independent) {
    SmoothFunction g;
    g.n = 1;
    g.support_radius = Q.side();
    g.f = [&](const double* y) { return psido_value(sym, Q, y[0], annulus(Q.j, mesh), mesh).real(); };
    return g.derivative(&x, {r});
  }
  check_phase(Q, x, mesh);
  const auto m = annulus(Q.j, mesh);
  const double d = x - Q.corner()[0];
  cplx s = 0.0;
  for (std::size_t t = 0; t < m.xi.size(); ++t) {
    const double xi = m.xi[t];
    const cplx e = std::polar(1.0, xi * d);
    const cplx ip = std::pow(cplx(0.0, xi), r);
    s += m.w[t] * (sym.eval(x, xi) * ip * e + sym.eval(x, -xi) * std::conj(ip) * std::conj(e));
  }
  return s.real();
}

PsidoMoleculeReport psido_molecule_experiment(const SymbolHandle& sym, const BandlimitedPair& pair,
                                              const std::vector<Cube>& cubes, double M, double N,
                                              const MoleculeGrid& grid, double spread_tol, const PsidoMesh& mesh) {
  if (cubes.empty()) throw Error("psido_molecule_experiment needs at least one cube");
  PsidoMoleculeReport rep;
  rep.cubes = cubes;
  for (const auto& Q : cubes) {
    if (Q.dim() != 1) throw Error("psido_molecule_experiment is implemented for n = 1");
    const double scale = std::pow(Q.volume(), sym.eta);
    SmoothFunction g;
    g.n = 1;
    g.support_radius = Q.side();
    g.f = [&, scale](const double* x) { return scale * psido_apply(sym, pair, Q, {x[0]}, mesh)[0].real(); };
    if (sym.x_independent)
      g.deriv = [&, scale](const double* x, const std::vector<int>& gam) {
        return scale * psido_derivative(sym, Q, x[0], gam[0], mesh);
      };
    rep.reports.push_back(molecule_check(g, Q, MoleculeParams{M, -1.0, M, N}, grid));
  }
  double lo = rep.reports.front().fitted_constant, hi = lo;
  for (const auto& r : rep.reports) {
    lo = std::min(lo, r.fitted_constant);
    hi = std::max(hi, r.fitted_constant);
  }
  rep.constant = hi;
  rep.spread = lo > 0.0 ? hi / lo : kInf;
  rep.pass = std::isfinite(hi) && hi > 0.0 && rep.spread <= 1.0 + spread_tol;
  return rep;
}

SymbolResidual symbol_class_residual(const SymbolHandle& sym, int eta, int alpha_cap, int beta_cap,
                                     const SymbolProbes& probes) {
  if (eta < 0 || alpha_cap < 0 || beta_cap < 0) throw Error("symbol_class_residual needs nonnegative orders");
  if (!(probes.xi_floor > 0.0) || !(probes.xi_ceil > probes.xi_floor))
    throw Error("symbol probes need 0 < xi_floor < xi_ceil");
  SymbolResidual res;
  res.alpha_cap = alpha_cap;
  res.beta_cap = beta_cap;
  std::vector<double> xs, xis;
  for (int i = 0; i < probes.x_points; ++i)
    xs.push_back(probes.x_points == 1 ? probes.x_lo
                                      : probes.x_lo + (probes.x_hi - probes.x_lo) * i / (probes.x_points - 1));
  const double span = std::log2(probes.xi_ceil / probes.xi_floor);
  for (int i = 0; i < probes.xi_points; ++i) {
    double a = probes.xi_floor * std::exp2(probes.xi_points == 1 ? 0.0 : span * i / (probes.xi_points - 1));
    xis.push_back(a);
    xis.push_back(-a);
  }
  const int B = beta_cap + 1;
  res.per_index.assign((alpha_cap + 1) * B, 0.0);
  parallel_for(res.per_index.size(), [&](std::size_t idx) {
    const int al = static_cast<int>(idx) / B, be = static_cast<int>(idx) % B;
    double worst = 0.0;
    for (double x : xs)
      for (double xi : xis)
        worst = std::max(worst, std::pow(std::abs(xi), -eta - al + be) * std::abs(sym.derivative(x, xi, al, be)));
    res.per_index[idx] = worst;
  });
  for (double v : res.per_index) res.value = std::max(res.value, v);
  return res;
}

// ---- Calderon-Zygmund kernels ----------------------------------------------

namespace {

// Derivative by nested central differences; reduces the first nonzero order.
double fd_kernel(const KernelHandle& K, std::vector<double>& x, std::vector<double>& y, std::vector<int>& alpha,
                 std::vector<int>& beta, double h) {
  const int n = K.n;
  for (int a = 0; a < n; ++a)
    for (int side = 0; side < 2; ++side) {
      auto& ord = side == 0 ? alpha : beta;
      auto& pt = side == 0 ? x : y;
      if (ord[a] == 0) continue;
      --ord[a];
      const double c = pt[a];
      pt[a] = c + h;
      double fp = fd_kernel(K, x, y, alpha, beta, h);
      pt[a] = c - h;
      double fm = fd_kernel(K, x, y, alpha, beta, h);
      pt[a] = c;
      ++ord[a];
      return (fp - fm) / (2.0 * h);
    }
  return K.eval(x.data(), y.data());
}

}  // namespace

double KernelHandle::derivative(const double* x, const double* y, const std::vector<int>& alpha,
                                const std::vector<int>& beta) const {
  if (deriv) return deriv(x, y, alpha, beta);
  if (order(alpha) + order(beta) == 0) return eval(x, y);
  std::vector<double> xv(x, x + n), yv(y, y + n);
  double r = 0.0;
  for (int a = 0; a < n; ++a) r += (x[a] - y[a]) * (x[a] - y[a]);
  r = std::sqrt(r);
  if (r == 0.0) throw Error("kernel derivative on the diagonal");
  auto al = alpha, be = beta;
  const double h = 2e-3 * r;
  double d1 = fd_kernel(*this, xv, yv, al, be, h);
  double d2 = fd_kernel(*this, xv, yv, al, be, 0.5 * h);
  return (4.0 * d2 - d1) / 3.0;
}

KernelHandle hilbert_kernel() {
  KernelHandle K;
  K.label = "hilbert";
  K.n = 1;
  K.eval = [](const double* x, const double* y) { return 1.0 / (x[0] - y[0]); };
  K.deriv = [](const double* x, const double* y, const std::vector<int>& a, const std::vector<int>& b) {
    const int s = a[0] + b[0];
    double f = std::tgamma(s + 1.0);
    if (a[0] % 2) f = -f;
    return f * std::pow(x[0] - y[0], -1.0 - s);
  };
  K.odd_profile = [](double z) { return 1.0 / z; };
  return K;
}

KernelHandle riesz_type_kernel() {
  KernelHandle K;
  K.label = "riesz_type";
  K.n = 2;
  K.eval = [](const double* x, const double* y) {
    double z0 = x[0] - y[0], z1 = x[1] - y[1];
    double r2 = z0 * z0 + z1 * z1;
    return z0 / (r2 * std::sqrt(r2)) * std::exp(-r2 / 16.0);
  };
  return K;
}

const KernelResidualRow* KernelResidualTable::find(const std::string& cond, const std::vector<int>& alpha) const {
  for (const auto& r : rows)
    if (r.condition == cond && r.alpha == alpha) return &r;
  return nullptr;
}

KernelResidualTable czk_condition_residuals(const KernelHandle& K, double E, double F, int sigma,
                                            const KernelProbes& probes) {
  const int n = K.n;
  if (probes.count < 1) throw Error("kernel probes: count must be positive");
  if (!(probes.r_min > 0.0) || !(probes.r_max >= probes.r_min)) throw Error("kernel probes need 0 < r_min <= r_max");
  struct Probe {
    std::vector<double> x, y, h, u, v;
    double r;
  };
  std::mt19937_64 rng(probes.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> G(0.0, 1.0);
  auto unit = [&]() {
    std::vector<double> d(n);
    double s;
    do {
      for (auto& v : d) v = G(rng);
      s = norm2(d);
    } while (s == 0.0);
    for (auto& v : d) v /= s;
    return d;
  };
  auto frac = [&]() { return std::exp2(-10.0 * U(rng)) * 0.999; };  // in (0, 1)
  std::vector<Probe> pr(probes.count);
  for (auto& p : pr) {
    p.x.resize(n);
    for (auto& v : p.x) v = probes.box * (2.0 * U(rng) - 1.0);
    double r = probes.r_min * std::pow(probes.r_max / probes.r_min, U(rng));
    auto d = unit();
    p.y.resize(n);
    for (int a = 0; a < n; ++a) p.y[a] = p.x[a] - r * d[a];
    std::vector<double> z(n);
    for (int a = 0; a < n; ++a) z[a] = p.x[a] - p.y[a];
    p.r = norm2(z);
    if (p.r == 0.0) throw Error("kernel probe hits the diagonal");
    double hs = frac() * 0.5 * p.r;
    auto dh = unit();
    p.h.resize(n);
    for (int a = 0; a < n; ++a) p.h[a] = hs * dh[a];
    double tot = frac() * 0.5 * p.r, sp = U(rng);
    auto du = unit(), dv = unit();
    p.u.resize(n);
    p.v.resize(n);
    for (int a = 0; a < n; ++a) {
      p.u[a] = tot * sp * du[a];
      p.v[a] = tot * (1.0 - sp) * dv[a];
    }
  }
  const Brackets bE = bracket_fns(E);
  const long long Ef = bE.strict_floor, Efp = std::max(0LL, Ef);
  KernelResidualTable tab;
  tab.E = E;
  tab.F = F;
  tab.sigma = sigma;
  const std::vector<int> zero(n, 0);

  auto add = [&](std::string cond, std::vector<int> al, std::vector<int> be,
                 const std::function<double(const Probe&)>& ratio) {
    KernelResidualRow row{std::move(cond), std::move(al), std::move(be), 0.0, pr.size()};
    auto best = parallel_argmax(pr.size(), [&](std::size_t i) { return ratio(pr[i]); });
    row.C = best.empty ? 0.0 : best.value;
    tab.max_C = std::max(tab.max_C, row.C);
    tab.rows.push_back(std::move(row));
  };
  auto shifted = [&](const std::vector<double>& a, const std::vector<double>& d) {
    std::vector<double> o(a);
    for (int i = 0; i < n; ++i) o[i] += d[i];
    return o;
  };

  for (int k = 0; k <= Efp; ++k)
    for (const auto& al : exact_order(n, k))
      add("i", al, zero, [&, al, k](const Probe& p) {
        return std::abs(K.derivative(p.x.data(), p.y.data(), al, zero)) * std::pow(p.r, n + k);
      });
  if (Ef >= 0)
    for (const auto& al : exact_order(n, static_cast<int>(Ef)))
      add("ii", al, zero, [&, al](const Probe& p) {
        auto xh = shifted(p.x, p.h);
        double d = K.derivative(p.x.data(), p.y.data(), al, zero) - K.derivative(xh.data(), p.y.data(), al, zero);
        return std::abs(d) * std::pow(p.r, n + E) / std::pow(norm2(p.h), bE.star);
      });
  for (int k = 0; k <= Efp; ++k) {
    const Brackets bF = bracket_fns(F - k);
    if (bF.strict_floor < 0) continue;
    for (const auto& al : exact_order(n, k))
      for (const auto& be : exact_order(n, static_cast<int>(bF.strict_floor)))
        add("iii", al, be, [&, al, be, bF](const Probe& p) {
          auto yh = shifted(p.y, p.h);
          double d = K.derivative(p.x.data(), p.y.data(), al, be) - K.derivative(p.x.data(), yh.data(), al, be);
          return std::abs(d) * std::pow(p.r, n + F) / std::pow(norm2(p.h), bF.star);
        });
  }
  if (sigma >= 1 && Ef >= 0) {
    const Brackets bFE = bracket_fns(F - E);
    if (bFE.strict_floor >= 0)
      for (const auto& al : exact_order(n, static_cast<int>(Ef)))
        for (const auto& be : exact_order(n, static_cast<int>(bFE.strict_floor)))
          add("double", al, be, [&, al, be, bFE](const Probe& p) {
            auto xu = shifted(p.x, p.u), yv = shifted(p.y, p.v);
            double d = K.derivative(p.x.data(), p.y.data(), al, be) - K.derivative(xu.data(), p.y.data(), al, be) -
                       K.derivative(p.x.data(), yv.data(), al, be) + K.derivative(xu.data(), yv.data(), al, be);
            double den = std::pow(norm2(p.u), bE.star) * std::pow(norm2(p.v), bFE.star);
            return std::abs(d) * std::pow(p.r, n + F) / den;
          });
  }
  return tab;
}

CzParams czo_cz_params(const Thresholds& thr, double E, double F, int sigma, double G, double H) {
  CzParams c;
  c.thr = thr;
  c.n = thr.n;
  const double h = thr.n / 2.0;
  const double e = thr.E_star - h, f = thr.F_star - h;
  c.sigma_min = e >= 0.0 ? 1 : 0;
  c.E_gt = std::max(e, 0.0);
  c.F_gt = std::max(thr.D_star, thr.F_star + h) - thr.n;
  c.G_ge = std::max(std::floor(e), 0.0);
  c.H_ge = std::floor(f);
  if (sigma < c.sigma_min)
    c.violation = "sigma = " + std::to_string(sigma) + " < " + std::to_string(c.sigma_min);
  else if (!(E > c.E_gt))
    c.violation = "E = " + std::to_string(E) + " is not above " + std::to_string(c.E_gt);
  else if (!(F > c.F_gt))
    c.violation = "F = " + std::to_string(F) + " is not above " + std::to_string(c.F_gt);
  else if (G < c.G_ge)
    c.violation = "G = " + std::to_string(G) + " < " + std::to_string(c.G_ge);
  else if (H < c.H_ge)
    c.violation = "H = " + std::to_string(H) + " < " + std::to_string(c.H_ge);
  c.compliant = c.violation.empty();
  c.mol.L = f;
  c.mol.K = F + thr.n;
  c.mol.M = F + thr.n;
  if (e >= 0.0) {
    double lo = std::floor(e);
    double hi = std::min(static_cast<double>(bracket_fns(e).strict_ceil), E);
    c.mol.N = hi > lo ? 0.5 * (lo + hi) : lo;
  } else {
    c.mol.N = 0.0;
  }
  return c;
}

namespace {

// Composite Gauss-Legendre over [a, b].
template <class F>
double gl_integral(F&& f, double a, double b, int panels, const std::vector<double>& gx,
                   const std::vector<double>& gw) {
  if (!(b > a)) return 0.0;
  const double w = (b - a) / panels;
  double s = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double c = a + (p + 0.5) * w;
    for (std::size_t i = 0; i < gx.size(); ++i) s += gw[i] * f(c + 0.5 * w * gx[i]);
  }
  return 0.5 * w * s;
}

const std::vector<double>& gl_nodes(int nodes, bool weights) {
  static std::mutex mu;
  static std::map<int, std::pair<std::vector<double>, std::vector<double>>> cache;
  std::lock_guard<std::mutex> lk(mu);
  auto it = cache.find(nodes);
  if (it == cache.end()) {
    std::vector<double> x, w;
    gauss_legendre(nodes, x, w);
    it = cache.emplace(nodes, std::make_pair(x, w)).first;
  }
  return weights ? it->second.second : it->second.first;
}

}  // namespace

double czo_apply(const KernelHandle& K, const SmoothFunction& t, double a, double b, double x, int panels,
                 int nodes) {
  if (K.n != 1 || t.n != 1) throw Error("czo_apply is implemented for n = 1");
  if (!K.odd_profile) throw Error("czo_apply needs an odd translation-invariant kernel profile");
  if (panels < 1 || nodes < 2) throw Error("czo_apply: quadrature too coarse");
  const auto& gx = gl_nodes(nodes, false);
  const auto& gw = gl_nodes(nodes, true);
  const auto& k = K.odd_profile;
  if (x <= a || x >= b)
    return gl_integral([&](double y) { return k(x - y) * t(&y); }, a, b, panels, gx, gw);
  const double tx = t(&x);
  auto diff = [&](double y) {
    const double z = x - y;
    if (z == 0.0) return 0.0;
    return k(z) * (t(&y) - tx);
  };
  const int pl = std::max(1, static_cast<int>(std::lround(panels * (x - a) / (b - a))));
  const int pr = std::max(1, panels - pl);
  double s = gl_integral(diff, a, x, pl, gx, gw) + gl_integral(diff, x, b, pr, gx, gw);
  if (tx != 0.0) {
    // the symmetric part of the principal value cancels; the rest is
    // integrated in log |x - y|
    const double dl = x - a, dr = b - x;
    const double d = std::min(dl, dr), D = std::max(dl, dr);
    const double sg = dl < dr ? -1.0 : 1.0;  // sign of x - y on the remainder
    if (D > d) {
      auto g = [&](double s_) {
        const double w = std::exp(s_);
        return k(sg * w) * w;
      };
      s += tx * gl_integral(g, std::log(d), std::log(D), std::max(4, panels / 4), gx, gw);
    }
  }
  return s;
}

FarFieldFit far_field_fit(const KernelHandle& K, const Atom& atom, double Kdecay, const AtomImageSpec& spec) {
  const Cube& P = atom.Q;
  const double l = P.side(), c = P.center()[0];
  const double a = c - 1.5 * l, b = c + 1.5 * l;
  FarFieldFit fit;
  fit.K = Kdecay;
  fit.radii = spec.far_radii;
  for (double R : spec.far_radii) {
    const int S = std::max(2, spec.far_samples);
    std::vector<double> xs;
    for (int i = 0; i < S; ++i) {
      double r = l * (0.5 * R + 0.5 * R * i / (S - 1));
      xs.push_back(c + r);
      xs.push_back(c - r);
    }
    auto best = parallel_argmax(xs.size(), [&](std::size_t i) {
      double v = czo_apply(K, atom.fn, a, b, xs[i], spec.panels, spec.nodes);
      return std::abs(v) / u_env(P, Kdecay, &xs[i]);
    });
    fit.C.push_back(best.value);
  }
  fit.growth = fit.C.back() / fit.C.front();
  fit.monotone_increasing = true;
  for (std::size_t i = 1; i < fit.C.size(); ++i)
    if (!(fit.C[i] > fit.C[i - 1])) fit.monotone_increasing = false;
  fit.pass = fit.growth <= 1.0 + spec.spread_tol;
  return fit;
}

namespace {

double image_moment_residual(const KernelHandle& K, const Atom& atom, const AtomImageSpec& spec) {
  const Cube& P = atom.Q;
  const double l = P.side(), c = P.center()[0];
  const double a = c - 1.5 * l, b = c + 1.5 * l;
  const auto& gx = gl_nodes(spec.nodes, false);
  const auto& gw = gl_nodes(spec.nodes, true);
  std::vector<std::pair<double, double>> pieces;
  const double near = 4.0;
  for (int i = 0; i < 32; ++i) pieces.push_back({c + l * near * (-1.0 + i / 16.0), c + l * near * (-1.0 + (i + 1) / 16.0)});
  for (double r = near; r < spec.moment_radius; r *= 2.0) {
    double r2 = std::min(2.0 * r, spec.moment_radius);
    pieces.push_back({c + l * r, c + l * r2});
    pieces.push_back({c - l * r2, c - l * r});
  }
  std::vector<double> xs, ws;
  for (const auto& [lo, hi] : pieces)
    for (std::size_t i = 0; i < gx.size(); ++i) {
      xs.push_back(0.5 * (lo + hi) + 0.5 * (hi - lo) * gx[i]);
      ws.push_back(0.5 * (hi - lo) * gw[i]);
    }
  std::vector<double> v(xs.size());
  parallel_for(xs.size(), [&](std::size_t i) { v[i] = czo_apply(K, atom.fn, a, b, xs[i], spec.panels, spec.nodes); });
  double s = 0.0, sa = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    s += ws[i] * v[i];
    sa += ws[i] * std::abs(v[i]);
  }
  return sa > 0.0 ? std::abs(s) / sa : 0.0;
}

}  // namespace

AtomImageReport czo_atom_image_experiment(const KernelHandle& K, const Thresholds& thr, double E, int sigma,
                                          double G, double H, const AtomImageSpec& spec) {
  if (K.n != 1) throw Error("czo_atom_image_experiment is implemented for n = 1");
  if (spec.scales.empty() || spec.far_radii.empty()) throw Error("atom image experiment needs scales and radii");
  AtomImageReport rep;
  rep.cz = czo_cz_params(thr, E, spec.F, sigma, G, H);
  rep.atom_L = static_cast<int>(bracket_fns(spec.F).strict_floor);
  // the moment condition is tested separately on a large interval
  MoleculeParams mp = rep.cz.mol;
  mp.L = -1.0;
  for (int j : spec.scales) {
    Cube P(j, {0});
    rep.cubes.push_back(P);
    const Atom atom = make_atom(P, rep.atom_L, spec.atom_N);
    const double l = P.side(), c = P.center()[0];
    const double a = c - 1.5 * l, b = c + 1.5 * l;
    SmoothFunction g;
    g.n = 1;
    g.support_radius = l;
    g.f = [&K, atom, a, b, &spec](const double* x) { return czo_apply(K, atom.fn, a, b, x[0], spec.panels, spec.nodes); };
    rep.reports.push_back(molecule_check(g, P, mp, spec.grid));
  }
  double lo = rep.reports.front().fitted_constant, hi = lo;
  for (const auto& r : rep.reports) {
    lo = std::min(lo, r.fitted_constant);
    hi = std::max(hi, r.fitted_constant);
  }
  rep.constant = hi;
  rep.spread = lo > 0.0 ? hi / lo : kInf;

  const Cube P0 = rep.cubes.front();
  rep.far = far_field_fit(K, make_atom(P0, rep.atom_L, spec.atom_N), rep.cz.mol.K, spec);
  const Atom even = make_atom(P0, 1.0, spec.atom_N);
  const double l0 = P0.side(), c0 = P0.center()[0];
  rep.center_value = czo_apply(K, even.fn, c0 - 1.5 * l0, c0 + 1.5 * l0, c0, spec.panels, spec.nodes);
  rep.moment_residual = image_moment_residual(K, even, spec);
  rep.pass = rep.cz.compliant && rep.spread <= 1.0 + spec.spread_tol && rep.far.pass && rep.moment_residual <= 1e-4;
  return rep;
}

}  // namespace dms

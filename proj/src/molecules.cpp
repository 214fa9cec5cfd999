#include "dms/molecules.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "dms/parallel.hpp"
#include "dms/quadrature.hpp"

namespace dms {

Brackets bracket_fns(double r) {
  Brackets b;
  b.floor = static_cast<long long>(std::floor(r));
  b.ceil = static_cast<long long>(std::ceil(r));
  b.strict_ceil = b.floor + 1;
  b.strict_floor = b.ceil - 1;
  b.star = r - static_cast<double>(b.strict_floor);
  return b;
}

namespace {

double binom(int a, int b) {
  double r = 1.0;
  for (int i = 1; i <= b; ++i) r = r * (a - b + i) / i;
  return r;
}

double central(const std::function<double(const double*)>& g, std::vector<double> x, int axis, int r, double h) {
  double s = 0.0;
  const double x0 = x[axis];
  for (int i = 0; i <= r; ++i) {
    x[axis] = x0 + (0.5 * r - i) * h;
    s += (i % 2 ? -1.0 : 1.0) * binom(r, i) * g(x.data());
  }
  return s / std::pow(h, r);
}

double fd(const SmoothFunction& s, const double* x, const std::vector<int>& gamma, double h) {
  std::function<double(const double*)> g = s.f;
  for (int a = 0; a < s.n; ++a) {
    if (gamma[a] == 0) continue;
    int r = gamma[a];
    double ha = h * std::pow(4.0, std::max(0, r - 2));
    auto inner = g;
    g = [inner, a, r, ha, n = s.n](const double* y) {
      return central(inner, std::vector<double>(y, y + n), a, r, ha);
    };
  }
  return g(x);
}

int order(const std::vector<int>& g) { return std::accumulate(g.begin(), g.end(), 0); }

// Multi-indices of total order exactly k (k_min..k_max via the caller).
void multi_indices(int n, int k, std::vector<std::vector<int>>& out) {
  std::vector<int> g(n, 0);
  std::function<void(int, int)> rec = [&](int a, int left) {
    if (a == n - 1) {
      g[a] = left;
      out.push_back(g);
      return;
    }
    for (int v = left; v >= 0; --v) {
      g[a] = v;
      rec(a + 1, left - v);
    }
  };
  if (n == 0) return;
  rec(0, k);
}

std::vector<std::vector<int>> indices_upto(int n, int kmax) {
  std::vector<std::vector<int>> out;
  for (int k = 0; k <= kmax; ++k) multi_indices(n, k, out);
  return out;
}

// Uniform grid in n dimensions, last axis fastest.
struct Grid {
  int n;
  int pts;
  std::vector<double> lo;
  double dx;

  std::size_t size() const {
    std::size_t s = 1;
    for (int a = 0; a < n; ++a) s *= static_cast<std::size_t>(pts);
    return s;
  }
  void point(std::size_t idx, std::vector<double>& x) const {
    x.resize(n);
    for (int a = n - 1; a >= 0; --a) {
      x[a] = lo[a] + static_cast<double>(idx % pts) * dx;
      idx /= pts;
    }
  }
};

}  // namespace

double SmoothFunction::derivative(const double* x, const std::vector<int>& gamma) const {
  if (order(gamma) == 0) return f(x);
  if (deriv) return deriv(x, gamma);
  const double h = support_radius * std::ldexp(1.0, -12);
  double d1 = fd(*this, x, gamma, h);
  double d2 = fd(*this, x, gamma, 0.5 * h);
  return (4.0 * d2 - d1) / 3.0;
}

double u_env(const Cube& Q, double M, const double* x) {
  auto c = Q.corner();
  double d2 = 0.0;
  for (int a = 0; a < Q.dim(); ++a) d2 += (x[a] - c[a]) * (x[a] - c[a]);
  return std::pow(1.0 + std::sqrt(d2) / Q.side(), -M) / std::sqrt(Q.volume());
}

MoleculeReport molecule_check(const SmoothFunction& g, const Cube& Q, const MoleculeParams& params,
                              const MoleculeGrid& grid, double tol) {
  if (g.n != Q.dim()) throw Error("molecule_check: function and cube dimensions differ");
  if (grid.points < 3) throw Error("molecule_check: grid too coarse");
  const int n = g.n;
  const double l = Q.side();
  auto cQ = Q.center();
  auto xQ = Q.corner();
  Grid G{n, grid.points, {}, 2.0 * grid.radius * l / (grid.points - 1)};
  for (int a = 0; a < n; ++a) G.lo.push_back(cQ[a] - grid.radius * l);
  const std::size_t N = G.size();
  MoleculeReport rep;
  rep.tol = tol;
  rep.points = N;

  auto bN = bracket_fns(params.N);
  const int top = static_cast<int>(bN.strict_floor);  // |gamma| < N  <=>  |gamma| <= top
  std::vector<std::vector<int>> dgam = top >= 0 ? indices_upto(n, top) : std::vector<std::vector<int>>{};
  std::vector<std::vector<int>> hgam;
  if (top >= 0) multi_indices(n, top, hgam);

  std::vector<double> val(N);
  std::vector<std::vector<double>> der(dgam.size(), std::vector<double>(N));
  std::vector<double> uK(N), uM(N);
  parallel_for(N, [&](std::size_t i) {
    std::vector<double> x;
    G.point(i, x);
    val[i] = g(x.data());
    uK[i] = u_env(Q, params.K, x.data());
    uM[i] = u_env(Q, params.M, x.data());
    for (std::size_t d = 0; d < dgam.size(); ++d) der[d][i] = g.derivative(x.data(), dgam[d]);
  });

  auto worst = [&](ConditionResult& c, double r, std::size_t i) {
    if (r > c.ratio) {
      c.ratio = r;
      G.point(i, c.worst_x);
    }
  };

  rep.cond[0].checked = true;
  for (std::size_t i = 0; i < N; ++i) worst(rep.cond[0], std::abs(val[i]) / uK[i], i);

  if (params.L >= 0.0) {
    rep.cond[1].checked = true;
    std::vector<double> x;
    for (const auto& gm : indices_upto(n, static_cast<int>(std::floor(params.L)))) {
      double s = 0.0, sa = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        G.point(i, x);
        double mono = 1.0;
        for (int a = 0; a < n; ++a) mono *= std::pow(x[a] - xQ[a], gm[a]);
        s += val[i] * mono;
        sa += std::abs(val[i] * mono);
      }
      double rel = sa > 0.0 ? std::abs(s) / sa : 0.0;
      if (rel / grid.moment_tol > rep.cond[1].ratio) {
        rep.cond[1].ratio = rel / grid.moment_tol;
        rep.cond[1].worst_x.assign(gm.begin(), gm.end());
      }
    }
  }

  if (top >= 0) {
    rep.cond[2].checked = true;
    for (std::size_t d = 0; d < dgam.size(); ++d) {
      double sc = std::pow(l, order(dgam[d]));
      for (std::size_t i = 0; i < N; ++i) worst(rep.cond[2], std::abs(der[d][i]) * sc / uM[i], i);
    }

    rep.cond[3].checked = true;
    const double Nss = bN.star;
    std::vector<double> x;
    for (const auto& hg : hgam) {
      std::size_t d = std::find(dgam.begin(), dgam.end(), hg) - dgam.begin();
      const double sc = std::pow(l, top);
      for (int a = 0; a < n; ++a) {
        std::size_t stride = 1;
        for (int b = n - 1; b > a; --b) stride *= static_cast<std::size_t>(G.pts);
        for (double st : grid.holder_steps) {
          auto off = static_cast<std::size_t>(std::max(1.0, std::round(st * l / G.dx)));
          double dist = static_cast<double>(off) * G.dx;
          for (std::size_t i = 0; i < N; ++i) {
            std::size_t ia = (i / stride) % static_cast<std::size_t>(G.pts);
            if (ia + off >= static_cast<std::size_t>(G.pts)) continue;
            std::size_t iy = i + off * stride;
            double diff = std::abs(der[d][i] - der[d][iy]) * sc;
            if (diff == 0.0) continue;
            for (std::size_t from : {i, iy}) {
              G.point(from, x);
              double r = 0.0;
              for (int b = 0; b < n; ++b) r += (x[b] - xQ[b]) * (x[b] - xQ[b]);
              double sup = std::pow(1.0 + std::max(std::sqrt(r) - dist, 0.0) / l, -params.M) / std::sqrt(Q.volume());
              worst(rep.cond[3], diff / (std::pow(dist / l, Nss) * sup), from);
            }
          }
        }
      }
    }
  }

  rep.pass = true;
  for (const auto& c : rep.cond)
    if (c.checked && c.ratio > 1.0 + tol) rep.pass = false;
  rep.fitted_constant = rep.cond[0].ratio;
  if (rep.cond[2].checked) rep.fitted_constant = std::max(rep.fitted_constant, rep.cond[2].ratio);
  if (rep.cond[3].checked) rep.fitted_constant = std::max(rep.fitted_constant, rep.cond[3].ratio);
  return rep;
}

MoleculeParams MoleculeBounds::pick(double margin) const {
  MoleculeParams p;
  p.K = std::max(0.0, K_gt + margin);
  p.L = L_ge < 0.0 ? -1.0 : std::ceil(L_ge - 1e-12);
  p.M = std::max(0.0, M_gt + margin);
  p.N = N_gt + margin;
  return p;
}

bool MoleculeBounds::satisfied_by(const MoleculeParams& p) const {
  return p.K > K_gt && (L_ge < 0.0 || p.L >= L_ge) && p.M > M_gt && p.N > N_gt;
}

MoleculeBounds family_thresholds(const SpaceParams& params, double d_lower, double d_upper, MoleculeKind kind) {
  MoleculeBounds b;
  b.kind = kind;
  b.thr = thresholds(params, d_lower, d_upper);
  const double h = params.n / 2.0;
  const double first = kind == MoleculeKind::synthesis ? b.thr.F_star : b.thr.E_star;
  const double second = kind == MoleculeKind::synthesis ? b.thr.E_star : b.thr.F_star;
  b.K_gt = std::max(b.thr.D_star, first + h);
  b.L_ge = first - h;
  b.M_gt = b.thr.D_star;
  b.N_gt = second - h;
  return b;
}

namespace {

constexpr double kAtomHalf = 1.5;  // 3Q in units of l(Q) around the center

// d^m/dv^m exp(-1/(1 - v^2)) = P_m(v) (1 - v^2)^{-2m} exp(-1/(1 - v^2))
struct BumpDerivs {
  std::vector<std::vector<double>> P;  // coefficients in increasing powers

  explicit BumpDerivs(int mmax) {
    P.push_back({1.0});
    for (int m = 0; m < mmax; ++m) {
      const auto& p = P.back();
      std::vector<double> q(p.size() + 3, 0.0);
      // P_m' (1 - v^2)^2
      for (std::size_t i = 1; i < p.size(); ++i) {
        double c = p[i] * i;
        q[i - 1] += c;
        q[i + 1] -= 2.0 * c;
        q[i + 3] += c;
      }
      // 4 m v (1 - v^2) P_m - 2 v P_m
      for (std::size_t i = 0; i < p.size(); ++i) {
        q[i + 1] += (4.0 * m - 2.0) * p[i];
        q[i + 3] -= 4.0 * m * p[i];
      }
      while (q.size() > 1 && q.back() == 0.0) q.pop_back();
      P.push_back(std::move(q));
    }
  }

  double eval(int m, double v) const {
    double w = 1.0 - v * v;
    if (w <= 0.0) return 0.0;
    double s = -1.0 / w;
    if (s < -700.0) return 0.0;
    double poly = 0.0;
    for (auto it = P[m].rbegin(); it != P[m].rend(); ++it) poly = poly * v + *it;
    return poly * std::pow(w, -2.0 * m) * std::exp(s);
  }
};

const BumpDerivs& bump() {
  static const BumpDerivs b(16);
  return b;
}

double bump_deriv(int m, double u) {  // d^m/du^m beta(u / 1.5)
  if (m > 16) throw Error("bump derivative order above 16");
  return bump().eval(m, u / kAtomHalf) * std::pow(1.0 / kAtomHalf, m);
}

double falling(int a, int d) {
  double r = 1.0;
  for (int i = 0; i < d; ++i) r *= a - i;
  return r;
}

double profile_deriv(const std::vector<std::vector<int>>& exps, const std::vector<double>& coef, const double* u,
                     const std::vector<int>& gamma) {
  const int n = static_cast<int>(gamma.size());
  for (int a = 0; a < n; ++a)
    if (std::abs(u[a]) >= kAtomHalf) return 0.0;
  // Leibniz over delta <= gamma
  double total = 0.0;
  std::vector<int> delta(n, 0);
  for (;;) {
    double bump_part = 1.0;
    double comb = 1.0;
    for (int a = 0; a < n; ++a) {
      bump_part *= bump_deriv(gamma[a] - delta[a], u[a]);
      comb *= binom(gamma[a], delta[a]);
    }
    if (bump_part != 0.0) {
      double poly = 0.0;
      for (std::size_t t = 0; t < exps.size(); ++t) {
        double term = coef[t];
        for (int a = 0; a < n && term != 0.0; ++a) {
          if (exps[t][a] < delta[a]) term = 0.0;
          else term *= falling(exps[t][a], delta[a]) * std::pow(u[a], exps[t][a] - delta[a]);
        }
        poly += term;
      }
      total += comb * poly * bump_part;
    }
    int a = n - 1;
    while (a >= 0 && ++delta[a] > gamma[a]) delta[a--] = 0;
    if (a < 0) break;
  }
  return total;
}

}  // namespace

Atom make_atom(const Cube& Q, double L, double N) {
  if (!std::isfinite(L) || !std::isfinite(N)) throw Error("make_atom needs finite L and N");
  const int n = Q.dim();
  Atom at;
  at.Q = Q;
  at.L = L;
  at.N = N;
  if (L < 0.0) {
    at.exps = {std::vector<int>(n, 0)};
    at.coef = {1.0};
  } else {
    const int Lf = static_cast<int>(std::floor(L));
    auto basis = indices_upto(n, Lf);
    std::vector<int> target(n, 0);
    target[0] = Lf + 1;
    // Gauss-Legendre tensor quadrature on [-1.5, 1.5]^n with the bump weight
    const int g1 = n == 1 ? 200 : 60;
    std::vector<double> gx, gw;
    gauss_legendre(g1, gx, gw);
    std::size_t total = 1;
    for (int a = 0; a < n; ++a) total *= g1;
    const std::size_t B = basis.size();
    Eigen::MatrixXd Gm = Eigen::MatrixXd::Zero(B, B);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(B);
    std::vector<double> mono(B);
    std::vector<int> idx(n, 0);
    for (std::size_t c = 0; c < total; ++c) {
      double w = 1.0, tv = 1.0;
      std::vector<double> u(n);
      for (int a = 0; a < n; ++a) {
        u[a] = kAtomHalf * gx[idx[a]];
        w *= kAtomHalf * gw[idx[a]] * bump_deriv(0, u[a]);
        tv *= std::pow(u[a], target[a]);
      }
      if (w != 0.0) {
        for (std::size_t b = 0; b < B; ++b) {
          mono[b] = 1.0;
          for (int a = 0; a < n; ++a) mono[b] *= std::pow(u[a], basis[b][a]);
        }
        for (std::size_t b = 0; b < B; ++b) {
          rhs(b) += w * tv * mono[b];
          for (std::size_t e = 0; e < B; ++e) Gm(b, e) += w * mono[b] * mono[e];
        }
      }
      for (int a = n - 1; a >= 0; --a) {
        if (++idx[a] < g1) break;
        idx[a] = 0;
      }
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Gm, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) < 1e-13 * sv(0))
      throw Error("make_atom: moment Gram matrix is ill-conditioned; lower L or raise N headroom");
    Eigen::VectorXd c = svd.solve(rhs);
    at.exps.push_back(target);
    at.coef.push_back(1.0);
    for (std::size_t b = 0; b < B; ++b) {
      at.exps.push_back(basis[b]);
      at.coef.push_back(-c(b));
    }
  }
  // kappa: 1 / (1.01 max over |gamma| <= N of sup |d^gamma A|)
  const int Nf = N >= 0.0 ? static_cast<int>(std::floor(N)) : 0;
  const int pts = n == 1 ? 6001 : (n == 2 ? 301 : 41);
  std::size_t total = 1;
  for (int a = 0; a < n; ++a) total *= pts;
  double mx = 0.0;
  auto gams = indices_upto(n, Nf);
  std::vector<double> u(n);
  for (std::size_t c = 0; c < total; ++c) {
    std::size_t r = c;
    for (int a = n - 1; a >= 0; --a) {
      u[a] = -kAtomHalf + 2.0 * kAtomHalf * static_cast<double>(r % pts) / (pts - 1);
      r /= pts;
    }
    for (const auto& gm : gams) mx = std::max(mx, std::abs(profile_deriv(at.exps, at.coef, u.data(), gm)));
  }
  if (!(mx > 0.0)) throw Error("make_atom: degenerate profile");
  at.kappa = 1.0 / (1.01 * mx);

  const double l = Q.side();
  const double amp = at.kappa / std::sqrt(Q.volume());
  const auto cQ = Q.center();
  auto exps = at.exps;
  auto coef = at.coef;
  at.fn.n = n;
  at.fn.support_radius = kAtomHalf * l;
  at.fn.f = [=](const double* x) {
    std::vector<double> uu(n);
    for (int a = 0; a < n; ++a) uu[a] = (x[a] - cQ[a]) / l;
    return amp * profile_deriv(exps, coef, uu.data(), std::vector<int>(n, 0));
  };
  at.fn.deriv = [=](const double* x, const std::vector<int>& gamma) {
    std::vector<double> uu(n);
    for (int a = 0; a < n; ++a) uu[a] = (x[a] - cQ[a]) / l;
    return amp * std::pow(l, -order(gamma)) * profile_deriv(exps, coef, uu.data(), gamma);
  };
  return at;
}

AtomCheck atom_check(const SmoothFunction& a, const Cube& Q, double L, double N, int points) {
  const int n = Q.dim();
  const double l = Q.side();
  auto cQ = Q.center();
  AtomCheck res;
  // support: sample 5Q, anything outside 3Q must vanish
  {
    Grid G{n, points, {}, 5.0 * l / (points - 1)};
    for (int ax = 0; ax < n; ++ax) G.lo.push_back(cQ[ax] - 2.5 * l);
    res.support_ok = true;
    std::vector<double> x;
    for (std::size_t i = 0; i < G.size(); ++i) {
      G.point(i, x);
      bool outside = false;
      for (int ax = 0; ax < n; ++ax)
        if (std::abs(x[ax] - cQ[ax]) >= kAtomHalf * l) outside = true;
      if (outside && a(x.data()) != 0.0) {
        res.support_ok = false;
        break;
      }
    }
  }
  // midpoint rule on 3Q
  Grid M{n, points, {}, 3.0 * l / points};
  for (int ax = 0; ax < n; ++ax) M.lo.push_back(cQ[ax] - kAtomHalf * l + 0.5 * M.dx);
  const double cell = std::pow(M.dx, n);
  std::vector<double> vals(M.size());
  std::vector<double> x;
  for (std::size_t i = 0; i < M.size(); ++i) {
    M.point(i, x);
    vals[i] = a(x.data());
  }
  if (L >= 0.0) {
    for (const auto& gm : indices_upto(n, static_cast<int>(std::floor(L)))) {
      double s = 0.0;
      for (std::size_t i = 0; i < M.size(); ++i) {
        M.point(i, x);
        double mono = 1.0;
        for (int ax = 0; ax < n; ++ax) mono *= std::pow((x[ax] - cQ[ax]) / l, gm[ax]);
        s += vals[i] * mono * cell;
      }
      res.moment_residual = std::max(res.moment_residual, std::abs(s) / std::sqrt(Q.volume()));
    }
  }
  if (N >= 0.0) {
    for (const auto& gm : indices_upto(n, static_cast<int>(std::floor(N)))) {
      double bound = std::pow(Q.volume(), -0.5 - static_cast<double>(order(gm)) / n);
      for (std::size_t i = 0; i < M.size(); ++i) {
        M.point(i, x);
        res.derivative_ratio = std::max(res.derivative_ratio, std::abs(a.derivative(x.data(), gm)) / bound);
      }
    }
  }
  res.pass = res.support_ok && res.moment_residual <= 1e-10 && res.derivative_ratio <= 1.0 + 1e-9;
  return res;
}

PsiAtomDecomposition psi_atom_decomposition(const SmoothFunction& psiR, const Cube& R, double M, double N,
                                            int radius, int points) {
  if (R.dim() != 1 || psiR.n != 1) throw Error("psi_atom_decomposition is implemented for n = 1");
  const double l = R.side();
  auto zeta_raw = [&](double x, std::int64_t k) { return bump_deriv(0, (x - (k + 0.5) * l) / l); };
  auto zeta = [&](double x, std::int64_t k) {
    double num = zeta_raw(x, k);
    if (num == 0.0) return 0.0;
    auto c = static_cast<std::int64_t>(std::floor(x / l));
    double den = 0.0;
    for (std::int64_t kk = c - 2; kk <= c + 2; ++kk) den += zeta_raw(x, kk);
    return num / den;
  };
  PsiAtomDecomposition out;
  const auto kR = R.k[0];
  std::vector<std::int64_t> ks;
  for (std::int64_t k = kR - radius; k <= kR + radius; ++k) {
    ks.push_back(k);
    out.P.emplace_back(R.j, std::vector<std::int64_t>{k});
    out.weight.push_back(std::pow(scaled_distance(R, out.P.back()), -M));
  }
  out.norm.assign(ks.size(), 0.0);
  const int Nf = N >= 0.0 ? static_cast<int>(std::floor(N)) : 0;
  parallel_for(ks.size(), [&](std::size_t p) {
    std::int64_t k = ks[p];
    SmoothFunction prod;
    prod.n = 1;
    prod.support_radius = kAtomHalf * l;
    prod.f = [&, k](const double* x) { return psiR(x) * zeta(x[0], k); };
    double c = (k + 0.5) * l, best = 0.0;
    for (int i = 0; i < points; ++i) {
      double x = c - kAtomHalf * l + 3.0 * l * (i + 0.5) / points;
      for (int r = 0; r <= Nf; ++r)
        best = std::max(best, std::abs(prod.derivative(&x, {r})) * std::pow(l, 0.5 + r));
    }
    out.norm[p] = best;
  });
  for (std::size_t p = 0; p < ks.size(); ++p)
    if (out.norm[p] > 0.0) out.C = std::max(out.C, out.norm[p] / out.weight[p]);
  // least squares and truncation residual on the union of the 3P
  const double lo = (kR - radius - 1) * l, hi = (kR + radius + 2) * l;
  const int G = points * (2 * radius + 3) / 3;
  double sp = 0.0, ss = 0.0;
  for (int i = 0; i < G; ++i) {
    double x = lo + (hi - lo) * (i + 0.5) / G;
    double psi = psiR(&x);
    double S = 0.0, cover = 0.0;
    for (std::size_t p = 0; p < ks.size(); ++p) {
      double z = zeta(x, ks[p]);
      if (z == 0.0) continue;
      cover += z;
      if (out.norm[p] > 0.0) S += out.weight[p] * psi * z / out.norm[p];
    }
    sp += psi * S;
    ss += S * S;
    out.truncation_residual = std::max(out.truncation_residual, std::abs(psi * (1.0 - cover)));
  }
  out.C_lsq = ss > 0.0 ? sp / ss : 0.0;
  return out;
}

}  // namespace dms

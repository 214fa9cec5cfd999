#include "dms/almostdiag.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "dms/parallel.hpp"

namespace dms {

double udef_entry(const Cube& Q, const Cube& R, const AdEnvelope& env) {
  double dist = std::pow(scaled_distance(Q, R), -env.D);
  if (Q.j >= R.j) return dist * std::pow(std::ldexp(1.0, R.j - Q.j), env.E);
  return dist * std::pow(std::ldexp(1.0, Q.j - R.j), env.F);
}

void OperatorMatrix::set(const Cube& Q, const Cube& R, cplx v) {
  if (Q.dim() != n || R.dim() != n) throw Error("operator entry dimension mismatch");
  rows[Q][R] = v;
  cert.reset();
}

cplx OperatorMatrix::get(const Cube& Q, const Cube& R) const {
  auto it = rows.find(Q);
  if (it == rows.end()) return 0.0;
  auto jt = it->second.find(R);
  return jt == it->second.end() ? cplx(0.0) : jt->second;
}

std::size_t OperatorMatrix::nnz() const {
  std::size_t c = 0;
  for (const auto& [Q, row] : rows) c += row.size();
  return c;
}

double OperatorMatrix::max_abs() const {
  double m = 0.0;
  for (const auto& [Q, row] : rows)
    for (const auto& [R, v] : row) m = std::max(m, std::abs(v));
  return m;
}

OperatorMatrix OperatorMatrix::scaled(cplx c) const {
  OperatorMatrix out = *this;
  for (auto& [Q, row] : out.rows)
    for (auto& [R, v] : row) v *= c;
  out.cert.reset();
  return out;
}

OperatorMatrix identity_operator(const std::vector<Cube>& cubes) {
  OperatorMatrix U;
  if (!cubes.empty()) U.n = cubes.front().dim();
  for (const auto& Q : cubes) U.set(Q, Q, 1.0);
  return U;
}

OperatorMatrix udef_operator(const std::vector<Cube>& cubes, const AdEnvelope& env, double c) {
  OperatorMatrix U;
  if (!cubes.empty()) U.n = cubes.front().dim();
  std::vector<std::map<Cube, cplx>> rows(cubes.size());
  parallel_for(cubes.size(), [&](std::size_t i) {
    for (const auto& R : cubes) rows[i].emplace_hint(rows[i].end(), R, c * udef_entry(cubes[i], R, env));
  });
  for (std::size_t i = 0; i < cubes.size(); ++i) U.rows[cubes[i]] = std::move(rows[i]);
  return U;
}

double certify_value(const OperatorMatrix& U, const AdEnvelope& env) {
  double C = 0.0;
  for (const auto& [Q, row] : U.rows)
    for (const auto& [R, v] : row) {
      double a = std::abs(v);
      if (a == 0.0) continue;
      C = std::max(C, a / udef_entry(Q, R, env));
    }
  return C;
}

double certify(OperatorMatrix& U, const AdEnvelope& env) {
  double C = certify_value(U, env);
  U.cert = AdCertificate{env, C};
  return C;
}

const char* to_string(JCase c) {
  switch (c) {
    case JCase::supercritical: return "supercritical";
    case JCase::critical: return "critical";
    case JCase::subcritical: return "subcritical";
  }
  return "?";
}

JIndex j_index(Family fam, int n, double p, double q, double delta1, double delta2) {
  if (!(p > 0.0) || std::isinf(p)) throw Error("J index needs p in (0, inf)");
  if (!(q > 0.0)) throw Error("J index needs q in (0, inf]");
  const double ip = 1.0 / p;
  auto eq = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };
  const bool qinf = std::isinf(q);
  if (delta1 > ip && !eq(delta1, ip)) return {double(n), JCase::supercritical, "delta1 > 1/p"};
  if (eq(delta1, ip) && qinf) return {double(n), JCase::supercritical, "(delta1, q) = (1/p, inf)"};
  if (fam == Family::F && eq(delta1, ip) && eq(delta2, ip))
    return {n / std::min(1.0, q), JCase::critical, "f, delta1 = delta2 = 1/p, q < inf"};
  double Gamma = fam == Family::B ? p : std::min(p, q);
  double J = n / std::min(1.0, Gamma);
  if (delta1 < ip) return {J, JCase::subcritical, "delta1 < 1/p"};
  if (fam == Family::B && eq(delta2, ip)) return {J, JCase::subcritical, "b, delta1 = delta2 = 1/p, q < inf"};
  if (delta2 > ip) return {J, JCase::subcritical, "delta2 > delta1 = 1/p, q < inf"};
  throw Error("J index: delta2 < delta1 = 1/p is outside the admissible range");
}

void Thresholds::recompute() {
  auto ji = j_index(family, n, p, q, delta1, delta2);
  J = ji.J;
  label = ji.label;
  clause = ji.clause;
  Delta = std::max(0.0, delta2 - 1.0 / p + d_lower / (n * p));
  D_star = J + std::min(n * Delta, omega + d_lower / p) + d_upper / p;
  E_star = n / 2.0 + s + n * Delta;
  F_star = J - n / 2.0 - s - n * std::max(0.0, delta1 - 1.0 / p) + d_upper / p;
}

bool Thresholds::admits(const AdEnvelope& env) const {
  return env.D > D_star && env.E > E_star && env.F > F_star;
}

AdEnvelope Thresholds::above(double margin) const {
  return {D_star + margin, E_star + margin, F_star + margin};
}

Thresholds thresholds(const SpaceParams& params, double d_lower, double d_upper) {
  if (d_lower < 0.0 || d_lower >= params.n) throw Error("thresholds need d_lower in [0, n)");
  if (d_upper < 0.0) throw Error("thresholds need d_upper >= 0");
  Thresholds t;
  t.family = params.family;
  t.n = params.n;
  t.s = params.s;
  t.p = params.p;
  t.q = params.q;
  t.delta1 = params.upsilon.cls.delta1;
  t.delta2 = params.upsilon.cls.delta2;
  t.omega = params.upsilon.cls.omega;
  t.d_lower = d_lower;
  t.d_upper = d_upper;
  t.recompute();
  return t;
}

ApplyResult apply(const OperatorMatrix& U, const CoeffSequence& t, double cutoff) {
  ApplyResult res;
  res.t.n = t.n;
  res.t.m = t.m;
  const double floor = cutoff * U.max_abs();
  std::vector<const std::pair<const Cube, std::map<Cube, cplx>>*> rows;
  for (const auto& r : U.rows) rows.push_back(&r);
  std::vector<Vec> out(rows.size());
  std::vector<double> dropped(rows.size(), 0.0);
  std::vector<std::size_t> ndrop(rows.size(), 0);
  parallel_for(rows.size(), [&](std::size_t i) {
    Vec acc = Vec::Zero(t.m);
    bool hit = false;
    for (const auto& [R, u] : rows[i]->second) {
      auto it = t.entries.find(R);
      if (it == t.entries.end()) continue;
      if (std::abs(u) < floor) {
        dropped[i] += std::abs(u) * it->second.norm();
        ++ndrop[i];
        continue;
      }
      acc += u * it->second;
      hit = true;
    }
    if (hit) out[i] = std::move(acc);
  });
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (out[i].size()) res.t.entries[rows[i]->first] = std::move(out[i]);
    res.dropped_mass += dropped[i];
    res.dropped_entries += ndrop[i];
  }
  return res;
}

OperatorMatrix compose(const OperatorMatrix& U1, const OperatorMatrix& U2, const LatticeWindow& window,
                       const std::optional<AdEnvelope>& env_out) {
  if (U1.n != U2.n) throw Error("compose: dimension mismatch");
  OperatorMatrix out;
  out.n = U1.n;
  std::vector<const std::pair<const Cube, std::map<Cube, cplx>>*> rows;
  for (const auto& r : U1.rows) rows.push_back(&r);
  std::vector<std::map<Cube, cplx>> prod(rows.size());
  parallel_for(rows.size(), [&](std::size_t i) {
    for (const auto& [P, a] : rows[i]->second) {
      if (!window.contains(P)) continue;
      auto it = U2.rows.find(P);
      if (it == U2.rows.end()) continue;
      for (const auto& [R, b] : it->second) prod[i][R] += a * b;
    }
  });
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (!prod[i].empty()) out.rows[rows[i]->first] = std::move(prod[i]);
  std::optional<AdEnvelope> env = env_out;
  if (!env && U1.cert) env = U1.cert->env;
  if (env) certify(out, *env);
  return out;
}

std::vector<CoeffSequence> random_ensemble(const LatticeWindow& window, int m, const EnsembleSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto cubes = window.cubes();
  std::vector<CoeffSequence> out;
  for (int e = 0; e < spec.N; ++e) {
    CoeffSequence t;
    t.n = window.n;
    t.m = m;
    for (const auto& Q : cubes) {
      if (spec.support_fraction < 1.0 && u(rng) >= spec.support_fraction) continue;
      Vec v(m);
      for (int a = 0; a < m; ++a) v(a) = cplx(g(rng), g(rng)) / std::sqrt(2.0);
      t.entries[Q] = v;
    }
    out.push_back(std::move(t));
  }
  return out;
}

namespace {

double norm_of(const CoeffSequence& t, const MatrixWeight* W, const SpaceParams& params,
               const LatticeWindow& window, const QuadratureSpec& quad) {
  if (W) return weighted_norm(t, *W, params, window, quad).value;
  return sequence_norm(t, params, window).value;
}

}  // namespace

RatioStats norm_ratios(const OperatorMatrix& U, const std::vector<CoeffSequence>& ens, const MatrixWeight* W,
                       const SpaceParams& params, const LatticeWindow& window, const QuadratureSpec& quad,
                       double cutoff, double* dropped) {
  RatioStats st;
  std::vector<double> r(ens.size(), -1.0);
  std::vector<double> dm(ens.size(), 0.0);
  parallel_for(ens.size(), [&](std::size_t i) {
    double den = norm_of(ens[i], W, params, window, quad);
    if (!(den > 0.0)) return;
    auto res = apply(U, ens[i], cutoff);
    dm[i] = res.dropped_mass;
    r[i] = norm_of(res.t, W, params, window, quad) / den;
  });
  for (std::size_t i = 0; i < ens.size(); ++i) {
    if (r[i] < 0.0) {
      ++st.skipped;
      continue;
    }
    st.ratios.push_back(r[i]);
    if (dropped) *dropped += dm[i];
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

BoundednessReport empirical_boundedness(const OperatorBuilder& make_U, const MatrixWeight* W,
                                        const SpaceParams& params, const LatticeWindow& window,
                                        const EnsembleSpec& spec, const QuadratureSpec& quad, double cutoff) {
  params.validate();
  BoundednessReport rep;
  const int m = W ? W->m : params.m;
  auto ens = random_ensemble(window, m, spec);
  auto fine = window.refined();
  rep.base = norm_ratios(make_U(window), ens, W, params, window, quad, cutoff, &rep.dropped_mass);
  auto ens_fine = spec.redraw_on_refine ? random_ensemble(fine, m, spec) : ens;
  rep.refined = norm_ratios(make_U(fine), ens_fine, W, params, fine, quad, cutoff, &rep.dropped_mass);
  if (rep.base.max > 0.0) rep.drift = std::abs(rep.refined.max / rep.base.max - 1.0);
  return rep;
}

}  // namespace dms

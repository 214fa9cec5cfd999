#include "dms/reference.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace dms {

namespace {

Cube ancestor_at(const Cube& C, int j) {
  Cube A = C;
  for (auto& x : A.k) x >>= (C.j - j);
  A.j = j;
  return A;
}

double at_P(const std::map<int, std::map<Cube, double>>& by_layer, const std::map<int, int>& cell_scale,
            const Cube& P, int finest, const SpaceParams& sp) {
  const int n = P.dim();
  const int d = finest - P.j;
  const std::int64_t side = std::int64_t(1) << d;
  std::size_t total = 1;
  for (int a = 0; a < n; ++a) total *= static_cast<std::size_t>(side);
  const double vol = std::pow(2.0, -static_cast<double>(finest) * n);
  std::map<int, double> I;
  double F = 0.0;
  std::vector<std::int64_t> idx(n, 0);
  for (std::size_t c = 0; c < total; ++c) {
    Cube D(finest, P.k);
    for (int a = 0; a < n; ++a) D.k[a] = P.k[a] * side + idx[a];
    double acc = 0.0;
    for (const auto& [j, cells] : by_layer) {
      if (j < P.j) continue;
      auto it = cells.find(ancestor_at(D, cell_scale.at(j)));
      if (it == cells.end()) continue;
      const double v = it->second;
      if (sp.family == Family::B)
        I[j] += vol * std::pow(v, sp.p);
      else
        acc = std::isinf(sp.q) ? std::max(acc, v) : acc + std::pow(v, sp.q);
    }
    if (sp.family == Family::F && acc > 0.0)
      F += vol * (std::isinf(sp.q) ? std::pow(acc, sp.p) : std::pow(acc, sp.p / sp.q));
    for (int a = n - 1; a >= 0; --a) {
      if (++idx[a] < side) break;
      idx[a] = 0;
    }
  }
  if (sp.family == Family::F) return std::pow(F, 1.0 / sp.p);
  double acc = 0.0;
  for (const auto& [j, v] : I) {
    if (std::isinf(sp.q))
      acc = std::max(acc, std::pow(v, 1.0 / sp.p));
    else
      acc += std::pow(v, sp.q / sp.p);
  }
  return std::isinf(sp.q) ? acc : std::pow(acc, 1.0 / sp.q);
}

}  // namespace

double reference_la_norm(const ScalarLayers& layers, const SpaceParams& params, const LatticeWindow& window) {
  params.validate();
  std::map<int, std::map<Cube, double>> by_layer;
  std::map<int, int> cell_scale;
  int finest = window.j_max;
  for (const auto& [j, cells] : layers.cells)
    for (const auto& [C, v] : cells) {
      by_layer[j][C] = v;
      cell_scale[j] = C.j;
      finest = std::max(finest, C.j);
    }
  if (by_layer.empty()) return 0.0;
  double best = 0.0;
  for (const auto& P : window.cubes()) best = std::max(best, at_P(by_layer, cell_scale, P, finest, params) / params.upsilon(P));
  return best;
}

double reference_sequence_norm(const CoeffSequence& t, const SpaceParams& params, const LatticeWindow& window) {
  ScalarLayers L;
  L.n = t.n;
  for (const auto& [Q, v] : t.entries)
    L.cells[Q.j].emplace_back(Q, std::pow(2.0, Q.j * params.s) * v.norm() / std::sqrt(Q.volume()));
  return reference_la_norm(L, params, window);
}

ApplyResult reference_apply(const OperatorMatrix& U, const CoeffSequence& t, double cutoff) {
  ApplyResult res;
  res.t.n = t.n;
  res.t.m = t.m;
  const double floor = cutoff * U.max_abs();
  for (const auto& [Q, row] : U.rows) {
    Vec acc = Vec::Zero(t.m);
    bool hit = false;
    for (const auto& [R, u] : row) {
      auto it = t.entries.find(R);
      if (it == t.entries.end()) continue;
      if (std::abs(u) < floor) {
        res.dropped_mass += std::abs(u) * it->second.norm();
        ++res.dropped_entries;
        continue;
      }
      acc += u * it->second;
      hit = true;
    }
    if (hit) res.t.entries[Q] = acc;
  }
  return res;
}

OperatorMatrix reference_udef_operator(const std::vector<Cube>& cubes, const AdEnvelope& env, double c) {
  OperatorMatrix U;
  if (!cubes.empty()) U.n = cubes.front().dim();
  for (const auto& Q : cubes)
    for (const auto& R : cubes) U.rows[Q][R] = c * udef_entry(Q, R, env);
  return U;
}

double reference_certify_value(const OperatorMatrix& U, const AdEnvelope& env) {
  double C = 0.0;
  for (const auto& [Q, row] : U.rows)
    for (const auto& [R, v] : row)
      if (std::abs(v) != 0.0) C = std::max(C, std::abs(v) / udef_entry(Q, R, env));
  return C;
}

}  // namespace dms

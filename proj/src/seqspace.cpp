#include "dms/seqspace.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dms/parallel.hpp"

namespace dms {

void CoeffSequence::set(const Cube& Q, const Vec& v) {
  if (Q.dim() != n) throw Error("coefficient cube dimension mismatch");
  if (v.size() != m) throw Error("coefficient vector size mismatch");
  entries[Q] = v;
}

void CoeffSequence::set(const Cube& Q, cplx v) {
  Vec z = Vec::Zero(m);
  z(0) = v;
  set(Q, z);
}

CoeffSequence CoeffSequence::scaled(cplx c) const {
  CoeffSequence out = *this;
  for (auto& [Q, v] : out.entries) v *= c;
  return out;
}

CoeffSequence operator+(const CoeffSequence& a, const CoeffSequence& b) {
  if (a.n != b.n || a.m != b.m) throw Error("adding sequences of different shapes");
  CoeffSequence out = a;
  for (const auto& [Q, v] : b.entries) {
    auto it = out.entries.find(Q);
    if (it == out.entries.end()) out.entries[Q] = v;
    else it->second += v;
  }
  return out;
}

LayerFunction layer(const CoeffSequence& t, int j) {
  LayerFunction f;
  f.j = j;
  for (const auto& [Q, v] : t.entries)
    if (Q.j == j) f.values[Q] = v / std::sqrt(Q.volume());
  return f;
}

void SpaceParams::validate() const {
  if (!(p > 0.0) || std::isinf(p)) throw Error("space parameter p must lie in (0, inf)");
  if (!(q > 0.0)) throw Error("space parameter q must lie in (0, inf]");
  if (n < 1 || m < 1) throw Error("space parameters need n >= 1 and m >= 1");
  if (!upsilon.eval) throw Error("space parameters need a growth function");
  auto v = admissible_range_violation(upsilon.cls, n);
  if (!v.empty()) throw Error("growth class outside the admissible range: " + v);
}

SpaceParams make_params(Family fam, double s, double p, double q, int n, int m, const GrowthFunction* upsilon) {
  SpaceParams sp;
  sp.family = fam;
  sp.s = s;
  sp.p = p;
  sp.q = q;
  sp.n = n;
  sp.m = m;
  sp.upsilon = upsilon ? *upsilon : constant_growth(n);
  sp.validate();
  return sp;
}

bool ScalarLayers::empty() const {
  for (const auto& [j, c] : cells)
    if (!c.empty()) return false;
  return true;
}

namespace {

Cube ancestor(const Cube& C, int j) {
  Cube A = C;
  int d = C.j - j;
  A.j = j;
  for (auto& x : A.k) x >>= d;
  return A;
}

std::vector<Cube> children(const Cube& C) {
  const int n = C.dim();
  std::vector<Cube> out;
  for (int bits = 0; bits < (1 << n); ++bits) {
    Cube D(C.j + 1, C.k);
    for (int a = 0; a < n; ++a) D.k[a] = 2 * C.k[a] + ((bits >> a) & 1);
    out.push_back(D);
  }
  return out;
}

// Per-layer L^p integrals (B) and the mixed-norm integral (F) over a region
// given as a set of tiles, each a dyadic cube with its own j_P floor.
struct Pieces {
  std::map<int, double> I;  // j -> int |f_j|^p over the region
  double F = 0.0;           // int (sum_j |f_j|^q)^{p/q}
};

class TreeIntegrator {
 public:
  TreeIntegrator(double p, double q) : p_(p), q_(q), sup_(std::isinf(q)) {}

  void add(const Cube& cell, double v, const Cube& root) {
    if (v == 0.0) return;
    double w = sup_ ? v : std::pow(v, q_);
    auto [it, fresh] = own_.emplace(cell, w);
    if (!fresh) it->second = sup_ ? std::max(it->second, w) : it->second + w;
    for (Cube A = cell; A.j > root.j;) {
      A = A.parent();
      if (!inner_.insert(A).second) break;
    }
  }

  double integrate(const Cube& root) const { return own_.empty() ? 0.0 : visit(root, 0.0); }

 private:
  double g(double acc) const { return sup_ ? std::pow(acc, p_) : std::pow(acc, p_ / q_); }

  double visit(const Cube& C, double acc) const {
    auto it = own_.find(C);
    if (it != own_.end()) acc = sup_ ? std::max(acc, it->second) : acc + it->second;
    if (!inner_.count(C)) return acc == 0.0 ? 0.0 : C.volume() * g(acc);
    double s = 0.0;
    for (const auto& D : children(C)) s += visit(D, acc);
    return s;
  }

  double p_, q_;
  bool sup_;
  std::map<Cube, double> own_;
  std::set<Cube> inner_;
};

void accumulate_pieces(const ScalarLayers& L, const Cube& P, bool restrict_j, Family fam, double p, double q,
                       Pieces& out) {
  TreeIntegrator tree(p, q);
  bool any = false;
  for (const auto& [j, cells] : L.cells) {
    if (restrict_j && j < P.j) continue;
    double I = 0.0;
    for (const auto& [C, v] : cells) {
      if (C.j < P.j || !contains(P, C)) continue;
      if (fam == Family::B) I += C.volume() * std::pow(v, p);
      else {
        tree.add(C, v, P);
        any = true;
      }
    }
    if (fam == Family::B && I > 0.0) out.I[j] += I;
  }
  if (fam == Family::F && any) out.F += tree.integrate(P);
}

double combine(const Pieces& pc, Family fam, double p, double q) {
  if (fam == Family::F) return std::pow(pc.F, 1.0 / p);
  double acc = 0.0;
  for (const auto& [j, I] : pc.I) {
    if (std::isinf(q)) acc = std::max(acc, std::pow(I, 1.0 / p));
    else acc += std::pow(I, q / p);
  }
  return std::isinf(q) ? acc : std::pow(acc, 1.0 / q);
}

std::vector<Cube> layer_support(const ScalarLayers& L) {
  std::set<Cube> s;
  for (const auto& [j, cells] : L.cells)
    for (const auto& [C, v] : cells) s.insert(ancestor(C, j));
  return {s.begin(), s.end()};
}

int min_layer(const ScalarLayers& L) {
  int jm = std::numeric_limits<int>::max();
  for (const auto& [j, cells] : L.cells)
    if (!cells.empty()) jm = std::min(jm, j);
  return jm;
}

template <class AtP, class Super>
NormReport sup_over_P(const std::vector<Cube>& support, const SpaceParams& params, const LatticeWindow& window,
                      const NormOptions& opt, AtP at_P, Super super_value) {
  NormReport rep;
  if (support.empty()) return rep;
  auto cands = candidate_cubes(support, window);
  rep.candidates = cands.size();
  std::vector<double> vals(cands.size());
  auto best = parallel_argmax(cands.size(), [&](std::size_t i) {
    vals[i] = at_P(cands[i]) / params.upsilon(cands[i]);
    return vals[i];
  });
  if (!cands.empty()) {
    rep.value = best.value;
    rep.best_P = cands[best.index];
  }
  if (opt.supercube) {
    double v = super_value() / opt.supercube_upsilon;
    if (v > rep.value) {
      rep.value = v;
      rep.best_P.reset();
      rep.supercube_best = true;
    }
  }
  if (opt.breakdown)
    for (std::size_t i = 0; i < cands.size(); ++i) rep.per_P.emplace_back(cands[i], vals[i]);
  return rep;
}

}  // namespace

std::vector<Cube> candidate_cubes(const std::vector<Cube>& support, const LatticeWindow& window) {
  std::set<Cube> out;
  for (const auto& Q : support) {
    for (Cube A = Q; A.j >= window.j_min;) {
      if (A.j <= window.j_max && window.contains(A)) {
        if (!out.insert(A).second) break;
      }
      if (A.j == window.j_min) break;
      A = A.parent();
    }
  }
  // finest first, so ties in the sup resolve to the smallest P
  std::vector<Cube> v(out.begin(), out.end());
  std::stable_sort(v.begin(), v.end(), [](const Cube& a, const Cube& b) { return a.j > b.j; });
  return v;
}

double la_norm_at(const ScalarLayers& layers, const Cube& P, Family fam, double p, double q) {
  Pieces pc;
  accumulate_pieces(layers, P, true, fam, p, q, pc);
  return combine(pc, fam, p, q);
}

NormReport la_norm(const ScalarLayers& layers, const SpaceParams& params, const LatticeWindow& window,
                   const NormOptions& opt) {
  params.validate();
  if (layers.empty()) return {};
  auto support = layer_support(layers);
  return sup_over_P(
      support, params, window, opt,
      [&](const Cube& P) { return la_norm_at(layers, P, params.family, params.p, params.q); },
      [&] {
        // whole-window super-cube: every layer, tiled by cubes at the coarsest scale present
        int J0 = std::min(window.j_min, min_layer(layers));
        std::set<Cube> tiles;
        for (const auto& [j, cells] : layers.cells)
          for (const auto& [C, v] : cells) tiles.insert(ancestor(C, J0));
        Pieces pc;
        for (const auto& T : tiles) accumulate_pieces(layers, T, false, params.family, params.p, params.q, pc);
        return combine(pc, params.family, params.p, params.q);
      });
}

ScalarLayers unweighted_layers(const CoeffSequence& t, double s) {
  ScalarLayers L;
  L.n = t.n;
  for (const auto& [Q, v] : t.entries)
    L.cells[Q.j].emplace_back(Q, std::pow(2.0, Q.j * s) * v.norm() / std::sqrt(Q.volume()));
  return L;
}

ScalarLayers weighted_layers(const CoeffSequence& t, const MatrixWeight& W, double s, double p,
                             const QuadratureSpec& quad) {
  if (W.m != t.m) throw Error("weight size does not match the sequence");
  if (W.n != t.n) throw Error("weight dimension does not match the sequence");
  ScalarLayers L;
  L.n = t.n;
  const int r = W.constant ? 0 : quad.r;
  L.refinement = r;
  for (const auto& [Q, v] : t.entries) {
    double base = std::pow(2.0, Q.j * s) / std::sqrt(Q.volume());
    auto& out = L.cells[Q.j];
    if (r == 0) {
      auto c = Q.center();
      out.emplace_back(Q, base * (W.pow_at(c.data(), 1.0 / p) * v).norm());
      continue;
    }
    const int N = 1 << r;
    const int n = t.n;
    std::size_t total = 1;
    for (int a = 0; a < n; ++a) total *= N;
    std::vector<int> idx(n, 0);
    for (std::size_t c = 0; c < total; ++c) {
      Cube C(Q.j + r, Q.k);
      for (int a = 0; a < n; ++a) C.k[a] = Q.k[a] * N + idx[a];
      auto x = C.center();
      out.emplace_back(C, base * (W.pow_at(x.data(), 1.0 / p) * v).norm());
      for (int a = n - 1; a >= 0; --a) {
        if (++idx[a] < N) break;
        idx[a] = 0;
      }
    }
  }
  return L;
}

ScalarLayers averaging_layers(const CoeffSequence& t, const ReducingFamily& fam, double s) {
  if (fam.m != t.m) throw Error("reducing family size does not match the sequence");
  ScalarLayers L;
  L.n = t.n;
  for (const auto& [Q, v] : t.entries) {
    auto it = fam.A.find(Q);
    if (it == fam.A.end()) throw Error("reducing family has no A_Q for " + to_string(Q));
    L.cells[Q.j].emplace_back(Q, std::pow(2.0, Q.j * s) * (it->second * v).norm() / std::sqrt(Q.volume()));
  }
  return L;
}

NormReport sequence_norm(const CoeffSequence& t, const SpaceParams& params, const LatticeWindow& window,
                         const NormOptions& opt) {
  return la_norm(unweighted_layers(t, params.s), params, window, opt);
}

NormReport weighted_norm(const CoeffSequence& t, const MatrixWeight& W, const SpaceParams& params,
                         const LatticeWindow& window, const QuadratureSpec& quad, const NormOptions& opt) {
  params.validate();
  return la_norm(weighted_layers(t, W, params.s, params.p, quad), params, window, opt);
}

NormReport averaging_norm(const CoeffSequence& t, const ReducingFamily& fam, const SpaceParams& params,
                          const LatticeWindow& window, const NormOptions& opt) {
  return la_norm(averaging_layers(t, fam, params.s), params, window, opt);
}

namespace {

struct BoxItem {
  int j;
  Cube Q;
  Box E;
  double v;
};

void box_pieces(const std::vector<BoxItem>& items, const Box& region, const Cube* P, Family fam, double p,
                double q, Pieces& out) {
  std::vector<const BoxItem*> in;
  for (const auto& it : items)
    if (!P || (it.j >= P->j && contains(*P, it.Q))) in.push_back(&it);
  if (in.empty()) return;
  if (fam == Family::B) {
    for (const auto* it : in) out.I[it->j] += it->E.volume() * std::pow(it->v, p);
    return;
  }
  const int n = region.dim();
  std::vector<std::vector<double>> br(n);
  for (int a = 0; a < n; ++a) {
    for (const auto* it : in) {
      br[a].push_back(it->E.lo[a]);
      br[a].push_back(it->E.hi[a]);
    }
    std::sort(br[a].begin(), br[a].end());
    br[a].erase(std::unique(br[a].begin(), br[a].end()), br[a].end());
  }
  const bool sup = std::isinf(q);
  std::vector<std::size_t> idx(n, 0);
  std::vector<double> x(n);
  double total = 0.0;
  for (;;) {
    double vol = 1.0;
    for (int a = 0; a < n; ++a) {
      x[a] = 0.5 * (br[a][idx[a]] + br[a][idx[a] + 1]);
      vol *= br[a][idx[a] + 1] - br[a][idx[a]];
    }
    double acc = 0.0;
    for (const auto* it : in)
      if (it->E.contains_point(x)) acc = sup ? std::max(acc, it->v) : acc + std::pow(it->v, q);
    if (acc > 0.0) total += vol * (sup ? std::pow(acc, p) : std::pow(acc, p / q));
    int a = n - 1;
    while (a >= 0 && ++idx[a] + 1 >= br[a].size()) idx[a--] = 0;
    if (a < 0) break;
  }
  out.F += total;
}

}  // namespace

NormReport eq_set_norm(const CoeffSequence& t, const std::map<Cube, Box>& E, const SpaceParams& params,
                       const LatticeWindow& window, const NormOptions& opt) {
  params.validate();
  std::vector<BoxItem> items;
  std::vector<Cube> support;
  for (const auto& [Q, v] : t.entries) {
    auto it = E.find(Q);
    if (it == E.end()) throw Error("no E_Q set for " + to_string(Q));
    double vol = it->second.volume();
    if (!(vol > 0.0)) throw Error("|E_Q| = 0 at " + to_string(Q));
    if (!cube_box(Q).contains(it->second)) throw Error("E_Q is not a sub-box of " + to_string(Q));
    double val = std::pow(2.0, Q.j * params.s) * v.norm() / std::sqrt(vol);
    if (val == 0.0) continue;
    items.push_back({Q.j, Q, it->second, val});
    support.push_back(Q);
  }
  if (items.empty()) return {};
  return sup_over_P(
      support, params, window, opt,
      [&](const Cube& P) {
        Pieces pc;
        box_pieces(items, cube_box(P), &P, params.family, params.p, params.q, pc);
        return combine(pc, params.family, params.p, params.q);
      },
      [&] {
        Pieces pc;
        box_pieces(items, window.region(), nullptr, params.family, params.p, params.q, pc);
        return combine(pc, params.family, params.p, params.q);
      });
}

}  // namespace dms

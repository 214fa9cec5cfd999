#include "dms/lattice.hpp"

#include <cmath>
#include <sstream>

namespace dms {

namespace {

void require_same_dim(const Cube& Q, const Cube& R) {
  if (Q.dim() != R.dim())
    throw Error("dimension mismatch: " + to_string(Q) + " vs " + to_string(R));
}

std::int64_t floor_div_pow2(std::int64_t a, int d) { return a >> d; }

}  // namespace

double Cube::side() const { return std::ldexp(1.0, -j); }

double Cube::volume() const { return std::ldexp(1.0, -j * dim()); }

std::vector<double> Cube::corner() const {
  std::vector<double> x(k.size());
  for (std::size_t a = 0; a < k.size(); ++a) x[a] = std::ldexp(static_cast<double>(k[a]), -j);
  return x;
}

std::vector<double> Cube::center() const {
  std::vector<double> x(k.size());
  for (std::size_t a = 0; a < k.size(); ++a)
    x[a] = std::ldexp(static_cast<double>(k[a]) + 0.5, -j);
  return x;
}

Cube Cube::parent() const {
  Cube P(j - 1, k);
  for (auto& c : P.k) c = floor_div_pow2(c, 1);
  return P;
}

std::string to_string(const Cube& Q) {
  std::ostringstream os;
  os << "Q_{" << Q.j << ",(";
  for (std::size_t a = 0; a < Q.k.size(); ++a) os << (a ? "," : "") << Q.k[a];
  os << ")}";
  return os.str();
}

double Box::volume() const {
  double v = 1.0;
  for (int a = 0; a < dim(); ++a) v *= hi[a] - lo[a];
  return v;
}

bool Box::contains(const Box& o) const {
  for (int a = 0; a < dim(); ++a)
    if (o.lo[a] < lo[a] || o.hi[a] > hi[a]) return false;
  return true;
}

bool Box::contains_point(const std::vector<double>& x) const {
  for (int a = 0; a < dim(); ++a)
    if (x[a] < lo[a] || x[a] >= hi[a]) return false;
  return true;
}

bool Box::intersects(const Box& o) const {
  for (int a = 0; a < dim(); ++a)
    if (o.hi[a] <= lo[a] || hi[a] <= o.lo[a]) return false;
  return true;
}

Box cube_box(const Cube& Q) {
  Box B;
  B.lo = Q.corner();
  B.hi = B.lo;
  for (auto& h : B.hi) h += Q.side();
  return B;
}

double scaled_distance(const Cube& Q, const Cube& R) {
  require_same_dim(Q, R);
  auto xq = Q.corner();
  auto xr = R.corner();
  double d2 = 0.0;
  for (std::size_t a = 0; a < xq.size(); ++a) d2 += (xq[a] - xr[a]) * (xq[a] - xr[a]);
  return 1.0 + std::sqrt(d2) / std::max(Q.side(), R.side());
}

bool contains(const Cube& Q, const Cube& R) {
  require_same_dim(Q, R);
  if (R.j < Q.j) return false;
  int d = R.j - Q.j;
  for (int a = 0; a < Q.dim(); ++a)
    if (floor_div_pow2(R.k[a], d) != Q.k[a]) return false;
  return true;
}

Cube lift(const Cube& Qp, std::int64_t i) {
  Cube P = Qp;
  P.k.push_back(i);
  return P;
}

Cube project(const Cube& P) {
  if (P.dim() < 2) throw Error("project needs ambient dimension >= 2, got " + to_string(P));
  Cube Q = P;
  Q.k.pop_back();
  return Q;
}

Box middle_band(const Cube& Qp, std::int64_t i) {
  Box B = cube_box(Qp);
  double l = Qp.side();
  B.lo.push_back(l * (static_cast<double>(i) + 1.0 / 3.0));
  B.hi.push_back(l * (static_cast<double>(i) + 2.0 / 3.0));
  return B;
}

Box middle_band_of(const Cube& Q) {
  Box B = cube_box(Q);
  double l = Q.side();
  int a = Q.dim() - 1;
  double x = B.lo[a];
  B.lo[a] = x + l / 3.0;
  B.hi[a] = x + 2.0 * l / 3.0;
  return B;
}

void LatticeWindow::validate() const {
  if (n < 1) throw Error("window dimension must be >= 1");
  if (j_min > j_max) throw Error("window needs j_min <= j_max");
  if (!(lo < hi)) throw Error("window needs lo < hi");
}

std::int64_t LatticeWindow::k_begin(int j) const {
  return static_cast<std::int64_t>(std::ceil(std::ldexp(lo, j)));
}

std::int64_t LatticeWindow::k_end(int j) const {
  return static_cast<std::int64_t>(std::floor(std::ldexp(hi, j)));
}

bool LatticeWindow::contains(const Cube& Q) const {
  if (Q.dim() != n || Q.j < j_min || Q.j > j_max) return false;
  for (auto c : Q.k)
    if (c < k_begin(Q.j) || c >= k_end(Q.j)) return false;
  return true;
}

bool LatticeWindow::contains_box(const Box& B) const {
  if (B.dim() != n) return false;
  for (int a = 0; a < n; ++a)
    if (B.lo[a] < lo || B.hi[a] > hi) return false;
  return true;
}

std::vector<Cube> LatticeWindow::cubes(int j) const {
  std::vector<Cube> out;
  std::int64_t b = k_begin(j), e = k_end(j);
  if (e <= b) return out;
  std::vector<std::int64_t> k(n, b);
  while (true) {
    out.emplace_back(j, k);
    int a = n - 1;
    while (a >= 0 && ++k[a] == e) k[a--] = b;
    if (a < 0) break;
  }
  return out;
}

std::vector<Cube> LatticeWindow::cubes() const {
  std::vector<Cube> out;
  for (int j = j_min; j <= j_max; ++j) {
    auto c = cubes(j);
    out.insert(out.end(), c.begin(), c.end());
  }
  return out;
}

std::size_t LatticeWindow::count() const {
  std::size_t total = 0;
  for (int j = j_min; j <= j_max; ++j) {
    auto w = k_end(j) - k_begin(j);
    if (w <= 0) continue;
    std::size_t c = 1;
    for (int a = 0; a < n; ++a) c *= static_cast<std::size_t>(w);
    total += c;
  }
  return total;
}

LatticeWindow LatticeWindow::refined() const {
  LatticeWindow w = *this;
  ++w.j_max;
  return w;
}

LatticeWindow LatticeWindow::with_dim(int dim) const {
  LatticeWindow w = *this;
  w.n = dim;
  return w;
}

Box LatticeWindow::region() const {
  return Box{std::vector<double>(n, lo), std::vector<double>(n, hi)};
}

Shadow shadow_cube(const Cube& R, std::int64_t i, const LatticeWindow* window) {
  // Union of P(S,i) over S inside R, in units of l(R) along the new axis.
  std::int64_t a = i >= 0 ? 0 : i;
  std::int64_t b = i >= 0 ? i + 1 : 0;
  for (int d = 0;; ++d) {
    std::int64_t c = floor_div_pow2(a, d);
    if ((c + 1) * (std::int64_t{1} << d) >= b) {
      Cube Q(R.j - d, R.k);
      for (auto& x : Q.k) x = floor_div_pow2(x, d);
      Q.k.push_back(c);
      if (window) {
        Box slab = cube_box(R);
        slab.lo.push_back(std::ldexp(static_cast<double>(a), -R.j));
        slab.hi.push_back(std::ldexp(static_cast<double>(b), -R.j));
        if (!window->contains_box(slab) || !window->contains_box(cube_box(Q)))
          throw Error("shadow slab of " + to_string(R) + " leaves the window");
      }
      return Shadow{Q, std::ldexp(1.0, d)};
    }
    if (d > 62) throw Error("shadow_cube did not terminate");
  }
}

}  // namespace dms

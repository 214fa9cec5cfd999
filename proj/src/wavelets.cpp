#include "dms/wavelets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "dms/parallel.hpp"

namespace dms {

namespace {

using cvec = std::vector<cplx>;

cplx horner(const cvec& c, cplx z) {  // c in increasing powers
  cplx v = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) v = v * z + *it;
  return v;
}

// Durand-Kerner on a polynomial with complex coefficients in increasing powers.
cvec poly_roots(cvec c) {
  const int deg = static_cast<int>(c.size()) - 1;
  if (deg < 1) return {};
  cplx lead = c.back();
  for (auto& x : c) x /= lead;
  cvec z(deg);
  cplx seed(0.4, 0.9);
  for (int i = 0; i < deg; ++i) z[i] = std::pow(seed, i) * 2.0;
  for (int it = 0;; ++it) {
    if (it > 20000) throw Error("Daubechies polynomial root finding hit the iteration cap");
    double change = 0.0;
    for (int i = 0; i < deg; ++i) {
      cplx den = 1.0;
      for (int l = 0; l < deg; ++l)
        if (l != i) den *= z[i] - z[l];
      cplx dz = horner(c, z[i]) / den;
      z[i] -= dz;
      change = std::max(change, std::abs(dz) / std::max(1.0, std::abs(z[i])));
    }
    if (change < 1e-15) break;
  }
  cvec dc(deg);
  for (int i = 1; i <= deg; ++i) dc[i - 1] = c[i] * double(i);
  for (auto& r : z)
    for (int it = 0; it < 3; ++it) {
      cplx d = horner(dc, r);
      if (std::abs(d) == 0.0) break;
      r -= horner(c, r) / d;
    }
  return z;
}

cvec poly_mul(const cvec& a, const cvec& b) {
  cvec out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t l = 0; l < b.size(); ++l) out[i + l] += a[i] * b[l];
  return out;
}

double binom(int a, int b) {
  double r = 1.0;
  for (int i = 1; i <= b; ++i) r = r * (a - b + i) / i;
  return r;
}

// One pass of the box cascade, keeping depths [dmin, dmax].
double tap_scale(const Filter& f) {
  double s = 0.0;
  for (double v : f.h) s += v;
  return 2.0 / s;
}

std::vector<Cascade> cascade_range(const Filter& f, int dmin, int dmax) {
  const double s2 = tap_scale(f);
  const int taps = static_cast<int>(f.h.size());
  std::vector<double> c{1.0};
  std::vector<Cascade> out;
  for (int l = 0; l < dmax; ++l) {
    const std::int64_t shift = std::int64_t{1} << l;
    const std::size_t len = c.size() + static_cast<std::size_t>((taps - 1) * shift);
    std::vector<double> next(len, 0.0), psi;
    const bool keep = l + 1 >= dmin;
    if (keep) psi.assign(len, 0.0);
    for (int t = 0; t < taps; ++t) {
      const std::size_t off = static_cast<std::size_t>(t * shift);
      const double hv = s2 * f.h[t];
      const double gv = s2 * f.g[t];
      for (std::size_t i = 0; i < c.size(); ++i) {
        next[off + i] += hv * c[i];
        if (keep) psi[off + i] += gv * c[i];
      }
    }
    if (keep) {
      Cascade cs;
      cs.k = f.k;
      cs.levels = l + 1;
      cs.phi = next;
      cs.psi = std::move(psi);
      out.push_back(std::move(cs));
    }
    c = std::move(next);
  }
  return out;
}

constexpr char kCacheHeader[] = "DMSWAVE v2\n";

std::string cache_path(const std::string& dir, int k, int levels) {
  return dir + "/dmswave_k" + std::to_string(k) + "_L" + std::to_string(levels) + ".bin";
}

bool load_cascade(const std::string& path, int k, int levels, Cascade& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  char hdr[sizeof(kCacheHeader) - 1];
  in.read(hdr, sizeof(hdr));
  if (!in || std::memcmp(hdr, kCacheHeader, sizeof(hdr)) != 0) return false;
  std::int32_t kk = 0, ll = 0;
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&kk), sizeof(kk));
  in.read(reinterpret_cast<char*>(&ll), sizeof(ll));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || kk != k || ll != levels || len > (std::uint64_t{1} << 30)) return false;
  out.k = k;
  out.levels = levels;
  out.phi.resize(len);
  out.psi.resize(len);
  in.read(reinterpret_cast<char*>(out.phi.data()), static_cast<std::streamsize>(len * sizeof(double)));
  in.read(reinterpret_cast<char*>(out.psi.data()), static_cast<std::streamsize>(len * sizeof(double)));
  return static_cast<bool>(in);
}

void save_cascade(const std::string& path, const Cascade& c) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write wavelet cache " + path);
  out.write(kCacheHeader, sizeof(kCacheHeader) - 1);
  std::int32_t kk = c.k, ll = c.levels;
  std::uint64_t len = c.phi.size();
  out.write(reinterpret_cast<const char*>(&kk), sizeof(kk));
  out.write(reinterpret_cast<const char*>(&ll), sizeof(ll));
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(reinterpret_cast<const char*>(c.phi.data()), static_cast<std::streamsize>(len * sizeof(double)));
  out.write(reinterpret_cast<const char*>(c.psi.data()), static_cast<std::streamsize>(len * sizeof(double)));
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

Filter daubechies_filter(int k) {
  if (k < 1 || k > 10) throw Error("daubechies_filter needs k in [1, 10]");
  Filter f;
  f.k = k;
  if (k == 1) {
    f.h = {std::numbers::sqrt2 / 2.0, std::numbers::sqrt2 / 2.0};
  } else {
    cvec P(k);
    for (int i = 0; i < k; ++i) P[i] = binom(k - 1 + i, i);
    cvec poly{1.0};
    for (int i = 0; i < k; ++i) poly = poly_mul(poly, {1.0, 1.0});
    for (const auto& y : poly_roots(P)) {
      // z + 1/z = 2 - 4y, keep the root inside the unit disk
      cplx c = 1.0 - 2.0 * y;
      cplx sq = std::sqrt(c * c - 1.0);
      cplx z = std::abs(c + sq) < 1.0 ? c + sq : c - sq;
      poly = poly_mul(poly, {-z, 1.0});
    }
    f.h.resize(poly.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) sum += (f.h[i] = poly[i].real());
    for (auto& x : f.h) x *= std::numbers::sqrt2 / sum;
    if (std::abs(f.h.front()) < std::abs(f.h.back())) std::reverse(f.h.begin(), f.h.end());
  }
  const int L = 2 * k;
  f.g.resize(L);
  for (int j = 0; j < L; ++j) f.g[j] = (j % 2 ? -1.0 : 1.0) * f.h[L - 1 - j];
  return f;
}

double orthonormality_residual(const Filter& f) {
  const int L = static_cast<int>(f.h.size());
  double r = 0.0;
  for (int l = 0; 2 * l < L; ++l) {
    double s = 0.0;
    for (int j = 2 * l; j < L; ++j) s += f.h[j] * f.h[j - 2 * l];
    r = std::max(r, std::abs(s - (l == 0 ? 1.0 : 0.0)));
  }
  return r;
}

double Cascade::step() const { return std::ldexp(1.0, -levels); }

double Cascade::phi_integral() const {
  double s = 0.0;
  for (double v : phi) s += v;
  return s * step();
}

Cascade cascade_samples(const Filter& f, int levels, const std::string& cache_dir) {
  if (levels < 1 || levels > 24) throw Error("cascade levels must lie in [1, 24]");
  Cascade c;
  if (!cache_dir.empty() && load_cascade(cache_path(cache_dir, f.k, levels), f.k, levels, c)) return c;
  c = std::move(cascade_range(f, levels, levels).front());
  if (!cache_dir.empty()) save_cascade(cache_path(cache_dir, f.k, levels), c);
  return c;
}

double two_scale_residual(const Filter& f, const Cascade& c) {
  const double s2 = tap_scale(f);
  const std::int64_t shift = std::int64_t{1} << c.levels;
  const std::size_t taps = f.h.size();
  std::vector<double> next(c.phi.size() + (taps - 1) * shift, 0.0);
  for (std::size_t t = 0; t < taps; ++t)
    for (std::size_t i = 0; i < c.phi.size(); ++i) next[t * shift + i] += s2 * f.h[t] * c.phi[i];
  double r2 = 0.0;
  for (std::size_t i = 0; i < next.size(); ++i) {
    double coarse = i / 2 < c.phi.size() ? c.phi[i / 2] : 0.0;
    r2 += (coarse - next[i]) * (coarse - next[i]);
  }
  return std::sqrt(r2 * std::ldexp(1.0, -(c.levels + 1)));
}

std::vector<double> phi_at_integers(const Filter& f) {
  const int N = static_cast<int>(f.h.size());
  if (f.k == 1) return {1.0, 0.0};
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(N, N);
  for (int m = 0; m < N; ++m)
    for (int l = 0; l < N; ++l) {
      int t = 2 * m - l;
      if (t >= 0 && t < N) M(m, l) = std::numbers::sqrt2 * f.h[t];
    }
  Eigen::EigenSolver<Eigen::MatrixXd> es(M);
  int best = 0;
  for (int i = 1; i < N; ++i)
    if (std::abs(es.eigenvalues()(i) - 1.0) < std::abs(es.eigenvalues()(best) - 1.0)) best = i;
  Eigen::VectorXd v = es.eigenvectors().col(best).real();
  double s = v.sum();
  if (std::abs(s) < 1e-14) throw Error("phi integer values: eigenvector has zero sum");
  std::vector<double> out(N);
  for (int i = 0; i < N; ++i) out[i] = v(i) / s;
  out[0] = 0.0;  // phi(0) = phi(2k-1) = 0 for k >= 2
  out[N - 1] = 0.0;
  return out;
}

K0 find_k0(const Filter& f, const Cascade& c) {
  auto vals = phi_at_integers(f);
  double mx = 0.0;
  for (double v : c.phi) mx = std::max(mx, std::abs(v));
  const int N = static_cast<int>(vals.size());
  for (int r = 0; r < N; ++r) {
    for (int k0 : {r, -r}) {
      if (r == 0 && k0 != 0) continue;
      int x = -k0;
      if (x < 0 || x >= N) continue;
      if (std::abs(vals[x]) > 0.1 * mx) return {k0, vals[x]};
    }
  }
  throw Error("find_k0: no integer point with |phi| above threshold");
}

void WaveletCoeffs::set(int lambda, const Cube& Q, const Vec& v) {
  if (Q.dim() != n) throw Error("wavelet coefficient cube dimension mismatch");
  if (lambda <= 0 || lambda >= (1 << n)) throw Error("wavelet type index out of range");
  if (v.size() != m) throw Error("wavelet coefficient size mismatch");
  entries[{lambda, Q}] = v;
}

void WaveletCoeffs::set(int lambda, const Cube& Q, cplx v) {
  Vec z = Vec::Zero(m);
  z(0) = v;
  set(lambda, Q, z);
}

WaveletCoeffs operator+(const WaveletCoeffs& a, const WaveletCoeffs& b) {
  if (a.n != b.n || a.m != b.m) throw Error("adding wavelet coefficients of different shapes");
  WaveletCoeffs out = a;
  for (const auto& [key, v] : b.entries) {
    auto it = out.entries.find(key);
    if (it == out.entries.end()) out.entries[key] = v;
    else it->second += v;
  }
  return out;
}

WaveletCoeffs scaled(const WaveletCoeffs& c, cplx s) {
  WaveletCoeffs out = c;
  for (auto& [key, v] : out.entries) v *= s;
  return out;
}

double max_abs_diff(const WaveletCoeffs& a, const WaveletCoeffs& b) {
  double d = 0.0;
  for (const auto& [key, v] : a.entries) {
    auto it = b.entries.find(key);
    d = std::max(d, it == b.entries.end() ? v.cwiseAbs().maxCoeff() : (v - it->second).cwiseAbs().maxCoeff());
  }
  for (const auto& [key, v] : b.entries)
    if (!a.entries.count(key)) d = std::max(d, v.cwiseAbs().maxCoeff());
  return d;
}

WaveletSystem::WaveletSystem(int k, int levels, int j_min, int j_max, const std::string& cache_dir)
    : filter_(daubechies_filter(k)), levels_(levels), j_min_(j_min), j_max_(j_max), R_(j_max + levels) {
  if (levels < 4 || levels > 14) throw Error("cascade levels must lie in [4, 14]");
  if (j_min > j_max) throw Error("wavelet system needs j_min <= j_max");
  const int dmax = R_ - j_min;
  if (dmax > 22) throw Error("wavelet system too deep: levels + (j_max - j_min) exceeds 22");
  bool loaded = !cache_dir.empty();
  for (int d = levels; loaded && d <= dmax; ++d) {
    Cascade c;
    if (!load_cascade(cache_path(cache_dir, k, d), k, d, c)) loaded = false;
    else by_depth_[d] = std::move(c);
  }
  if (!loaded) {
    by_depth_.clear();
    for (auto& c : cascade_range(filter_, levels, dmax)) {
      if (!cache_dir.empty()) save_cascade(cache_path(cache_dir, k, c.levels), c);
      by_depth_[c.levels] = std::move(c);
    }
  }
  phi_int_ = phi_at_integers(filter_);
  const int N = static_cast<int>(phi_int_.size());
  psi_int_.assign(N, 0.0);
  for (int m = 0; m < N; ++m)
    for (int j = 0; j < N; ++j) {
      int x = 2 * m - j;
      if (x >= 0 && x < N) psi_int_[m] += std::numbers::sqrt2 * filter_.g[j] * phi_int_[x];
    }
  k0_ = find_k0(filter_, by_depth_.at(levels));
}

int WaveletSystem::depth(int j) const {
  if (j < j_min_ || j > j_max_) throw Error("scale " + std::to_string(j) + " outside the wavelet system range");
  return R_ - j;
}

double WaveletSystem::factor_at_integer(int e, std::int64_t i) const {
  const auto& v = e ? psi_int_ : phi_int_;
  if (i < 0 || i >= static_cast<std::int64_t>(v.size())) return 0.0;
  return v[i];
}

const std::vector<double>& WaveletSystem::samples(int e, int d) const {
  auto it = by_depth_.find(d);
  if (it == by_depth_.end()) throw Error("no cascade at depth " + std::to_string(d));
  return e ? it->second.psi : it->second.phi;
}

double WaveletSystem::value_1d(int e, int j, std::int64_t a, double x) const {
  const int d = depth(j);
  const auto& s = samples(e, d);
  double t = std::ldexp(std::ldexp(x, j) - static_cast<double>(a), d);
  double fi = std::floor(t);
  if (fi < 0.0 || fi >= static_cast<double>(s.size())) return 0.0;
  return std::pow(2.0, 0.5 * j) * s[static_cast<std::size_t>(fi)];
}

double WaveletSystem::inner_1d(int e1, int j1, std::int64_t a1, int e2, int j2, std::int64_t a2) const {
  if (j1 > j2) {
    std::swap(e1, e2);
    std::swap(j1, j2);
    std::swap(a1, a2);
  }
  const std::int64_t r = a2 - a1 * (std::int64_t{1} << (j2 - j1));
  auto key = std::make_tuple(e1, j1, e2, j2, r);
  {
    std::lock_guard<std::mutex> lk(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  const auto& s1 = samples(e1, depth(j1));
  const auto& s2 = samples(e2, depth(j2));
  const std::int64_t base = r * (std::int64_t{1} << depth(j2));
  const std::int64_t n1 = static_cast<std::int64_t>(s1.size()), n2 = static_cast<std::int64_t>(s2.size());
  std::int64_t i0 = std::max<std::int64_t>(0, -base), i1 = std::min(n2, n1 - base);
  double s = 0.0;
  for (std::int64_t i = i0; i < i1; ++i) s += s1[base + i] * s2[i];
  s *= std::pow(2.0, 0.5 * (j1 + j2)) * std::ldexp(1.0, -R_);
  std::lock_guard<std::mutex> lk(mu_);
  cache_[key] = s;
  return s;
}

double WaveletSystem::moment_1d(int e, int j, std::int64_t a, int gamma) const {
  const int d = depth(j);
  const auto& s = samples(e, d);
  const double h = std::ldexp(1.0, -d);
  // local moments mu_r = int theta(t) t^r dt, then expand (t + a)^gamma
  std::vector<double> mu(gamma + 1, 0.0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == 0.0) continue;
    double lo = i * h, hi = (i + 1) * h;
    double plo = lo, phi = hi;
    for (int r = 0; r <= gamma; ++r) {
      mu[r] += s[i] * (phi - plo) / (r + 1);
      plo *= lo;
      phi *= hi;
    }
  }
  double tot = 0.0;
  for (int r = 0; r <= gamma; ++r) tot += binom(gamma, r) * std::pow(double(a), gamma - r) * mu[r];
  return tot * std::pow(2.0, -j * (gamma + 0.5));
}

std::int64_t WaveletSystem::cell_integrals_1d(int e, int j, std::int64_t a, int G, std::vector<double>& out) const {
  const int d = depth(j);
  const auto& s = samples(e, d);
  const double scale = std::pow(2.0, 0.5 * j);
  const std::int64_t start = a * (std::int64_t{1} << d);  // fine-grid index of the support start
  const std::int64_t len = static_cast<std::int64_t>(s.size());
  out.clear();
  if (G <= R_) {
    const std::int64_t per = std::int64_t{1} << (R_ - G);
    const std::int64_t c0 = floor_div(start, per), c1 = floor_div(start + len - 1, per);
    out.assign(static_cast<std::size_t>(c1 - c0 + 1), 0.0);
    const double w = scale * std::ldexp(1.0, -R_);
    for (std::int64_t i = 0; i < len; ++i) out[static_cast<std::size_t>(floor_div(start + i, per) - c0)] += w * s[i];
    return c0;
  }
  const std::int64_t per = std::int64_t{1} << (G - R_);
  out.resize(static_cast<std::size_t>(len * per));
  const double w = scale * std::ldexp(1.0, -G);
  for (std::int64_t i = 0; i < len; ++i)
    for (std::int64_t b = 0; b < per; ++b) out[static_cast<std::size_t>(i * per + b)] = w * s[i];
  return start * per;
}

double WaveletSystem::inner(int lambda, const Cube& Q, int mu, const Cube& R) const {
  double v = 1.0;
  for (int i = 0; i < Q.dim() && v != 0.0; ++i)
    v *= inner_1d((lambda >> i) & 1, Q.j, Q.k[i], (mu >> i) & 1, R.j, R.k[i]);
  return v;
}

double WaveletSystem::moment(int lambda, const Cube& Q, const std::vector<int>& gamma) const {
  double v = 1.0;
  for (int i = 0; i < Q.dim(); ++i) v *= moment_1d((lambda >> i) & 1, Q.j, Q.k[i], gamma[i]);
  return v;
}

double WaveletSystem::value(int lambda, const Cube& Q, const std::vector<double>& x) const {
  double v = 1.0;
  for (int i = 0; i < Q.dim() && v != 0.0; ++i) v *= value_1d((lambda >> i) & 1, Q.j, Q.k[i], x[i]);
  return v;
}

std::vector<int> lambdas(int n) {
  std::vector<int> out;
  for (int l = 1; l < (1 << n); ++l) out.push_back(l);
  return out;
}

std::size_t SampledFunction::cells() const {
  std::size_t c = 1;
  for (int a = 0; a < n; ++a) c *= static_cast<std::size_t>(hi[a] - lo[a]);
  return c;
}

std::size_t SampledFunction::index(const std::vector<std::int64_t>& c) const {
  std::size_t idx = 0;
  for (int a = 0; a < n; ++a) idx = idx * static_cast<std::size_t>(hi[a] - lo[a]) + static_cast<std::size_t>(c[a] - lo[a]);
  return idx;
}

SampledFunction SampledFunction::zeros(int n, int m, int G, std::vector<std::int64_t> lo,
                                       std::vector<std::int64_t> hi) {
  SampledFunction f;
  f.n = n;
  f.m = m;
  f.G = G;
  f.lo = std::move(lo);
  f.hi = std::move(hi);
  if (static_cast<int>(f.lo.size()) != n || static_cast<int>(f.hi.size()) != n)
    throw Error("sampled function bounds do not match the dimension");
  for (int a = 0; a < n; ++a)
    if (f.hi[a] <= f.lo[a]) throw Error("sampled function has an empty axis");
  f.values.assign(f.cells(), Vec::Zero(m));
  return f;
}

SampledFunction SampledFunction::from_function(int n, int m, int G, std::vector<std::int64_t> lo,
                                               std::vector<std::int64_t> hi,
                                               const std::function<Vec(const std::vector<double>&)>& fn) {
  SampledFunction f = zeros(n, m, G, std::move(lo), std::move(hi));
  std::vector<std::int64_t> c = f.lo;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    for (int a = 0; a < n; ++a) x[a] = std::ldexp(static_cast<double>(c[a]) + 0.5, -G);
    f.values[i] = fn(x);
    for (int a = n - 1; a >= 0; --a) {
      if (++c[a] < f.hi[a]) break;
      c[a] = f.lo[a];
    }
  }
  return f;
}

namespace {

struct AxisFactor {
  std::int64_t first;
  std::vector<double> w;
};

// Walk the tensor product of per-axis factors clipped to [lo, hi).
template <class F>
void tensor_walk(const std::vector<AxisFactor>& ax, const std::vector<std::int64_t>& lo,
                 const std::vector<std::int64_t>& hi, F&& visit) {
  const int n = static_cast<int>(ax.size());
  std::vector<std::int64_t> b(n), e(n);
  for (int a = 0; a < n; ++a) {
    b[a] = std::max(ax[a].first, lo[a]);
    e[a] = std::min(ax[a].first + static_cast<std::int64_t>(ax[a].w.size()), hi[a]);
    if (e[a] <= b[a]) return;
  }
  std::vector<std::int64_t> c = b;
  for (;;) {
    double w = 1.0;
    for (int a = 0; a < n; ++a) w *= ax[a].w[static_cast<std::size_t>(c[a] - ax[a].first)];
    if (w != 0.0) visit(c, w);
    int a = n - 1;
    while (a >= 0 && ++c[a] == e[a]) {
      c[a] = b[a];
      --a;
    }
    if (a < 0) break;
  }
}

std::vector<AxisFactor> factors(const WaveletSystem& sys, int lambda, const Cube& Q, int G) {
  std::vector<AxisFactor> ax(Q.dim());
  for (int a = 0; a < Q.dim(); ++a) ax[a].first = sys.cell_integrals_1d((lambda >> a) & 1, Q.j, Q.k[a], G, ax[a].w);
  return ax;
}

}  // namespace

WaveletCoeffs analyze(const SampledFunction& f, const WaveletSystem& sys, const LatticeWindow& window,
                      double drop_below) {
  if (window.n != f.n) throw Error("analyze: window dimension does not match the function");
  if (window.j_min < sys.j_min() || window.j_max > sys.j_max())
    throw Error("analyze: window scales exceed the wavelet system");
  if (f.G < window.j_max + 2) throw Error("analyze: sample resolution too coarse for the window");
  std::vector<WKey> keys;
  for (const auto& Q : window.cubes())
    for (int l : lambdas(f.n)) keys.push_back({l, Q});
  std::vector<Vec> out(keys.size());
  parallel_for(keys.size(), [&](std::size_t i) {
    auto ax = factors(sys, keys[i].lambda, keys[i].Q, f.G);
    Vec acc = Vec::Zero(f.m);
    tensor_walk(ax, f.lo, f.hi, [&](const std::vector<std::int64_t>& c, double w) { acc += w * f.values[f.index(c)]; });
    out[i] = std::move(acc);
  });
  WaveletCoeffs res;
  res.n = f.n;
  res.m = f.m;
  for (std::size_t i = 0; i < keys.size(); ++i)
    if (out[i].norm() > drop_below) res.entries[keys[i]] = std::move(out[i]);
  return res;
}

SampledFunction synthesize(const WaveletCoeffs& c, const WaveletSystem& sys, int G,
                           const std::vector<std::int64_t>& lo, const std::vector<std::int64_t>& hi) {
  auto f = SampledFunction::zeros(c.n, c.m, G, lo, hi);
  const double inv_vol = std::ldexp(1.0, G * c.n);
  for (const auto& [key, v] : c.entries) {
    auto ax = factors(sys, key.lambda, key.Q, G);
    tensor_walk(ax, f.lo, f.hi,
                [&](const std::vector<std::int64_t>& cell, double w) { f.values[f.index(cell)] += (w * inv_vol) * v; });
  }
  return f;
}

void covering_cells(const WaveletSystem& sys, const LatticeWindow& window, int G, std::vector<std::int64_t>& lo,
                    std::vector<std::int64_t>& hi) {
  double xmin = 0.0, xmax = 0.0;
  bool first = true;
  for (int j = window.j_min; j <= window.j_max; ++j) {
    auto b = window.k_begin(j), e = window.k_end(j);
    if (e <= b) continue;
    double l = std::ldexp(static_cast<double>(b), -j);
    double h = std::ldexp(static_cast<double>(e - 1) + sys.support(), -j);
    xmin = first ? l : std::min(xmin, l);
    xmax = first ? h : std::max(xmax, h);
    first = false;
  }
  auto L = static_cast<std::int64_t>(std::floor(std::ldexp(xmin, G)));
  auto H = static_cast<std::int64_t>(std::ceil(std::ldexp(xmax, G)));
  lo.assign(window.n, L);
  hi.assign(window.n, H);
}

double BandlimitedPair::phi_hat(double xi) {
  double a = std::abs(xi);
  if (a == 0.0) return 0.0;
  double u = std::log2(a);
  if (std::abs(u) >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - u * u));
}

double BandlimitedPair::dilation_sum(double xi) {
  double a = std::abs(xi);
  if (a == 0.0) return 0.0;
  double u = std::log2(a);
  double s = 0.0;
  for (int j = static_cast<int>(std::floor(-u - 1.0)); j <= static_cast<int>(std::ceil(-u + 1.0)); ++j) {
    double v = phi_hat(std::ldexp(a, j));
    s += v * v;
  }
  return s;
}

double BandlimitedPair::psi_hat(double xi) {
  double p = phi_hat(xi);
  return p == 0.0 ? 0.0 : p / dilation_sum(xi);
}

double BandlimitedPair::cond3_residual() const {
  double r = 0.0;
  for (double xi : mesh) {
    double a = std::abs(xi);
    double u = std::log2(a), s = 0.0;
    for (int j = static_cast<int>(std::floor(-u - 1.0)); j <= static_cast<int>(std::ceil(-u + 1.0)); ++j)
      s += phi_hat(std::ldexp(a, j)) * psi_hat(std::ldexp(a, j));
    r = std::max(r, std::abs(s - 1.0));
  }
  return r;
}

namespace {

double radial_inverse(double (*hat)(double), double x, int r, int nodes) {
  // u in (-1, 1), xi = 2^u; the integrand vanishes to all orders at both ends
  const double du = 2.0 / nodes;
  double s = 0.0;
  for (int i = 1; i < nodes; ++i) {
    double u = -1.0 + i * du;
    double xi = std::exp2(u);
    s += hat(xi) * std::pow(xi, r + 1) * std::cos(x * xi + r * std::numbers::pi / 2.0);
  }
  return s * du * std::numbers::ln2 / std::numbers::pi;
}

}  // namespace

double BandlimitedPair::psi(double x, int r, int nodes) { return radial_inverse(&BandlimitedPair::psi_hat, x, r, nodes); }

double BandlimitedPair::phi(double x, int r, int nodes) { return radial_inverse(&BandlimitedPair::phi_hat, x, r, nodes); }

BandlimitedPair build_bandlimited_pair(int per_octave, double xi_min, double xi_max) {
  if (per_octave < 4) throw Error("band-limited mesh needs at least 4 points per octave");
  if (!(xi_min > 0.0) || !(xi_max > xi_min)) throw Error("band-limited mesh needs 0 < xi_min < xi_max");
  if (std::log2(xi_max / xi_min) < 4.0 - 1e-12) throw Error("band-limited mesh must cover 4 octaves");
  BandlimitedPair bp;
  bp.per_octave = per_octave;
  bp.xi_min = xi_min;
  bp.xi_max = xi_max;
  const double oct = std::log2(xi_max / xi_min);
  const int N = static_cast<int>(std::ceil(oct * per_octave));
  for (int i = 0; i <= N; ++i) {
    double xi = xi_min * std::exp2(oct * i / N);
    bp.mesh.push_back(xi);
    bp.phi_hat_mesh.push_back(BandlimitedPair::phi_hat(xi));
    bp.psi_hat_mesh.push_back(BandlimitedPair::psi_hat(xi));
  }
  double r = bp.cond3_residual();
  if (r > 1e-10) throw Error("band-limited pair partition-of-unity residual " + std::to_string(r));
  for (double xi = 0.6; xi <= 5.0 / 3.0; xi += 1.0 / 64)
    if (!(BandlimitedPair::phi_hat(xi) > 0.0)) throw Error("phi-hat vanishes inside 3/5 <= |xi| <= 5/3");
  return bp;
}

}  // namespace dms

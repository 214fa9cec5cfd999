#include "dms/matweight.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "dms/parallel.hpp"

namespace dms {

namespace {

double radial(const double* x, int n, int axis) {
  if (axis >= 0) return std::abs(x[axis]);
  double s = 0.0;
  for (int a = 0; a < n; ++a) s += x[a] * x[a];
  return std::sqrt(s);
}

double safe_pow(double r, double e, const char* label) {
  if (e == 0.0) return 1.0;
  if (!(r > 0.0)) throw Error(std::string("weight ") + label + " is singular at a quadrature node");
  return std::pow(r, e);
}

// W^{1/p} and W^{-1/p} at every node.
void node_powers(const MatrixWeight& W, const NodeSet& ns, double alpha, std::vector<Mat>& out) {
  out.resize(ns.size());
  for (std::size_t i = 0; i < ns.size(); ++i) out[i] = W.pow_at(ns.point(i), alpha);
}

struct RhoEval {
  std::vector<Mat> wp;
  std::vector<double> w;
  double p;

  RhoEval(const MatrixWeight& W, const Box& B, double p_, const QuadratureSpec& quad) : p(p_) {
    NodeSet ns = box_nodes(B, quad);
    node_powers(W, ns, 1.0 / p, wp);
    w = ns.w;
  }
  double operator()(const Vec& z) const {
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * std::pow((wp[i] * z).norm(), p);
    return std::pow(s, 1.0 / p);
  }
};

}  // namespace

Mat MatrixWeight::pow_at(const double* x, double alpha) const {
  if (power) return power(x, alpha);
  return mat_power(eval(x), alpha);
}

MatrixWeight identity_weight(int n, int m) {
  MatrixWeight W;
  W.n = n;
  W.m = m;
  W.label = "identity";
  W.constant = true;
  W.eval = [m](const double*) { return Mat(Mat::Identity(m, m)); };
  W.power = [m](const double*, double) { return Mat(Mat::Identity(m, m)); };
  return W;
}

MatrixWeight constant_weight(int n, const Mat& A) {
  require_hpd(A, "constant weight");
  MatrixWeight W;
  W.n = n;
  W.m = static_cast<int>(A.rows());
  W.label = "constant";
  W.constant = true;
  W.eval = [A](const double*) { return A; };
  W.power = [A](const double*, double alpha) { return mat_power(A, alpha); };
  return W;
}

MatrixWeight scalar_power_weight(int n, int m, double a, int axis, double c) {
  if (!(c > 0.0)) throw Error("scalar_power weight needs c > 0");
  MatrixWeight W;
  W.n = n;
  W.m = m;
  W.label = "scalar_power";
  W.constant = (a == 0.0);
  W.eval = [=](const double* x) {
    return Mat(c * safe_pow(radial(x, n, axis), a, "scalar_power") * Mat::Identity(m, m));
  };
  W.power = [=](const double* x, double alpha) {
    double v = std::pow(c, alpha) * safe_pow(radial(x, n, axis), a * alpha, "scalar_power");
    return Mat(v * Mat::Identity(m, m));
  };
  return W;
}

MatrixWeight diag_power_weight(int n, const std::vector<double>& a, int axis) {
  MatrixWeight W;
  W.n = n;
  W.m = static_cast<int>(a.size());
  W.label = "diag_power";
  W.constant = std::all_of(a.begin(), a.end(), [](double e) { return e == 0.0; });
  W.eval = [=](const double* x) {
    double r = radial(x, n, axis);
    Mat D = Mat::Zero(a.size(), a.size());
    for (std::size_t i = 0; i < a.size(); ++i) D(i, i) = safe_pow(r, a[i], "diag_power");
    return D;
  };
  W.power = [=](const double* x, double alpha) {
    double r = radial(x, n, axis);
    Mat D = Mat::Zero(a.size(), a.size());
    for (std::size_t i = 0; i < a.size(); ++i) D(i, i) = safe_pow(r, a[i] * alpha, "diag_power");
    return D;
  };
  return W;
}

MatrixWeight grid_weight(int n, int m, const std::vector<std::vector<double>>& rows,
                         std::string label) {
  const std::size_t width = static_cast<std::size_t>(n + 2 * m * m);
  if (rows.empty()) throw Error("grid weight has no rows");
  std::vector<std::vector<double>> axes(n);
  for (const auto& r : rows) {
    if (r.size() != width) throw Error("grid weight row has wrong width");
    for (int a = 0; a < n; ++a) axes[a].push_back(r[a]);
  }
  std::size_t total = 1;
  for (auto& ax : axes) {
    std::sort(ax.begin(), ax.end());
    ax.erase(std::unique(ax.begin(), ax.end()), ax.end());
    total *= ax.size();
  }
  if (total != rows.size()) throw Error("grid weight rows do not form a tensor grid");
  std::vector<Mat> values(total);
  for (const auto& r : rows) {
    std::size_t idx = 0;
    for (int a = 0; a < n; ++a) {
      auto pos = std::lower_bound(axes[a].begin(), axes[a].end(), r[a]) - axes[a].begin();
      idx = idx * axes[a].size() + static_cast<std::size_t>(pos);
    }
    Mat M(m, m);
    for (int i = 0; i < m * m; ++i) M(i / m, i % m) = cplx(r[n + 2 * i], r[n + 2 * i + 1]);
    require_hpd(M, "grid weight entry");
    values[idx] = M;
  }
  MatrixWeight W;
  W.n = n;
  W.m = m;
  W.label = std::move(label);
  W.eval = [=](const double* x) {
    std::size_t idx = 0;
    for (int a = 0; a < n; ++a) {
      const auto& ax = axes[a];
      auto it = std::lower_bound(ax.begin(), ax.end(), x[a]);
      std::size_t pos;
      if (it == ax.begin()) pos = 0;
      else if (it == ax.end()) pos = ax.size() - 1;
      else {
        pos = static_cast<std::size_t>(it - ax.begin());
        if (x[a] - ax[pos - 1] <= ax[pos] - x[a]) --pos;
      }
      idx = idx * ax.size() + pos;
    }
    return values[idx];
  };
  return W;
}

MatrixWeight scaled(const MatrixWeight& W, double c) {
  MatrixWeight V = W;
  V.label = W.label + "*c";
  auto e = W.eval;
  V.eval = [e, c](const double* x) { return Mat(c * e(x)); };
  if (W.power) {
    auto pw = W.power;
    V.power = [pw, c](const double* x, double alpha) { return Mat(std::pow(c, alpha) * pw(x, alpha)); };
  }
  return V;
}

double exp_log_double_average(const MatrixWeight& W, const Box& outer, const Box& inner, double p,
                              const QuadratureSpec& quad) {
  if (!(p > 0.0)) throw Error("A_{p,inf} needs p > 0");
  NodeSet ny = box_nodes(outer, quad);
  NodeSet nx = box_nodes(inner, quad);
  std::vector<Mat> wp, wm;
  node_powers(W, nx, 1.0 / p, wp);
  node_powers(W, ny, -1.0 / p, wm);
  double outer_sum = 0.0;
  if (W.m == 1) {
    double inner_base = 0.0;
    for (std::size_t a = 0; a < nx.size(); ++a) inner_base += nx.w[a] * std::pow(std::abs(wp[a](0, 0)), p);
    for (std::size_t b = 0; b < ny.size(); ++b)
      outer_sum += ny.w[b] * std::log(inner_base * std::pow(std::abs(wm[b](0, 0)), p));
    return std::exp(outer_sum);
  }
  for (std::size_t b = 0; b < ny.size(); ++b) {
    double inner_sum = 0.0;
    for (std::size_t a = 0; a < nx.size(); ++a)
      inner_sum += nx.w[a] * std::pow(op_norm(wp[a] * wm[b]), p);
    outer_sum += ny.w[b] * std::log(inner_sum);
  }
  return std::exp(outer_sum);
}

double apinf_cube_value(const MatrixWeight& W, const Cube& Q, double p, const QuadratureSpec& quad) {
  Box B = cube_box(Q);
  return exp_log_double_average(W, B, B, p, quad);
}

ApinfReport apinf_characteristic(const MatrixWeight& W, double p, const LatticeWindow& window,
                                 const QuadratureSpec& quad) {
  auto cubes = window.cubes();
  ApinfReport rep;
  rep.cubes = cubes.size();
  if (cubes.empty()) return rep;
  auto best = parallel_argmax(cubes.size(), [&](std::size_t i) { return apinf_cube_value(W, cubes[i], p, quad); });
  rep.value = best.value;
  rep.argmax = cubes[best.index];
  return rep;
}

Box dilate(const Cube& Q, double lambda) {
  auto c = Q.center();
  double h = 0.5 * lambda * Q.side();
  Box B;
  for (double x : c) {
    B.lo.push_back(x - h);
    B.hi.push_back(x + h);
  }
  return B;
}

DimensionEstimate dimension_estimate(const MatrixWeight& W, double p, const LatticeWindow& window,
                                     const std::vector<double>& lambdas, DimSide side,
                                     const QuadratureSpec& quad, const std::vector<Cube>* base) {
  if (lambdas.size() < 3) throw Error("dimension_estimate needs at least 3 lambdas");
  for (double l : lambdas)
    if (l < 1.0) throw Error("dimension_estimate needs lambdas >= 1");
  double lmax = *std::max_element(lambdas.begin(), lambdas.end());
  std::vector<Cube> cubes;
  if (base) {
    for (const auto& Q : *base)
      if (!window.contains_box(dilate(Q, lmax))) throw Error("dilated cube exits window: " + to_string(Q));
    cubes = *base;
  } else {
    for (const auto& Q : window.cubes())
      if (window.contains_box(dilate(Q, lmax))) cubes.push_back(Q);
  }
  if (cubes.empty()) throw Error("dimension_estimate: no base cube fits the window after dilation");

  const std::size_t L = lambdas.size();
  std::vector<double> vals(cubes.size() * L);
  parallel_for(cubes.size() * L, [&](std::size_t idx) {
    const Cube& Q = cubes[idx / L];
    double lam = lambdas[idx % L];
    Box B = cube_box(Q), D = dilate(Q, lam);
    vals[idx] = side == DimSide::lower ? exp_log_double_average(W, D, B, p, quad)
                                       : exp_log_double_average(W, B, D, p, quad);
  });

  DimensionEstimate est;
  est.side = side;
  bool first = true;
  for (std::size_t c = 0; c < cubes.size(); ++c) {
    double xm = 0.0, ym = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      xm += std::log(lambdas[l]);
      ym += std::log(vals[c * L + l]);
    }
    xm /= L;
    ym /= L;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      double dx = std::log(lambdas[l]) - xm;
      sxy += dx * (std::log(vals[c * L + l]) - ym);
      sxx += dx * dx;
    }
    double slope = sxy / sxx;
    if (first || slope > est.d_raw) {
      first = false;
      est.d_raw = slope;
      est.argmax = cubes[c];
      double rss = 0.0;
      for (std::size_t l = 0; l < L; ++l) {
        double r = std::log(vals[c * L + l]) - (ym + slope * (std::log(lambdas[l]) - xm));
        rss += r * r;
      }
      est.residual = std::sqrt(rss / L);
    }
    for (std::size_t l = 0; l < L; ++l) est.table.push_back({cubes[c], lambdas[l], vals[c * L + l]});
  }
  est.d_hat = std::max(est.d_raw, 0.0);
  return est;
}

std::vector<Vec> unit_directions(int m, int count, std::uint64_t seed) {
  std::vector<Vec> out;
  if (m == 1) {
    Vec z(1);
    z(0) = 1.0;
    out.push_back(z);
    return out;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int c = 0; c < count; ++c) {
    Vec z(m);
    for (int i = 0; i < m; ++i) {
      double re = g(rng);
      double im = g(rng);
      z(i) = cplx(re, im);
    }
    out.push_back(z / z.norm());
  }
  return out;
}

double rho(const MatrixWeight& W, const Cube& Q, double p, const Vec& z, const QuadratureSpec& quad) {
  return RhoEval(W, cube_box(Q), p, quad)(z);
}

namespace {

// Origin-centred minimum-volume enclosing ellipsoid {x : x^T E x <= 1}, Khachiyan
// iteration with Todd-Yildirim away steps.
Eigen::MatrixXd khachiyan(const std::vector<Eigen::VectorXd>& pts, double tol, int max_iter, int& iters) {
  const int d = static_cast<int>(pts[0].size());
  const std::size_t N = pts.size();
  std::vector<double> u(N, 1.0 / N);
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t i = 0; i < N; ++i) X.noalias() += u[i] * pts[i] * pts[i].transpose();
  std::vector<double> M(N);
  for (iters = 0;; ++iters) {
    const Eigen::MatrixXd Xi = X.ldlt().solve(Eigen::MatrixXd::Identity(d, d));
    std::size_t jmax = 0, jmin = 0;
    double Mmax = -1.0, Mmin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < N; ++i) {
      M[i] = pts[i].dot(Xi * pts[i]);
      if (M[i] > Mmax) {
        Mmax = M[i];
        jmax = i;
      }
      if (u[i] > 0.0 && M[i] < Mmin) {
        Mmin = M[i];
        jmin = i;
      }
    }
    const double up = Mmax / d - 1.0, down = 1.0 - Mmin / d;
    if (up <= tol) break;
    if (iters >= max_iter) throw Error("ellipsoid fit did not converge within the iteration cap");
    std::size_t j;
    double tau;
    if (up >= down) {
      j = jmax;
      tau = (Mmax - d) / (d * (Mmax - 1.0));
    } else {
      j = jmin;
      const double floor_tau = -u[j] / (1.0 - u[j]);
      tau = Mmin > 1.0 ? std::max((Mmin - d) / (d * (Mmin - 1.0)), floor_tau) : floor_tau;
    }
    for (auto& ui : u) ui *= 1.0 - tau;
    u[j] += tau;
    if (u[j] < 1e-300) u[j] = 0.0;
    X = (1.0 - tau) * X + tau * pts[j] * pts[j].transpose();
  }
  return X.inverse() / d;
}

}  // namespace

ReducingOperator reducing_operator(const MatrixWeight& W, const Cube& Q, double p,
                                   const EllipsoidFitSpec& fit, const QuadratureSpec& quad) {
  if (!(p > 0.0)) throw Error("reducing_operator needs p > 0");
  const int m = W.m;
  ReducingOperator out;
  Box B = cube_box(Q);
  if (W.constant) {
    auto c = Q.center();
    out.A = W.pow_at(c.data(), 1.0 / p);
    return out;
  }
  RhoEval rq(W, B, p, quad);
  auto measure_ratio = [&](const Mat& A) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& z : unit_directions(m, fit.holdout, fit.seed + 1)) {
      double r = (A * z).norm() / rq(z);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    return hi / lo;
  };
  if (m == 1) {
    Vec e(1);
    e(0) = 1.0;
    out.A = Mat::Constant(1, 1, rq(e));
    return out;
  }
  if (p == 2.0) {
    NodeSet ns = box_nodes(B, quad);
    Mat avg = Mat::Zero(m, m);
    for (std::size_t i = 0; i < ns.size(); ++i) avg += ns.w[i] * W.at(ns.point(i));
    out.A = mat_power(avg, 0.5);
    out.ratio = measure_ratio(out.A);
    return out;
  }
  std::vector<Eigen::VectorXd> pts;
  const cplx rot[4] = {cplx(1, 0), cplx(-1, 0), cplx(0, 1), cplx(0, -1)};
  // sample directions whitened by (avg W^{2/p})^{1/2} so the rho_Q-unit cloud is near-isotropic
  NodeSet ns = box_nodes(B, quad);
  Mat G = Mat::Zero(m, m);
  for (std::size_t i = 0; i < ns.size(); ++i) G += ns.w[i] * W.pow_at(ns.point(i), 2.0 / p);
  const Mat Binv = mat_power(hermitian_part(G), -0.5);
  auto dirs = unit_directions(m, fit.samples, fit.seed);
  for (auto& z : dirs) {
    z = Binv * z;
    z /= z.norm();
  }
  std::vector<Vec> surface;
  for (const auto& z : dirs) {
    double r = rq(z);
    if (!(r > 0.0)) throw Error("degenerate rho_Q: zero in some direction");
    for (const auto& c : rot) {
      Vec u = c * z / r;
      surface.push_back(u);
      Eigen::VectorXd x(2 * m);
      for (int i = 0; i < m; ++i) {
        x[i] = u(i).real();
        x[m + i] = u(i).imag();
      }
      pts.push_back(x);
    }
  }
  Eigen::MatrixXd E = khachiyan(pts, fit.tol, fit.max_iter, out.iterations);
  Mat H(m, m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      H(a, b) = cplx(0.5 * (E(a, b) + E(m + a, m + b)), 0.5 * (E(m + a, b) - E(a, m + b)));
  H = hermitian_part(H);
  double s = 0.0;
  for (const auto& u : surface) s = std::max(s, (u.adjoint() * H * u)(0, 0).real());
  H /= s;
  out.A = mat_power(H, 0.5);
  out.ratio = measure_ratio(out.A);
  return out;
}

ReducingFamily build_reducing_family(const MatrixWeight& W, const std::vector<Cube>& cubes, double p,
                                     const EllipsoidFitSpec& fit, const QuadratureSpec& quad) {
  std::vector<ReducingOperator> ops(cubes.size());
  parallel_for(cubes.size(), [&](std::size_t i) { ops[i] = reducing_operator(W, cubes[i], p, fit, quad); });
  ReducingFamily fam;
  fam.p = p;
  fam.m = W.m;
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    fam.A[cubes[i]] = ops[i].A;
    fam.ratio_bound = std::max(fam.ratio_bound, ops[i].ratio);
  }
  return fam;
}

std::vector<std::pair<Cube, Cube>> all_pairs(const std::vector<Cube>& cubes) {
  std::vector<std::pair<Cube, Cube>> out;
  out.reserve(cubes.size() * cubes.size());
  for (const auto& Q : cubes)
    for (const auto& R : cubes) out.emplace_back(Q, R);
  return out;
}

GrowthCertificate reducing_growth_certificate(const ReducingFamily& fam,
                                              const std::vector<std::pair<Cube, Cube>>& pairs,
                                              double beta1, double beta2) {
  std::map<Cube, Mat> inv;
  for (const auto& [Q, R] : pairs) {
    if (inv.count(R)) continue;
    auto it = fam.A.find(R);
    if (it == fam.A.end()) throw Error("reducing family has no A_R for " + to_string(R));
    Eigen::FullPivLU<Mat> lu(it->second);
    if (!lu.isInvertible()) throw Error("singular A_R at " + to_string(R));
    inv[R] = lu.inverse();
  }
  GrowthCertificate cert;
  if (pairs.empty()) return cert;
  auto best = parallel_argmax(pairs.size(), [&](std::size_t i) {
    const auto& [Q, R] = pairs[i];
    auto it = fam.A.find(Q);
    if (it == fam.A.end()) throw Error("reducing family has no A_Q for " + to_string(Q));
    double lhs = std::pow(op_norm(it->second * inv.at(R)), fam.p);
    double lq = Q.side(), lr = R.side();
    double rhs = std::max(std::pow(lr / lq, beta1), std::pow(lq / lr, beta2)) *
                 std::pow(scaled_distance(Q, R), beta1 + beta2);
    return lhs / rhs;
  });
  cert.C = best.value;
  cert.argmax = pairs[best.index];
  return cert;
}

}  // namespace dms

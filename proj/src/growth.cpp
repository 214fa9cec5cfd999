#include "dms/growth.hpp"

#include <cmath>
#include <sstream>

#include "dms/parallel.hpp"

namespace dms {

std::string admissible_range_violation(const GrowthClass& c, int n) {
  std::ostringstream os;
  if (c.delta2 < 0.0) os << "delta2 = " << c.delta2 << " < 0; ";
  if (c.delta1 > c.delta2) os << "delta1 = " << c.delta1 << " > delta2 = " << c.delta2 << "; ";
  if (c.omega < 0.0) os << "omega = " << c.omega << " < 0; ";
  double cap = n * (c.delta2 - c.delta1);
  if (c.omega > cap + 1e-12) os << "omega = " << c.omega << " > n(delta2 - delta1) = " << cap << "; ";
  return os.str();
}

double growth_bound_rhs(const Cube& Q, const Cube& R, double delta1, double delta2, double omega) {
  double ratio = Q.volume() / R.volume();
  double delta = Q.side() <= R.side() ? delta1 : delta2;
  return std::pow(scaled_distance(Q, R), omega) * std::pow(ratio, delta);
}

MembershipCertificate certify_membership(const GrowthFunction& u, const std::vector<Cube>& cubes,
                                         const GrowthClass& c) {
  MembershipCertificate cert;
  if (cubes.empty()) return cert;
  std::vector<double> vals(cubes.size());
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    vals[i] = u(cubes[i]);
    if (!(vals[i] > 0.0)) throw Error("growth function is not positive at " + to_string(cubes[i]));
  }
  const std::size_t N = cubes.size();
  auto best = parallel_argmax(N * N, [&](std::size_t idx) {
    std::size_t a = idx / N, b = idx % N;
    return (vals[a] / vals[b]) / growth_bound_rhs(cubes[a], cubes[b], c.delta1, c.delta2, c.omega);
  });
  cert.C = best.value;
  cert.Q = cubes[best.index / N];
  cert.R = cubes[best.index % N];
  return cert;
}

MembershipCertificate certify_membership(const GrowthFunction& u, const LatticeWindow& window,
                                         const GrowthClass& c) {
  return certify_membership(u, window.cubes(), c);
}

GrowthFunction constant_growth(int n, double c) {
  GrowthFunction u;
  u.n = n;
  u.label = "constant";
  u.eval = [c](const Cube&) { return c; };
  return u;
}

GrowthFunction power_growth(int n, double tau) {
  GrowthFunction u;
  u.n = n;
  u.label = "power";
  u.eval = [tau](const Cube& Q) { return std::pow(Q.volume(), tau); };
  u.cls = {tau, tau, 0.0};
  return u;
}

GrowthFunction g_of_ell_growth(int n, double p) {
  if (!(p > 0.0)) throw Error("g_of_ell growth needs p > 0");
  GrowthFunction u;
  u.n = n;
  u.label = "g_of_ell";
  u.eval = [n, p](const Cube& Q) {
    double t = std::pow(Q.side(), n / p);
    return t / (1.0 + t);
  };
  u.cls = {0.0, 1.0 / p, 0.0};
  return u;
}

GrowthFunction weight_integral_growth(const MatrixWeight& w, const QuadratureSpec& quad) {
  if (w.m != 1) throw Error("weight_integral growth needs a scalar weight");
  GrowthFunction u;
  u.n = w.n;
  u.label = "weight_integral";
  u.eval = [w, quad](const Cube& Q) {
    NodeSet ns = box_nodes(cube_box(Q), quad);
    double s = 0.0;
    for (std::size_t i = 0; i < ns.size(); ++i) s += ns.w[i] * w.at(ns.point(i))(0, 0).real();
    return s * Q.volume();
  };
  return u;
}

GrowthFunction table_growth(int n, const std::map<Cube, double>& values, std::string label) {
  GrowthFunction u;
  u.n = n;
  u.label = std::move(label);
  u.eval = [values](const Cube& Q) {
    auto it = values.find(Q);
    if (it == values.end()) throw Error("growth table has no entry for " + to_string(Q));
    return it->second;
  };
  return u;
}

GrowthFunction scaled(const GrowthFunction& u, double c) {
  GrowthFunction v = u;
  auto e = u.eval;
  v.eval = [e, c](const Cube& Q) { return c * e(Q); };
  v.label = u.label + "*c";
  return v;
}

ClassSearchResult weight_integral_class_search(const GrowthFunction& u, const LatticeWindow& window,
                                               const std::vector<double>& deltas,
                                               const std::vector<double>& ps) {
  auto cubes = window.cubes();
  ClassSearchResult best;
  bool first = true;
  for (double p : ps)
    for (double d : deltas) {
      GrowthClass c{d, p, u.n * (p - d)};
      double C = certify_membership(u, cubes, c).C;
      if (first || C < best.C || (C == best.C && c.omega < best.cls.omega)) {
        first = false;
        best = ClassSearchResult{d, p, c, C};
      }
    }
  return best;
}

GrowthFunction restrict_growth(const GrowthFunction& u) {
  GrowthFunction v;
  const int n = u.n - 1;
  if (n < 1) throw Error("restrict_growth needs a growth function on dimension >= 2");
  v.n = n;
  v.label = u.label + "|restricted";
  auto e = u.eval;
  v.eval = [e](const Cube& Qp) { return e(lift(Qp, 0)); };
  double f = static_cast<double>(n + 1) / n;
  v.cls = {u.cls.delta1 * f, u.cls.delta2 * f, u.cls.omega};
  return v;
}

}  // namespace dms

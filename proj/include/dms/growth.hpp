#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dms/lattice.hpp"
#include "dms/matweight.hpp"

namespace dms {

struct GrowthClass {
  double delta1 = 0.0;
  double delta2 = 0.0;
  double omega = 0.0;
};

struct GrowthFunction {
  int n = 1;
  std::string label;
  std::function<double(const Cube&)> eval;
  GrowthClass cls;

  double operator()(const Cube& Q) const { return eval(Q); }
};

// Empty string when (delta1, delta2, omega) lies in the admissible range
// delta2 >= 0, delta1 <= delta2, 0 <= omega <= n(delta2 - delta1).
std::string admissible_range_violation(const GrowthClass& c, int n);

double growth_bound_rhs(const Cube& Q, const Cube& R, double delta1, double delta2, double omega);

struct MembershipCertificate {
  double C = 0.0;
  Cube Q, R;
};

MembershipCertificate certify_membership(const GrowthFunction& u, const std::vector<Cube>& cubes,
                                         const GrowthClass& c);
MembershipCertificate certify_membership(const GrowthFunction& u, const LatticeWindow& window,
                                         const GrowthClass& c);

GrowthFunction constant_growth(int n, double c = 1.0);
// |Q|^tau, class (tau, tau; 0).
GrowthFunction power_growth(int n, double tau);
// g(l(Q)) with g(t) = t^{n/p} / (1 + t^{n/p}); class (0, 1/p; 0).
GrowthFunction g_of_ell_growth(int n, double p);
// integral of a scalar weight over Q by midpoint quadrature; class left open
// until weight_integral_class_search fills it.
GrowthFunction weight_integral_growth(const MatrixWeight& w, const QuadratureSpec& quad = {});
GrowthFunction table_growth(int n, const std::map<Cube, double>& values, std::string label = "table");
GrowthFunction scaled(const GrowthFunction& u, double c);

struct ClassSearchResult {
  double delta = 0.0;
  double p = 1.0;
  GrowthClass cls;
  double C = 0.0;
};

// Grid search over delta in (0,1), p in [1, p_max] for the class (delta, p; n(p - delta))
// with the smallest certified constant; ties go to the smaller omega.
ClassSearchResult weight_integral_class_search(const GrowthFunction& u, const LatticeWindow& window,
                                               const std::vector<double>& deltas,
                                               const std::vector<double>& ps);

// upsilon^(n)(Q') = upsilon^(n+1)(P(Q', 0)), class ((n+1)/n delta1, (n+1)/n delta2; omega).
GrowthFunction restrict_growth(const GrowthFunction& u);

}  // namespace dms

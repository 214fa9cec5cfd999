#include "dms/quadrature.hpp"

#include <cmath>

namespace dms {

void gauss_legendre(int npts, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(npts, 0.0);
  weights.assign(npts, 0.0);
  for (int i = 0; i < (npts + 1) / 2; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (npts + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= npts; ++k) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = npts * (z * p0 - p1) / (z * z - 1.0);
      double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    nodes[i] = -z;
    nodes[npts - 1 - i] = z;
    weights[i] = weights[npts - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
}

NodeSet box_nodes(const Box& B, const QuadratureSpec& spec) {
  const int n = B.dim();
  const int N = spec.nodes_per_axis();
  std::vector<double> t(N), tw(N);
  if (spec.rule == QuadRule::midpoint) {
    for (int i = 0; i < N; ++i) {
      t[i] = (i + 0.5) / N;
      tw[i] = 1.0 / N;
    }
  } else {
    gauss_legendre(N, t, tw);
    for (int i = 0; i < N; ++i) {
      t[i] = 0.5 * (t[i] + 1.0);
      tw[i] *= 0.5;
    }
  }
  NodeSet ns;
  ns.dim = n;
  std::size_t total = 1;
  for (int a = 0; a < n; ++a) total *= N;
  ns.x.resize(total * n);
  ns.w.resize(total);
  std::vector<int> idx(n, 0);
  for (std::size_t c = 0; c < total; ++c) {
    double w = 1.0;
    for (int a = 0; a < n; ++a) {
      ns.x[c * n + a] = B.lo[a] + (B.hi[a] - B.lo[a]) * t[idx[a]];
      w *= tw[idx[a]];
    }
    ns.w[c] = w;
    for (int a = n - 1; a >= 0; --a) {
      if (++idx[a] < N) break;
      idx[a] = 0;
    }
  }
  return ns;
}

}  // namespace dms

#pragma once

#include <vector>

#include "dms/lattice.hpp"

namespace dms {

enum class QuadRule { midpoint, gauss_legendre };

struct QuadratureSpec {
  QuadRule rule = QuadRule::midpoint;
  int r = 5;  // 2^r nodes per axis

  int nodes_per_axis() const { return 1 << r; }
};

// Tensor nodes in a box; weights sum to 1 (so sums are averages).
struct NodeSet {
  int dim = 0;
  std::vector<double> x;  // node-major, dim coordinates each
  std::vector<double> w;

  std::size_t size() const { return w.size(); }
  const double* point(std::size_t i) const { return x.data() + i * dim; }
};

NodeSet box_nodes(const Box& B, const QuadratureSpec& spec);

// Gauss-Legendre nodes/weights on [-1,1].
void gauss_legendre(int npts, std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace dms

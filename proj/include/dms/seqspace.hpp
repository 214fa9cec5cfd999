#pragma once

#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dms/growth.hpp"
#include "dms/lattice.hpp"
#include "dms/linalg.hpp"
#include "dms/matweight.hpp"
#include "dms/quadrature.hpp"

namespace dms {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct CoeffSequence {
  int n = 1;
  int m = 1;
  std::map<Cube, Vec> entries;

  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }
  void set(const Cube& Q, const Vec& v);
  void set(const Cube& Q, cplx v);
  CoeffSequence scaled(cplx c) const;
};

CoeffSequence operator+(const CoeffSequence& a, const CoeffSequence& b);

// t_j = sum over D_j of |Q|^{-1/2} 1_Q t_Q
struct LayerFunction {
  int j = 0;
  std::map<Cube, Vec> values;
};

LayerFunction layer(const CoeffSequence& t, int j);

enum class Family { B, F };

struct SpaceParams {
  Family family = Family::B;
  double s = 0.0;
  double p = 2.0;
  double q = 2.0;
  int n = 1;
  int m = 1;
  GrowthFunction upsilon;

  void validate() const;
};

SpaceParams make_params(Family fam, double s, double p, double q, int n, int m,
                        const GrowthFunction* upsilon = nullptr);

// Nonnegative piecewise-constant layer magnitudes; layer j lives on cells of
// scale j + refinement.
struct ScalarLayers {
  int n = 1;
  int refinement = 0;
  std::map<int, std::vector<std::pair<Cube, double>>> cells;

  bool empty() const;
};

struct NormOptions {
  bool supercube = false;
  double supercube_upsilon = 1.0;
  bool breakdown = false;
};

struct NormReport {
  double value = 0.0;
  std::optional<Cube> best_P;  // empty when the sequence is zero or the super-cube wins
  bool supercube_best = false;
  std::size_t candidates = 0;
  std::vector<std::pair<Cube, double>> per_P;
};

// Unnormalized || {f_j 1_P 1_{j >= j_P}} || in L^p(l^q) (family F) or l^q(L^p) (family B).
double la_norm_at(const ScalarLayers& layers, const Cube& P, Family fam, double p, double q);
// sup over candidate P in the window of la_norm_at(P) / upsilon(P).
NormReport la_norm(const ScalarLayers& layers, const SpaceParams& params, const LatticeWindow& window,
                   const NormOptions& opt = {});

ScalarLayers unweighted_layers(const CoeffSequence& t, double s);
ScalarLayers weighted_layers(const CoeffSequence& t, const MatrixWeight& W, double s, double p,
                             const QuadratureSpec& quad = {});
ScalarLayers averaging_layers(const CoeffSequence& t, const ReducingFamily& fam, double s);

NormReport sequence_norm(const CoeffSequence& t, const SpaceParams& params, const LatticeWindow& window,
                         const NormOptions& opt = {});
NormReport weighted_norm(const CoeffSequence& t, const MatrixWeight& W, const SpaceParams& params,
                         const LatticeWindow& window, const QuadratureSpec& quad = {},
                         const NormOptions& opt = {});
NormReport averaging_norm(const CoeffSequence& t, const ReducingFamily& fam, const SpaceParams& params,
                          const LatticeWindow& window, const NormOptions& opt = {});

// 1~_{E_Q} = |E_Q|^{-1/2} 1_{E_Q} in place of 1~_Q.
NormReport eq_set_norm(const CoeffSequence& t, const std::map<Cube, Box>& E, const SpaceParams& params,
                       const LatticeWindow& window, const NormOptions& opt = {});

// Candidate P cubes: ancestors (inside the window) of every support cube.
std::vector<Cube> candidate_cubes(const std::vector<Cube>& support, const LatticeWindow& window);

}  // namespace dms

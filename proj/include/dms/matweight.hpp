#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dms/lattice.hpp"
#include "dms/linalg.hpp"
#include "dms/quadrature.hpp"

namespace dms {

struct MatrixWeight {
  int n = 1;
  int m = 1;
  std::string label;
  std::function<Mat(const double* x)> eval;
  // Optional closed form for W(x)^alpha.
  std::function<Mat(const double* x, double alpha)> power;
  bool constant = false;

  Mat at(const double* x) const { return eval(x); }
  Mat pow_at(const double* x, double alpha) const;
};

MatrixWeight identity_weight(int n, int m);
MatrixWeight constant_weight(int n, const Mat& A);
// c |x|^a I_m; axis < 0 means the Euclidean norm, otherwise |x_axis|.
MatrixWeight scalar_power_weight(int n, int m, double a, int axis = -1, double c = 1.0);
// diag(|x|^{a_1}, ..., |x|^{a_m}).
MatrixWeight diag_power_weight(int n, const std::vector<double>& a, int axis = -1);
// Nearest-node lookup on a tensor grid. Rows are x_1..x_n followed by
// re, im of each matrix entry in row-major order.
MatrixWeight grid_weight(int n, int m, const std::vector<std::vector<double>>& rows,
                         std::string label = "grid");
MatrixWeight scaled(const MatrixWeight& W, double c);

// exp( avg_{y in outer} log avg_{x in inner} ||W^{1/p}(x) W^{-1/p}(y)||^p ).
double exp_log_double_average(const MatrixWeight& W, const Box& outer, const Box& inner, double p,
                              const QuadratureSpec& quad = {});
double apinf_cube_value(const MatrixWeight& W, const Cube& Q, double p,
                        const QuadratureSpec& quad = {});
struct ApinfReport {
  double value = 1.0;
  Cube argmax;
  std::size_t cubes = 0;
};
ApinfReport apinf_characteristic(const MatrixWeight& W, double p, const LatticeWindow& window,
                                 const QuadratureSpec& quad = {});

enum class DimSide { lower, upper };

struct DimensionRow {
  Cube base;
  double lambda = 1.0;
  double value = 1.0;
};

// Log-log slope estimator for the lower/upper dimension; labeled as an estimate.
struct DimensionEstimate {
  DimSide side = DimSide::lower;
  double d_hat = 0.0;       // max(raw, 0)
  double d_raw = 0.0;       // max slope over base cubes
  double residual = 0.0;    // rms residual of the fit at the argmax cube
  Cube argmax;
  std::vector<DimensionRow> table;
};

Box dilate(const Cube& Q, double lambda);
DimensionEstimate dimension_estimate(const MatrixWeight& W, double p, const LatticeWindow& window,
                                     const std::vector<double>& lambdas, DimSide side,
                                     const QuadratureSpec& quad = {},
                                     const std::vector<Cube>* base = nullptr);

struct EllipsoidFitSpec {
  int samples = 400;
  int holdout = 720;
  double tol = 1e-3;
  int max_iter = 200000;
  std::uint64_t seed = 12345;
};

struct ReducingOperator {
  Mat A;
  double ratio = 1.0;  // held-out c2/c1
  int iterations = 0;
};

// rho_Q(z) = (avg_Q |W^{1/p} z|^p)^{1/p}
double rho(const MatrixWeight& W, const Cube& Q, double p, const Vec& z,
           const QuadratureSpec& quad = {});
ReducingOperator reducing_operator(const MatrixWeight& W, const Cube& Q, double p,
                                   const EllipsoidFitSpec& fit = {},
                                   const QuadratureSpec& quad = {});

struct ReducingFamily {
  double p = 2.0;
  int m = 1;
  std::map<Cube, Mat> A;
  double ratio_bound = 1.0;
};

ReducingFamily build_reducing_family(const MatrixWeight& W, const std::vector<Cube>& cubes, double p,
                                     const EllipsoidFitSpec& fit = {},
                                     const QuadratureSpec& quad = {});

struct GrowthCertificate {
  double C = 0.0;
  std::pair<Cube, Cube> argmax;
};

GrowthCertificate reducing_growth_certificate(const ReducingFamily& fam,
                                              const std::vector<std::pair<Cube, Cube>>& pairs,
                                              double beta1, double beta2);
std::vector<std::pair<Cube, Cube>> all_pairs(const std::vector<Cube>& cubes);

// Deterministic unit directions in C^m.
std::vector<Vec> unit_directions(int m, int count, std::uint64_t seed);

}  // namespace dms

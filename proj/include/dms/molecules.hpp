#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dms/almostdiag.hpp"
#include "dms/lattice.hpp"
#include "dms/linalg.hpp"
#include "dms/seqspace.hpp"

namespace dms {

struct Brackets {
  long long strict_ceil;   // min k > r
  long long ceil;          // min k >= r
  long long strict_floor;  // max k < r
  long long floor;         // max k <= r
  double star;             // r - strict_floor, in (0, 1]
};

Brackets bracket_fns(double r);

// Real-valued function on R^n with optional exact partial derivatives.
struct SmoothFunction {
  int n = 1;
  std::function<double(const double* x)> f;
  std::function<double(const double* x, const std::vector<int>& gamma)> deriv;
  double support_radius = 1.0;  // sets the finite-difference step

  double operator()(const double* x) const { return f(x); }
  // Exact when deriv is set, otherwise Richardson-extrapolated central differences.
  double derivative(const double* x, const std::vector<int>& gamma) const;
};

struct MoleculeParams {
  double K = 0.0;
  double L = -1.0;
  double M = 0.0;
  double N = 0.0;
};

// Sampling grid around x_Q in units of l(Q).
struct MoleculeGrid {
  double radius = 8.0;
  int points = 801;  // per axis
  double moment_tol = 1e-6;
  std::vector<double> holder_steps = {1.0 / 64, 1.0 / 16, 1.0 / 4, 1.0};  // |x - y| / l(Q)
};

struct ConditionResult {
  bool checked = false;
  double ratio = 0.0;
  std::vector<double> worst_x;
};

struct MoleculeReport {
  ConditionResult cond[4];  // (i) decay, (ii) moments, (iii) derivatives, (iv) Hoelder
  double tol = 0.05;
  bool pass = false;
  // Smallest C with g / C satisfying (i), (iii), (iv) on the grid.
  double fitted_constant = 0.0;
  std::size_t points = 0;
};

// (u_M)_Q(x) = |Q|^{-1/2} (1 + |x - x_Q| / l(Q))^{-M}
double u_env(const Cube& Q, double M, const double* x);

MoleculeReport molecule_check(const SmoothFunction& g, const Cube& Q, const MoleculeParams& params,
                              const MoleculeGrid& grid = {}, double tol = 0.05);

enum class MoleculeKind { analysis, synthesis };

// Lower bounds for a molecule family: K > K_gt, L >= L_ge, M > M_gt, N > N_gt.
struct MoleculeBounds {
  MoleculeKind kind = MoleculeKind::synthesis;
  double K_gt = 0.0, L_ge = 0.0, M_gt = 0.0, N_gt = 0.0;
  Thresholds thr;

  MoleculeParams pick(double margin) const;
  bool satisfied_by(const MoleculeParams& p) const;
};

MoleculeBounds family_thresholds(const SpaceParams& params, double d_lower, double d_upper, MoleculeKind kind);

struct Atom {
  Cube Q;
  double L = -1.0, N = 0.0;
  double kappa = 1.0;                 // normalization of the unit-scale profile
  std::vector<std::vector<int>> exps;  // monomials of the polynomial factor
  std::vector<double> coef;
  SmoothFunction fn;
};

// C^inf bump on 3Q times a polynomial orthogonal to x^gamma, |gamma| <= L, scaled so
// |d^gamma a| <= |Q|^{-1/2 - |gamma|/n} for |gamma| <= N.
Atom make_atom(const Cube& Q, double L, double N);

struct AtomCheck {
  bool support_ok = false;
  double moment_residual = 0.0;
  double derivative_ratio = 0.0;  // max |d^gamma a| / |Q|^{-1/2-|gamma|/n}
  bool pass = false;
};

AtomCheck atom_check(const SmoothFunction& a, const Cube& Q, double L, double N, int points = 2001);

struct PsiAtomDecomposition {
  std::vector<Cube> P;
  std::vector<double> weight;  // (1 + |x_R - x_P| / l(R))^{-M}
  std::vector<double> norm;    // n_P with psi_R zeta_P = n_P t_P
  double C = 0.0;              // max n_P / w_P
  double C_lsq = 0.0;          // least-squares fit of psi_R against sum_P w_P t_P
  double truncation_residual = 0.0;  // sup |psi_R - sum_P n_P t_P|
};

// Partition of unity zeta_P over the cubes P with l(P) = l(R) in the band |k_P - k_R| <= radius.
PsiAtomDecomposition psi_atom_decomposition(const SmoothFunction& psiR, const Cube& R, double M, double N,
                                            int radius, int points = 2001);

}  // namespace dms

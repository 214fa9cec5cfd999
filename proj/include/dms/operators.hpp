#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dms/almostdiag.hpp"
#include "dms/growth.hpp"
#include "dms/lattice.hpp"
#include "dms/linalg.hpp"
#include "dms/matweight.hpp"
#include "dms/molecules.hpp"
#include "dms/seqspace.hpp"
#include "dms/wavelets.hpp"

namespace dms {

// ---- trace and extension ---------------------------------------------------

// (lambda', Q') -> ((lambda', 0), P(Q', k0)) with factor l(Q')^{1/2} / phi(-k0).
WaveletCoeffs ext_coeffs(const WaveletCoeffs& c, int k0, double phi_at_minus_k0);
WaveletCoeffs ext_coeffs(const WaveletCoeffs& c, const WaveletSystem& sys);

// Coefficients in the n-dim window of the slice f(x', 0), f = sum c theta_P.
// Terms with the last index outside the band [-M, M] vanish on the slice.
WaveletCoeffs trace_coeffs(const WaveletCoeffs& c, const WaveletSystem& sys, const LatticeWindow& window);

// Per-lambda split into coefficient sequences.
std::vector<std::pair<int, CoeffSequence>> split_by_lambda(const WaveletCoeffs& c);
WaveletCoeffs from_sequence(int lambda, const CoeffSequence& t);

enum class CompatDirection { trace, ext };

struct CompatScale {
  int j = 0;
  double C = 0.0;
  Cube argmax;
};

struct CompatCertificate {
  CompatDirection direction = CompatDirection::trace;
  double C = 0.0;
  double growth = 1.0;  // max_j C_j / min_j C_j
  std::vector<CompatScale> per_scale;
  std::size_t directions = 0;
};

// trace: int_{Q'} |V^{1/p} z|^p <= C 2^{j gamma} int_{P(Q',0)} |W^{1/p} z|^p
// ext:   2^{j gamma} int_{P(Q',0)} |W^{1/p} z|^p <= C int_{Q'} |V^{1/p} z|^p
// window is n-dimensional; V is n-dim, W is (n+1)-dim.
CompatCertificate weight_compat_certificate(const MatrixWeight& V, const MatrixWeight& W, double p, double gamma,
                                            const LatticeWindow& window, CompatDirection dir,
                                            int directions = 16, std::uint64_t seed = 7,
                                            const QuadratureSpec& quad = {});

struct TraceExperiment {
  SpaceParams source;       // dimension n + 1
  const MatrixWeight* W = nullptr;  // null: unweighted
  const MatrixWeight* V = nullptr;
  double gamma = 1.0;
  double d_upper_V = 0.0;
  const WaveletSystem* sys = nullptr;
  LatticeWindow window;     // n-dim target window; the source window is its lift
  QuadratureSpec quad;
};

struct TraceReport {
  SpaceParams target;
  RatioStats base, refined;
  double drift = 0.0;
  double threshold = 0.0;  // lower bound on s for boundedness
  bool below_threshold = false;
  std::string warning;
};

SpaceParams trace_target_params(const SpaceParams& source, double gamma);
// Smallest s for which the trace is bounded (E + gamma/p + d_upper/p).
double trace_s_threshold(const SpaceParams& source, double gamma, double d_upper_V);

// Source window of dimension n+1 whose slab covers every trace band.
LatticeWindow trace_source_window(const LatticeWindow& target, const WaveletSystem& sys);

double wavelet_norm(const WaveletCoeffs& c, const SpaceParams& params, const MatrixWeight* W,
                    const LatticeWindow& window, const QuadratureSpec& quad);
RatioStats trace_ratios(const TraceExperiment& exp, const LatticeWindow& window,
                        const std::vector<WaveletCoeffs>& ensemble);
std::vector<WaveletCoeffs> random_wavelet_ensemble(const LatticeWindow& source_window, int m, std::int64_t band,
                                                   const EnsembleSpec& spec);
TraceReport trace_norm_experiment(const TraceExperiment& exp, const EnsembleSpec& spec);

// ---- pseudo-differential operators (n = 1) ---------------------------------

struct SymbolHandle {
  std::string label;
  int eta = 0;
  std::function<cplx(double x, double xi)> eval;
  // d_xi^beta d_x^alpha theta; empty means central differences.
  std::function<cplx(double x, double xi, int alpha, int beta)> deriv;
  bool x_independent = false;

  cplx operator()(double x, double xi) const { return eval(x, xi); }
  cplx derivative(double x, double xi, int alpha, int beta) const;
};

SymbolHandle symbol_one();
SymbolHandle symbol_abs_power(int eta);  // |xi|^eta
SymbolHandle symbol_sin_abs();           // sin(x) |xi|
SymbolHandle operator+(const SymbolHandle& a, const SymbolHandle& b);

struct PsidoMesh {
  int per_octave = 1024;
};

// (T psi_Q)(x) = (2 pi)^{-1} int theta(x, xi) psi_Q-hat(xi) e^{i x xi} dxi on the annulus
// 2^{j-1} <= |xi| <= 2^{j+1}, trapezoid in log2 |xi|.
std::vector<cplx> psido_apply(const SymbolHandle& sym, const BandlimitedPair& pair, const Cube& Q,
                              const std::vector<double>& x, const PsidoMesh& mesh = {});
// r-th x-derivative of T psi_Q; exact for x-independent symbols.
double psido_derivative(const SymbolHandle& sym, const Cube& Q, double x, int r, const PsidoMesh& mesh = {});

struct PsidoMoleculeReport {
  std::vector<Cube> cubes;
  std::vector<MoleculeReport> reports;
  double constant = 0.0;  // max fitted constant
  double spread = 1.0;    // max / min fitted constant
  bool pass = false;
};

PsidoMoleculeReport psido_molecule_experiment(const SymbolHandle& sym, const BandlimitedPair& pair,
                                              const std::vector<Cube>& cubes, double M, double N,
                                              const MoleculeGrid& grid = {}, double spread_tol = 0.2,
                                              const PsidoMesh& mesh = {});

struct SymbolProbes {
  int x_points = 33;
  double x_lo = -4.0, x_hi = 4.0;
  int xi_points = 65;
  double xi_floor = 1.0 / 64, xi_ceil = 64.0;  // log-uniform |xi| on [floor, ceil], both signs
};

struct SymbolResidual {
  double value = 0.0;  // sup over (alpha, beta) and probes
  std::vector<double> per_index;  // row-major (alpha, beta)
  int alpha_cap = 0, beta_cap = 0;
};

// sup |xi|^{-eta - alpha + beta} |d_xi^beta d_x^alpha theta(x, xi)|
SymbolResidual symbol_class_residual(const SymbolHandle& sym, int eta, int alpha_cap, int beta_cap,
                                     const SymbolProbes& probes = {});

// ---- Calderon-Zygmund kernels ----------------------------------------------

struct KernelHandle {
  std::string label;
  int n = 1;
  std::function<double(const double* x, const double* y)> eval;
  // d_x^alpha d_y^beta K; empty means central differences.
  std::function<double(const double* x, const double* y, const std::vector<int>& alpha,
                       const std::vector<int>& beta)>
      deriv;
  // Translation-invariant odd profile k(z) with K(x, y) = k(x - y) (n = 1), used for
  // the near-diagonal splitting.
  std::function<double(double z)> odd_profile;

  double operator()(const double* x, const double* y) const { return eval(x, y); }
  double derivative(const double* x, const double* y, const std::vector<int>& alpha,
                    const std::vector<int>& beta) const;
};

KernelHandle hilbert_kernel();  // 1 / (x - y)
// (x_1 - y_1) / |x - y|^3 times exp(-|x - y|^2 / 16), n = 2.
KernelHandle riesz_type_kernel();

struct KernelProbes {
  int count = 10000;
  double r_min = 1.0 / 32, r_max = 8.0;  // |x - y|, log-uniform
  double box = 2.0;                        // x uniform in [-box, box]^n
  std::uint64_t seed = 2024;
};

struct KernelResidualRow {
  std::string condition;  // "i", "ii", "iii", "double"
  std::vector<int> alpha, beta;
  double C = 0.0;
  std::size_t probes = 0;
};

struct KernelResidualTable {
  double E = 0.0, F = 0.0;
  int sigma = 0;
  std::vector<KernelResidualRow> rows;
  double max_C = 0.0;

  const KernelResidualRow* find(const std::string& cond, const std::vector<int>& alpha) const;
};

KernelResidualTable czk_condition_residuals(const KernelHandle& K, double E, double F, int sigma,
                                            const KernelProbes& probes = {});

// Kernel requirements and the molecule parameters from the thresholds.
struct CzParams {
  Thresholds thr;
  int n = 1;
  int sigma_min = 0;
  double E_gt = 0.0, F_gt = 0.0;
  double G_ge = 0.0, H_ge = 0.0;
  MoleculeParams mol;  // K = M = F + n, L = F* - n/2, N inside its interval
  bool compliant = false;
  std::string violation;
};

CzParams czo_cz_params(const Thresholds& thr, double E, double F, int sigma, double G, double H);

struct AtomImageSpec {
  double F = 1.0;  // kernel y-regularity modeled through the atom moments L_atom = strict_floor(F)
  double atom_N = 2.0;
  std::vector<int> scales = {0, 1, 2};
  std::vector<double> far_radii = {16.0, 64.0, 256.0};  // in units of l(P)
  int far_samples = 64;
  double moment_radius = 400.0;
  int panels = 48;
  int nodes = 16;
  MoleculeGrid grid;
  double spread_tol = 0.2;
};

struct FarFieldFit {
  double K = 0.0;
  std::vector<double> radii;
  std::vector<double> C;  // sup over |x - c_P| in [R/2, R] of |T t_P| / u_K
  double growth = 1.0;    // C.back() / C.front()
  bool monotone_increasing = false;
  bool pass = false;      // every C within spread_tol of the first
};

struct AtomImageReport {
  CzParams cz;
  int atom_L = -1;
  std::vector<Cube> cubes;
  std::vector<MoleculeReport> reports;
  double constant = 0.0;
  double spread = 1.0;
  FarFieldFit far;
  double center_value = 0.0;      // T t_P(c_P) for an even atom
  double moment_residual = 0.0;   // |int T t_P| / int |T t_P| for an L = 1 atom
  bool pass = false;
};

// T(t)(x) for a 1-D atom t supported in [a, b], odd kernels only.
double czo_apply(const KernelHandle& K, const SmoothFunction& t, double a, double b, double x, int panels = 48,
                 int nodes = 16);

FarFieldFit far_field_fit(const KernelHandle& K, const Atom& atom, double Kdecay, const AtomImageSpec& spec);

AtomImageReport czo_atom_image_experiment(const KernelHandle& K, const Thresholds& thr, double E, int sigma,
                                          double G, double H, const AtomImageSpec& spec = {});

}  // namespace dms

#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "dms/lattice.hpp"
#include "dms/linalg.hpp"

namespace dms {

struct Filter {
  int k = 1;
  std::vector<double> h;  // scaling (lowpass), length 2k
  std::vector<double> g;  // wavelet, g_j = (-1)^j h_{2k-1-j}
};

// Daubechies filter with k vanishing moments (k = 1 is Haar).
Filter daubechies_filter(int k);
// max over l of |sum_j h_j h_{j-2l} - delta_{0l}|.
double orthonormality_residual(const Filter& f);

// Box-cascade samples at depth L: phi and psi are step functions on the grid
// 2^{-L}, entry i holding the value on [i 2^{-L}, (i+1) 2^{-L}).
struct Cascade {
  int k = 1;
  int levels = 0;
  std::vector<double> phi, psi;

  double step() const;
  double phi_integral() const;
};

Cascade cascade_samples(const Filter& f, int levels, const std::string& cache_dir = "");
// L^2 norm of phi_L - sqrt2 sum_j h_j phi_L(2 . - j).
double two_scale_residual(const Filter& f, const Cascade& c);

// Exact values of phi on the integers 0..2k-1.
std::vector<double> phi_at_integers(const Filter& f);

struct K0 {
  int k0 = 0;
  double phi_value = 1.0;  // phi(-k0)
};
K0 find_k0(const Filter& f, const Cascade& c);

// Tensor type index: bit i of lambda is lambda_i (1 selects psi in coordinate i).
struct WKey {
  int lambda = 0;
  Cube Q;

  auto operator<=>(const WKey&) const = default;
};

struct WaveletCoeffs {
  int n = 1;
  int m = 1;
  std::map<WKey, Vec> entries;

  void set(int lambda, const Cube& Q, const Vec& v);
  void set(int lambda, const Cube& Q, cplx v);
  std::size_t size() const { return entries.size(); }
};

WaveletCoeffs operator+(const WaveletCoeffs& a, const WaveletCoeffs& b);
WaveletCoeffs scaled(const WaveletCoeffs& c, cplx s);
double max_abs_diff(const WaveletCoeffs& a, const WaveletCoeffs& b);

// Daubechies system nested on a common grid: the 1-D factor at scale j is the
// box cascade of depth R - j, so every factor is a step function on 2^{-R}
// and the system is exactly orthonormal across scales.
class WaveletSystem {
 public:
  WaveletSystem(int k, int levels, int j_min, int j_max, const std::string& cache_dir = "");

  int k() const { return filter_.k; }
  int levels() const { return levels_; }
  int j_min() const { return j_min_; }
  int j_max() const { return j_max_; }
  int finest() const { return R_; }
  int depth(int j) const;
  const Filter& filter() const { return filter_; }
  double support() const { return 2.0 * filter_.k - 1.0; }
  // Band half-width M for the trace: supp theta in [0, 2k-1].
  int band() const { return 2 * filter_.k - 1; }
  const K0& k0() const { return k0_; }
  // Exact 1-D factor values at integers: e = 0 phi, e = 1 psi.
  double factor_at_integer(int e, std::int64_t i) const;

  const std::vector<double>& samples(int e, int depth) const;
  // 2^{j/2} theta^e(2^j x - a).
  double value_1d(int e, int j, std::int64_t a, double x) const;
  double inner_1d(int e1, int j1, std::int64_t a1, int e2, int j2, std::int64_t a2) const;
  double moment_1d(int e, int j, std::int64_t a, int gamma) const;
  // Integrals of the factor over the cells [c 2^{-G}, (c+1) 2^{-G}); returns the first c.
  std::int64_t cell_integrals_1d(int e, int j, std::int64_t a, int G, std::vector<double>& out) const;

  double inner(int lambda, const Cube& Q, int mu, const Cube& R) const;
  double moment(int lambda, const Cube& Q, const std::vector<int>& gamma) const;
  double value(int lambda, const Cube& Q, const std::vector<double>& x) const;

 private:
  Filter filter_;
  int levels_, j_min_, j_max_, R_;
  std::map<int, Cascade> by_depth_;
  K0 k0_;
  std::vector<double> phi_int_, psi_int_;
  mutable std::mutex mu_;
  mutable std::map<std::tuple<int, int, int, int, std::int64_t>, double> cache_;
};

std::vector<int> lambdas(int n);  // Lambda_n = {0,1}^n \ {0}

// Cell averages of an m-vector function on the grid 2^{-G} over the cells
// [lo_a, hi_a) (integer cell indices per axis).
struct SampledFunction {
  int n = 1;
  int m = 1;
  int G = 0;
  std::vector<std::int64_t> lo, hi;
  std::vector<Vec> values;  // row-major, last axis fastest

  std::size_t cells() const;
  std::size_t index(const std::vector<std::int64_t>& c) const;
  static SampledFunction zeros(int n, int m, int G, std::vector<std::int64_t> lo, std::vector<std::int64_t> hi);
  static SampledFunction from_function(int n, int m, int G, std::vector<std::int64_t> lo,
                                       std::vector<std::int64_t> hi,
                                       const std::function<Vec(const std::vector<double>&)>& f);
};

// <f, theta^(lambda)_Q> for every (lambda, Q) in the window; exact for step functions.
WaveletCoeffs analyze(const SampledFunction& f, const WaveletSystem& sys, const LatticeWindow& window,
                      double drop_below = 0.0);
SampledFunction synthesize(const WaveletCoeffs& c, const WaveletSystem& sys, int G,
                           const std::vector<std::int64_t>& lo, const std::vector<std::int64_t>& hi);
// Sample grid covering the supports of every window function.
void covering_cells(const WaveletSystem& sys, const LatticeWindow& window, int G, std::vector<std::int64_t>& lo,
                    std::vector<std::int64_t>& hi);

// phi-hat(xi) = b(log2 |xi|), b(u) = exp(1 - 1/(1 - u^2)) on (-1, 1).
struct BandlimitedPair {
  int per_octave = 1024;
  double xi_min = 0.25, xi_max = 4.0;
  std::vector<double> mesh;          // log-uniform |xi|
  std::vector<double> phi_hat_mesh;  // phi-hat on the mesh
  std::vector<double> psi_hat_mesh;

  static double phi_hat(double xi);
  static double psi_hat(double xi);
  // sum_j |phi-hat(2^j xi)|^2
  static double dilation_sum(double xi);
  double cond3_residual() const;
  // d^r/dx^r psi(x) = (1/pi) int_{1/2}^{2} psi-hat(xi) xi^r cos(x xi + r pi/2) dxi, trapezoid in log2 xi.
  static double psi(double x, int r = 0, int nodes = 2048);
  static double phi(double x, int r = 0, int nodes = 2048);
};

BandlimitedPair build_bandlimited_pair(int per_octave = 1024, double xi_min = 0.25, double xi_max = 4.0);

}  // namespace dms

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dms/lattice.hpp"
#include "dms/linalg.hpp"
#include "dms/matweight.hpp"
#include "dms/seqspace.hpp"

namespace dms {

struct AdEnvelope {
  double D = 0.0;
  double E = 0.0;
  double F = 0.0;
};

double udef_entry(const Cube& Q, const Cube& R, const AdEnvelope& env);

struct AdCertificate {
  AdEnvelope env;
  double C = 0.0;
};

// Sparse matrix indexed by (row Q, column R).
struct OperatorMatrix {
  int n = 1;
  std::map<Cube, std::map<Cube, cplx>> rows;
  std::optional<AdCertificate> cert;

  void set(const Cube& Q, const Cube& R, cplx v);
  cplx get(const Cube& Q, const Cube& R) const;
  std::size_t nnz() const;
  double max_abs() const;
  OperatorMatrix scaled(cplx c) const;
};

OperatorMatrix identity_operator(const std::vector<Cube>& cubes);
// u^{DEF} on every pair of the given cubes, times c.
OperatorMatrix udef_operator(const std::vector<Cube>& cubes, const AdEnvelope& env, double c = 1.0);

// Smallest C with |u_QR| <= C u^{DEF}_QR over the stored entries; attaches the certificate.
double certify(OperatorMatrix& U, const AdEnvelope& env);
double certify_value(const OperatorMatrix& U, const AdEnvelope& env);

enum class JCase { supercritical, critical, subcritical };
const char* to_string(JCase c);

struct JIndex {
  double J = 0.0;
  JCase label = JCase::subcritical;
  std::string clause;
};

JIndex j_index(Family fam, int n, double p, double q, double delta1, double delta2);

struct Thresholds {
  Family family = Family::B;
  int n = 1;
  double s = 0.0, p = 2.0, q = 2.0;
  double delta1 = 0.0, delta2 = 0.0, omega = 0.0;
  double d_lower = 0.0, d_upper = 0.0;

  double J = 0.0;
  double Delta = 0.0;
  double D_star = 0.0;
  double E_star = 0.0;
  double F_star = 0.0;
  JCase label = JCase::subcritical;
  std::string clause;

  // Recomputes the derived fields from the inputs above.
  void recompute();
  bool admits(const AdEnvelope& env) const;
  AdEnvelope above(double margin) const;
};

Thresholds thresholds(const SpaceParams& params, double d_lower, double d_upper);

struct ApplyResult {
  CoeffSequence t;
  double dropped_mass = 0.0;
  std::size_t dropped_entries = 0;
};

// Entries with |u| < cutoff * max|u| are skipped; their |u| |t_R| is summed into dropped_mass.
ApplyResult apply(const OperatorMatrix& U, const CoeffSequence& t, double cutoff = 1e-8);

// (U1 U2)_{QR} = sum over P in the window of u1_{QP} u2_{PR}. Certified against env_out,
// or against U1's envelope when env_out is absent.
OperatorMatrix compose(const OperatorMatrix& U1, const OperatorMatrix& U2, const LatticeWindow& window,
                       const std::optional<AdEnvelope>& env_out = std::nullopt);

struct EnsembleSpec {
  int N = 50;
  std::uint64_t seed = 20240601;
  double support_fraction = 1.0;  // chance that a window cube carries a coefficient
  bool redraw_on_refine = false;  // otherwise the base ensemble is reused on the finer window
};

std::vector<CoeffSequence> random_ensemble(const LatticeWindow& window, int m, const EnsembleSpec& spec);

struct RatioStats {
  double max = 0.0;
  double median = 0.0;
  double min = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;
  std::vector<double> ratios;
};

struct BoundednessReport {
  RatioStats base;
  RatioStats refined;
  double drift = 0.0;  // |max_refined / max_base - 1|
  double dropped_mass = 0.0;
};

using OperatorBuilder = std::function<OperatorMatrix(const LatticeWindow&)>;

// W == nullptr means the unweighted space.
RatioStats norm_ratios(const OperatorMatrix& U, const std::vector<CoeffSequence>& ens, const MatrixWeight* W,
                       const SpaceParams& params, const LatticeWindow& window, const QuadratureSpec& quad = {},
                       double cutoff = 1e-8, double* dropped = nullptr);

BoundednessReport empirical_boundedness(const OperatorBuilder& make_U, const MatrixWeight* W,
                                        const SpaceParams& params, const LatticeWindow& window,
                                        const EnsembleSpec& spec, const QuadratureSpec& quad = {},
                                        double cutoff = 1e-8);

}  // namespace dms

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "dms/almostdiag.hpp"
#include "dms/growth.hpp"
#include "dms/lattice.hpp"
#include "dms/matweight.hpp"
#include "dms/molecules.hpp"
#include "dms/operators.hpp"
#include "dms/seqspace.hpp"
#include "dms/wavelets.hpp"

namespace dms {

using json = nlohmann::ordered_json;

// Numbers, or the strings "inf" / "-inf".
double number_from_json(const json& j, const std::string& what);
json number_to_json(double v);

Family family_from_json(const json& j);
std::string to_string(Family f);

// {"kind": "identity" | "constant" | "scalar_power" | "diag_power" | "grid", ...}
MatrixWeight weight_from_json(const json& j, int n);
// {"kind": "constant" | "power" | "g_of_ell" | "weight_integral" | "table", ..., "class": {delta1, delta2, omega}}
GrowthFunction growth_from_json(const json& j, int n);
// {"family", "s", "p", "q", "n", "m", "growth"}
SpaceParams params_from_json(const json& j);
json params_to_json(const SpaceParams& p);

LatticeWindow window_from_json(const json& j);
// "j_min:j_max:R" for scales j_min..j_max on [-R, R)^n.
LatticeWindow window_from_string(const std::string& s, int n);
json window_to_json(const LatticeWindow& w);

Cube cube_from_json(const json& j);
json cube_to_json(const Cube& Q);
Vec vec_from_json(const json& j, int m);
json vec_to_json(const Vec& v);
// [{"j", "k", "v"}, ...]
CoeffSequence sequence_from_json(const json& j, int n, int m);
// [{"lambda", "j", "k", "v"}, ...]
WaveletCoeffs wavelet_coeffs_from_json(const json& j, int n, int m);
json wavelet_coeffs_to_json(const WaveletCoeffs& c);

AdEnvelope envelope_from_json(const json& j);
json envelope_to_json(const AdEnvelope& e);
json thresholds_to_json(const Thresholds& t);
json ratio_stats_to_json(const RatioStats& r);
json molecule_report_to_json(const MoleculeReport& r);
json kernel_table_to_json(const KernelResidualTable& t);
json quadrature_to_json(const QuadratureSpec& q);
QuadratureSpec quadrature_from_json(const json& j);

// {"kind": "one" | "abs_power" | "sin_abs", "eta"}
SymbolHandle symbol_from_json(const json& j);
// {"kind": "hilbert" | "riesz_type"}
KernelHandle kernel_from_json(const json& j);

}  // namespace dms

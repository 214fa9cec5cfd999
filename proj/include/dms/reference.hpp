#pragma once

#include "dms/almostdiag.hpp"
#include "dms/seqspace.hpp"

namespace dms {

// Serial brute-force counterparts of the parallel kernels, kept for testing
// and benchmarking.

// Sup over every window cube P of the mixed norm, integrated on the finest
// cell grid of the layers.
double reference_la_norm(const ScalarLayers& layers, const SpaceParams& params, const LatticeWindow& window);
double reference_sequence_norm(const CoeffSequence& t, const SpaceParams& params, const LatticeWindow& window);

ApplyResult reference_apply(const OperatorMatrix& U, const CoeffSequence& t, double cutoff = 1e-8);
OperatorMatrix reference_udef_operator(const std::vector<Cube>& cubes, const AdEnvelope& env, double c = 1.0);
double reference_certify_value(const OperatorMatrix& U, const AdEnvelope& env);

}  // namespace dms

// Parallel kernels against their serial reference implementations.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

#include "dms/almostdiag.hpp"
#include "dms/parallel.hpp"
#include "dms/reference.hpp"
#include "dms/seqspace.hpp"

using namespace dms;

namespace {

double seconds(const std::function<void()>& f, int reps) {
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) f();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / reps;
}

void row(const char* name, double par, double ser, double diff) {
  std::printf("%-18s parallel %9.4f s   serial %9.4f s   speedup %6.2fx   |diff| %.2e\n", name, par, ser,
              ser / par, diff);
}

}  // namespace

int main(int argc, char** argv) {
  set_thread_cap_from_env();
  const int reps = argc > 1 ? std::stoi(argv[1]) : 3;
  std::printf("threads: %d, reps: %d\n", max_threads(), reps);

  LatticeWindow w{1, 0, 5, -4.0, 4.0};
  EnsembleSpec es;
  es.N = 1;
  es.seed = 99;
  const auto t = random_ensemble(w, 1, es).front();
  for (auto fam : {Family::B, Family::F}) {
    const auto sp = make_params(fam, 0.5, 2.0, 2.0, 1, 1);
    const auto layers = unweighted_layers(t, sp.s);
    double a = 0, b = 0;
    double tp = seconds([&] { a = la_norm(layers, sp, w).value; }, reps);
    double ts = seconds([&] { b = reference_la_norm(layers, sp, w); }, reps);
    row(fam == Family::B ? "la_norm (b)" : "la_norm (f)", tp, ts, std::abs(a - b));
  }

  LatticeWindow wa{1, 0, 4, -2.0, 2.0};
  const auto cubes = wa.cubes();
  AdEnvelope env{2.0, 1.5, 1.5};
  OperatorMatrix U1, U2;
  double tp = seconds([&] { U1 = udef_operator(cubes, env); }, reps);
  double ts = seconds([&] { U2 = reference_udef_operator(cubes, env); }, reps);
  double d = 0;
  for (const auto& [Q, r] : U1.rows)
    for (const auto& [R, v] : r) d = std::max(d, std::abs(v - U2.get(Q, R)));
  row("udef_operator", tp, ts, d);

  const auto ta = random_ensemble(wa, 1, es).front();
  ApplyResult r1, r2;
  tp = seconds([&] { r1 = apply(U1, ta); }, reps);
  ts = seconds([&] { r2 = reference_apply(U1, ta); }, reps);
  d = 0;
  for (const auto& [Q, v] : r1.t.entries) d = std::max(d, (v - r2.t.entries.at(Q)).norm());
  row("apply", tp, ts, d);

  double c1 = 0, c2 = 0;
  tp = seconds([&] { c1 = certify_value(U1, env); }, reps);
  ts = seconds([&] { c2 = reference_certify_value(U1, env); }, reps);
  row("certify", tp, ts, std::abs(c1 - c2));
  return 0;
}

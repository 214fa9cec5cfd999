#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <vector>

#include "dms/parallel.hpp"
#include "dms/reference.hpp"

using namespace dms;

TEST_CASE("parallel_argmax breaks ties at the lowest index") {
  std::vector<double> v = {1, 5, 3, 5, 2, 5};
  auto r = parallel_argmax(v.size(), [&](std::size_t i) { return v[i]; });
  CHECK(r.value == 5);
  CHECK(r.index == 1);
  CHECK_FALSE(r.empty);
  auto e = parallel_argmax(0, [](std::size_t) { return 0.0; });
  CHECK(e.empty);
}

TEST_CASE("parallel_for visits every index once and rethrows") {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) CHECK(h.load() == 1);
  CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
                    if (i == 7) throw std::runtime_error("boom");
                  }),
                  std::runtime_error);
}

TEST_CASE("DMS_THREADS caps the thread count") {
  setenv("DMS_THREADS", "1", 1);
  set_thread_cap_from_env();
  CHECK(max_threads() == 1);
  unsetenv("DMS_THREADS");
}

TEST_CASE("parallel kernels match the serial reference") {
  LatticeWindow w{1, 0, 4, -2.0, 2.0};
  EnsembleSpec es;
  es.N = 4;
  es.seed = 17;
  es.support_fraction = 0.5;
  auto ens = random_ensemble(w, 2, es);
  for (auto fam : {Family::B, Family::F}) {
    for (double q : {1.0, 2.0, kInf}) {
      auto sp = make_params(fam, 0.3, 1.5, q, 1, 2);
      for (const auto& t : ens) {
        double a = sequence_norm(t, sp, w).value;
        double b = reference_sequence_norm(t, sp, w);
        CHECK(a == doctest::Approx(b).epsilon(1e-12));
      }
    }
  }
  AdEnvelope env{2.0, 1.5, 1.2};
  auto cubes = w.cubes();
  auto U = udef_operator(cubes, env, 0.7);
  auto V = reference_udef_operator(cubes, env, 0.7);
  CHECK(U.nnz() == V.nnz());
  double d = 0;
  for (const auto& [Q, row] : U.rows)
    for (const auto& [R, v] : row) d = std::max(d, std::abs(v - V.get(Q, R)));
  CHECK(d == 0.0);
  CHECK(certify_value(U, env) == reference_certify_value(U, env));
  for (const auto& t : ens) {
    auto a = apply(U, t, 1e-3);
    auto b = reference_apply(U, t, 1e-3);
    CHECK(a.dropped_entries == b.dropped_entries);
    CHECK(a.dropped_mass == doctest::Approx(b.dropped_mass).epsilon(1e-12));
    for (const auto& [Q, v] : a.t.entries) CHECK((v - b.t.entries.at(Q)).norm() <= 1e-12 * (1 + v.norm()));
  }
}

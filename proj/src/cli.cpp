#include "dms/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "dms/parallel.hpp"

#ifndef DMS_VERSION
#define DMS_VERSION "unknown"
#endif

namespace dms::cli {

namespace {

bool has(const json& j, const char* key) { return j.is_object() && j.contains(key); }

double num(const json& j, const char* key, double dflt) {
  return has(j, key) ? number_from_json(j.at(key), key) : dflt;
}

int integer(const json& j, const char* key, int dflt) {
  if (!has(j, key)) return dflt;
  if (!j.at(key).is_number_integer()) throw Error(std::string(key) + " must be an integer");
  return j.at(key).get<int>();
}

const json& need(const json& j, const char* key) {
  if (!has(j, key)) throw Error(std::string("spec is missing '") + key + "'");
  return j.at(key);
}

std::uint64_t seed_of(const json& spec) {
  const auto& s = need(spec, "seed");
  if (!s.is_number_unsigned() && !s.is_number_integer()) throw Error("seed must be a nonnegative integer");
  return s.get<std::uint64_t>();
}

bool ensemble_kind(const std::string& kind) { return kind == "adtest" || kind == "trace"; }

LatticeWindow window_of(const json& spec, int n, const std::optional<std::string>& override_) {
  LatticeWindow w = has(spec, "window") ? window_from_json(spec.at("window")) : LatticeWindow::standard(n);
  w.n = n;
  if (override_) w = window_from_string(*override_, n);
  w.validate();
  return w;
}

EnsembleSpec ensemble_of(const json& spec) {
  EnsembleSpec e;
  e.seed = seed_of(spec);
  if (has(spec, "ensemble")) {
    const auto& j = spec.at("ensemble");
    e.N = integer(j, "N", e.N);
    e.support_fraction = num(j, "support_fraction", e.support_fraction);
    if (has(j, "redraw_on_refine")) e.redraw_on_refine = j.at("redraw_on_refine").get<bool>();
  }
  if (e.N < 1) throw Error("ensemble.N must be positive");
  if (!(e.support_fraction > 0.0) || e.support_fraction > 1.0) throw Error("ensemble.support_fraction must lie in (0, 1]");
  return e;
}

json stats_json(const RatioStats& r) { return ratio_stats_to_json(r); }

Thresholds thresholds_of(const json& spec, const SpaceParams& sp) {
  return thresholds(sp, num(spec, "d_lower", 0.0), num(spec, "d_upper", 0.0));
}

void warn(Outcome& o, const std::string& msg) {
  o.warnings.push_back(msg);
  if (o.exit_code == 0) o.exit_code = 2;
}

std::vector<json> cube_row(const Cube& Q) {
  std::vector<json> r{Q.j};
  for (auto k : Q.k) r.push_back(k);
  return r;
}

std::vector<std::string> cube_cols(int n) {
  std::vector<std::string> c{"j"};
  for (int a = 0; a < n; ++a) c.push_back("k" + std::to_string(a));
  return c;
}

// ---- kinds -------------------------------------------------------------------

void run_norm(const json& spec, const std::optional<std::string>& wo, Outcome& o) {
  const auto sp = params_from_json(need(spec, "space"));
  const auto window = window_of(spec, sp.n, wo);
  const auto t = sequence_from_json(need(spec, "coefficients"), sp.n, sp.m);
  NormOptions opt;
  opt.breakdown = true;
  if (has(spec, "options")) {
    const auto& j = spec.at("options");
    if (has(j, "supercube")) opt.supercube = j.at("supercube").get<bool>();
    opt.supercube_upsilon = num(j, "supercube_upsilon", 1.0);
  }
  const auto quad = quadrature_from_json(has(spec, "quadrature") ? spec.at("quadrature") : json());
  NormReport rep;
  if (has(spec, "weight")) {
    const auto W = weight_from_json(spec.at("weight"), sp.n);
    rep = weighted_norm(t, W, sp, window, quad, opt);
  } else {
    rep = sequence_norm(t, sp, window, opt);
  }
  o.report["result"] = json{{"norm", rep.value},
                            {"best_P", rep.best_P ? cube_to_json(*rep.best_P) : json()},
                            {"supercube_best", rep.supercube_best},
                            {"candidates", rep.candidates},
                            {"window", window_to_json(window)},
                            {"quadrature", quadrature_to_json(quad)}};
  Table per_P{cube_cols(sp.n), {}};
  per_P.columns.push_back("value");
  std::map<int, double> curve;
  for (const auto& [P, v] : rep.per_P) {
    auto r = cube_row(P);
    r.push_back(v);
    per_P.rows.push_back(r);
    curve[P.j] = std::max(curve[P.j], v);
  }
  o.tables["per_P"] = per_P;
  Table c{{"j", "max_value"}, {}};
  for (const auto& [j, v] : curve) c.rows.push_back({j, v});
  o.tables["curve"] = c;
}

void run_adtest(const json& spec, const std::optional<std::string>& wo, Outcome& o) {
  const auto sp = params_from_json(need(spec, "space"));
  const auto window = window_of(spec, sp.n, wo);
  const auto ens = ensemble_of(spec);
  const auto thr = thresholds_of(spec, sp);
  const json op = has(spec, "operator") ? spec.at("operator") : json{{"kind", "identity"}};
  const std::string type = op.value("kind", op.value("type", std::string("identity")));
  const double c = num(op, "c", 1.0);
  AdEnvelope env = has(op, "envelope") ? envelope_from_json(op.at("envelope")) : thr.above(num(op, "margin", 0.5));
  if (type != "identity" && type != "udef") throw Error("operator.kind must be \"identity\" or \"udef\"");
  if (type == "udef" && !thr.admits(env)) warn(o, "envelope is not above the almost-diagonal thresholds");
  OperatorBuilder build = [&](const LatticeWindow& w) {
    return type == "identity" ? identity_operator(w.cubes()) : udef_operator(w.cubes(), env, c);
  };
  std::optional<MatrixWeight> W;
  if (has(spec, "weight")) W = weight_from_json(spec.at("weight"), sp.n);
  const auto quad = quadrature_from_json(has(spec, "quadrature") ? spec.at("quadrature") : json());
  const double cutoff = num(spec, "cutoff", 1e-8);
  auto rep = empirical_boundedness(build, W ? &*W : nullptr, sp, window, ens, quad, cutoff);
  auto U = build(window);
  double cert = certify_value(U, env);
  o.report["result"] = json{{"thresholds", thresholds_to_json(thr)},
                            {"envelope", envelope_to_json(env)},
                            {"certificate", cert},
                            {"base", stats_json(rep.base)},
                            {"refined", stats_json(rep.refined)},
                            {"drift", rep.drift},
                            {"dropped_mass", rep.dropped_mass},
                            {"cutoff", cutoff},
                            {"ensemble", {{"N", ens.N}, {"seed", ens.seed}, {"support_fraction", ens.support_fraction},
                                          {"redraw_on_refine", ens.redraw_on_refine}}},
                            {"window", window_to_json(window)},
                            {"quadrature", quadrature_to_json(quad)}};
  Table r{{"index", "base", "refined"}, {}};
  for (std::size_t i = 0; i < std::max(rep.base.ratios.size(), rep.refined.ratios.size()); ++i)
    r.rows.push_back({i, i < rep.base.ratios.size() ? json(rep.base.ratios[i]) : json(),
                      i < rep.refined.ratios.size() ? json(rep.refined.ratios[i]) : json()});
  o.tables["ratios"] = r;
  o.tables["curve"] = Table{{"j_max", "max_ratio", "median_ratio"},
                            {{window.j_max, rep.base.max, rep.base.median},
                             {window.j_max + 1, rep.refined.max, rep.refined.median}}};
}

void run_dims(const json& spec, const std::optional<std::string>& wo, Outcome& o) {
  const int n = integer(spec, "n", 1);
  const auto W = weight_from_json(need(spec, "weight"), n);
  const double p = num(spec, "p", 2.0);
  const auto window = window_of(spec, n, wo);
  std::vector<double> lams = {1.0, 2.0, 4.0, 8.0};
  if (has(spec, "lambdas")) {
    lams.clear();
    for (const auto& v : spec.at("lambdas")) lams.push_back(number_from_json(v, "lambdas"));
  }
  const auto quad = quadrature_from_json(has(spec, "quadrature") ? spec.at("quadrature") : json());
  json res = json::object();
  for (auto side : {DimSide::lower, DimSide::upper}) {
    auto est = dimension_estimate(W, p, window, lams, side, quad);
    const std::string name = side == DimSide::lower ? "lower" : "upper";
    res[name] = json{{"d_hat", est.d_hat},
                     {"d_raw", est.d_raw},
                     {"residual", est.residual},
                     {"argmax", cube_to_json(est.argmax)},
                     {"label", "estimate"}};
    Table t{cube_cols(n), {}};
    t.columns.push_back("lambda");
    t.columns.push_back("value");
    for (const auto& row : est.table) {
      auto r = cube_row(row.base);
      r.push_back(row.lambda);
      r.push_back(row.value);
      t.rows.push_back(r);
    }
    o.tables["dims_" + name] = t;
  }
  auto ap = apinf_characteristic(W, p, window, quad);
  res["apinf"] = json{{"value", ap.value}, {"argmax", cube_to_json(ap.argmax)}, {"cubes", ap.cubes}};
  res["window"] = window_to_json(window);
  res["quadrature"] = quadrature_to_json(quad);
  res["lambdas"] = lams;
  o.report["result"] = res;
}

struct TraceSetup {
  SpaceParams source;
  LatticeWindow window;  // n-dim
  std::optional<MatrixWeight> W, V;
  double gamma = 1.0;
  std::unique_ptr<WaveletSystem> sys;
  QuadratureSpec quad;
};

TraceSetup trace_setup(const json& spec, const std::optional<std::string>& wo) {
  TraceSetup s;
  s.source = params_from_json(need(spec, "space"));
  if (s.source.n < 2) throw Error("trace/ext space must be the (n+1)-dimensional source, n + 1 >= 2");
  const int n = s.source.n - 1;
  s.window = window_of(spec, n, wo);
  s.gamma = num(spec, "gamma", 1.0);
  const json wav = has(spec, "wavelet") ? spec.at("wavelet") : json{{"k", 1}};
  const int k = integer(wav, "k", 1), levels = integer(wav, "levels", 8);
  s.sys = std::make_unique<WaveletSystem>(k, levels, s.window.j_min, s.window.j_max + 1, wav.value("cache_dir", ""));
  if (has(spec, "W")) s.W = weight_from_json(spec.at("W"), n + 1);
  if (has(spec, "V")) s.V = weight_from_json(spec.at("V"), n);
  s.quad = quadrature_from_json(has(spec, "quadrature") ? spec.at("quadrature") : json());
  return s;
}

json compat_json(const CompatCertificate& c) {
  json per = json::array();
  for (const auto& s : c.per_scale) per.push_back(json{{"j", s.j}, {"C", s.C}, {"argmax", cube_to_json(s.argmax)}});
  return json{{"C", c.C}, {"growth", c.growth}, {"directions", c.directions}, {"per_scale", per}};
}

WaveletCoeffs random_target_coeffs(const LatticeWindow& w, int m, int count, std::mt19937_64& rng) {
  const auto cubes = w.cubes();
  const auto lams = lambdas(w.n);
  std::uniform_int_distribution<std::size_t> pick(0, cubes.size() - 1);
  std::uniform_int_distribution<std::size_t> pl(0, lams.size() - 1);
  std::normal_distribution<double> g(0.0, 1.0);
  WaveletCoeffs c;
  c.n = w.n;
  c.m = m;
  for (int i = 0; i < count; ++i) {
    Vec v(m);
    for (int a = 0; a < m; ++a) v(a) = cplx(g(rng), g(rng));
    c.set(lams[pl(rng)], cubes[pick(rng)], v);
  }
  return c;
}

void compat_block(const TraceSetup& s, json& res, Outcome& o) {
  const int n = s.window.n;
  const int m = s.W ? s.W->m : s.source.m;
  const auto W = s.W ? *s.W : identity_weight(n + 1, m);
  const auto V = s.V ? *s.V : identity_weight(n, m);
  auto tr = weight_compat_certificate(V, W, s.source.p, s.gamma, s.window, CompatDirection::trace, 16, 7, s.quad);
  auto ex = weight_compat_certificate(V, W, s.source.p, s.gamma, s.window, CompatDirection::ext, 16, 7, s.quad);
  res["compat_trace"] = compat_json(tr);
  res["compat_ext"] = compat_json(ex);
  const double span = std::ldexp(1.0, std::max(0, s.window.j_max - s.window.j_min - 1));
  if (tr.growth >= span) warn(o, "trace compatibility constant grows across scales (" + std::to_string(tr.growth) + ")");
  Table t{{"j", "C_trace", "C_ext"}, {}};
  for (std::size_t i = 0; i < tr.per_scale.size(); ++i)
    t.rows.push_back({tr.per_scale[i].j, tr.per_scale[i].C, ex.per_scale[i].C});
  o.tables["compat"] = t;
}

void run_trace(const json& spec, const std::optional<std::string>& wo, Outcome& o) {
  auto s = trace_setup(spec, wo);
  const auto ens = ensemble_of(spec);
  json res = json::object();
  compat_block(s, res, o);
  // Tr o Ext round trip on random single- and multi-coefficient inputs
  std::mt19937_64 rng(ens.seed);
  const int count = has(spec, "roundtrip") ? integer(spec.at("roundtrip"), "count", 20) : 20;
  double worst = 0.0;
  const int m = s.W ? s.W->m : s.source.m;
  for (int i = 0; i < count; ++i) {
    auto c = random_target_coeffs(s.window, m, i % 2 ? 5 : 1, rng);
    worst = std::max(worst, max_abs_diff(trace_coeffs(ext_coeffs(c, *s.sys), *s.sys, s.window), c));
  }
  res["roundtrip"] = json{{"inputs", count}, {"max_residual", worst}, {"tol", 1e-6}};
  TraceExperiment exp;
  exp.source = s.source;
  exp.W = s.W ? &*s.W : nullptr;
  exp.V = s.V ? &*s.V : nullptr;
  exp.gamma = s.gamma;
  exp.d_upper_V = num(spec, "d_upper_V", 0.0);
  exp.sys = s.sys.get();
  exp.window = s.window;
  exp.quad = s.quad;
  auto rep = trace_norm_experiment(exp, ens);
  if (rep.below_threshold) warn(o, rep.warning);
  res["experiment"] = json{{"target", params_to_json(rep.target)},
                           {"threshold_s", rep.threshold},
                           {"below_threshold", rep.below_threshold},
                           {"base", stats_json(rep.base)},
                           {"refined", stats_json(rep.refined)},
                           {"drift", rep.drift}};
  res["wavelet"] = json{{"k", s.sys->k()}, {"levels", s.sys->levels()}, {"band", s.sys->band()},
                        {"k0", s.sys->k0().k0}, {"phi_minus_k0", s.sys->k0().phi_value}};
  res["window"] = window_to_json(s.window);
  res["quadrature"] = quadrature_to_json(s.quad);
  o.report["result"] = res;
  Table r{{"index", "base", "refined"}, {}};
  for (std::size_t i = 0; i < std::max(rep.base.ratios.size(), rep.refined.ratios.size()); ++i)
    r.rows.push_back({i, i < rep.base.ratios.size() ? json(rep.base.ratios[i]) : json(),
                      i < rep.refined.ratios.size() ? json(rep.refined.ratios[i]) : json()});
  o.tables["ratios"] = r;
  o.tables["curve"] = Table{{"j_max", "max_ratio", "median_ratio"},
                            {{s.window.j_max, rep.base.max, rep.base.median},
                             {s.window.j_max + 1, rep.refined.max, rep.refined.median}}};
}

void run_ext(const json& spec, const std::optional<std::string>& wo, Outcome& o) {
  auto s = trace_setup(spec, wo);
  const int m = s.W ? s.W->m : s.source.m;
  const auto c = wavelet_coeffs_from_json(need(spec, "coefficients"), s.window.n, m);
  json res = json::object();
  compat_block(s, res, o);
  auto e = ext_coeffs(c, *s.sys);
  res["ext"] = wavelet_coeffs_to_json(e);
  res["roundtrip"] = json{{"max_residual", max_abs_diff(trace_coeffs(e, *s.sys, s.window), c)}, {"tol", 1e-6}};
  res["wavelet"] = json{{"k", s.sys->k()}, {"k0", s.sys->k0().k0}, {"phi_minus_k0", s.sys->k0().phi_value}};
  res["window"] = window_to_json(s.window);
  o.report["result"] = res;
}

void run_psido(const json& spec, const std::optional<std::string>& wo, Outcome& o) {
  (void)wo;
  const auto sym = symbol_from_json(need(spec, "symbol"));
  std::vector<int> scales = {0, 1, 2};
  if (has(spec, "scales")) scales = spec.at("scales").get<std::vector<int>>();
  if (scales.empty()) throw Error("psido needs at least one scale");
  PsidoMesh mesh;
  mesh.per_octave = integer(spec, "per_octave", 1024);
  MoleculeGrid grid;
  if (has(spec, "grid")) {
    grid.radius = num(spec.at("grid"), "radius", grid.radius);
    grid.points = integer(spec.at("grid"), "points", grid.points);
  }
  const double M = num(spec, "M", 3.0), N = num(spec, "N", 1.5);
  const auto pair = build_bandlimited_pair();
  std::vector<Cube> cubes;
  for (int j : scales) cubes.push_back(Cube(j, {0}));
  // identity symbol against the direct inverse transform
  double id = 0.0;
  {
    const auto one = symbol_one();
    for (const auto& Q : cubes) {
      std::vector<double> xs;
      for (int i = 0; i <= 64; ++i) xs.push_back(Q.corner()[0] + Q.side() * (-8.0 + 16.0 * i / 64));
      auto v = psido_apply(one, pair, Q, xs, mesh);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        double ref = std::sqrt(std::ldexp(1.0, Q.j)) * BandlimitedPair::psi(std::ldexp(xs[i], Q.j) - Q.k[0], 0, 4096);
        id = std::max(id, std::abs(v[i] - ref));
      }
    }
  }
  auto rep = psido_molecule_experiment(sym, pair, cubes, M, N, grid, 0.2, mesh);
  const json caps = has(spec, "caps") ? spec.at("caps") : json{{"alpha", 1}, {"beta", 1}};
  auto cls = symbol_class_residual(sym, sym.eta, integer(caps, "alpha", 1), integer(caps, "beta", 1));
  json reps = json::array();
  Table t{{"j", "fitted_constant", "pass"}, {}};
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    reps.push_back(molecule_report_to_json(rep.reports[i]));
    t.rows.push_back({cubes[i].j, rep.reports[i].fitted_constant, rep.reports[i].pass});
  }
  o.tables["molecule"] = t;
  o.report["result"] = json{{"symbol", sym.label},
                            {"eta", sym.eta},
                            {"identity_residual", id},
                            {"identity_tol", 1e-6},
                            {"molecule", {{"M", M}, {"N", N}, {"constant", rep.constant}, {"spread", rep.spread},
                                          {"spread_tol", 0.2}, {"pass", rep.pass}, {"reports", reps}}},
                            {"class_residual", {{"value", cls.value}, {"per_index", cls.per_index},
                                                {"alpha_cap", cls.alpha_cap}, {"beta_cap", cls.beta_cap}}},
                            {"mesh", {{"per_octave", mesh.per_octave}}},
                            {"grid", {{"radius", grid.radius}, {"points", grid.points}}}};
}

void run_czo(const json& spec, const std::optional<std::string>& wo, Outcome& o) {
  (void)wo;
  const auto K = kernel_from_json(need(spec, "kernel"));
  const double E = num(spec, "E", 2.0), F = num(spec, "F", 1.0);
  const int sigma = integer(spec, "sigma", 1);
  const double G = num(spec, "G", 0.0), H = num(spec, "H", 0.0);
  KernelProbes pr;
  pr.count = integer(spec, "probes", pr.count);
  pr.seed = has(spec, "seed") ? seed_of(spec) : pr.seed;
  auto tab = czk_condition_residuals(K, E, F, sigma, pr);
  json res = json{{"kernel", K.label}, {"residuals", kernel_table_to_json(tab)}};
  Table t{{"condition", "alpha", "beta", "C"}, {}};
  for (const auto& r : tab.rows) {
    std::ostringstream a, b;
    for (int v : r.alpha) a << v;
    for (int v : r.beta) b << v;
    t.rows.push_back({r.condition, a.str(), b.str(), r.C});
  }
  o.tables["kernel_residuals"] = t;
  if (has(spec, "space")) {
    const auto sp = params_from_json(spec.at("space"));
    const auto thr = thresholds_of(spec, sp);
    auto cz = czo_cz_params(thr, E, F, sigma, G, H);
    if (!cz.compliant) warn(o, "kernel parameters violate the Calderon-Zygmund molecule conditions: " + cz.violation);
    res["cz"] = json{{"thresholds", thresholds_to_json(thr)},
                     {"sigma_min", cz.sigma_min},
                     {"E_gt", cz.E_gt},
                     {"F_gt", cz.F_gt},
                     {"G_ge", cz.G_ge},
                     {"H_ge", cz.H_ge},
                     {"compliant", cz.compliant},
                     {"violation", cz.violation},
                     {"molecule", {{"K", cz.mol.K}, {"L", cz.mol.L}, {"M", cz.mol.M}, {"N", cz.mol.N}}}};
    if (K.n == 1 && K.odd_profile) {
      AtomImageSpec as;
      as.F = F;
      auto rep = czo_atom_image_experiment(K, thr, E, sigma, G, H, as);
      AtomImageSpec red = as;
      red.F = F - 1.0;
      auto far_red = far_field_fit(K, make_atom(rep.cubes.front(), bracket_fns(red.F).strict_floor, as.atom_N),
                                   rep.cz.mol.K, as);
      json reps = json::array();
      for (const auto& r : rep.reports) reps.push_back(molecule_report_to_json(r));
      auto far_json = [](const FarFieldFit& f) {
        return json{{"K", f.K}, {"radii", f.radii}, {"C", f.C}, {"growth", f.growth},
                    {"monotone_increasing", f.monotone_increasing}, {"pass", f.pass}};
      };
      res["atom_image"] = json{{"atom_L", rep.atom_L},
                               {"constant", rep.constant},
                               {"spread", rep.spread},
                               {"spread_tol", as.spread_tol},
                               {"reports", reps},
                               {"far_field", far_json(rep.far)},
                               {"far_field_reduced_F", far_json(far_red)},
                               {"center_value", rep.center_value},
                               {"moment_residual", rep.moment_residual},
                               {"moment_tol", 1e-4},
                               {"moment_radius", as.moment_radius},
                               {"pass", rep.pass}};
      Table f{{"radius", "C", "C_reduced_F"}, {}};
      for (std::size_t i = 0; i < rep.far.radii.size(); ++i)
        f.rows.push_back({rep.far.radii[i], rep.far.C[i], far_red.C[i]});
      o.tables["far_field"] = f;
    }
  }
  res["probes"] = json{{"count", pr.count}, {"r_min", pr.r_min}, {"r_max", pr.r_max}, {"seed", pr.seed}};
  o.report["result"] = res;
}

void run_wavelet_check(const json& spec, const std::optional<std::string>& wo, Outcome& o) {
  std::vector<int> ks = {1, 2, 3};
  if (has(spec, "k")) ks = spec.at("k").get<std::vector<int>>();
  const int levels = integer(spec, "levels", 10);
  const json wj = has(spec, "window") ? spec.at("window") : json{{"j_min", 0}, {"j_max", 2}, {"box", 2}};
  LatticeWindow w = window_from_json(wj);
  if (wo) w = window_from_string(*wo, w.n);
  json res = json::array();
  Table t{{"k", "orthonormality", "gram", "moments", "two_scale", "k0"}, {}};
  for (int k : ks) {
    WaveletSystem sys(k, levels, w.j_min, w.j_max, has(spec, "cache_dir") ? spec.at("cache_dir").get<std::string>() : "");
    const auto cubes = w.cubes();
    const auto lams = lambdas(w.n);
    std::vector<std::pair<int, Cube>> fns;
    for (const auto& Q : cubes)
      for (int l : lams) fns.push_back({l, Q});
    std::vector<double> row_worst(fns.size(), 0.0);
    parallel_for(fns.size(), [&](std::size_t a) {
      for (std::size_t b = a; b < fns.size(); ++b) {
        double v = sys.inner(fns[a].first, fns[a].second, fns[b].first, fns[b].second);
        row_worst[a] = std::max(row_worst[a], std::abs(v - (a == b ? 1.0 : 0.0)));
      }
    });
    double gram = *std::max_element(row_worst.begin(), row_worst.end());
    double mom = 0.0;
    for (const auto& [l, Q] : fns)
      for (int g = 0; g < k; ++g)
        for (int a = 0; a < w.n; ++a) {
          if (!((l >> a) & 1)) continue;
          std::vector<int> gam(w.n, 0);
          gam[a] = g;
          mom = std::max(mom, std::abs(sys.moment(l, Q, gam)));
        }
    const auto f = daubechies_filter(k);
    const double orth = orthonormality_residual(f);
    const double ts = two_scale_residual(f, cascade_samples(f, levels));
    res.push_back(json{{"k", k},
                       {"levels", levels},
                       {"orthonormality", orth},
                       {"gram", gram},
                       {"moments", mom},
                       {"two_scale", ts},
                       {"k0", sys.k0().k0},
                       {"phi_minus_k0", sys.k0().phi_value},
                       {"functions", fns.size()},
                       {"tol", 1e-6}});
    t.rows.push_back({k, orth, gram, mom, ts, sys.k0().k0});
  }
  o.tables["wavelets"] = t;
  o.report["result"] = json{{"systems", res}, {"window", window_to_json(w)}};
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

}  // namespace

int minimal_wavelet_order(const Thresholds& thr) {
  const double b = std::max(thr.E_star, thr.F_star) - thr.n / 2.0;
  return std::max(1, static_cast<int>(std::floor(b)) + 1);
}

std::vector<Diagnostic> validate(const std::string& kind, const json& spec) {
  std::vector<Diagnostic> d;
  auto err = [&](std::string m) { d.push_back({Diagnostic::error, std::move(m)}); };
  auto wrn = [&](std::string m) { d.push_back({Diagnostic::warning, std::move(m)}); };
  if (std::find(kKinds.begin(), kKinds.end(), kind) == kKinds.end()) {
    err("unknown experiment kind \"" + kind + "\"");
    return d;
  }
  if (!spec.is_object()) {
    err("spec must be a JSON object");
    return d;
  }
  if (has(spec, "kind") && spec.at("kind") != kind) err("spec kind \"" + spec.at("kind").dump() + "\" differs from \"" + kind + "\"");
  if (ensemble_kind(kind)) {
    if (!has(spec, "seed"))
      err("seed is mandatory for " + kind + " experiments");
    else if (!spec.at("seed").is_number_integer() || spec.at("seed").get<long long>() < 0)
      err("seed must be a nonnegative integer");
  }
  static const std::map<std::string, std::vector<const char*>> required = {
      {"norm", {"space", "coefficients"}}, {"adtest", {"space"}},  {"dims", {"weight"}},
      {"trace", {"space"}},                {"ext", {"space", "coefficients"}}, {"psido", {"symbol"}},
      {"czo", {"kernel"}},                 {"wavelet-check", {}}};
  for (const char* key : required.at(kind))
    if (!has(spec, key)) err(std::string("spec is missing '") + key + "'");
  std::optional<SpaceParams> sp;
  if (has(spec, "space")) {
    try {
      sp = params_from_json(spec.at("space"));
    } catch (const std::exception& e) {
      err(e.what());
    }
  }
  if (sp) {
    auto v = admissible_range_violation(sp->upsilon.cls, sp->n);
    if (!v.empty()) err("growth class outside the admissible range: " + v);
  }
  if (sp && has(spec, "wavelet") && (kind == "trace" || kind == "ext")) {
    try {
      const auto thr = thresholds_of(spec, *sp);
      const int kmin = minimal_wavelet_order(thr);
      const int k = integer(spec.at("wavelet"), "k", 1);
      const bool force = spec.at("wavelet").value("force", false);
      if (k < kmin) {
        std::string m = "wavelet order k = " + std::to_string(k) + " is below the minimal admissible order " +
                        std::to_string(kmin) + " (k > max(E* - n/2, F* - n/2) = " +
                        fmt(std::max(thr.E_star, thr.F_star) - thr.n / 2.0) + ")";
        if (force)
          wrn(m + "; forced");
        else
          err(m);
      }
    } catch (const std::exception& e) {
      err(e.what());
    }
  }
  if (sp && kind == "czo") {
    try {
      const auto thr = thresholds_of(spec, *sp);
      auto cz = czo_cz_params(thr, num(spec, "E", 2.0), num(spec, "F", 1.0), integer(spec, "sigma", 1),
                              num(spec, "G", 0.0), num(spec, "H", 0.0));
      if (!cz.compliant) wrn("kernel parameters violate the Calderon-Zygmund molecule conditions: " + cz.violation);
    } catch (const std::exception& e) {
      err(e.what());
    }
  }
  if (has(spec, "window")) {
    try {
      window_from_json(spec.at("window"));
    } catch (const std::exception& e) {
      err(e.what());
    }
  }
  return d;
}

Outcome run(const std::string& kind, const json& spec, const std::optional<std::string>& window_override) {
  Outcome o;
  o.report = json{{"version", DMS_VERSION}, {"kind", kind}};
  o.report["seed"] = has(spec, "seed") ? spec.at("seed") : json();
  o.report["spec"] = spec;
  if (window_override) o.report["window_override"] = *window_override;
  auto diags = validate(kind, spec);
  json dj = json::array();
  bool fatal = false;
  for (const auto& dg : diags) {
    dj.push_back(json{{"level", dg.level == Diagnostic::error ? "error" : "warning"}, {"message", dg.message}});
    if (dg.level == Diagnostic::error) fatal = true;
    else warn(o, dg.message);
  }
  o.report["diagnostics"] = dj;
  if (fatal) {
    o.exit_code = 1;
    o.report["error"] = "spec failed validation";
    return o;
  }
  try {
    if (kind == "norm") run_norm(spec, window_override, o);
    else if (kind == "adtest") run_adtest(spec, window_override, o);
    else if (kind == "dims") run_dims(spec, window_override, o);
    else if (kind == "trace") run_trace(spec, window_override, o);
    else if (kind == "ext") run_ext(spec, window_override, o);
    else if (kind == "psido") run_psido(spec, window_override, o);
    else if (kind == "czo") run_czo(spec, window_override, o);
    else run_wavelet_check(spec, window_override, o);
  } catch (const std::exception& e) {
    o.exit_code = 1;
    o.report["error"] = std::string(kind) + ": " + e.what();
    return o;
  }
  o.report["warnings"] = o.warnings;
  o.report["exit_code"] = o.exit_code;
  return o;
}

std::string to_csv(const Table& t) {
  std::ostringstream s;
  s.precision(17);
  for (std::size_t i = 0; i < t.columns.size(); ++i) s << (i ? "," : "") << t.columns[i];
  s << "\n";
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) s << ",";
      const auto& v = row[i];
      if (v.is_null()) continue;
      if (v.is_string()) s << v.get<std::string>();
      else if (v.is_number_float()) s << v.get<double>();
      else s << v.dump();
    }
    s << "\n";
  }
  return s.str();
}

void write_outputs(const Outcome& out, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(std::filesystem::path(dir) / "report.json") << out.report.dump(2) << "\n";
  for (const auto& [name, t] : out.tables) std::ofstream(std::filesystem::path(dir) / (name + ".csv")) << to_csv(t);
}

int main(int argc, char** argv) {
  set_thread_cap_from_env();
  CLI::App app{"dyadic matrix-weighted sequence space experiments"};
  app.require_subcommand(1, 1);
  std::string spec_path, out_dir, window;
  for (const auto& k : kKinds) {
    auto* sub = app.add_subcommand(k, "run a " + k + " experiment");
    sub->add_option("--spec", spec_path, "experiment spec (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory")->required();
    sub->add_option("--window", window, "window override j_min:j_max:box");
  }
  std::string vkind;
  auto* val = app.add_subcommand("validate", "check a spec without running it");
  val->add_option("kind", vkind, "experiment kind")->required();
  val->add_option("--spec", spec_path, "experiment spec (JSON)")->required()->check(CLI::ExistingFile);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  json spec;
  try {
    std::ifstream in(spec_path);
    spec = json::parse(in);
  } catch (const std::exception& e) {
    std::cerr << "error: cannot parse " << spec_path << ": " << e.what() << "\n";
    return 1;
  }
  if (val->parsed()) {
    auto d = validate(vkind, spec);
    int rc = 0;
    for (const auto& x : d) {
      std::cout << (x.level == Diagnostic::error ? "error: " : "warning: ") << x.message << "\n";
      rc = std::max(rc, x.level == Diagnostic::error ? 1 : 2);
    }
    if (rc == 2) return 2;
    return rc;
  }
  std::string kind;
  for (auto* s : app.get_subcommands()) kind = s->get_name();
  Outcome out = run(kind, spec, window.empty() ? std::optional<std::string>() : std::optional<std::string>(window));
  try {
    write_outputs(out, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: cannot write outputs to " << out_dir << ": " << e.what() << "\n";
    return 1;
  }
  for (const auto& d : out.report["diagnostics"])
    if (d["level"] == "error") std::cerr << "error: " << d["message"].get<std::string>() << "\n";
  for (const auto& w : out.warnings) std::cerr << "warning: " << w << "\n";
  if (out.report.contains("error")) std::cerr << "error: " << out.report["error"].get<std::string>() << "\n";
  return out.exit_code;
}

}  // namespace dms::cli

#include "dms/catalog.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace dms {

namespace {

const json& field(const json& j, const char* key, const std::string& ctx) {
  if (!j.is_object() || !j.contains(key)) throw Error(ctx + ": missing field '" + key + "'");
  return j.at(key);
}

double num_or(const json& j, const char* key, double dflt, const std::string& ctx) {
  if (!j.is_object() || !j.contains(key)) return dflt;
  return number_from_json(j.at(key), ctx + "." + key);
}

int int_or(const json& j, const char* key, int dflt, const std::string& ctx) {
  if (!j.is_object() || !j.contains(key)) return dflt;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw Error(ctx + "." + key + " must be an integer");
  return v.get<int>();
}

// "kind", with "type" accepted as an alias.
std::string type_of(const json& j, const std::string& ctx) {
  const char* key = j.is_object() && !j.contains("kind") && j.contains("type") ? "type" : "kind";
  const auto& t = field(j, key, ctx);
  if (!t.is_string()) throw Error(ctx + "." + key + " must be a string");
  return t.get<std::string>();
}

std::vector<std::vector<double>> read_csv_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> r;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        r.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (numeric && !r.empty()) rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace

double number_from_json(const json& j, const std::string& what) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  throw Error(what + " must be a number or \"inf\"");
}

json number_to_json(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  if (std::isnan(v)) return json("nan");
  return json(v);
}

Family family_from_json(const json& j) {
  if (!j.is_string()) throw Error("family must be \"b\" or \"f\"");
  auto s = j.get<std::string>();
  if (s == "b" || s == "B") return Family::B;
  if (s == "f" || s == "F") return Family::F;
  throw Error("family must be \"b\" or \"f\", got \"" + s + "\"");
}

std::string to_string(Family f) { return f == Family::B ? "b" : "f"; }

MatrixWeight weight_from_json(const json& j, int n) {
  const std::string ctx = "weight";
  const auto t = type_of(j, ctx);
  if (t == "identity") return identity_weight(n, int_or(j, "m", 1, ctx));
  if (t == "constant") {
    const auto& rows = field(j, "matrix", ctx);
    if (!rows.is_array() || rows.empty()) throw Error("weight.matrix must be a non-empty array");
    const int m = static_cast<int>(rows.size());
    Mat A(m, m);
    for (int r = 0; r < m; ++r) {
      if (!rows[r].is_array() || static_cast<int>(rows[r].size()) != m) throw Error("weight.matrix must be square");
      for (int c = 0; c < m; ++c) {
        const auto& e = rows[r][c];
        if (e.is_array() && e.size() == 2)
          A(r, c) = cplx(e[0].get<double>(), e[1].get<double>());
        else
          A(r, c) = number_from_json(e, "weight.matrix entry");
      }
    }
    return constant_weight(n, A);
  }
  if (t == "scalar_power")
    return scalar_power_weight(n, int_or(j, "m", 1, ctx), number_from_json(field(j, "a", ctx), "weight.a"),
                               int_or(j, "axis", -1, ctx), num_or(j, "c", 1.0, ctx));
  if (t == "diag_power") {
    const auto& a = field(j, "a", ctx);
    if (!a.is_array() || a.empty()) throw Error("weight.a must be a non-empty array");
    std::vector<double> ex;
    for (const auto& v : a) ex.push_back(number_from_json(v, "weight.a entry"));
    return diag_power_weight(n, ex, int_or(j, "axis", -1, ctx));
  }
  if (t == "grid") {
    const int m = int_or(j, "m", 1, ctx);
    std::vector<std::vector<double>> rows;
    if (j.contains("csv")) {
      rows = read_csv_rows(j.at("csv").get<std::string>());
    } else {
      for (const auto& r : field(j, "rows", ctx)) {
        std::vector<double> v;
        for (const auto& x : r) v.push_back(number_from_json(x, "weight.rows entry"));
        rows.push_back(std::move(v));
      }
    }
    return grid_weight(n, m, rows, j.value("label", std::string("grid")));
  }
  throw Error("unknown weight kind \"" + t + "\"");
}

GrowthFunction growth_from_json(const json& j, int n) {
  const std::string ctx = "growth";
  if (j.is_null()) return constant_growth(n);
  const auto t = type_of(j, ctx);
  GrowthFunction u;
  if (t == "constant")
    u = constant_growth(n, num_or(j, "c", 1.0, ctx));
  else if (t == "power")
    u = power_growth(n, number_from_json(field(j, "tau", ctx), "growth.tau"));
  else if (t == "g_of_ell")
    u = g_of_ell_growth(n, number_from_json(field(j, "p", ctx), "growth.p"));
  else if (t == "weight_integral")
    u = weight_integral_growth(weight_from_json(field(j, "weight", ctx), n),
                               quadrature_from_json(j.contains("quadrature") ? j.at("quadrature") : json()));
  else if (t == "table") {
    std::map<Cube, double> values;
    if (j.contains("csv")) {
      for (const auto& r : read_csv_rows(j.at("csv").get<std::string>())) {
        if (static_cast<int>(r.size()) != n + 2) throw Error("growth table rows must be j, k_1..k_n, value");
        std::vector<std::int64_t> k;
        for (int a = 0; a < n; ++a) k.push_back(static_cast<std::int64_t>(r[1 + a]));
        values[Cube(static_cast<int>(r[0]), k)] = r[n + 1];
      }
    } else {
      for (const auto& e : field(j, "values", ctx))
        values[cube_from_json(e)] = number_from_json(field(e, "value", ctx), "growth.values.value");
    }
    u = table_growth(n, values, j.value("label", std::string("table")));
  } else
    throw Error("unknown growth kind \"" + t + "\"");
  if (j.contains("class")) {
    const auto& c = j.at("class");
    u.cls.delta1 = num_or(c, "delta1", u.cls.delta1, "growth.class");
    u.cls.delta2 = num_or(c, "delta2", u.cls.delta2, "growth.class");
    u.cls.omega = num_or(c, "omega", u.cls.omega, "growth.class");
  }
  return u;
}

SpaceParams params_from_json(const json& j) {
  const std::string ctx = "space";
  SpaceParams sp;
  sp.family = family_from_json(field(j, "family", ctx));
  sp.s = num_or(j, "s", 0.0, ctx);
  sp.p = num_or(j, "p", 2.0, ctx);
  sp.q = num_or(j, "q", 2.0, ctx);
  sp.n = int_or(j, "n", 1, ctx);
  sp.m = int_or(j, "m", 1, ctx);
  if (sp.n < 1) throw Error("space.n must be positive");
  if (sp.m < 1) throw Error("space.m must be positive");
  sp.upsilon = growth_from_json(j.contains("growth") ? j.at("growth") : json(), sp.n);
  sp.validate();
  return sp;
}

json params_to_json(const SpaceParams& p) {
  return json{{"family", to_string(p.family)},
              {"s", p.s},
              {"p", number_to_json(p.p)},
              {"q", number_to_json(p.q)},
              {"n", p.n},
              {"m", p.m},
              {"growth",
               {{"label", p.upsilon.label},
                {"delta1", p.upsilon.cls.delta1},
                {"delta2", p.upsilon.cls.delta2},
                {"omega", p.upsilon.cls.omega}}}};
}

LatticeWindow window_from_json(const json& j) {
  const std::string ctx = "window";
  LatticeWindow w;
  w.n = int_or(j, "n", 1, ctx);
  w.j_min = int_or(j, "j_min", w.j_min, ctx);
  w.j_max = int_or(j, "j_max", w.j_max, ctx);
  if (j.contains("box")) {
    double R = number_from_json(j.at("box"), "window.box");
    w.lo = -R;
    w.hi = R;
  }
  w.lo = num_or(j, "lo", w.lo, ctx);
  w.hi = num_or(j, "hi", w.hi, ctx);
  w.validate();
  return w;
}

LatticeWindow window_from_string(const std::string& s, int n) {
  std::stringstream ss(s);
  std::string a, b, c;
  if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') || !std::getline(ss, c) || a.empty() || b.empty() ||
      c.empty())
    throw Error("--window must look like j_min:j_max:box, got \"" + s + "\"");
  LatticeWindow w;
  w.n = n;
  try {
    w.j_min = std::stoi(a);
    w.j_max = std::stoi(b);
    double R = std::stod(c);
    w.lo = -R;
    w.hi = R;
  } catch (const std::exception&) {
    throw Error("--window must look like j_min:j_max:box, got \"" + s + "\"");
  }
  w.validate();
  return w;
}

json window_to_json(const LatticeWindow& w) {
  return json{{"n", w.n}, {"j_min", w.j_min}, {"j_max", w.j_max}, {"lo", w.lo}, {"hi", w.hi}};
}

Cube cube_from_json(const json& j) {
  const auto& jj = field(j, "j", "cube");
  const auto& kk = field(j, "k", "cube");
  if (!jj.is_number_integer()) throw Error("cube.j must be an integer");
  if (!kk.is_array() || kk.empty()) throw Error("cube.k must be a non-empty integer array");
  std::vector<std::int64_t> k;
  for (const auto& v : kk) {
    if (!v.is_number_integer()) throw Error("cube.k entries must be integers");
    k.push_back(v.get<std::int64_t>());
  }
  return Cube(jj.get<int>(), k);
}

json cube_to_json(const Cube& Q) { return json{{"j", Q.j}, {"k", Q.k}}; }

Vec vec_from_json(const json& j, int m) {
  Vec v = Vec::Zero(m);
  if (j.is_number()) {
    v(0) = j.get<double>();
    return v;
  }
  if (!j.is_array()) throw Error("coefficient value must be a number or an array");
  // [re, im] for m = 1 is ambiguous with a 2-vector; entries are numbers or [re, im] pairs
  if (static_cast<int>(j.size()) != m) throw Error("coefficient vector has " + std::to_string(j.size()) +
                                                   " entries, expected " + std::to_string(m));
  for (int a = 0; a < m; ++a) {
    const auto& e = j[a];
    if (e.is_array() && e.size() == 2)
      v(a) = cplx(e[0].get<double>(), e[1].get<double>());
    else
      v(a) = number_from_json(e, "coefficient entry");
  }
  return v;
}

json vec_to_json(const Vec& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) {
    if (v(i).imag() == 0.0)
      a.push_back(v(i).real());
    else
      a.push_back(json::array({v(i).real(), v(i).imag()}));
  }
  return a;
}

CoeffSequence sequence_from_json(const json& j, int n, int m) {
  if (!j.is_array()) throw Error("coefficients must be an array");
  CoeffSequence t;
  t.n = n;
  t.m = m;
  for (const auto& e : j) {
    Cube Q = cube_from_json(e);
    if (Q.dim() != n) throw Error("coefficient cube " + to_string(Q) + " has the wrong dimension");
    t.set(Q, vec_from_json(field(e, "v", "coefficient"), m));
  }
  return t;
}

WaveletCoeffs wavelet_coeffs_from_json(const json& j, int n, int m) {
  if (!j.is_array()) throw Error("wavelet coefficients must be an array");
  WaveletCoeffs c;
  c.n = n;
  c.m = m;
  for (const auto& e : j) {
    Cube Q = cube_from_json(e);
    if (Q.dim() != n) throw Error("wavelet coefficient cube " + to_string(Q) + " has the wrong dimension");
    int lam = int_or(e, "lambda", 1, "wavelet coefficient");
    if (lam <= 0 || lam >= (1 << n)) throw Error("wavelet coefficient lambda outside Lambda_n");
    c.set(lam, Q, vec_from_json(field(e, "v", "wavelet coefficient"), m));
  }
  return c;
}

json wavelet_coeffs_to_json(const WaveletCoeffs& c) {
  json a = json::array();
  for (const auto& [key, v] : c.entries)
    a.push_back(json{{"lambda", key.lambda}, {"j", key.Q.j}, {"k", key.Q.k}, {"v", vec_to_json(v)}});
  return a;
}

AdEnvelope envelope_from_json(const json& j) {
  return AdEnvelope{number_from_json(field(j, "D", "envelope"), "envelope.D"),
                    number_from_json(field(j, "E", "envelope"), "envelope.E"),
                    number_from_json(field(j, "F", "envelope"), "envelope.F")};
}

json envelope_to_json(const AdEnvelope& e) { return json{{"D", e.D}, {"E", e.E}, {"F", e.F}}; }

json thresholds_to_json(const Thresholds& t) {
  return json{{"J", t.J},           {"Delta", t.Delta}, {"D_star", t.D_star}, {"E_star", t.E_star},
              {"F_star", t.F_star}, {"case", to_string(t.label)},
              {"clause", t.clause}, {"d_lower", t.d_lower}, {"d_upper", t.d_upper}};
}

json ratio_stats_to_json(const RatioStats& r) {
  return json{{"max", r.max}, {"median", r.median}, {"min", r.min}, {"used", r.used}, {"skipped", r.skipped}};
}

json molecule_report_to_json(const MoleculeReport& r) {
  static const char* names[4] = {"decay", "moments", "derivatives", "hoelder"};
  json c = json::object();
  for (int i = 0; i < 4; ++i)
    c[names[i]] = json{{"checked", r.cond[i].checked}, {"ratio", number_to_json(r.cond[i].ratio)}};
  return json{{"pass", r.pass},
              {"tol", r.tol},
              {"fitted_constant", number_to_json(r.fitted_constant)},
              {"points", r.points},
              {"conditions", c}};
}

json kernel_table_to_json(const KernelResidualTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows)
    rows.push_back(json{{"condition", r.condition},
                        {"alpha", r.alpha},
                        {"beta", r.beta},
                        {"C", number_to_json(r.C)},
                        {"probes", r.probes}});
  return json{{"E", t.E}, {"F", t.F}, {"sigma", t.sigma}, {"max_C", number_to_json(t.max_C)}, {"rows", rows}};
}

json quadrature_to_json(const QuadratureSpec& q) {
  return json{{"rule", q.rule == QuadRule::midpoint ? "midpoint" : "gauss_legendre"}, {"r", q.r}};
}

QuadratureSpec quadrature_from_json(const json& j) {
  QuadratureSpec q;
  if (j.is_null()) return q;
  if (j.contains("rule")) {
    auto r = j.at("rule").get<std::string>();
    if (r == "midpoint")
      q.rule = QuadRule::midpoint;
    else if (r == "gauss_legendre")
      q.rule = QuadRule::gauss_legendre;
    else
      throw Error("unknown quadrature rule \"" + r + "\"");
  }
  q.r = int_or(j, "r", q.r, "quadrature");
  if (q.r < 0 || q.r > 10) throw Error("quadrature.r must lie in [0, 10]");
  return q;
}

SymbolHandle symbol_from_json(const json& j) {
  const auto t = type_of(j, "symbol");
  if (t == "one") return symbol_one();
  if (t == "abs_power") return symbol_abs_power(int_or(j, "eta", 1, "symbol"));
  if (t == "sin_abs") return symbol_sin_abs();
  throw Error("unknown symbol type \"" + t + "\"");
}

KernelHandle kernel_from_json(const json& j) {
  const auto t = type_of(j, "kernel");
  if (t == "hilbert") return hilbert_kernel();
  if (t == "riesz_type") return riesz_type_kernel();
  throw Error("unknown kernel type \"" + t + "\"");
}

}  // namespace dms

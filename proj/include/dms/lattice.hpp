#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dms {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Q_{j,k} = 2^{-j}([0,1)^n + k).
struct Cube {
  int j = 0;
  std::vector<std::int64_t> k;

  Cube() = default;
  Cube(int j_, std::vector<std::int64_t> k_) : j(j_), k(std::move(k_)) {}

  int dim() const { return static_cast<int>(k.size()); }
  double side() const;
  double volume() const;
  // x_Q, the lower-left corner.
  std::vector<double> corner() const;
  std::vector<double> center() const;
  Cube parent() const;

  auto operator<=>(const Cube&) const = default;
};

std::string to_string(const Cube& Q);

// Half-open axis-aligned box [lo, hi).
struct Box {
  std::vector<double> lo, hi;

  int dim() const { return static_cast<int>(lo.size()); }
  double volume() const;
  bool contains(const Box& other) const;
  bool contains_point(const std::vector<double>& x) const;
  bool intersects(const Box& other) const;
};

Box cube_box(const Cube& Q);

double scaled_distance(const Cube& Q, const Cube& R);
// true iff R is a subset of Q.
bool contains(const Cube& Q, const Cube& R);
// P(Q', i) = Q' x [i l, (i+1) l).
Cube lift(const Cube& Qp, std::int64_t i);
Cube project(const Cube& P);
// E_{P(Q',i)} = Q' x [l(i+1/3), l(i+2/3)).
Box middle_band(const Cube& Qp, std::int64_t i);
// E_Q for a cube of any dimension: middle third in the last coordinate.
Box middle_band_of(const Cube& Q);

// Finite truncation of the dyadic lattice: scales j_min..j_max, cubes inside
// the region [lo, hi)^n, so k ranges over [lo 2^j, hi 2^j) at scale j.
struct LatticeWindow {
  int n = 1;
  int j_min = -3;
  int j_max = 6;
  double lo = -8.0;
  double hi = 8.0;

  static LatticeWindow standard(int n) { return LatticeWindow{n, -3, 6, -8.0, 8.0}; }

  void validate() const;
  std::int64_t k_begin(int j) const;
  std::int64_t k_end(int j) const;
  bool contains(const Cube& Q) const;
  bool contains_box(const Box& B) const;
  std::vector<Cube> cubes(int j) const;
  std::vector<Cube> cubes() const;
  std::size_t count() const;
  LatticeWindow refined() const;
  LatticeWindow with_dim(int dim) const;
  Box region() const;
};

struct Shadow {
  Cube cube;
  // l(shadow)/l(R)
  double side_ratio = 1.0;
};

// Smallest dyadic (n+1)-cube containing P(S,i) for every dyadic S inside R.
// Throws when a window is given and the covering cube leaves it.
Shadow shadow_cube(const Cube& R, std::int64_t i, const LatticeWindow* window = nullptr);

}  // namespace dms

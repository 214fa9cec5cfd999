#include "dms/linalg.hpp"

#include <cmath>
#include <string>

#include "dms/lattice.hpp"

namespace dms {

EigenDecomposition jacobi_eigh(const Mat& A0, double tol, int max_sweeps) {
  const Eigen::Index m = A0.rows();
  if (A0.cols() != m) throw Error("jacobi_eigh needs a square matrix");
  Mat A = hermitian_part(A0);
  Mat V = Mat::Identity(m, m);
  const double scale = std::max(A.norm(), 1e-300);
  auto off = [&] {
    double s = 0.0;
    for (Eigen::Index p = 0; p < m; ++p)
      for (Eigen::Index q = 0; q < m; ++q)
        if (p != q) s += std::norm(A(p, q));
    return std::sqrt(s);
  };
  int sweep = 0;
  while (off() > tol * scale) {
    if (++sweep > max_sweeps) throw Error("jacobi_eigh: sweep cap reached");
    for (Eigen::Index p = 0; p < m; ++p) {
      for (Eigen::Index q = p + 1; q < m; ++q) {
        cplx b = A(p, q);
        double r = std::abs(b);
        if (r == 0.0) continue;
        cplx phase = b / r;
        double a = A(p, p).real(), d = A(q, q).real();
        double theta = 0.5 * std::atan2(2.0 * r, d - a);
        double c = std::cos(theta), s = std::sin(theta);
        // G = diag(1, conj(phase)) * [[c, s], [-s, c]] acting on columns p, q.
        cplx gpp = c, gpq = s, gqp = -s * std::conj(phase), gqq = c * std::conj(phase);
        for (Eigen::Index i = 0; i < m; ++i) {
          cplx xp = A(i, p), xq = A(i, q);
          A(i, p) = xp * gpp + xq * gqp;
          A(i, q) = xp * gpq + xq * gqq;
        }
        for (Eigen::Index i = 0; i < m; ++i) {
          cplx xp = A(p, i), xq = A(q, i);
          A(p, i) = std::conj(gpp) * xp + std::conj(gqp) * xq;
          A(q, i) = std::conj(gpq) * xp + std::conj(gqq) * xq;
        }
        A(p, q) = 0.0;
        A(q, p) = 0.0;
        A(p, p) = A(p, p).real();
        A(q, q) = A(q, q).real();
        for (Eigen::Index i = 0; i < m; ++i) {
          cplx xp = V(i, p), xq = V(i, q);
          V(i, p) = xp * gpp + xq * gqp;
          V(i, q) = xp * gpq + xq * gqq;
        }
      }
    }
  }
  EigenDecomposition out;
  out.sweeps = sweep;
  out.values.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) out.values[i] = A(i, i).real();
  // insertion sort keeps the column order deterministic
  out.vectors = V;
  for (Eigen::Index i = 1; i < m; ++i)
    for (Eigen::Index t = i; t > 0 && out.values[t] < out.values[t - 1]; --t) {
      std::swap(out.values[t], out.values[t - 1]);
      out.vectors.col(t).swap(out.vectors.col(t - 1));
    }
  return out;
}

Mat hermitian_part(const Mat& A) { return 0.5 * (A + A.adjoint()); }

bool is_hermitian(const Mat& A, double rel_tol) {
  if (A.rows() != A.cols()) return false;
  return (A - A.adjoint()).norm() <= rel_tol * std::max(A.norm(), 1e-300);
}

void require_hpd(const Mat& A, const char* what) {
  if (!is_hermitian(A)) throw Error(std::string(what) + " is not Hermitian");
  auto e = jacobi_eigh(A);
  if (!(e.values[0] > 0.0)) throw Error(std::string(what) + " is not positive definite");
}

Mat mat_power(const Mat& A, double alpha) {
  const Eigen::Index m = A.rows();
  if (m == 1) {
    double a = A(0, 0).real();
    if (!(a > 0.0)) throw Error("mat_power: input is not positive definite");
    Mat out(1, 1);
    out(0, 0) = std::pow(a, alpha);
    return out;
  }
  auto e = jacobi_eigh(A);
  if (!(e.values[0] > 0.0)) throw Error("mat_power: input is not positive definite");
  Eigen::VectorXd lam(m);
  for (Eigen::Index i = 0; i < m; ++i) lam[i] = std::pow(e.values[i], alpha);
  return e.vectors * lam.cast<cplx>().asDiagonal() * e.vectors.adjoint();
}

double op_norm(const Mat& A) {
  if (A.rows() == 1 && A.cols() == 1) return std::abs(A(0, 0));
  auto e = jacobi_eigh(A.adjoint() * A);
  return std::sqrt(std::max(e.values[e.values.size() - 1], 0.0));
}

}  // namespace dms

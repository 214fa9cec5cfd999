#pragma once

#include <Eigen/Dense>
#include <complex>

namespace dms {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

struct EigenDecomposition {
  Eigen::VectorXd values;  // ascending
  Mat vectors;             // columns
  int sweeps = 0;
};

// Cyclic Jacobi for Hermitian input; sweeps over (p,q) in row-major order
// until the off-diagonal Frobenius norm is below tol * ||A||_F.
EigenDecomposition jacobi_eigh(const Mat& A, double tol = 1e-13, int max_sweeps = 100);

Mat hermitian_part(const Mat& A);
bool is_hermitian(const Mat& A, double rel_tol = 1e-12);
// Throws unless A is Hermitian (relative 1e-12) with all eigenvalues > 0.
void require_hpd(const Mat& A, const char* what = "matrix");

// A^alpha = U diag(lambda^alpha) U^*.
Mat mat_power(const Mat& A, double alpha);
// Largest singular value.
double op_norm(const Mat& A);

}  // namespace dms

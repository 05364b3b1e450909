#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace lmqst {

using cplx = std::complex<double>;

/// Dense row-major complex matrix. Small sizes only (at most 2^12 square);
/// used for effects, density matrices and the Hermitian eigensolver.
class ComplexMatrix {
 public:
  ComplexMatrix() = default;
  ComplexMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols) {}

  static ComplexMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  cplx& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const cplx& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::vector<cplx>& data() { return data_; }
  const std::vector<cplx>& data() const { return data_; }

  ComplexMatrix adjoint() const;
  cplx trace() const;
  double frobenius_norm() const;
  /// Max |a_ij - conj(a_ji)| over all pairs.
  double hermiticity_defect() const;
  bool is_hermitian(double tol = 1e-10) const { return hermiticity_defect() <= tol; }

  ComplexMatrix& operator+=(const ComplexMatrix& other);
  ComplexMatrix& operator-=(const ComplexMatrix& other);
  ComplexMatrix& operator*=(cplx s);

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<cplx> data_;
};

ComplexMatrix operator+(ComplexMatrix a, const ComplexMatrix& b);
ComplexMatrix operator-(ComplexMatrix a, const ComplexMatrix& b);
ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix operator*(cplx s, ComplexMatrix a);

ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b);

struct HermitianEig {
  std::vector<double> eigenvalues;  // ascending
  ComplexMatrix eigenvectors;       // k-th column pairs with eigenvalues[k]
};

/// Cyclic Jacobi diagonalization; A = V diag(w) V^dagger. Input must be
/// Hermitian to 1e-10 or an invalid_argument is thrown. Chosen for
/// simplicity over speed; fine for the matrix sizes in this project.
HermitianEig hermitian_eig(const ComplexMatrix& a);

/// True iff a + shift*I admits a Cholesky factorization, i.e. the Hermitian
/// matrix is positive semidefinite down to -shift. Cheaper than a full
/// eigensolve for validation of large density matrices.
bool cholesky_psd_check(const ComplexMatrix& a, double shift);

}  // namespace lmqst

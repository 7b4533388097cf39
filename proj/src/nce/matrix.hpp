#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace nce {

using Vector = std::vector<double>;

/// Dense row-major matrix. Dimensions in this library never exceed a few
/// dozen, so every operation is a plain loop.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> diag);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return entries_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return entries_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return entries_[i * cols_ + j]; }

  std::span<double> data() { return entries_; }
  std::span<const double> data() const { return entries_; }

  Matrix transpose() const;
  Vector row(std::size_t i) const;
  Vector diag() const;

  /// |M[i,j] - M[j,i]| <= tol * (1 + |M[i,j]|) for all i, j.
  bool is_symmetric(double tol = 1e-10) const;
  /// Replaces M with (M + M^T) / 2.
  void symmetrize();

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector entries_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);
Matrix operator*(const Matrix& a, const Matrix& b);
Vector operator*(const Matrix& a, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
Matrix outer(std::span<const double> a, std::span<const double> b);

/// Max absolute row sum.
double norm_inf(const Matrix& m);
double norm_frobenius(const Matrix& m);
double max_abs(const Matrix& m);

/// Lower Cholesky factor L with M = L L^T. Throws NotPositiveDefinite when
/// a pivot falls to 1e-12 or below.
Matrix cholesky(const Matrix& m);
Matrix cholesky_inverse(const Matrix& m);
/// Solves M x = b for symmetric positive-definite M.
Vector cholesky_solve(const Matrix& m, std::span<const double> b);

/// Eigenvalues of a symmetric matrix in ascending order (cyclic Jacobi).
Vector symmetric_eigenvalues(const Matrix& m);
double min_eigenvalue(const Matrix& m);

}  // namespace nce

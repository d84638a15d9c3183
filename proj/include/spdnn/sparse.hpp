#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <vector>

#include "spdnn/error.hpp"

namespace spdnn {

using Vec = Eigen::VectorXd;

/// Weight matrix of one layer. Row-major Eigen sparse in compressed mode is
/// plain CSR: outerIndexPtr() holds the row offsets, innerIndexPtr() the
/// column indices (strictly increasing within a row), valuePtr() the values.
using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// One nonzero, 0-indexed. The exchange format between builders, file I/O
/// and tests.
struct Entry {
  int row = 0;
  int col = 0;
  double value = 0.0;

  friend bool operator==(const Entry&, const Entry&) = default;
};

/// Builds a compressed matrix after validating: indices in range, values
/// finite, no duplicate coordinates. Entries may arrive in any order.
SpMat csr_from_entries(int n_rows, int n_cols, std::vector<Entry> entries);

/// Nonzeros in (row, col) order.
std::vector<Entry> to_entries(const SpMat& m);

/// Pattern and values identical bit for bit.
bool exact_equal(const SpMat& a, const SpMat& b);

/// z = W x. Each output entry accumulates its row's products in ascending
/// column order; callers rely on that order for reproducibility.
Vec spmv(const SpMat& w, const Vec& x);

/// Rows of a partial transpose product, sorted ascending, no duplicates.
struct SparseContribution {
  std::vector<int> index;
  std::vector<double> value;

  std::size_t size() const { return index.size(); }
};

/// Local half of s = W^T d for a row block: contribution at column j is the
/// sum over the block's rows i (ascending) of W(i,j) * d(i). Only columns
/// with at least one nonzero in the block appear. `local_rows` are the
/// global ids of the block's rows, strictly increasing, one per block row.
SparseContribution spmv_transpose_contrib(const SpMat& block,
                                          const Vec& delta_local,
                                          const std::vector<int>& local_rows);

/// Elementwise logistic function, evaluated in the overflow-free form.
/// Output stays finite for any finite input.
Vec sigmoid(const Vec& z);

/// Elementwise f(z) * (1 - f(z)) with f the logistic function.
Vec sigmoid_deriv(const Vec& z);

/// (1/n) * sum((x - y)^2).
double mse_loss(const Vec& x, const Vec& y);

/// Gradient of mse_loss with respect to x: (2/n) * (x - y).
Vec mse_grad(const Vec& x, const Vec& y);

/// W(j,i) -= eta * delta(j) * x_prev(i) for every stored nonzero. The outer
/// product is restricted to the existing pattern; no entry is ever inserted
/// or removed.
void gradient_update(SpMat& w, const Vec& delta, const Vec& x_prev,
                     double eta);

}  // namespace spdnn

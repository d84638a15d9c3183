#include "spdnn/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace spdnn {

SpMat csr_from_entries(int n_rows, int n_cols, std::vector<Entry> entries) {
  if (n_rows < 0 || n_cols < 0)
    throw DataError("csr_from_entries: negative dimensions");
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Entry& e = entries[i];
    if (e.row < 0 || e.row >= n_rows || e.col < 0 || e.col >= n_cols)
      throw DataError("csr_from_entries: index (" + std::to_string(e.row) +
                      "," + std::to_string(e.col) + ") out of range");
    if (!std::isfinite(e.value))
      throw DataError("csr_from_entries: non-finite value at (" +
                      std::to_string(e.row) + "," + std::to_string(e.col) +
                      ")");
    if (i > 0 && entries[i - 1].row == e.row && entries[i - 1].col == e.col)
      throw DataError("csr_from_entries: duplicate coordinate (" +
                      std::to_string(e.row) + "," + std::to_string(e.col) +
                      ")");
  }

  SpMat m(n_rows, n_cols);
  Eigen::VectorXi per_row = Eigen::VectorXi::Zero(n_rows);
  for (const Entry& e : entries) ++per_row[e.row];
  m.reserve(per_row);
  for (const Entry& e : entries) m.insert(e.row, e.col) = e.value;
  m.makeCompressed();
  return m;
}

std::vector<Entry> to_entries(const SpMat& m) {
  std::vector<Entry> out;
  out.reserve(static_cast<std::size_t>(m.nonZeros()));
  for (int r = 0; r < m.outerSize(); ++r)
    for (SpMat::InnerIterator it(m, r); it; ++it)
      out.push_back({r, static_cast<int>(it.col()), it.value()});
  return out;
}

bool exact_equal(const SpMat& a, const SpMat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols() ||
      a.nonZeros() != b.nonZeros())
    return false;
  const auto nnz = a.nonZeros();
  if (std::memcmp(a.outerIndexPtr(), b.outerIndexPtr(),
                  sizeof(SpMat::StorageIndex) * (a.outerSize() + 1)) != 0)
    return false;
  if (nnz == 0) return true;
  return std::memcmp(a.innerIndexPtr(), b.innerIndexPtr(),
                     sizeof(SpMat::StorageIndex) * nnz) == 0 &&
         std::memcmp(a.valuePtr(), b.valuePtr(), sizeof(double) * nnz) == 0;
}

Vec spmv(const SpMat& w, const Vec& x) {
  if (x.size() != w.cols())
    throw DataError("spmv: vector length " + std::to_string(x.size()) +
                    " != matrix cols " + std::to_string(w.cols()));
  Vec z = Vec::Zero(w.rows());
  for (int r = 0; r < w.rows(); ++r) {
    double acc = 0.0;
    for (SpMat::InnerIterator it(w, r); it; ++it)
      acc += it.value() * x[it.col()];
    z[r] = acc;
  }
  return z;
}

SparseContribution spmv_transpose_contrib(const SpMat& block,
                                          const Vec& delta_local,
                                          const std::vector<int>& local_rows) {
  if (delta_local.size() != block.rows())
    throw DataError("spmv_transpose_contrib: delta length " +
                    std::to_string(delta_local.size()) + " != block rows " +
                    std::to_string(block.rows()));
  if (static_cast<Eigen::Index>(local_rows.size()) != block.rows())
    throw DataError("spmv_transpose_contrib: local_rows size mismatch");
  for (std::size_t i = 1; i < local_rows.size(); ++i)
    if (local_rows[i - 1] >= local_rows[i])
      throw DataError("spmv_transpose_contrib: local_rows not increasing");

  // Scatter into a dense accumulator; per column this adds the block's rows
  // in ascending order.
  Vec acc = Vec::Zero(block.cols());
  std::vector<char> touched(static_cast<std::size_t>(block.cols()), 0);
  for (int r = 0; r < block.rows(); ++r) {
    const double d = delta_local[r];
    for (SpMat::InnerIterator it(block, r); it; ++it) {
      acc[it.col()] += it.value() * d;
      touched[static_cast<std::size_t>(it.col())] = 1;
    }
  }
  SparseContribution out;
  for (int c = 0; c < block.cols(); ++c)
    if (touched[static_cast<std::size_t>(c)]) {
      out.index.push_back(c);
      out.value.push_back(acc[c]);
    }
  return out;
}

namespace {

double sigmoid_scalar(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Vec sigmoid(const Vec& z) {
  return z.unaryExpr([](double v) { return sigmoid_scalar(v); });
}

Vec sigmoid_deriv(const Vec& z) {
  return z.unaryExpr([](double v) {
    const double f = sigmoid_scalar(v);
    return f * (1.0 - f);
  });
}

double mse_loss(const Vec& x, const Vec& y) {
  if (x.size() != y.size()) throw DataError("mse_loss: length mismatch");
  const double n = static_cast<double>(x.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  return acc / n;
}

Vec mse_grad(const Vec& x, const Vec& y) {
  if (x.size() != y.size()) throw DataError("mse_grad: length mismatch");
  const double scale = 2.0 / static_cast<double>(x.size());
  return scale * (x - y);
}

void gradient_update(SpMat& w, const Vec& delta, const Vec& x_prev,
                     double eta) {
  if (delta.size() != w.rows())
    throw DataError("gradient_update: delta length mismatch");
  if (x_prev.size() != w.cols())
    throw DataError("gradient_update: x_prev length mismatch");
  for (int r = 0; r < w.rows(); ++r) {
    const double d = delta[r];
    for (SpMat::InnerIterator it(w, r); it; ++it)
      it.valueRef() -= eta * d * x_prev[it.col()];
  }
}

}  // namespace spdnn

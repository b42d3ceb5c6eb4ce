#pragma once

// Khatri-Rao products and MTTKRP kernels. Khatri-Rao products are always
// taken in descending mode order, A_N (.) ... (.) A_1, so that row indices
// enumerate multi-indices first-mode-fastest like DenseTensor storage.

#include <optional>
#include <span>
#include <vector>

#include "symgcp/tensor.hpp"

namespace symgcp {

/// Per-mode factor list A_{sigma_1}..A_{sigma_N}.
class FactorSequence {
 public:
  FactorSequence() = default;

  explicit FactorSequence(std::vector<Matrix> mats) : mats_(std::move(mats)) {
    if (mats_.empty()) throw ShapeError("factor sequence is empty");
    for (const auto& m : mats_)
      if (m.cols() != mats_.front().cols())
        throw ShapeError("factor matrices must share their column count");
  }

  explicit FactorSequence(const SymKruskal& m) {
    m.validate();
    for (Index n = 0; n < m.ndims(); ++n) mats_.push_back(m.mode_factor(n));
  }

  Index size() const noexcept { return mats_.size(); }
  Index rank() const { return static_cast<Index>(mats_.front().cols()); }
  const Matrix& operator[](Index n) const { return mats_[n]; }
  const std::vector<Matrix>& matrices() const noexcept { return mats_; }

  Dims dims() const {
    Dims d;
    for (const auto& m : mats_) d.push_back(static_cast<Index>(m.rows()));
    return d;
  }

 private:
  std::vector<Matrix> mats_;
};

/// Khatri-Rao product of `mats` in descending order, leaving out mode `skip`.
inline Matrix khatri_rao(const std::vector<Matrix>& mats, std::optional<Index> skip = {}) {
  if (mats.empty()) throw ShapeError("khatri_rao of an empty list");
  const Eigen::Index r = mats.front().cols();
  for (const auto& m : mats)
    if (m.cols() != r) throw ShapeError("khatri_rao: column-count mismatch");
  if (skip && *skip >= mats.size()) throw ShapeError("khatri_rao: skip mode out of range");

  Matrix out = Matrix::Ones(1, r);
  for (Index n = 0; n < mats.size(); ++n) {
    if (skip && *skip == n) continue;
    const Matrix& a = mats[n];
    // New factor goes on the left of the Kronecker product, i.e. it becomes
    // the slow index: rows = i_prev + rows_prev * i_n.
    Matrix next(out.rows() * a.rows(), r);
    for (Eigen::Index j = 0; j < r; ++j)
      for (Eigen::Index i = 0; i < a.rows(); ++i)
        next.col(j).segment(i * out.rows(), out.rows()) = a(i, j) * out.col(j);
    out = std::move(next);
  }
  return out;
}

inline Matrix khatri_rao(const FactorSequence& fs, std::optional<Index> skip = {}) {
  return khatri_rao(fs.matrices(), skip);
}

/// Y_(t) times the Khatri-Rao product of every other factor, computed by a
/// sweep over mode-1 fibers instead of forming the unfolding.
inline Matrix mttkrp_dense(const DenseTensor& y, const FactorSequence& fs, Index mode) {
  const Dims& dims = y.dims();
  if (fs.size() != dims.size())
    throw ShapeError("mttkrp: " + std::to_string(fs.size()) + " factors for a " +
                     std::to_string(dims.size()) + "-way tensor");
  if (mode >= dims.size()) throw ShapeError("mttkrp: mode out of range");
  for (Index n = 0; n < dims.size(); ++n)
    if (static_cast<Index>(fs[n].rows()) != dims[n])
      throw ShapeError("mttkrp: factor " + std::to_string(n + 1) + " has " +
                       std::to_string(fs[n].rows()) + " rows, mode size is " +
                       std::to_string(dims[n]));

  const Index N = dims.size(), r = fs.rank(), I0 = dims[0];
  std::vector<const Matrix*> ptrs;
  for (const auto& m : fs.matrices()) ptrs.push_back(&m);
  detail::ModeRows rows(ptrs, r);
  RowMatrix out = RowMatrix::Zero(static_cast<Eigen::Index>(dims[mode]),
                                  static_cast<Eigen::Index>(r));
  std::vector<double> q(r), z(r);
  const double* yv = y.values().data();

  detail::for_each_fiber(dims, [&](Index f, const MultiIndex& idx) {
    std::fill(q.begin(), q.end(), 1.0);
    for (Index n = 1; n < N; ++n) {
      if (n == mode) continue;
      const double* a = rows.row(n, idx[n]);
      for (Index j = 0; j < r; ++j) q[j] *= a[j];
    }
    const double* yf = yv + f * I0;
    if (mode == 0) {
      for (Index i = 0; i < I0; ++i) {
        if (yf[i] == 0.0) continue;
        double* g = out.data() + i * r;
        for (Index j = 0; j < r; ++j) g[j] += yf[i] * q[j];
      }
    } else {
      std::fill(z.begin(), z.end(), 0.0);
      for (Index i = 0; i < I0; ++i) {
        if (yf[i] == 0.0) continue;
        const double* a = rows.row(0, i);
        for (Index j = 0; j < r; ++j) z[j] += yf[i] * a[j];
      }
      double* g = out.data() + idx[mode] * r;
      for (Index j = 0; j < r; ++j) g[j] += z[j] * q[j];
    }
  });
  return Matrix(out);
}

/// Same result as mttkrp_dense(densify(y), ...) at O(r nnz) cost. Entries are
/// accumulated in stored (linear-index) order, so results are reproducible.
inline Matrix mttkrp_sparse(const SparseTensor& y, const FactorSequence& fs, Index mode) {
  const Dims& dims = y.dims();
  if (fs.size() != dims.size())
    throw ShapeError("mttkrp: " + std::to_string(fs.size()) + " factors for a " +
                     std::to_string(dims.size()) + "-way tensor");
  if (mode >= dims.size()) throw ShapeError("mttkrp: mode out of range");
  for (Index n = 0; n < dims.size(); ++n)
    if (static_cast<Index>(fs[n].rows()) != dims[n])
      throw ShapeError("mttkrp: factor " + std::to_string(n + 1) + " has wrong row count");

  const Index N = dims.size(), r = fs.rank();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(dims[mode]), static_cast<Eigen::Index>(r));
  Eigen::RowVectorXd q(static_cast<Eigen::Index>(r));
  for (Index e = 0; e < y.nnz(); ++e) {
    auto idx = y.subscript(e);
    q.setConstant(y.value(e));
    for (Index n = 0; n < N; ++n)
      if (n != mode) q = q.cwiseProduct(fs[n].row(static_cast<Eigen::Index>(idx[n])));
    out.row(static_cast<Eigen::Index>(idx[mode])) += q;
  }
  return out;
}

/// Rows `rows` of `mat`, in order; repeated indices repeat rows.
inline Matrix sampled_rows(const Matrix& mat, std::span<const Index> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), mat.cols());
  for (Index w = 0; w < rows.size(); ++w) {
    if (rows[w] >= static_cast<Index>(mat.rows()))
      throw ShapeError("sampled_rows: row " + std::to_string(rows[w] + 1) + " out of range for " +
                       std::to_string(mat.rows()) + "-row matrix");
    out.row(static_cast<Eigen::Index>(w)) = mat.row(static_cast<Eigen::Index>(rows[w]));
  }
  return out;
}

}  // namespace symgcp

#pragma once

// Dense/sparse N-way containers, mode partitions and symmetric Kruskal
// models. All indices in the C++ API are 0-based; the text formats and the
// partition spec strings use 1-based indices.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "symgcp/error.hpp"

namespace symgcp {

using Index = std::size_t;
using Dims = std::vector<Index>;
using MultiIndex = std::vector<Index>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Sink for non-fatal diagnostics (duplicate entries, degenerate inits...).
inline std::function<void(const std::string&)>& warning_handler() {
  static std::function<void(const std::string&)> handler =
      [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return handler;
}

inline void warn(const std::string& msg) {
  if (warning_handler()) warning_handler()(msg);
}

inline Index numel(const Dims& dims) {
  return std::accumulate(dims.begin(), dims.end(), Index{1}, std::multiplies<>());
}

inline std::string to_string(const Dims& dims) {
  std::ostringstream os;
  for (Index n = 0; n < dims.size(); ++n) os << (n ? "x" : "") << dims[n];
  return os.str();
}

/// Linear position of `idx` in first-index-fastest order.
inline Index ravel(const MultiIndex& idx, const Dims& dims) {
  Index lin = 0;
  for (Index n = dims.size(); n-- > 0;) lin = lin * dims[n] + idx[n];
  return lin;
}

inline MultiIndex unravel(Index lin, const Dims& dims) {
  MultiIndex idx(dims.size());
  for (Index n = 0; n < dims.size(); ++n) {
    idx[n] = lin % dims[n];
    lin /= dims[n];
  }
  return idx;
}

inline void check_index(const MultiIndex& idx, const Dims& dims) {
  if (idx.size() != dims.size())
    throw ShapeError("index has " + std::to_string(idx.size()) + " modes, tensor has " +
                     std::to_string(dims.size()));
  for (Index n = 0; n < dims.size(); ++n)
    if (idx[n] >= dims[n])
      throw ShapeError("index " + std::to_string(idx[n] + 1) + " out of range for mode " +
                       std::to_string(n + 1) + " of size " + std::to_string(dims[n]));
}

// ---------------------------------------------------------------------------
// DenseTensor
// ---------------------------------------------------------------------------

class DenseTensor {
 public:
  DenseTensor() = default;

  explicit DenseTensor(Dims dims, double fill = 0.0) : dims_(std::move(dims)) {
    validate_dims();
    values_.assign(numel(dims_), fill);
  }

  DenseTensor(Dims dims, std::vector<double> values)
      : dims_(std::move(dims)), values_(std::move(values)) {
    validate_dims();
    if (values_.size() != numel(dims_))
      throw ShapeError("dense tensor of shape " + to_string(dims_) + " needs " +
                       std::to_string(numel(dims_)) + " values, got " +
                       std::to_string(values_.size()));
  }

  const Dims& dims() const noexcept { return dims_; }
  Index ndims() const noexcept { return dims_.size(); }
  Index dim(Index n) const { return dims_.at(n); }
  Index size() const noexcept { return values_.size(); }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  double operator[](Index lin) const { return values_[lin]; }
  double& operator[](Index lin) { return values_[lin]; }

  double at(const MultiIndex& idx) const {
    check_index(idx, dims_);
    return values_[ravel(idx, dims_)];
  }
  double& at(const MultiIndex& idx) {
    check_index(idx, dims_);
    return values_[ravel(idx, dims_)];
  }

  double norm() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return std::sqrt(s);
  }

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  void validate_dims() const {
    if (dims_.empty()) throw ShapeError("tensor needs at least one mode");
    for (Index d : dims_)
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(dims_));
  }

  Dims dims_;
  std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// SparseTensor (coordinate list)
// ---------------------------------------------------------------------------

/// Coordinate-format tensor. Entries are kept sorted by linear index, have no
/// duplicates and no stored zeros.
class SparseTensor {
 public:
  SparseTensor() = default;

  explicit SparseTensor(Dims dims) : dims_(std::move(dims)) { validate_dims(); }

  /// Strict constructor: rejects duplicates, zero values and out-of-range
  /// indices.
  SparseTensor(Dims dims, const std::vector<MultiIndex>& subs, std::vector<double> vals)
      : dims_(std::move(dims)) {
    validate_dims();
    if (subs.size() != vals.size())
      throw ShapeError("sparse tensor needs one value per index");
    std::vector<std::pair<Index, double>> items;
    items.reserve(subs.size());
    for (Index e = 0; e < subs.size(); ++e) {
      check_index(subs[e], dims_);
      if (vals[e] == 0.0) throw ValidationError("sparse tensor stores an explicit zero");
      items.emplace_back(ravel(subs[e], dims_), vals[e]);
    }
    std::sort(items.begin(), items.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (Index e = 1; e < items.size(); ++e)
      if (items[e].first == items[e - 1].first)
        throw ValidationError("duplicate sparse index " + format_index(items[e].first));
    assign(items);
  }

  /// Lenient construction used by readers: duplicates are summed, zeros
  /// (including sums that cancel) are dropped. Returns the number of
  /// duplicate entries merged through `merged`.
  static SparseTensor coalesce(Dims dims, const std::vector<MultiIndex>& subs,
                               const std::vector<double>& vals, Index* merged = nullptr) {
    SparseTensor t(std::move(dims));
    if (subs.size() != vals.size())
      throw ShapeError("sparse tensor needs one value per index");
    std::vector<std::pair<Index, double>> items;
    items.reserve(subs.size());
    for (Index e = 0; e < subs.size(); ++e) {
      check_index(subs[e], t.dims_);
      items.emplace_back(ravel(subs[e], t.dims_), vals[e]);
    }
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::pair<Index, double>> out;
    Index dup = 0;
    for (const auto& it : items) {
      if (!out.empty() && out.back().first == it.first) {
        out.back().second += it.second;
        ++dup;
      } else {
        out.push_back(it);
      }
    }
    std::erase_if(out, [](const auto& it) { return it.second == 0.0; });
    t.assign(out);
    if (merged) *merged = dup;
    return t;
  }

  const Dims& dims() const noexcept { return dims_; }
  Index ndims() const noexcept { return dims_.size(); }
  Index nnz() const noexcept { return vals_.size(); }
  Index numel() const { return symgcp::numel(dims_); }

  std::span<const double> values() const noexcept { return vals_; }
  std::span<const Index> linear_indices() const noexcept { return linear_; }

  /// Index of stored entry `e`, mode by mode.
  std::span<const Index> subscript(Index e) const {
    return {subs_.data() + e * dims_.size(), dims_.size()};
  }
  double value(Index e) const { return vals_[e]; }
  Index linear_index(Index e) const { return linear_[e]; }

  /// Stored value at a linear index, if present.
  std::optional<double> find(Index lin) const {
    auto it = std::lower_bound(linear_.begin(), linear_.end(), lin);
    if (it == linear_.end() || *it != lin) return std::nullopt;
    return vals_[static_cast<Index>(it - linear_.begin())];
  }

  double norm() const {
    double s = 0.0;
    for (double v : vals_) s += v * v;
    return std::sqrt(s);
  }

  friend bool operator==(const SparseTensor&, const SparseTensor&) = default;

 private:
  void validate_dims() const {
    if (dims_.empty()) throw ShapeError("tensor needs at least one mode");
    for (Index d : dims_)
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(dims_));
  }

  std::string format_index(Index lin) const {
    auto idx = unravel(lin, dims_);
    std::string s = "(";
    for (Index n = 0; n < idx.size(); ++n) s += (n ? "," : "") + std::to_string(idx[n] + 1);
    return s + ")";
  }

  void assign(const std::vector<std::pair<Index, double>>& items) {
    const Index N = dims_.size();
    linear_.resize(items.size());
    vals_.resize(items.size());
    subs_.resize(items.size() * N);
    for (Index e = 0; e < items.size(); ++e) {
      linear_[e] = items[e].first;
      vals_[e] = items[e].second;
      auto idx = unravel(items[e].first, dims_);
      std::copy(idx.begin(), idx.end(), subs_.begin() + static_cast<std::ptrdiff_t>(e * N));
    }
  }

  Dims dims_;
  std::vector<Index> subs_;
  std::vector<Index> linear_;
  std::vector<double> vals_;
};

// ---------------------------------------------------------------------------
// ModePartition
// ---------------------------------------------------------------------------

/// Partition of the modes {0..N-1} into K cells. Cells are stored sorted
/// internally and ordered by their smallest mode, so factor k always belongs
/// to the k-th cell in that order.
class ModePartition {
 public:
  ModePartition() = default;

  explicit ModePartition(std::vector<std::vector<Index>> cells) : cells_(std::move(cells)) {
    Index N = 0;
    for (auto& c : cells_) {
      if (c.empty()) throw ValidationError("partition has an empty cell");
      std::sort(c.begin(), c.end());
      N += c.size();
    }
    std::sort(cells_.begin(), cells_.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    sigma_.assign(N, N);
    for (Index k = 0; k < cells_.size(); ++k) {
      for (Index n : cells_[k]) {
        if (n >= N)
          throw ValidationError("partition references mode " + std::to_string(n + 1) +
                                " but only covers " + std::to_string(N) + " modes");
        if (sigma_[n] != N)
          throw ValidationError("mode " + std::to_string(n + 1) +
                                " appears in more than one cell");
        sigma_[n] = k;
      }
    }
  }

  static ModePartition singletons(Index N) {
    std::vector<std::vector<Index>> cells;
    for (Index n = 0; n < N; ++n) cells.push_back({n});
    return ModePartition(std::move(cells));
  }

  static ModePartition full(Index N) {
    std::vector<Index> c(N);
    std::iota(c.begin(), c.end(), Index{0});
    return ModePartition({c});
  }

  /// Parses "[[1,2],[3]]" (1-based modes).
  static ModePartition parse(const std::string& spec) {
    std::vector<std::vector<Index>> cells;
    std::size_t pos = 0;
    auto skip_ws = [&] {
      while (pos < spec.size() && std::isspace(static_cast<unsigned char>(spec[pos]))) ++pos;
    };
    auto expect = [&](char c) {
      skip_ws();
      if (pos >= spec.size() || spec[pos] != c)
        throw ValidationError("bad partition spec '" + spec + "': expected '" +
                              std::string(1, c) + "' at position " + std::to_string(pos + 1));
      ++pos;
    };
    auto peek = [&]() -> char {
      skip_ws();
      return pos < spec.size() ? spec[pos] : '\0';
    };
    expect('[');
    while (peek() == '[') {
      ++pos;
      std::vector<Index> cell;
      while (std::isdigit(static_cast<unsigned char>(peek()))) {
        std::size_t used = 0;
        unsigned long v = std::stoul(spec.substr(pos), &used);
        pos += used;
        if (v == 0) throw ValidationError("bad partition spec '" + spec + "': modes are 1-based");
        cell.push_back(static_cast<Index>(v - 1));
        if (peek() == ',') ++pos;
      }
      expect(']');
      cells.push_back(std::move(cell));
      if (peek() == ',') ++pos;
    }
    expect(']');
    skip_ws();
    if (pos != spec.size())
      throw ValidationError("bad partition spec '" + spec + "': trailing characters");
    if (cells.empty()) throw ValidationError("partition spec '" + spec + "' has no cells");
    return ModePartition(std::move(cells));
  }

  Index ndims() const noexcept { return sigma_.size(); }
  Index ncells() const noexcept { return cells_.size(); }
  const std::vector<std::vector<Index>>& cells() const noexcept { return cells_; }
  const std::vector<Index>& cell(Index k) const { return cells_.at(k); }
  const std::vector<Index>& sigma() const noexcept { return sigma_; }
  Index sigma(Index n) const { return sigma_.at(n); }

  std::string to_string() const {
    std::string s = "[";
    for (Index k = 0; k < cells_.size(); ++k) {
      s += k ? ",[" : "[";
      for (Index a = 0; a < cells_[k].size(); ++a)
        s += (a ? "," : "") + std::to_string(cells_[k][a] + 1);
      s += "]";
    }
    return s + "]";
  }

  /// Throws ShapeError unless `dims` has one size per mode and all modes in
  /// a cell share their size.
  void check_dims(const Dims& dims) const {
    if (dims.size() != ndims())
      throw ShapeError("partition covers " + std::to_string(ndims()) + " modes, tensor has " +
                       std::to_string(dims.size()));
    for (const auto& c : cells_)
      for (Index n : c)
        if (dims[n] != dims[c.front()])
          throw ShapeError("cell dimension mismatch: modes " + std::to_string(c.front() + 1) +
                           " and " + std::to_string(n + 1) + " have sizes " +
                           std::to_string(dims[c.front()]) + " and " + std::to_string(dims[n]));
  }

  friend bool operator==(const ModePartition&, const ModePartition&) = default;

 private:
  std::vector<std::vector<Index>> cells_;
  std::vector<Index> sigma_;
};

// ---------------------------------------------------------------------------
// SymKruskal
// ---------------------------------------------------------------------------

/// Weighted sum of rank-one terms where every mode of a cell shares the
/// cell's factor matrix.
struct SymKruskal {
  Vector lambda;
  std::vector<Matrix> factors;
  ModePartition partition;

  SymKruskal() = default;
  SymKruskal(Vector lam, std::vector<Matrix> facs, ModePartition part)
      : lambda(std::move(lam)), factors(std::move(facs)), partition(std::move(part)) {
    validate();
  }

  Index rank() const noexcept { return static_cast<Index>(lambda.size()); }
  Index ndims() const noexcept { return partition.ndims(); }
  Index ncells() const noexcept { return partition.ncells(); }

  /// Factor used by mode n.
  const Matrix& mode_factor(Index n) const { return factors[partition.sigma(n)]; }

  Dims dims() const {
    Dims d(ndims());
    for (Index n = 0; n < d.size(); ++n) d[n] = static_cast<Index>(mode_factor(n).rows());
    return d;
  }

  void validate() const {
    if (factors.size() != partition.ncells())
      throw ShapeError("model has " + std::to_string(factors.size()) + " factors for " +
                       std::to_string(partition.ncells()) + " cells");
    for (Index k = 0; k < factors.size(); ++k) {
      if (factors[k].cols() != lambda.size())
        throw ShapeError("factor " + std::to_string(k + 1) + " has " +
                         std::to_string(factors[k].cols()) + " columns, rank is " +
                         std::to_string(lambda.size()));
      if (factors[k].rows() == 0)
        throw ShapeError("factor " + std::to_string(k + 1) + " has no rows");
    }
  }

  friend bool operator==(const SymKruskal& a, const SymKruskal& b) {
    if (!(a.partition == b.partition) || a.lambda.size() != b.lambda.size() ||
        a.factors.size() != b.factors.size() || a.lambda != b.lambda)
      return false;
    for (Index k = 0; k < a.factors.size(); ++k) {
      if (a.factors[k].rows() != b.factors[k].rows() || a.factors[k] != b.factors[k])
        return false;
    }
    return true;
  }
};

namespace detail {

/// Row-major copies of the per-mode factors, so rank vectors are contiguous.
struct ModeRows {
  std::vector<const double*> rows;  // rows[n] points at factor of mode n
  std::vector<RowMatrix> storage;   // one per cell
  Index r = 0;

  explicit ModeRows(const SymKruskal& m) : r(m.rank()) {
    storage.reserve(m.ncells());
    for (const auto& f : m.factors) storage.emplace_back(f);
    rows.resize(m.ndims());
    for (Index n = 0; n < m.ndims(); ++n) rows[n] = storage[m.partition.sigma(n)].data();
  }

  ModeRows(const std::vector<const Matrix*>& mode_factors, Index rank) : r(rank) {
    storage.reserve(mode_factors.size());
    for (const Matrix* f : mode_factors) storage.emplace_back(*f);
    rows.resize(mode_factors.size());
    for (Index n = 0; n < mode_factors.size(); ++n) rows[n] = storage[n].data();
  }

  const double* row(Index mode, Index i) const { return rows[mode] + i * r; }
};

/// Visits every mode-1 fiber of a tensor: `fn(fiber, idx)` receives the
/// fiber number (the linear offset divided by dims[0]) and the multi-index
/// with idx[0] == 0.
template <typename Fn>
void for_each_fiber(const Dims& dims, Fn&& fn) {
  const Index N = dims.size();
  const Index nfib = numel(dims) / dims[0];
  MultiIndex idx(N, 0);
  for (Index f = 0; f < nfib; ++f) {
    fn(f, static_cast<const MultiIndex&>(idx));
    for (Index n = 1; n < N; ++n) {
      if (++idx[n] < dims[n]) break;
      idx[n] = 0;
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Structural operations
// ---------------------------------------------------------------------------

inline std::vector<double> vectorize(const DenseTensor& t) {
  return {t.values().begin(), t.values().end()};
}

/// Inverse of vectorize.
inline DenseTensor reshape(std::vector<double> values, Dims dims) {
  return DenseTensor(std::move(dims), std::move(values));
}

/// Mode-n unfolding (0-based mode). Column index enumerates the remaining
/// modes first-remaining-index-fastest.
inline Matrix matricize(const DenseTensor& t, Index mode) {
  const Dims& dims = t.dims();
  if (mode >= dims.size())
    throw ShapeError("mode " + std::to_string(mode + 1) + " out of range for " +
                     std::to_string(dims.size()) + "-way tensor");
  const Index rows = dims[mode];
  Matrix out(rows, static_cast<Eigen::Index>(t.size() / rows));
  // Linear index = i_mode * stride_mode + rest; map rest to the column.
  Index stride = 1;
  for (Index n = 0; n < mode; ++n) stride *= dims[n];
  for (Index lin = 0; lin < t.size(); ++lin) {
    const Index i = (lin / stride) % rows;
    const Index col = (lin % stride) + (lin / (stride * rows)) * stride;
    out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col)) = t[lin];
  }
  return out;
}

inline DenseTensor unmatricize(const Matrix& mat, const Dims& dims, Index mode) {
  DenseTensor t(dims);
  if (mode >= dims.size()) throw ShapeError("mode out of range");
  const Index rows = dims[mode];
  if (static_cast<Index>(mat.rows()) != rows ||
      static_cast<Index>(mat.cols()) != t.size() / rows)
    throw ShapeError("matrix shape does not match unfolding of " + to_string(dims));
  Index stride = 1;
  for (Index n = 0; n < mode; ++n) stride *= dims[n];
  for (Index lin = 0; lin < t.size(); ++lin) {
    const Index i = (lin / stride) % rows;
    const Index col = (lin % stride) + (lin / (stride * rows)) * stride;
    t[lin] = mat(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col));
  }
  return t;
}

inline void check_permutation(const std::vector<Index>& perm, Index N) {
  if (perm.size() != N)
    throw ValidationError("permutation has " + std::to_string(perm.size()) +
                          " entries for a " + std::to_string(N) + "-way tensor");
  std::vector<bool> seen(N, false);
  for (Index p : perm) {
    if (p >= N || seen[p]) throw ValidationError("invalid permutation of modes");
    seen[p] = true;
  }
}

/// Mode permutation with output mode k taken from input mode perm[k]
/// (0-based); out(j) = in(i) with i[perm[k]] = j[k].
inline DenseTensor permute_modes(const DenseTensor& t, const std::vector<Index>& perm) {
  const Index N = t.ndims();
  check_permutation(perm, N);
  Dims out_dims(N);
  for (Index k = 0; k < N; ++k) out_dims[k] = t.dim(perm[k]);
  DenseTensor out(out_dims);
  MultiIndex j(N, 0), i(N);
  for (Index lin = 0; lin < out.size(); ++lin) {
    for (Index k = 0; k < N; ++k) i[perm[k]] = j[k];
    out[lin] = t[ravel(i, t.dims())];
    for (Index k = 0; k < N; ++k) {
      if (++j[k] < out_dims[k]) break;
      j[k] = 0;
    }
  }
  return out;
}

inline std::vector<Index> inverse_permutation(const std::vector<Index>& perm) {
  check_permutation(perm, perm.size());
  std::vector<Index> inv(perm.size());
  for (Index k = 0; k < perm.size(); ++k) inv[perm[k]] = k;
  return inv;
}

/// Largest |x_swap(i) - x_i| over every adjacent transposition inside each
/// cell. Throws ShapeError on a cell dimension mismatch.
inline double symmetry_deviation(const DenseTensor& t, const ModePartition& p) {
  p.check_dims(t.dims());
  const Dims& dims = t.dims();
  std::vector<Index> strides(dims.size(), 1);
  for (Index n = 1; n < dims.size(); ++n) strides[n] = strides[n - 1] * dims[n - 1];
  double dev = 0.0;
  for (const auto& cell : p.cells()) {
    for (Index a = 0; a + 1 < cell.size(); ++a) {
      const Index u = cell[a], v = cell[a + 1];
      for (Index lin = 0; lin < t.size(); ++lin) {
        const Index iu = (lin / strides[u]) % dims[u];
        const Index iv = (lin / strides[v]) % dims[v];
        if (iu >= iv) continue;
        const Index swapped = lin + (iv - iu) * strides[u] - (iv - iu) * strides[v];
        dev = std::max(dev, std::abs(t[lin] - t[swapped]));
      }
    }
  }
  return dev;
}

inline bool is_symmetric(const DenseTensor& t, const ModePartition& p, double tol = 0.0) {
  return symmetry_deviation(t, p) <= tol;
}

/// Full tensor of a symmetric Kruskal model.
inline DenseTensor reconstruct(const SymKruskal& m) {
  m.validate();
  const Dims dims = m.dims();
  const Index N = dims.size(), r = m.rank(), I0 = dims[0];
  detail::ModeRows rows(m);
  DenseTensor out(dims);
  std::vector<double> p(r);
  detail::for_each_fiber(dims, [&](Index f, const MultiIndex& idx) {
    for (Index j = 0; j < r; ++j) p[j] = m.lambda[static_cast<Eigen::Index>(j)];
    for (Index n = 1; n < N; ++n) {
      const double* a = rows.row(n, idx[n]);
      for (Index j = 0; j < r; ++j) p[j] *= a[j];
    }
    double* dst = out.values().data() + f * I0;
    for (Index i = 0; i < I0; ++i) {
      const double* a = rows.row(0, i);
      double s = 0.0;
      for (Index j = 0; j < r; ++j) s += p[j] * a[j];
      dst[i] = s;
    }
  });
  return out;
}

/// One entry of the model without forming the full tensor.
inline double model_entry(const SymKruskal& m, std::span<const Index> idx) {
  if (idx.size() != m.ndims())
    throw ShapeError("index has " + std::to_string(idx.size()) + " modes, model has " +
                     std::to_string(m.ndims()));
  for (Index n = 0; n < idx.size(); ++n)
    if (idx[n] >= static_cast<Index>(m.mode_factor(n).rows()))
      throw ShapeError("index " + std::to_string(idx[n] + 1) + " out of range for mode " +
                       std::to_string(n + 1));
  double s = 0.0;
  for (Eigen::Index j = 0; j < m.lambda.size(); ++j) {
    double term = m.lambda[j];
    for (Index n = 0; n < idx.size(); ++n)
      term *= m.mode_factor(n)(static_cast<Eigen::Index>(idx[n]), j);
    s += term;
  }
  return s;
}

inline double model_entry(const SymKruskal& m, const MultiIndex& idx) {
  return model_entry(m, std::span<const Index>(idx));
}

inline DenseTensor densify(const SparseTensor& s) {
  DenseTensor d(s.dims());
  for (Index e = 0; e < s.nnz(); ++e) d[s.linear_index(e)] = s.value(e);
  return d;
}

/// Keeps entries with |value| > threshold.
inline SparseTensor sparsify(const DenseTensor& d, double threshold = 0.0) {
  std::vector<MultiIndex> subs;
  std::vector<double> vals;
  for (Index lin = 0; lin < d.size(); ++lin) {
    if (std::abs(d[lin]) > threshold && d[lin] != 0.0) {
      subs.push_back(unravel(lin, d.dims()));
      vals.push_back(d[lin]);
    }
  }
  return SparseTensor(d.dims(), subs, std::move(vals));
}

}  // namespace symgcp

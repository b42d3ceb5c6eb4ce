#pragma once

// SymGCP objective: F = sum_i w_i l(x_i, m_i) + gamma sum_k sum_j (|a_kj|^2 - 1)^2,
// with gradients assembled from MTTKRPs of the derivative tensor.

#include <memory>
#include <string>
#include <vector>

#include "symgcp/kernels.hpp"
#include "symgcp/losses.hpp"
#include "symgcp/tensor.hpp"

namespace symgcp {

inline constexpr double kDefaultGamma = 0.1;

struct ObjectiveConfig {
  WeightedLoss loss;
  ModePartition partition;
  Index rank = 1;
  double gamma = kDefaultGamma;
  bool optimize_lambda = true;
  bool symmetric_data_fastpath = false;
  /// For data symmetric with respect to the partition: evaluate one entry
  /// per orbit of the cell permutations, weighted by the orbit size.
  bool orbit_compression = false;
  /// Check once that the data really is symmetric before using the fast path.
  bool verify_symmetry = true;
  double symmetry_tol = 1e-12;

  void validate() const {
    if (!(gamma >= 0.0)) throw ValidationError("gamma must be >= 0");
    if (rank == 0) throw ValidationError("rank must be >= 1");
  }
};

struct GradientBundle {
  Vector d_lambda;
  std::vector<Matrix> d_factors;
  /// Set when lambda is not an optimization variable; d_lambda is still filled.
  bool lambda_frozen = false;

  static GradientBundle zeros_like(const SymKruskal& m) {
    GradientBundle g;
    g.d_lambda = Vector::Zero(m.lambda.size());
    for (const auto& f : m.factors) g.d_factors.push_back(Matrix::Zero(f.rows(), f.cols()));
    return g;
  }
};

/// gamma * sum_k sum_j (||(A_k)_{:,j}||^2 - 1)^2
inline double regularizer(const SymKruskal& m, double gamma) {
  if (gamma == 0.0) return 0.0;
  double s = 0.0;
  for (const auto& f : m.factors)
    for (Eigen::Index j = 0; j < f.cols(); ++j) {
      const double d = f.col(j).squaredNorm() - 1.0;
      s += d * d;
    }
  return gamma * s;
}

inline void add_regularizer_gradient(const SymKruskal& m, double gamma, GradientBundle& g) {
  if (gamma == 0.0) return;
  for (Index k = 0; k < m.factors.size(); ++k) {
    const Matrix& f = m.factors[k];
    for (Eigen::Index j = 0; j < f.cols(); ++j)
      g.d_factors[k].col(j) += 4.0 * gamma * (f.col(j).squaredNorm() - 1.0) * f.col(j);
  }
}

namespace detail {

inline void check_objective_inputs(const ObjectiveConfig& cfg, const Dims& dims,
                                   const SymKruskal& m) {
  cfg.validate();
  cfg.partition.check_dims(dims);
  if (!(m.partition == cfg.partition))
    throw ShapeError("model partition " + m.partition.to_string() +
                     " differs from configured partition " + cfg.partition.to_string());
  if (m.rank() != cfg.rank)
    throw ShapeError("model rank " + std::to_string(m.rank()) + " differs from configured rank " +
                     std::to_string(cfg.rank));
  check_model_dims(m, dims);
  cfg.loss.check_shape(dims);
}

inline void check_fastpath_symmetry(const ObjectiveConfig& cfg, const DenseTensor& x) {
  if (!cfg.verify_symmetry) return;
  const double dev = symmetry_deviation(x, cfg.partition);
  if (dev > cfg.symmetry_tol)
    throw ValidationError("symmetric-data evaluation requested but data deviates from symmetry "
                          "by " + std::to_string(dev));
  if (cfg.loss.weights && symmetry_deviation(*cfg.loss.weights, cfg.partition) > cfg.symmetry_tol)
    throw ValidationError("symmetric-data evaluation requested but weights are not symmetric");
}

/// Representative mode of each cell used by the fast path: its smallest mode.
inline Index representative(const ModePartition& p, Index k) { return p.cell(k).front(); }

}  // namespace detail

inline double objective_value(const ObjectiveConfig& cfg, const DenseTensor& x,
                              const SymKruskal& m) {
  detail::check_objective_inputs(cfg, x.dims(), m);
  return total_loss(cfg.loss, x, m) + regularizer(m, cfg.gamma);
}

inline double objective_value(const ObjectiveConfig& cfg, const SparseTensor& x,
                              const SymKruskal& m) {
  return objective_value(cfg, densify(x), m);
}

namespace detail {

/// d lambda = (KR of all factors)^T vec(Y), recovered from the mode-1 MTTKRP
/// as the column sums of A_{sigma_1} .* (Y_(1) KR_{n != 1}).
inline Vector lambda_gradient_from_mode0(const FactorSequence& fs, const Matrix& mttkrp0) {
  return fs[0].cwiseProduct(mttkrp0).colwise().sum().transpose();
}

}  // namespace detail

/// Gradient assembled from a given derivative tensor: one MTTKRP per mode,
/// summed over each cell, plus the regularizer gradient.
inline GradientBundle gradient_from_derivative(const DenseTensor& y, const SymKruskal& m,
                                               double gamma = 0.0, bool optimize_lambda = true) {
  detail::check_model_dims(m, y.dims());
  const FactorSequence fs(m);
  GradientBundle g = GradientBundle::zeros_like(m);
  g.lambda_frozen = !optimize_lambda;
  for (Index t = 0; t < m.ndims(); ++t) {
    Matrix mk = mttkrp_dense(y, fs, t);
    if (t == 0) g.d_lambda = detail::lambda_gradient_from_mode0(fs, mk);
    g.d_factors[m.partition.sigma(t)] += mk * m.lambda.asDiagonal();
  }
  add_regularizer_gradient(m, gamma, g);
  return g;
}

/// Gradient via one MTTKRP per mode, summed over each cell. Valid for any
/// data tensor, symmetric or not.
inline GradientBundle gradient(const ObjectiveConfig& cfg, const DenseTensor& x,
                               const SymKruskal& m) {
  detail::check_objective_inputs(cfg, x.dims(), m);
  return gradient_from_derivative(derivative_tensor(cfg.loss, x, m), m, cfg.gamma,
                                  cfg.optimize_lambda);
}

inline GradientBundle gradient(const ObjectiveConfig& cfg, const SparseTensor& x,
                               const SymKruskal& m) {
  return gradient(cfg, densify(x), m);
}

/// Gradient for data symmetric with respect to the partition: one MTTKRP per
/// cell (on the cell's smallest mode) scaled by the cell size.
inline GradientBundle gradient_fastpath(const ObjectiveConfig& cfg, const DenseTensor& x,
                                        const SymKruskal& m) {
  detail::check_objective_inputs(cfg, x.dims(), m);
  detail::check_fastpath_symmetry(cfg, x);
  const DenseTensor y = derivative_tensor(cfg.loss, x, m);
  const FactorSequence fs(m);
  GradientBundle g = GradientBundle::zeros_like(m);
  g.lambda_frozen = !cfg.optimize_lambda;
  for (Index k = 0; k < m.ncells(); ++k) {
    const Index rep = detail::representative(m.partition, k);
    Matrix mk = mttkrp_dense(y, fs, rep);
    if (rep == 0) g.d_lambda = detail::lambda_gradient_from_mode0(fs, mk);
    g.d_factors[k] = static_cast<double>(m.partition.cell(k).size()) * mk * m.lambda.asDiagonal();
  }
  add_regularizer_gradient(m, cfg.gamma, g);
  return g;
}

namespace detail {

/// One sweep over the data computing the loss and, when `grad` is given,
/// the full gradient. Per mode-1 fiber the other modes' rows are combined
/// once; each entry then costs three length-r passes.
template <typename Loss>
double fused_evaluate(const Loss& l, const ObjectiveConfig& cfg, const DenseTensor& x,
                      const SymKruskal& m, GradientBundle* grad) {
  const Dims& dims = x.dims();
  const Index N = dims.size(), r = m.rank(), I0 = dims[0];
  const ModePartition& part = m.partition;
  ModeRows rows(m);
  const double* lam = m.lambda.data();
  const double* xv = x.values().data();
  const double* wv = cfg.loss.weights ? cfg.loss.weights->values().data() : nullptr;

  // Which modes contribute to the factor gradients, and with what multiplier.
  std::vector<double> mode_scale(N, 1.0);
  if (cfg.symmetric_data_fastpath) {
    for (Index n = 0; n < N; ++n) mode_scale[n] = 0.0;
    for (Index k = 0; k < part.ncells(); ++k)
      mode_scale[representative(part, k)] = static_cast<double>(part.cell(k).size());
  }

  std::vector<RowMatrix> cell_grad;
  Vector dlam;
  if (grad) {
    for (const auto& f : m.factors) cell_grad.push_back(RowMatrix::Zero(f.rows(), f.cols()));
    dlam = Vector::Zero(static_cast<Eigen::Index>(r));
  }

  std::vector<double> prefix(N * r), suffix((N + 1) * r), full(r), pl(r), z(r), q(r);
  double value = 0.0;

  for_each_fiber(dims, [&](Index f, const MultiIndex& idx) {
    // prefix[n] = prod_{1 <= j < n} rows, suffix[n] = prod_{n <= j < N} rows.
    std::fill(prefix.begin(), prefix.begin() + static_cast<std::ptrdiff_t>(std::min<Index>(2, N) * r),
              1.0);
    for (Index n = 2; n < N; ++n) {
      const double* a = rows.row(n - 1, idx[n - 1]);
      for (Index j = 0; j < r; ++j) prefix[n * r + j] = prefix[(n - 1) * r + j] * a[j];
    }
    std::fill(suffix.begin() + static_cast<std::ptrdiff_t>(N * r), suffix.end(), 1.0);
    for (Index n = N; n-- > 1;) {
      const double* a = rows.row(n, idx[n]);
      for (Index j = 0; j < r; ++j) suffix[n * r + j] = suffix[(n + 1) * r + j] * a[j];
    }
    for (Index j = 0; j < r; ++j) {
      full[j] = N > 1 ? suffix[r + j] : 1.0;
      pl[j] = lam[j] * full[j];
      z[j] = 0.0;
    }

    const Index base = f * I0;
    double* g0 = grad ? cell_grad[part.sigma(0)].data() : nullptr;
    for (Index i = 0; i < I0; ++i) {
      const double w = wv ? wv[base + i] : 1.0;
      if (w == 0.0) continue;
      const double* a = rows.row(0, i);
      double mval = 0.0;
      for (Index j = 0; j < r; ++j) mval += pl[j] * a[j];
      if (!l.in_domain(mval)) throw_domain(cfg.loss.base, mval, base + i, dims);
      const double xi = xv[base + i];
      value += w * l.value(xi, mval);
      if (!grad) continue;
      const double y = w * l.deriv(xi, mval);
      if (y == 0.0) continue;
      if (mode_scale[0] != 0.0) {
        double* g = g0 + i * r;
        const double ys = y * mode_scale[0];
        for (Index j = 0; j < r; ++j) g[j] += ys * pl[j];
      }
      for (Index j = 0; j < r; ++j) z[j] += y * a[j];
    }
    if (!grad) return;
    for (Index j = 0; j < r; ++j) dlam[static_cast<Eigen::Index>(j)] += z[j] * full[j];
    for (Index t = 1; t < N; ++t) {
      if (mode_scale[t] == 0.0) continue;
      double* g = cell_grad[part.sigma(t)].data() + idx[t] * r;
      for (Index j = 0; j < r; ++j)
        g[j] += mode_scale[t] * z[j] * lam[j] * prefix[t * r + j] * suffix[(t + 1) * r + j];
    }
  });

  if (grad) {
    grad->d_lambda = dlam;
    grad->d_factors.clear();
    for (auto& cg : cell_grad) grad->d_factors.emplace_back(cg);
    grad->lambda_frozen = !cfg.optimize_lambda;
  }
  return value;
}

/// Loss and gradient for data symmetric with respect to the partition,
/// visiting one canonical index per orbit of the cell permutations (indices
/// nondecreasing along each cell's modes) weighted by the orbit size. Every
/// mode contributes at the canonical index; summed over an orbit this equals
/// the full-tensor sweep.
template <typename Loss>
double orbit_evaluate(const Loss& l, const ObjectiveConfig& cfg, const DenseTensor& x,
                      const SymKruskal& m, GradientBundle* grad) {
  const Dims& dims = x.dims();
  const Index N = dims.size(), r = m.rank(), I0 = dims[0];
  const ModePartition& part = m.partition;
  ModeRows rows(m);
  const double* lam = m.lambda.data();
  const double* xv = x.values().data();
  const double* wv = cfg.loss.weights ? cfg.loss.weights->values().data() : nullptr;

  // next[t]: the following mode of t's cell, or N.
  std::vector<Index> next(N, N);
  for (const auto& cell : part.cells())
    for (Index q = 0; q + 1 < cell.size(); ++q) next[cell[q]] = cell[q + 1];
  std::vector<double> fact(N + 2, 1.0);
  for (Index k = 1; k < fact.size(); ++k) fact[k] = fact[k - 1] * static_cast<double>(k);
  std::vector<Index> stride(N, 1);
  for (Index n = 1; n < N; ++n) stride[n] = stride[n - 1] * dims[n - 1];

  std::vector<RowMatrix> cell_grad;
  Vector dlam;
  if (grad) {
    for (const auto& f : m.factors) cell_grad.push_back(RowMatrix::Zero(f.rows(), f.cols()));
    dlam = Vector::Zero(static_cast<Eigen::Index>(r));
  }
  std::vector<double> prefix(N * r), suffix((N + 1) * r), full(r), pl(r), z(r);
  MultiIndex idx(N, 0);
  double value = 0.0;

  for (;;) {
    // Orbit size contributed by modes 1..N-1: prod_k |I_k|! / prod(run lengths)!.
    double c_rest = 1.0;
    Index first_run = 0;
    for (Index k = 0; k < part.ncells(); ++k) {
      const auto& cell = part.cell(k);
      c_rest *= fact[cell.size()];
      Index run = 0;
      Index prev = 0;
      bool first = true;
      for (Index mode : cell) {
        if (mode == 0) continue;
        if (!first && idx[mode] == prev) {
          ++run;
        } else {
          if (!first) {
            c_rest /= fact[run];
            if (k == 0 && first_run == 0) first_run = run;
          }
          run = 1;
          prev = idx[mode];
          first = false;
        }
      }
      if (!first) {
        c_rest /= fact[run];
        if (k == 0 && first_run == 0) first_run = run;
      }
    }
    const bool bounded0 = next[0] < N;
    const Index hi0 = bounded0 ? idx[next[0]] : I0 - 1;

    std::fill(prefix.begin(), prefix.begin() + static_cast<std::ptrdiff_t>(std::min<Index>(2, N) * r),
              1.0);
    for (Index n = 2; n < N; ++n) {
      const double* a = rows.row(n - 1, idx[n - 1]);
      for (Index j = 0; j < r; ++j) prefix[n * r + j] = prefix[(n - 1) * r + j] * a[j];
    }
    std::fill(suffix.begin() + static_cast<std::ptrdiff_t>(N * r), suffix.end(), 1.0);
    for (Index n = N; n-- > 1;) {
      const double* a = rows.row(n, idx[n]);
      for (Index j = 0; j < r; ++j) suffix[n * r + j] = suffix[(n + 1) * r + j] * a[j];
    }
    for (Index j = 0; j < r; ++j) {
      full[j] = N > 1 ? suffix[r + j] : 1.0;
      pl[j] = lam[j] * full[j];
      z[j] = 0.0;
    }

    Index base = 0;
    for (Index n = 1; n < N; ++n) base += idx[n] * stride[n];
    double* g0 = grad ? cell_grad[part.sigma(0)].data() : nullptr;
    for (Index i = 0; i <= hi0; ++i) {
      const double c = (bounded0 && i == hi0) ? c_rest / static_cast<double>(first_run + 1) : c_rest;
      const double w = c * (wv ? wv[base + i] : 1.0);
      if (w == 0.0) continue;
      const double* a = rows.row(0, i);
      double mval = 0.0;
      for (Index j = 0; j < r; ++j) mval += pl[j] * a[j];
      if (!l.in_domain(mval)) throw_domain(cfg.loss.base, mval, base + i, dims);
      const double xi = xv[base + i];
      value += w * l.value(xi, mval);
      if (!grad) continue;
      const double y = w * l.deriv(xi, mval);
      if (y == 0.0) continue;
      double* g = g0 + i * r;
      for (Index j = 0; j < r; ++j) g[j] += y * pl[j];
      for (Index j = 0; j < r; ++j) z[j] += y * a[j];
    }
    if (grad) {
      for (Index j = 0; j < r; ++j) dlam[static_cast<Eigen::Index>(j)] += z[j] * full[j];
      for (Index t = 1; t < N; ++t) {
        double* g = cell_grad[part.sigma(t)].data() + idx[t] * r;
        for (Index j = 0; j < r; ++j) g[j] += z[j] * lam[j] * prefix[t * r + j] * suffix[(t + 1) * r + j];
      }
    }

    // Next canonical setting of modes 1..N-1; faster modes are bounded
    // above by the following mode of their cell.
    Index t = 1;
    for (; t < N; ++t) {
      const Index hi = next[t] < N ? idx[next[t]] : dims[t] - 1;
      if (idx[t] < hi) {
        ++idx[t];
        break;
      }
      idx[t] = 0;
    }
    if (t >= N) break;
  }

  if (grad) {
    grad->d_lambda = dlam;
    grad->d_factors.clear();
    for (auto& cg : cell_grad) grad->d_factors.emplace_back(cg);
    grad->lambda_frozen = !cfg.optimize_lambda;
  }
  return value;
}

template <typename Loss>
double sweep(const Loss& l, const ObjectiveConfig& cfg, const DenseTensor& x, const SymKruskal& m,
             GradientBundle* grad) {
  return cfg.orbit_compression ? orbit_evaluate(l, cfg, x, m, grad)
                               : fused_evaluate(l, cfg, x, m, grad);
}

}  // namespace detail

/// Objective bound to a data tensor, for use by the optimizers. Inputs are
/// validated, and symmetry verified for the fast path, once at construction.
class Objective {
 public:
  Objective(ObjectiveConfig cfg, std::shared_ptr<const DenseTensor> x)
      : cfg_(std::move(cfg)), x_(std::move(x)) {
    cfg_.validate();
    cfg_.partition.check_dims(x_->dims());
    cfg_.loss.check_shape(x_->dims());
    if (cfg_.symmetric_data_fastpath || cfg_.orbit_compression)
      detail::check_fastpath_symmetry(cfg_, *x_);
  }

  Objective(ObjectiveConfig cfg, DenseTensor x)
      : Objective(std::move(cfg), std::make_shared<const DenseTensor>(std::move(x))) {}

  const ObjectiveConfig& config() const noexcept { return cfg_; }
  const DenseTensor& data() const noexcept { return *x_; }
  std::shared_ptr<const DenseTensor> data_ptr() const noexcept { return x_; }

  double value(const SymKruskal& m) const {
    check(m);
    return cfg_.loss.base.visit(
               [&](const auto& l) { return detail::sweep(l, cfg_, *x_, m, nullptr); }) +
           regularizer(m, cfg_.gamma);
  }

  /// Loss term only, without the regularizer.
  double loss(const SymKruskal& m) const {
    check(m);
    return cfg_.loss.base.visit(
        [&](const auto& l) { return detail::sweep(l, cfg_, *x_, m, nullptr); });
  }

  double value_and_gradient(const SymKruskal& m, GradientBundle& g) const {
    check(m);
    const double v = cfg_.loss.base.visit(
        [&](const auto& l) { return detail::sweep(l, cfg_, *x_, m, &g); });
    add_regularizer_gradient(m, cfg_.gamma, g);
    return v + regularizer(m, cfg_.gamma);
  }

 private:
  void check(const SymKruskal& m) const {
    if (!(m.partition == cfg_.partition) || m.rank() != cfg_.rank)
      throw ShapeError("model does not match the objective's partition or rank");
    detail::check_model_dims(m, x_->dims());
  }

  ObjectiveConfig cfg_;
  std::shared_ptr<const DenseTensor> x_;
};

// ---------------------------------------------------------------------------
// Flat parameter vectors: lambda first (unless frozen), then each factor in
// cell order, column-major.
// ---------------------------------------------------------------------------

inline Index parameter_count(const SymKruskal& m, bool include_lambda = true) {
  Index n = include_lambda ? m.rank() : 0;
  for (const auto& f : m.factors) n += static_cast<Index>(f.size());
  return n;
}

inline Vector flatten(const SymKruskal& m, bool include_lambda = true) {
  Vector v(static_cast<Eigen::Index>(parameter_count(m, include_lambda)));
  Eigen::Index pos = 0;
  if (include_lambda) {
    v.segment(pos, m.lambda.size()) = m.lambda;
    pos += m.lambda.size();
  }
  for (const auto& f : m.factors) {
    v.segment(pos, f.size()) = f.reshaped();
    pos += f.size();
  }
  return v;
}

inline Vector flatten(const GradientBundle& g, bool include_lambda = true) {
  Eigen::Index n = include_lambda ? g.d_lambda.size() : 0;
  for (const auto& f : g.d_factors) n += f.size();
  Vector v(n);
  Eigen::Index pos = 0;
  if (include_lambda) {
    v.segment(pos, g.d_lambda.size()) = g.d_lambda;
    pos += g.d_lambda.size();
  }
  for (const auto& f : g.d_factors) {
    v.segment(pos, f.size()) = f.reshaped();
    pos += f.size();
  }
  return v;
}

/// Writes `v` into a copy of `shape`; with include_lambda false the
/// template's lambda is kept.
inline SymKruskal unflatten(const Vector& v, const SymKruskal& shape, bool include_lambda = true) {
  if (static_cast<Index>(v.size()) != parameter_count(shape, include_lambda))
    throw ShapeError("parameter vector has " + std::to_string(v.size()) + " entries, expected " +
                     std::to_string(parameter_count(shape, include_lambda)));
  SymKruskal m = shape;
  Eigen::Index pos = 0;
  if (include_lambda) {
    m.lambda = v.segment(pos, m.lambda.size());
    pos += m.lambda.size();
  }
  for (auto& f : m.factors) {
    f.reshaped() = v.segment(pos, f.size());
    pos += f.size();
  }
  return m;
}

}  // namespace symgcp

#pragma once

// Shared helpers for the test suite: random models and tensors, and
// brute-force oracles.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "symgcp/objective.hpp"
#include "symgcp/tensor.hpp"

namespace symgcp::testing {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                            double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix a(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) a(i, j) = u(rng);
  return a;
}

/// Dims where every mode of cell k has size base + k.
inline Dims cell_dims(const ModePartition& p, Index base = 3) {
  Dims dims(p.ndims());
  for (Index k = 0; k < p.ncells(); ++k)
    for (Index n : p.cell(k)) dims[n] = base + k;
  return dims;
}

inline SymKruskal random_model(const ModePartition& p, const Dims& dims, Index rank,
                               std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<Matrix> factors;
  for (Index k = 0; k < p.ncells(); ++k)
    factors.push_back(random_matrix(static_cast<Eigen::Index>(dims[p.cell(k).front()]),
                                    static_cast<Eigen::Index>(rank), rng, lo, hi));
  Matrix lam = random_matrix(static_cast<Eigen::Index>(rank), 1, rng, lo, hi);
  return SymKruskal(lam.col(0), std::move(factors), p);
}

inline DenseTensor random_dense(const Dims& dims, std::mt19937_64& rng, double lo = -1.0,
                                double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  DenseTensor t(dims);
  for (Index i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

/// Copies the value at each index's canonical representative (indices sorted
/// within every cell), which makes the tensor exactly symmetric.
inline DenseTensor symmetrize(const DenseTensor& t, const ModePartition& p) {
  DenseTensor out(t.dims());
  for (Index lin = 0; lin < t.size(); ++lin) {
    MultiIndex idx = unravel(lin, t.dims());
    for (const auto& cell : p.cells()) {
      std::vector<Index> vals;
      for (Index n : cell) vals.push_back(idx[n]);
      std::sort(vals.begin(), vals.end());
      for (Index q = 0; q < cell.size(); ++q) idx[cell[q]] = vals[q];
    }
    out[lin] = t[ravel(idx, t.dims())];
  }
  return out;
}

/// Brute-force entry of a model: sum_j lambda_j prod_n A_{sigma_n}(i_n, j).
inline double brute_entry(const SymKruskal& m, const MultiIndex& idx) {
  double s = 0.0;
  for (Index j = 0; j < m.rank(); ++j) {
    double p = m.lambda[static_cast<Eigen::Index>(j)];
    for (Index n = 0; n < idx.size(); ++n)
      p *= m.mode_factor(n)(static_cast<Eigen::Index>(idx[n]), static_cast<Eigen::Index>(j));
    s += p;
  }
  return s;
}

inline double max_rel_diff(const Matrix& a, const Matrix& b) {
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-300});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

inline double max_abs_diff(const GradientBundle& a, const GradientBundle& b) {
  double d = (a.d_lambda - b.d_lambda).cwiseAbs().maxCoeff();
  for (Index k = 0; k < a.d_factors.size(); ++k)
    d = std::max(d, (a.d_factors[k] - b.d_factors[k]).cwiseAbs().maxCoeff());
  return d;
}

inline double max_abs(const GradientBundle& a) {
  double d = a.d_lambda.cwiseAbs().maxCoeff();
  for (const auto& f : a.d_factors) d = std::max(d, f.cwiseAbs().maxCoeff());
  return d;
}

/// Central finite-difference gradient of objective_value in flat coordinates.
inline Vector fd_gradient(const ObjectiveConfig& cfg, const DenseTensor& x, const SymKruskal& m,
                          double h = 1e-6) {
  const Vector v0 = flatten(m, true);
  Vector g(v0.size());
  for (Eigen::Index i = 0; i < v0.size(); ++i) {
    Vector vp = v0, vm = v0;
    vp[i] += h;
    vm[i] -= h;
    g[i] = (objective_value(cfg, x, unflatten(vp, m, true)) -
            objective_value(cfg, x, unflatten(vm, m, true))) /
           (2.0 * h);
  }
  return g;
}

}  // namespace symgcp::testing

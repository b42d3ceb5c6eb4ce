#pragma once

// Fully symmetric binary test tensors with an odds link, and the
// permutation-matched cosine similarity score used to grade recovered factors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "symgcp/random.hpp"
#include "symgcp/tensor.hpp"

namespace symgcp {

struct BinaryGenConfig {
  Index modes = 4;  // m
  Index size = 50;  // n
  Index rank = 5;   // r: rank - 1 signal columns plus one noise column
  double delta = 0.15;
  double rho_high = 0.9;
  double rho_low = 0.002;
  double signal_sd = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (modes == 0) throw ValidationError("generator needs modes >= 1");
    if (size == 0) throw ValidationError("generator needs size >= 1");
    if (rank < 2) throw ValidationError("generator needs rank >= 2 (signal plus noise columns)");
    if (!(delta > 0.0 && delta <= 1.0)) throw ValidationError("delta must be in (0, 1]");
    if (!(rho_low > 0.0 && rho_low < rho_high && rho_high < 1.0))
      throw ValidationError("need 0 < rho_low < rho_high < 1");
    if (!(signal_sd >= 0.0)) throw ValidationError("signal_sd must be >= 0");
  }

  /// Entries per signal column: delta * n rounded to nearest (at least 1).
  Index signal_count() const {
    return std::clamp<Index>(static_cast<Index>(std::lround(delta * static_cast<double>(size))), 1,
                             size);
  }
  double signal_mean() const {
    return std::pow(rho_high / (1.0 - rho_high), 1.0 / static_cast<double>(modes));
  }
  double noise_value() const {
    return std::pow(rho_low / (1.0 - rho_low), 1.0 / static_cast<double>(modes));
  }
};

struct GroundTruth {
  Matrix A_star;
  SymKruskal M_star;
  SparseTensor X;
  /// Entries whose true model value was negative and clamped to 0 before
  /// drawing.
  Index clamped = 0;
};

/// True factor matrix: the first r-1 columns have signal_count() random
/// entries drawn from N(signal_mean, signal_sd); the last column is constant.
inline Matrix generate_factor(const BinaryGenConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const auto n = static_cast<Eigen::Index>(cfg.size), r = static_cast<Eigen::Index>(cfg.rank);
  Matrix a = Matrix::Zero(n, r);
  std::normal_distribution<double> normal(cfg.signal_mean(), cfg.signal_sd);
  std::vector<Index> rows(cfg.size);
  for (Eigen::Index j = 0; j + 1 < r; ++j) {
    std::iota(rows.begin(), rows.end(), Index{0});
    // Partial Fisher-Yates: the first signal_count() positions are a uniform
    // draw without replacement.
    for (Index s = 0; s < cfg.signal_count(); ++s) {
      std::uniform_int_distribution<Index> pick(s, cfg.size - 1);
      std::swap(rows[s], rows[pick(rng)]);
    }
    for (Index s = 0; s < cfg.signal_count(); ++s)
      a(static_cast<Eigen::Index>(rows[s]), j) = normal(rng);
  }
  a.col(r - 1).setConstant(cfg.noise_value());
  return a;
}

/// Draws a fully symmetric binary tensor from M* = [[1; A*, ..., A*]]: one
/// Bernoulli(m/(1+m)) draw per sorted index, copied to all its permutations.
inline SparseTensor generate_binary_data(const Matrix& A_star, Index modes, std::mt19937_64& rng,
                                         Index* clamped = nullptr) {
  const Index n = static_cast<Index>(A_star.rows());
  const Eigen::Index r = A_star.cols();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<MultiIndex> subs;
  std::vector<double> vals;
  Index nclamped = 0;
  MultiIndex idx(modes, 0);
  Eigen::RowVectorXd prod(r);
  for (;;) {
    prod.setOnes();
    for (Index k = 0; k < modes; ++k) prod = prod.cwiseProduct(A_star.row(static_cast<Eigen::Index>(idx[k])));
    double mval = prod.sum();
    if (mval < 0.0) {
      mval = 0.0;
      ++nclamped;
    }
    if (unif(rng) < mval / (1.0 + mval)) {
      MultiIndex perm = idx;
      do {
        subs.push_back(perm);
        vals.push_back(1.0);
      } while (std::next_permutation(perm.begin(), perm.end()));
    }
    // Next nondecreasing index tuple.
    Index k = modes;
    while (k > 0 && idx[k - 1] == n - 1) --k;
    if (k == 0) break;
    ++idx[k - 1];
    for (Index j = k; j < modes; ++j) idx[j] = idx[k - 1];
  }
  if (clamped) *clamped = nclamped;
  return SparseTensor(Dims(modes, n), subs, std::move(vals));
}

inline GroundTruth make_ground_truth(const BinaryGenConfig& cfg, Matrix A_star,
                                     std::uint64_t data_seed) {
  GroundTruth gt;
  gt.A_star = std::move(A_star);
  gt.M_star = SymKruskal(Vector::Ones(gt.A_star.cols()), {gt.A_star}, ModePartition::full(cfg.modes));
  std::mt19937_64 rng(data_seed);
  gt.X = generate_binary_data(gt.A_star, cfg.modes, rng, &gt.clamped);
  if (gt.clamped > 0)
    warn(std::to_string(gt.clamped) + " negative true-model entries clamped to 0 before drawing");
  return gt;
}

/// Factor and one data instance, both derived from cfg.seed.
inline GroundTruth generate_binary(const BinaryGenConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(cfg.seed, 0));
  Matrix a = generate_factor(cfg, rng);
  return make_ground_truth(cfg, std::move(a), derive_seed(cfg.seed, 1));
}

/// Another data instance from the same factor (instance 0 equals the one in
/// generate_binary).
inline GroundTruth generate_binary_instance(const BinaryGenConfig& cfg, const Matrix& A_star,
                                            Index instance) {
  cfg.validate();
  return make_ground_truth(cfg, A_star, derive_seed(cfg.seed, 1 + instance));
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

/// C(j, l) = cos(a_j, b_l); 0 when either column is zero.
inline Matrix cosine_matrix(const Matrix& a, const Matrix& b) {
  Matrix c(a.cols(), b.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index l = 0; l < b.cols(); ++l) {
      const double na = a.col(j).norm(), nb = b.col(l).norm();
      c(j, l) = (na == 0.0 || nb == 0.0) ? 0.0 : a.col(j).dot(b.col(l)) / (na * nb);
    }
  return c;
}

/// Maximum-weight perfect assignment on a square matrix (Hungarian method
/// with potentials). Returns assignment[row] = column.
inline std::vector<Index> max_weight_assignment(const Matrix& w) {
  const Index n = static_cast<Index>(w.rows());
  if (w.cols() != w.rows()) throw ShapeError("assignment needs a square matrix");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; minimizes cost = -w.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<Index> p(n + 1, 0), way(n + 1, 0);
  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const Index i0 = p[j0];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -w(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) -
                           u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const Index j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Index> assignment(n);
  for (Index j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

/// Best column matching of `a_hat` to `a_star` by mean cosine:
/// exhaustive for r <= 8, Hungarian assignment above.
inline std::vector<Index> best_column_matching(const Matrix& a_star, const Matrix& a_hat) {
  const Matrix c = cosine_matrix(a_star, a_hat);
  const Index r = static_cast<Index>(c.rows());
  if (r > 8) return max_weight_assignment(c);
  std::vector<Index> perm(r), best;
  std::iota(perm.begin(), perm.end(), Index{0});
  double best_sum = -std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (Index j = 0; j < r; ++j)
      s += c(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(perm[j]));
    if (s > best_sum) {
      best_sum = s;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// (1/r) sum_j cos(A*_{:,j}, A^_{:,pi(j)}) maximized over permutations pi.
inline double cosine_score(const Matrix& a_star, const Matrix& a_hat) {
  if (a_star.rows() != a_hat.rows() || a_star.cols() != a_hat.cols())
    throw ShapeError("cosine_score: shapes " + std::to_string(a_star.rows()) + "x" +
                     std::to_string(a_star.cols()) + " and " + std::to_string(a_hat.rows()) + "x" +
                     std::to_string(a_hat.cols()) + " differ");
  if (a_star.cols() == 0) throw ShapeError("cosine_score: no columns");
  const Matrix c = cosine_matrix(a_star, a_hat);
  const auto match = best_column_matching(a_star, a_hat);
  double s = 0.0;
  for (Index j = 0; j < match.size(); ++j)
    s += c(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(match[j]));
  return s / static_cast<double>(match.size());
}

/// Flips every column of `a_hat` whose strongest cosine against `reference`
/// is negative. `multiplicity` is how many modes share the factor: for odd
/// multiplicity the matching weight is negated too, so the model tensor is
/// unchanged either way.
inline std::pair<Matrix, Vector> negate_fix(Matrix a_hat, Vector lambda, const Matrix& reference,
                                            Index multiplicity) {
  if (a_hat.rows() != reference.rows())
    throw ShapeError("negate_fix: reference has a different number of rows");
  if (lambda.size() != a_hat.cols()) throw ShapeError("negate_fix: lambda/factor rank mismatch");
  const Matrix c = cosine_matrix(reference, a_hat);
  for (Eigen::Index l = 0; l < a_hat.cols(); ++l) {
    Eigen::Index best = 0;
    if (c.rows() == 0) break;
    c.col(l).cwiseAbs().maxCoeff(&best);
    if (c(best, l) < 0.0) {
      a_hat.col(l) *= -1.0;
      if (multiplicity % 2 == 1) lambda[l] = -lambda[l];
    }
  }
  return {std::move(a_hat), std::move(lambda)};
}

/// negate_fix applied to factor `cell` of a model.
inline SymKruskal negate_fix(const SymKruskal& m, Index cell, const Matrix& reference) {
  SymKruskal out = m;
  auto [a, lam] = negate_fix(m.factors.at(cell), m.lambda, reference, m.partition.cell(cell).size());
  out.factors[cell] = std::move(a);
  out.lambda = std::move(lam);
  return out;
}

}  // namespace symgcp

#pragma once

// Sparse unbiased estimates of the derivative tensor (uniform and stratified
// sampling) and the stochastic gradients computed from them.

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "symgcp/kernels.hpp"
#include "symgcp/losses.hpp"
#include "symgcp/objective.hpp"
#include "symgcp/tensor.hpp"

namespace symgcp {

enum class SamplerKind { uniform, stratified };

/// How sampled zeros are rescaled under stratified sampling.
enum class ZeroScaleRule {
  /// (T - nnz) / q: the unbiased choice.
  total_minus_nnz,
  /// (1 - nnz) / q, kept only for comparison experiments; biased.
  one_minus_nnz,
};

inline SamplerKind parse_sampler_kind(const std::string& s) {
  if (s == "uniform") return SamplerKind::uniform;
  if (s == "stratified") return SamplerKind::stratified;
  throw ValidationError("unknown sampler '" + s + "' (expected uniform or stratified)");
}

inline std::string to_string(SamplerKind k) {
  return k == SamplerKind::uniform ? "uniform" : "stratified";
}

struct SamplerConfig {
  SamplerKind kind = SamplerKind::stratified;
  Index s = 1000;  // uniform batch size
  Index p = 500;   // stratified nonzero draws
  Index q = 500;   // stratified zero draws
  std::uint64_t rng_seed = 0;
  Index max_rejection_iters = 1000;
  ZeroScaleRule zero_rule = ZeroScaleRule::total_minus_nnz;

  void validate() const {
    if (kind == SamplerKind::uniform && s == 0)
      throw ValidationError("uniform sampler needs batch size s >= 1");
    if (kind == SamplerKind::stratified && p + q == 0)
      throw ValidationError("stratified sampler needs p + q >= 1");
    if (max_rejection_iters == 0) throw ValidationError("max_rejection_iters must be >= 1");
  }

  Index batch_size() const { return kind == SamplerKind::uniform ? s : p + q; }
};

/// Sampled entries with duplicates collapsed. `scale[e]` already includes the
/// multiplicity, so sum_e scale[e] f(x_e, m_e) is an unbiased estimate of
/// sum_i f(x_i, m_i).
struct SampleSet {
  Dims dims;
  std::vector<Index> subs;  // entries x modes, row-major
  std::vector<Index> linear;
  std::vector<double> x;
  std::vector<double> scale;
  std::vector<Index> multiplicity;
  Index total_entries = 0;
  Index nnz = 0;

  Index size() const noexcept { return linear.size(); }
  std::span<const Index> subscript(Index e) const {
    return {subs.data() + e * dims.size(), dims.size()};
  }

  /// Every entry once with scale 1; estimates over it are exact.
  static SampleSet all_entries(const DenseTensor& x) {
    SampleSet s;
    s.dims = x.dims();
    s.total_entries = x.size();
    for (Index lin = 0; lin < x.size(); ++lin) {
      auto idx = unravel(lin, x.dims());
      s.subs.insert(s.subs.end(), idx.begin(), idx.end());
      s.linear.push_back(lin);
      s.x.push_back(x[lin]);
      s.scale.push_back(1.0);
      s.multiplicity.push_back(1);
      if (x[lin] != 0.0) ++s.nnz;
    }
    return s;
  }
};

/// Sparse estimate of the derivative tensor Y.
struct SampledDerivative {
  Dims dims;
  std::vector<Index> subs;  // entries x modes, row-major
  std::vector<Index> linear;
  std::vector<double> values;
  std::vector<Index> multiplicity;
  Index total_entries = 0;
  Index nnz = 0;

  Index size() const noexcept { return values.size(); }
  std::span<const Index> subscript(Index e) const {
    return {subs.data() + e * dims.size(), dims.size()};
  }
};

inline DenseTensor densify(const SampledDerivative& y) {
  DenseTensor d(y.dims);
  for (Index e = 0; e < y.size(); ++e) d[y.linear[e]] += y.values[e];
  return d;
}

/// Draws sample sets from a data tensor. Owns the RNG stream; not meant to
/// be shared between threads.
class Sampler {
 public:
  Sampler(SamplerConfig cfg, std::shared_ptr<const SparseTensor> x)
      : cfg_(cfg), sparse_(std::move(x)), dims_(sparse_->dims()), rng_(cfg.rng_seed) {
    cfg_.validate();
    nonzero_set_.reserve(sparse_->nnz() * 2);
    for (Index e = 0; e < sparse_->nnz(); ++e) nonzero_set_.insert(sparse_->linear_index(e));
  }

  Sampler(SamplerConfig cfg, std::shared_ptr<const DenseTensor> x)
      : Sampler(cfg, std::make_shared<const SparseTensor>(sparsify(*x))) {
    dense_ = std::move(x);
  }

  const SamplerConfig& config() const noexcept { return cfg_; }
  std::mt19937_64& rng() noexcept { return rng_; }
  const Dims& dims() const noexcept { return dims_; }

  /// A gradient batch; `factor` multiplies the configured batch sizes.
  SampleSet draw(Index factor = 1) {
    if (cfg_.kind == SamplerKind::uniform) return draw_uniform(cfg_.s * factor);
    return draw_stratified(cfg_.p * factor, cfg_.q * factor);
  }

  /// s indices i.i.d. uniform over the full index set, with replacement.
  SampleSet draw_uniform(Index s) {
    SampleSet set = empty_set();
    std::unordered_map<Index, Index> pos;
    const double scale = static_cast<double>(set.total_entries) / static_cast<double>(s);
    MultiIndex idx(dims_.size());
    for (Index w = 0; w < s; ++w) {
      random_index(idx);
      const Index lin = ravel(idx, dims_);
      add(set, pos, idx, lin, value_at(lin), scale);
    }
    return set;
  }

  /// p draws from the stored nonzeros and q rejection-sampled zeros.
  SampleSet draw_stratified(Index p, Index q) {
    SampleSet set = empty_set();
    std::unordered_map<Index, Index> pos;
    const Index nnz = sparse_->nnz();
    const Index zeros = set.total_entries - nnz;
    if (p > 0 && nnz > 0) {
      const double scale = static_cast<double>(nnz) / static_cast<double>(p);
      std::uniform_int_distribution<Index> pick(0, nnz - 1);
      for (Index w = 0; w < p; ++w) {
        const Index e = pick(rng_);
        auto sub = sparse_->subscript(e);
        add(set, pos, MultiIndex(sub.begin(), sub.end()), sparse_->linear_index(e),
            sparse_->value(e), scale);
      }
    }
    if (q > 0) {
      if (zeros == 0)
        throw SamplingError("stratified sampling: tensor has no zero entries to sample");
      const double num = cfg_.zero_rule == ZeroScaleRule::total_minus_nnz
                             ? static_cast<double>(zeros)
                             : 1.0 - static_cast<double>(nnz);
      const double scale = num / static_cast<double>(q);
      MultiIndex idx(dims_.size());
      for (Index w = 0; w < q; ++w) {
        Index lin = 0;
        Index tries = 0;
        for (;; ++tries) {
          if (tries == cfg_.max_rejection_iters)
            throw SamplingError("stratified sampling: no zero found in " +
                                std::to_string(cfg_.max_rejection_iters) +
                                " rejection draws; tensor is too dense for zero sampling");
          random_index(idx);
          lin = ravel(idx, dims_);
          if (!nonzero_set_.contains(lin)) break;
        }
        add(set, pos, idx, lin, 0.0, scale);
      }
    }
    return set;
  }

 private:
  SampleSet empty_set() const {
    SampleSet set;
    set.dims = dims_;
    set.total_entries = numel(dims_);
    set.nnz = sparse_->nnz();
    return set;
  }

  void random_index(MultiIndex& idx) {
    for (Index n = 0; n < dims_.size(); ++n)
      idx[n] = std::uniform_int_distribution<Index>(0, dims_[n] - 1)(rng_);
  }

  double value_at(Index lin) const {
    if (dense_) return (*dense_)[lin];
    return sparse_->find(lin).value_or(0.0);
  }

  static void add(SampleSet& set, std::unordered_map<Index, Index>& pos, const MultiIndex& idx,
                  Index lin, double x, double scale) {
    auto [it, inserted] = pos.try_emplace(lin, set.linear.size());
    if (!inserted) {
      set.scale[it->second] += scale;
      ++set.multiplicity[it->second];
      return;
    }
    set.subs.insert(set.subs.end(), idx.begin(), idx.end());
    set.linear.push_back(lin);
    set.x.push_back(x);
    set.scale.push_back(scale);
    set.multiplicity.push_back(1);
  }

  SamplerConfig cfg_;
  std::shared_ptr<const SparseTensor> sparse_;
  std::shared_ptr<const DenseTensor> dense_;
  Dims dims_;
  std::unordered_set<Index> nonzero_set_;
  std::mt19937_64 rng_;
};

/// y~_e = scale_e * w_e * dl/dm(x_e, m_e) for every sampled entry.
inline SampledDerivative sampled_derivative(const SampleSet& set, const WeightedLoss& loss,
                                            const SymKruskal& m) {
  detail::check_model_dims(m, set.dims);
  loss.check_shape(set.dims);
  SampledDerivative y;
  y.dims = set.dims;
  y.subs = set.subs;
  y.linear = set.linear;
  y.multiplicity = set.multiplicity;
  y.total_entries = set.total_entries;
  y.nnz = set.nnz;
  y.values.resize(set.size());
  for (Index e = 0; e < set.size(); ++e) {
    const double w = loss.weight(set.linear[e]);
    if (w == 0.0) {
      y.values[e] = 0.0;
      continue;
    }
    const double mval = model_entry(m, set.subscript(e));
    if (!loss.base.in_domain(mval))
      detail::throw_domain(loss.base, mval, set.linear[e], set.dims);
    y.values[e] = set.scale[e] * w * loss.base.deriv(set.x[e], mval);
  }
  return y;
}

inline SampledDerivative sample_uniform(const SamplerConfig& cfg, const DenseTensor& x,
                                        const WeightedLoss& loss, const SymKruskal& m) {
  SamplerConfig c = cfg;
  c.kind = SamplerKind::uniform;
  Sampler sampler(c, std::make_shared<const DenseTensor>(x));
  return sampled_derivative(sampler.draw(), loss, m);
}

inline SampledDerivative sample_stratified(const SamplerConfig& cfg, const SparseTensor& x,
                                           const WeightedLoss& loss, const SymKruskal& m) {
  SamplerConfig c = cfg;
  c.kind = SamplerKind::stratified;
  Sampler sampler(c, std::make_shared<const SparseTensor>(x));
  return sampled_derivative(sampler.draw(), loss, m);
}

/// Gradient with Y replaced by the sparse estimate: row-sampled factors,
/// Hadamard products across modes, and a scatter into each mode's rows.
/// The regularizer term is added exactly.
inline GradientBundle stochastic_gradient(const SampledDerivative& y, const SymKruskal& m,
                                          double gamma = 0.0, bool optimize_lambda = true) {
  detail::check_model_dims(m, y.dims);
  const Index N = m.ndims(), s = y.size();
  const Eigen::Index r = static_cast<Eigen::Index>(m.rank());
  GradientBundle g = GradientBundle::zeros_like(m);
  g.lambda_frozen = !optimize_lambda;

  if (s > 0) {
    // Sampled rows of each mode's factor: row w is (A_{sigma_n})_{i_n^w,:}.
    std::vector<Matrix> sampled(N);
    std::vector<Index> rows(s);
    for (Index n = 0; n < N; ++n) {
      for (Index w = 0; w < s; ++w) rows[w] = y.subs[w * N + n];
      sampled[n] = sampled_rows(m.mode_factor(n), rows);
    }
    const Eigen::Map<const Vector> yhat(y.values.data(), static_cast<Eigen::Index>(s));

    // Hadamard prefix/suffix products give the leave-one-out products.
    std::vector<Matrix> prefix(N + 1, Matrix::Ones(static_cast<Eigen::Index>(s), r));
    std::vector<Matrix> suffix(N + 1, Matrix::Ones(static_cast<Eigen::Index>(s), r));
    for (Index n = 0; n < N; ++n) prefix[n + 1] = prefix[n].cwiseProduct(sampled[n]);
    for (Index n = N; n-- > 0;) suffix[n] = suffix[n + 1].cwiseProduct(sampled[n]);

    g.d_lambda = prefix[N].transpose() * yhat;
    for (Index n = 0; n < N; ++n) {
      const Matrix contrib =
          (yhat.asDiagonal() * prefix[n].cwiseProduct(suffix[n + 1])) * m.lambda.asDiagonal();
      Matrix& dst = g.d_factors[m.partition.sigma(n)];
      for (Index w = 0; w < s; ++w)
        dst.row(static_cast<Eigen::Index>(y.subs[w * N + n])) += contrib.row(static_cast<Eigen::Index>(w));
    }
  }
  add_regularizer_gradient(m, gamma, g);
  return g;
}

/// Unbiased estimate of the weighted total loss over a fixed sample set.
inline double estimate_loss(const SampleSet& set, const WeightedLoss& loss, const SymKruskal& m) {
  detail::check_model_dims(m, set.dims);
  loss.check_shape(set.dims);
  return loss.base.visit([&](const auto& l) {
    double total = 0.0;
    for (Index e = 0; e < set.size(); ++e) {
      const double w = loss.weight(set.linear[e]);
      if (w == 0.0) continue;
      const double mval = model_entry(m, set.subscript(e));
      if (!l.in_domain(mval)) detail::throw_domain(loss.base, mval, set.linear[e], set.dims);
      total += set.scale[e] * w * l.value(set.x[e], mval);
    }
    return total;
  });
}

}  // namespace symgcp

#pragma once

// Entrywise losses l(x, m), their derivatives dl/dm, and weighted totals.

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "symgcp/tensor.hpp"

namespace symgcp {

inline constexpr double kDefaultLossEpsilon = 1e-10;

/// (x - m)^2
struct LeastSquaresLoss {
  double value(double x, double m) const { return (x - m) * (x - m); }
  double deriv(double x, double m) const { return 2.0 * (m - x); }
  bool in_domain(double) const { return true; }
};

/// Bernoulli with odds link: log(1 + m) - x log(m + eps).
struct BernoulliOddsLoss {
  double eps = kDefaultLossEpsilon;
  double value(double x, double m) const {
    return x == 0.0 ? std::log1p(m) : std::log1p(m) - x * std::log(m + eps);
  }
  double deriv(double x, double m) const {
    return x == 0.0 ? 1.0 / (1.0 + m) : 1.0 / (1.0 + m) - x / (m + eps);
  }
  bool in_domain(double m) const { return m > -eps; }
};

/// Poisson with identity link: m - x log(m + eps).
struct PoissonLoss {
  double eps = kDefaultLossEpsilon;
  double value(double x, double m) const { return x == 0.0 ? m : m - x * std::log(m + eps); }
  double deriv(double x, double m) const { return x == 0.0 ? 1.0 : 1.0 - x / (m + eps); }
  bool in_domain(double m) const { return m > -eps; }
};

/// User-supplied pair of callbacks.
struct CustomLoss {
  std::function<double(double, double)> value_fn;
  std::function<double(double, double)> deriv_fn;
  std::function<bool(double)> domain_fn;

  double value(double x, double m) const { return value_fn(x, m); }
  double deriv(double x, double m) const { return deriv_fn(x, m); }
  bool in_domain(double m) const { return !domain_fn || domain_fn(m); }
};

/// An entrywise loss plus its metadata. `lower_bound` bounds the weights and
/// factor entries during constrained fitting.
class LossSpec {
 public:
  using Impl = std::variant<LeastSquaresLoss, BernoulliOddsLoss, PoissonLoss, CustomLoss>;

  LossSpec() : LossSpec("least-squares", LeastSquaresLoss{}, std::nullopt, 0.0) {}

  static LossSpec least_squares() { return {"least-squares", LeastSquaresLoss{}, std::nullopt, 0.0}; }
  static LossSpec nonneg_least_squares() {
    return {"nonneg-least-squares", LeastSquaresLoss{}, 0.0, 0.0};
  }
  static LossSpec bernoulli_odds(double eps = kDefaultLossEpsilon) {
    return {"bernoulli-odds", BernoulliOddsLoss{eps}, 0.0, eps};
  }
  static LossSpec poisson(double eps = kDefaultLossEpsilon) {
    return {"poisson", PoissonLoss{eps}, 0.0, eps};
  }

  static const std::vector<std::string>& known_names() {
    static const std::vector<std::string> names = {"least-squares", "nonneg-least-squares",
                                                   "bernoulli-odds", "poisson"};
    return names;
  }

  static LossSpec from_name(const std::string& name, double eps = kDefaultLossEpsilon) {
    if (name == "least-squares") return least_squares();
    if (name == "nonneg-least-squares") return nonneg_least_squares();
    if (name == "bernoulli-odds") return bernoulli_odds(eps);
    if (name == "poisson") return poisson(eps);
    throw ValidationError("unknown loss '" + name +
                          "' (expected least-squares, nonneg-least-squares, bernoulli-odds or "
                          "poisson)");
  }

  /// Registers a user loss. The derivative is checked against central
  /// differences of the value on a grid of domain points; a mismatch above
  /// 1e-6 relative error throws ValidationError.
  static LossSpec custom(std::string name, std::function<double(double, double)> value,
                         std::function<double(double, double)> deriv,
                         std::optional<double> lower_bound = std::nullopt,
                         std::function<bool(double)> domain = {}) {
    LossSpec spec(std::move(name), CustomLoss{std::move(value), std::move(deriv), std::move(domain)},
                  lower_bound, 0.0);
    spec.check_derivative();
    return spec;
  }

  const std::string& name() const noexcept { return name_; }
  const std::optional<double>& lower_bound() const noexcept { return lower_bound_; }
  double epsilon() const noexcept { return epsilon_; }
  const Impl& impl() const noexcept { return impl_; }

  double value(double x, double m) const {
    return std::visit([&](const auto& l) { return l.value(x, m); }, impl_);
  }
  double deriv(double x, double m) const {
    return std::visit([&](const auto& l) { return l.deriv(x, m); }, impl_);
  }
  bool in_domain(double m) const {
    return std::visit([&](const auto& l) { return l.in_domain(m); }, impl_);
  }

  /// Calls `fn(concrete_loss)` so hot loops get static dispatch.
  template <typename Fn>
  decltype(auto) visit(Fn&& fn) const {
    return std::visit(std::forward<Fn>(fn), impl_);
  }

 private:
  LossSpec(std::string name, Impl impl, std::optional<double> lb, double eps)
      : name_(std::move(name)), impl_(std::move(impl)), lower_bound_(lb), epsilon_(eps) {}

  void check_derivative() const {
    const double base = lower_bound_.value_or(-2.0);
    for (double x : {0.0, 0.5, 1.0, 2.0, 3.0}) {
      for (double off : {0.25, 0.5, 1.0, 1.7, 3.1}) {
        const double m = base + off;
        if (!in_domain(m)) continue;
        const double h = 1e-6 * std::max(1.0, std::abs(m));
        if (!in_domain(m - h)) continue;
        const double fd = (value(x, m + h) - value(x, m - h)) / (2.0 * h);
        const double d = deriv(x, m);
        const double err = std::abs(fd - d) / std::max({std::abs(d), std::abs(fd), 1e-4});
        if (!(err < 1e-6))
          throw ValidationError("loss '" + name_ + "': derivative disagrees with finite "
                                "differences at x=" + std::to_string(x) + ", m=" +
                                std::to_string(m));
      }
    }
  }

  std::string name_;
  Impl impl_;
  std::optional<double> lower_bound_;
  double epsilon_;
};

/// A loss with an optional entrywise nonnegative weight tensor.
struct WeightedLoss {
  LossSpec base;
  std::shared_ptr<const DenseTensor> weights;

  WeightedLoss() = default;
  WeightedLoss(LossSpec b) : base(std::move(b)) {}  // NOLINT: implicit by intent
  WeightedLoss(LossSpec b, DenseTensor w)
      : base(std::move(b)), weights(std::make_shared<const DenseTensor>(std::move(w))) {
    for (double v : weights->values())
      if (!(v >= 0.0)) throw ValidationError("weight tensor entries must be nonnegative");
  }

  void check_shape(const Dims& dims) const {
    if (weights && weights->dims() != dims)
      throw ShapeError("weight tensor shape " + to_string(weights->dims()) +
                       " does not match data shape " + to_string(dims));
  }

  double weight(Index lin) const { return weights ? (*weights)[lin] : 1.0; }
};

inline double loss_value(const LossSpec& spec, double x, double m) {
  if (!spec.in_domain(m))
    throw DomainError("loss '" + spec.name() + "' evaluated outside its domain at m=" +
                      std::to_string(m));
  return spec.value(x, m);
}

inline double loss_deriv(const LossSpec& spec, double x, double m) {
  if (!spec.in_domain(m))
    throw DomainError("loss '" + spec.name() + "' evaluated outside its domain at m=" +
                      std::to_string(m));
  return spec.deriv(x, m);
}

namespace detail {

[[noreturn]] inline void throw_domain(const LossSpec& spec, double m, Index lin, const Dims& dims) {
  auto idx = unravel(lin, dims);
  std::string where;
  for (Index n = 0; n < idx.size(); ++n) where += (n ? "," : "") + std::to_string(idx[n] + 1);
  throw DomainError("loss '" + spec.name() + "' outside its domain at index (" + where +
                        "), model value " + std::to_string(m),
                    std::move(idx));
}

inline void check_model_dims(const SymKruskal& m, const Dims& dims) {
  m.validate();
  if (m.dims() != dims)
    throw ShapeError("model shape " + to_string(m.dims()) + " does not match data shape " +
                     to_string(dims));
}

}  // namespace detail

/// Sum over every entry of w_i l(x_i, m_i).
inline double total_loss(const WeightedLoss& loss, const DenseTensor& x, const SymKruskal& m) {
  detail::check_model_dims(m, x.dims());
  loss.check_shape(x.dims());
  const DenseTensor model = reconstruct(m);
  return loss.base.visit([&](const auto& l) {
    double s = 0.0;
    for (Index lin = 0; lin < x.size(); ++lin) {
      const double w = loss.weight(lin);
      if (w == 0.0) continue;
      if (!l.in_domain(model[lin])) detail::throw_domain(loss.base, model[lin], lin, x.dims());
      s += w * l.value(x[lin], model[lin]);
    }
    return s;
  });
}

inline double total_loss(const WeightedLoss& loss, const SparseTensor& x, const SymKruskal& m) {
  return total_loss(loss, densify(x), m);
}

/// y_i = w_i dl/dm(x_i, m_i).
inline DenseTensor derivative_tensor(const WeightedLoss& loss, const DenseTensor& x,
                                     const SymKruskal& m) {
  detail::check_model_dims(m, x.dims());
  loss.check_shape(x.dims());
  DenseTensor y = reconstruct(m);
  loss.base.visit([&](const auto& l) {
    for (Index lin = 0; lin < x.size(); ++lin) {
      const double w = loss.weight(lin);
      if (w == 0.0) {
        y[lin] = 0.0;
        continue;
      }
      if (!l.in_domain(y[lin])) detail::throw_domain(loss.base, y[lin], lin, x.dims());
      y[lin] = w * l.deriv(x[lin], y[lin]);
    }
  });
  return y;
}

inline DenseTensor derivative_tensor(const WeightedLoss& loss, const SparseTensor& x,
                                     const SymKruskal& m) {
  return derivative_tensor(loss, densify(x), m);
}

/// Weight 1 on indices that are nondecreasing inside every cell and 0
/// elsewhere, so each orbit of symmetric duplicates is counted once.
inline DenseTensor symmetry_dedup_weights(const Dims& dims, const ModePartition& p) {
  p.check_dims(dims);
  DenseTensor w(dims);
  MultiIndex idx(dims.size(), 0);
  for (Index lin = 0; lin < w.size(); ++lin) {
    bool canonical = true;
    for (const auto& cell : p.cells())
      for (Index a = 0; a + 1 < cell.size() && canonical; ++a)
        canonical = idx[cell[a]] <= idx[cell[a + 1]];
    w[lin] = canonical ? 1.0 : 0.0;
    for (Index n = 0; n < dims.size(); ++n) {
      if (++idx[n] < dims[n]) break;
      idx[n] = 0;
    }
  }
  return w;
}

}  // namespace symgcp

#pragma once

// Fitting drivers: bound-constrained limited-memory quasi-Newton for exact
// gradients and Adam with bad-epoch rollback for stochastic gradients.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "symgcp/objective.hpp"
#include "symgcp/stochastic.hpp"
#include "symgcp/tensor.hpp"

namespace symgcp {

// ---------------------------------------------------------------------------
// Trace
// ---------------------------------------------------------------------------

enum class TraceKind { exact, estimated, bad_epoch };

inline std::string to_string(TraceKind k) {
  switch (k) {
    case TraceKind::exact: return "exact";
    case TraceKind::estimated: return "estimated";
    case TraceKind::bad_epoch: return "bad-epoch";
  }
  return "exact";
}

inline TraceKind parse_trace_kind(const std::string& s) {
  if (s == "exact") return TraceKind::exact;
  if (s == "estimated") return TraceKind::estimated;
  if (s == "bad-epoch") return TraceKind::bad_epoch;
  throw IoError("unknown trace kind '" + s + "'");
}

struct TraceRecord {
  Index step = 0;  // iteration (L-BFGS-B) or epoch (Adam)
  double wall_seconds = 0.0;
  double objective = 0.0;
  TraceKind kind = TraceKind::exact;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct FitTrace {
  std::vector<TraceRecord> records;

  void add(Index step, double seconds, double objective, TraceKind kind) {
    if (!records.empty()) seconds = std::max(seconds, records.back().wall_seconds);
    records.push_back({step, seconds, objective, kind});
  }

  void write_csv(std::ostream& os) const {
    os << "epoch_or_iter,wall_seconds,objective,kind\n";
    os << std::setprecision(17);
    for (const auto& r : records)
      os << r.step << ',' << r.wall_seconds << ',' << r.objective << ',' << to_string(r.kind)
         << '\n';
  }

  static FitTrace read_csv(std::istream& is) {
    FitTrace t;
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(is, line) || line.rfind("epoch_or_iter,wall_seconds,objective,kind", 0) != 0)
      throw IoError("trace CSV is missing its header", 1);
    ++lineno;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string a, b, c, d;
      if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c, ',') ||
          !std::getline(ls, d))
        throw IoError("malformed trace row", lineno);
      try {
        t.records.push_back({std::stoull(a), std::stod(b), std::stod(c), parse_trace_kind(d)});
      } catch (const std::logic_error&) {
        throw IoError("malformed trace row", lineno);
      }
    }
    return t;
  }
};

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count() -
           paused_;
  }
  /// Excludes time spent in a caller's callback from the measurements.
  template <typename Fn>
  void exclude(Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    paused_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
  double paused_ = 0.0;
};

// ---------------------------------------------------------------------------
// Bounds
// ---------------------------------------------------------------------------

struct Bounds {
  Vector lower;
  Vector upper;

  static Bounds unbounded(Index n) {
    const double inf = std::numeric_limits<double>::infinity();
    return {Vector::Constant(static_cast<Eigen::Index>(n), -inf),
            Vector::Constant(static_cast<Eigen::Index>(n), inf)};
  }

  /// Same lower bound on every parameter (lambda and factors).
  static Bounds for_loss(const LossSpec& loss, Index n) {
    Bounds b = unbounded(n);
    if (loss.lower_bound()) b.lower.setConstant(*loss.lower_bound());
    return b;
  }

  bool active() const {
    return lower.array().isFinite().any() || upper.array().isFinite().any();
  }

  void project(Vector& x) const { x = x.cwiseMax(lower).cwiseMin(upper); }

  bool contains(const Vector& x) const {
    return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
  }
};

// ---------------------------------------------------------------------------
// L-BFGS-B
// ---------------------------------------------------------------------------

struct LbfgsbConfig {
  Index memory = 10;
  Index max_iterations = 1000;
  /// Stop when the projected gradient sup-norm falls below this.
  double pgtol = 1e-8;
  /// Stop when (f_old - f_new) / max(|f_old|, |f_new|, 1) falls below this.
  double rel_decrease_tol = 1e-12;
  /// Function evaluations allowed per line search.
  Index max_line_search = 20;
  /// Sufficient-decrease and curvature constants of the Wolfe conditions.
  double wolfe_c1 = 1e-3;
  double wolfe_c2 = 0.9;
  /// Stop as soon as the objective falls to this value (off by default).
  double stop_below = -std::numeric_limits<double>::infinity();

  void validate() const {
    if (memory == 0) throw ValidationError("lbfgsb.memory must be >= 1");
    if (!(pgtol > 0.0) || !(rel_decrease_tol > 0.0))
      throw ValidationError("lbfgsb tolerances must be > 0");
    if (max_line_search == 0) throw ValidationError("lbfgsb.max_line_search must be >= 1");
    if (!(wolfe_c1 > 0.0 && wolfe_c1 < wolfe_c2 && wolfe_c2 < 1.0))
      throw ValidationError("lbfgsb Wolfe constants need 0 < c1 < c2 < 1");
  }
};

struct FitResult {
  SymKruskal model;
  FitTrace trace;
  double final_objective = 0.0;
  Index iterations = 0;
  std::string status;
  bool converged = false;
};

/// f(x) with gradient written to g.
using FlatObjective = std::function<double(const Vector& x, Vector& g)>;

struct FlatResult {
  Vector x;
  double f = 0.0;
  Index iterations = 0;
  std::string status;
  bool converged = false;
};

namespace detail {

/// Limited-memory BFGS matrix in compact form B = theta I - W M W^T with
/// W = [Y, theta S].
class CompactBfgs {
 public:
  explicit CompactBfgs(Index memory) : memory_(memory) {}

  bool empty() const noexcept { return s_.empty(); }
  double theta() const noexcept { return theta_; }
  const Matrix& W() const noexcept { return w_; }
  const Matrix& M() const noexcept { return m_; }
  Eigen::Index cols() const noexcept { return w_.cols(); }

  void clear() {
    s_.clear();
    y_.clear();
    theta_ = 1.0;
    w_.resize(0, 0);
    m_.resize(0, 0);
  }

  /// Stores the pair unless its curvature is too small to keep B positive
  /// definite. Returns whether it was stored.
  bool update(const Vector& s, const Vector& y) {
    const double sy = s.dot(y);
    if (!(sy > std::numeric_limits<double>::epsilon() * y.squaredNorm())) return false;
    s_.push_back(s);
    y_.push_back(y);
    if (s_.size() > memory_) {
      s_.pop_front();
      y_.pop_front();
    }
    theta_ = y.squaredNorm() / sy;
    rebuild();
    return true;
  }

 private:
  void rebuild() {
    const auto k = static_cast<Eigen::Index>(s_.size());
    const Eigen::Index n = s_.front().size();
    Matrix S(n, k), Y(n, k);
    for (Eigen::Index j = 0; j < k; ++j) {
      S.col(j) = s_[static_cast<std::size_t>(j)];
      Y.col(j) = y_[static_cast<std::size_t>(j)];
    }
    w_.resize(n, 2 * k);
    w_.leftCols(k) = Y;
    w_.rightCols(k) = theta_ * S;
    const Matrix sy = S.transpose() * Y;
    Matrix mid = Matrix::Zero(2 * k, 2 * k);
    for (Eigen::Index i = 0; i < k; ++i) mid(i, i) = -sy(i, i);
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = 0; j < i; ++j) {
        mid(k + i, j) = sy(i, j);  // L
        mid(j, k + i) = sy(i, j);  // L^T
      }
    mid.bottomRightCorner(k, k) = theta_ * (S.transpose() * S);
    m_ = mid.inverse();
  }

  Index memory_;
  std::deque<Vector> s_, y_;
  double theta_ = 1.0;
  Matrix w_, m_;
};

/// Generalized Cauchy point: first local minimizer of the quadratic model
/// along the projected steepest-descent path. Also returns c = W^T (xcp - x).
inline void cauchy_point(const Vector& x, const Vector& g, const Bounds& bounds,
                         const CompactBfgs& B, Vector& xcp, Vector& c) {
  const Eigen::Index n = x.size();
  const double inf = std::numeric_limits<double>::infinity();
  const double theta = B.theta();
  const Eigen::Index k2 = B.cols();
  Vector tb(n), d(n);
  std::vector<Eigen::Index> order;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (g[i] < 0.0 && std::isfinite(bounds.upper[i])) tb[i] = (x[i] - bounds.upper[i]) / g[i];
    else if (g[i] > 0.0 && std::isfinite(bounds.lower[i])) tb[i] = (x[i] - bounds.lower[i]) / g[i];
    else tb[i] = inf;
    d[i] = tb[i] <= 0.0 ? 0.0 : -g[i];
    if (tb[i] > 0.0 && std::isfinite(tb[i])) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return tb[a] < tb[b]; });
  xcp = x;
  c = Vector::Zero(k2);
  Vector p = k2 > 0 ? Vector(B.W().transpose() * d) : Vector(0);
  double fp = -d.squaredNorm();
  double fpp = -theta * fp - (k2 > 0 ? p.dot(B.M() * p) : 0.0);
  const double fpp0 = -theta * fp;
  fpp = std::max(fpp, std::numeric_limits<double>::epsilon() * fpp0);
  double dt_min = fpp > 0.0 ? -fp / fpp : 0.0;
  double t_old = 0.0;
  std::size_t next = 0;
  while (next < order.size()) {
    const Eigen::Index b = order[next];
    const double t = tb[b];
    const double dt = t - t_old;
    if (dt_min < dt) break;
    ++next;
    xcp[b] = d[b] > 0.0 ? bounds.upper[b] : bounds.lower[b];
    const double zb = xcp[b] - x[b];
    const double gb = g[b];
    if (k2 > 0) {
      c += dt * p;
      const Vector wb = B.W().row(b).transpose();
      const Vector Mc = B.M() * c, Mp = B.M() * p, Mw = B.M() * wb;
      fp += dt * fpp + gb * gb + theta * gb * zb - gb * wb.dot(Mc);
      fpp += -theta * gb * gb - 2.0 * gb * wb.dot(Mp) - gb * gb * wb.dot(Mw);
      p += gb * wb;
    } else {
      fp += dt * fpp + gb * gb + theta * gb * zb;
      fpp += -theta * gb * gb;
    }
    d[b] = 0.0;
    fpp = std::max(fpp, std::numeric_limits<double>::epsilon() * fpp0);
    dt_min = fpp > 0.0 ? -fp / fpp : 0.0;
    t_old = t;
    if (fp >= 0.0) {
      dt_min = 0.0;
      break;
    }
  }
  dt_min = std::max(dt_min, 0.0);
  t_old += dt_min;
  for (std::size_t j = next; j < order.size(); ++j) xcp[order[j]] = x[order[j]] + t_old * d[order[j]];
  for (Eigen::Index i = 0; i < n; ++i)
    if (!std::isfinite(tb[i])) xcp[i] = x[i] + t_old * d[i];
  if (k2 > 0) c += dt_min * p;
  bounds.project(xcp);
}

/// Minimizes the quadratic model over the variables left free at the
/// Cauchy point, then truncates the step to stay inside the box.
inline Vector subspace_minimum(const Vector& x, const Vector& g, const Bounds& bounds,
                               const CompactBfgs& B, const Vector& xcp, const Vector& c) {
  if (B.empty()) return xcp;
  const Eigen::Index n = x.size();
  std::vector<Eigen::Index> free;
  for (Eigen::Index i = 0; i < n; ++i)
    if (xcp[i] > bounds.lower[i] && xcp[i] < bounds.upper[i]) free.push_back(i);
  if (free.empty()) return xcp;
  const double theta = B.theta();
  const auto nf = static_cast<Eigen::Index>(free.size());
  const Vector Mc = B.M() * c;
  Matrix WZ(nf, B.cols());
  Vector r(nf);
  for (Eigen::Index j = 0; j < nf; ++j) {
    const Eigen::Index i = free[static_cast<std::size_t>(j)];
    WZ.row(j) = B.W().row(i);
    r[j] = g[i] + theta * (xcp[i] - x[i]) - B.W().row(i).dot(Mc);
  }
  const Vector v = B.M() * (WZ.transpose() * r);
  const Matrix K = Matrix::Identity(B.cols(), B.cols()) - (B.M() * (WZ.transpose() * WZ)) / theta;
  const Vector u = K.partialPivLu().solve(v);
  const Vector du = -r / theta - WZ * u / (theta * theta);
  if (!du.allFinite()) return xcp;
  double alpha = 1.0;
  for (Eigen::Index j = 0; j < nf; ++j) {
    const Eigen::Index i = free[static_cast<std::size_t>(j)];
    if (du[j] > 0.0 && std::isfinite(bounds.upper[i]))
      alpha = std::min(alpha, (bounds.upper[i] - xcp[i]) / du[j]);
    else if (du[j] < 0.0 && std::isfinite(bounds.lower[i]))
      alpha = std::min(alpha, (bounds.lower[i] - xcp[i]) / du[j]);
  }
  Vector xbar = xcp;
  for (Eigen::Index j = 0; j < nf; ++j) xbar[free[static_cast<std::size_t>(j)]] += alpha * du[j];
  bounds.project(xbar);
  return xbar;
}

/// Largest t with x + t d inside the box.
inline double max_feasible_step(const Vector& x, const Vector& d, const Bounds& bounds) {
  double t = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (d[i] > 0.0 && std::isfinite(bounds.upper[i])) t = std::min(t, (bounds.upper[i] - x[i]) / d[i]);
    else if (d[i] < 0.0 && std::isfinite(bounds.lower[i])) t = std::min(t, (bounds.lower[i] - x[i]) / d[i]);
  }
  return std::max(t, 0.0);
}

/// Minimizer of the cubic interpolating (a, fa, da) and (b, fb, db), or the
/// midpoint when the cubic has no usable minimizer.
inline double cubic_min(double a, double fa, double da, double b, double fb, double db) {
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    if (std::isfinite(t)) return t;
  }
  return 0.5 * (a + b);
}

struct LineSearchResult {
  bool ok = false;
  double step = 0.0;
  double f = 0.0;
  Vector x, g;
};

/// Strong-Wolfe line search on [0, step_max] (bracketing then zoom). Falls
/// back to the best sufficient-decrease point when the evaluation budget
/// runs out before the curvature condition holds.
inline LineSearchResult wolfe_search(const FlatObjective& fg, const Vector& x, double f0,
                                     const Vector& g0, const Vector& d, double step,
                                     double step_max, const Bounds& bounds,
                                     const LbfgsbConfig& cfg) {
  const double dphi0 = g0.dot(d);
  LineSearchResult best;
  Index evals = 0;
  LineSearchResult cur;
  auto eval = [&](double t) {
    cur.step = t;
    cur.x = x + t * d;
    bounds.project(cur.x);
    cur.g.resize(x.size());
    cur.f = fg(cur.x, cur.g);
    ++evals;
    const bool armijo = std::isfinite(cur.f) && cur.f <= f0 + cfg.wolfe_c1 * t * dphi0;
    if (armijo && (!best.ok || cur.f < best.f)) {
      best = cur;
      best.ok = true;
    }
    return cur.g.allFinite() ? cur.g.dot(d) : std::numeric_limits<double>::quiet_NaN();
  };
  auto done = [&]() {
    LineSearchResult r = cur;
    r.ok = true;
    return r;
  };

  double t_prev = 0.0, f_prev = f0, d_prev = dphi0;
  double t = std::min(step, step_max);
  double lo = 0.0, hi = 0.0, f_lo = f0, d_lo = dphi0, f_hi = 0.0, d_hi = 0.0;
  bool bracketed = false;
  while (evals < cfg.max_line_search) {
    const double dphi = eval(t);
    if (!std::isfinite(cur.f) || !std::isfinite(dphi)) {
      lo = t_prev, f_lo = f_prev, d_lo = d_prev;
      hi = t, f_hi = std::numeric_limits<double>::infinity(), d_hi = 0.0;
      bracketed = true;
      break;
    }
    if (cur.f > f0 + cfg.wolfe_c1 * t * dphi0 || (evals > 1 && cur.f >= f_prev)) {
      lo = t_prev, f_lo = f_prev, d_lo = d_prev;
      hi = t, f_hi = cur.f, d_hi = dphi;
      bracketed = true;
      break;
    }
    if (std::abs(dphi) <= -cfg.wolfe_c2 * dphi0) return done();
    if (dphi >= 0.0) {
      lo = t, f_lo = cur.f, d_lo = dphi;
      hi = t_prev, f_hi = f_prev, d_hi = d_prev;
      bracketed = true;
      break;
    }
    if (t >= step_max) return done();
    t_prev = t, f_prev = cur.f, d_prev = dphi;
    t = std::min(4.0 * t, step_max);
  }
  if (!bracketed) return best;

  while (evals < cfg.max_line_search) {
    const double a = std::min(lo, hi), b = std::max(lo, hi);
    double tn = std::isfinite(f_hi) ? cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi) : 0.5 * (lo + hi);
    tn = std::clamp(tn, a + 0.1 * (b - a), b - 0.1 * (b - a));
    if (!(b - a > std::numeric_limits<double>::epsilon() * std::max(1.0, b))) break;
    const double dphi = eval(tn);
    if (!std::isfinite(cur.f) || !std::isfinite(dphi) ||
        cur.f > f0 + cfg.wolfe_c1 * tn * dphi0 || cur.f >= f_lo) {
      hi = tn, f_hi = std::isfinite(cur.f) ? cur.f : std::numeric_limits<double>::infinity();
      d_hi = std::isfinite(dphi) ? dphi : 0.0;
      continue;
    }
    if (std::abs(dphi) <= -cfg.wolfe_c2 * dphi0) return done();
    if (dphi * (hi - lo) >= 0.0) {
      hi = lo, f_hi = f_lo, d_hi = d_lo;
    }
    lo = tn, f_lo = cur.f, d_lo = dphi;
  }
  return best;
}

}  // namespace detail

/// L-BFGS-B: limited-memory BFGS on a box. Each iteration finds the
/// generalized Cauchy point of the quadratic model, minimizes the model over
/// the variables still free there, and runs a strong-Wolfe line search
/// towards that point. `on_iter(iter, f, x)` is called after the initial
/// point and every accepted step.
inline FlatResult minimize_lbfgsb(const FlatObjective& fg, Vector x, const Bounds& bounds,
                                  const LbfgsbConfig& cfg,
                                  const std::function<void(Index, double, const Vector&)>& on_iter = {}) {
  cfg.validate();
  const Eigen::Index n = x.size();
  if (bounds.lower.size() != n || bounds.upper.size() != n)
    throw ShapeError("bounds do not match the parameter count");
  bounds.project(x);
  Vector g(n);
  double f = fg(x, g);
  if (on_iter) on_iter(0, f, x);

  detail::CompactBfgs B(cfg.memory);
  FlatResult res;
  auto finish = [&](std::string status, bool converged, Index it) {
    res.x = x;
    res.f = f;
    res.iterations = it;
    res.status = std::move(status);
    res.converged = converged;
    return res;
  };
  if (!std::isfinite(f) || !g.allFinite()) return finish("non-finite objective", false, 0);

  Vector xcp(n), c;
  for (Index iter = 1; iter <= cfg.max_iterations; ++iter) {
    Vector pg = x - g;
    bounds.project(pg);
    pg -= x;
    if (pg.lpNorm<Eigen::Infinity>() <= cfg.pgtol)
      return finish("projected gradient below tolerance", true, iter - 1);

    detail::LineSearchResult ls;
    for (int attempt = 0; attempt < 2; ++attempt) {
      detail::cauchy_point(x, g, bounds, B, xcp, c);
      const Vector xbar = detail::subspace_minimum(x, g, bounds, B, xcp, c);
      Vector d = xbar - x;
      if (!(g.dot(d) < 0.0)) {
        if (B.empty()) break;
        B.clear();
        continue;
      }
      const double step_max = detail::max_feasible_step(x, d, bounds);
      const double step0 = B.empty() ? std::min(1.0 / d.norm(), step_max) : std::min(1.0, step_max);
      ls = detail::wolfe_search(fg, x, f, g, d, step0, step_max, bounds, cfg);
      if (ls.ok || B.empty()) break;
      B.clear();
    }
    if (!ls.ok) return finish("line search failed", false, iter - 1);

    B.update(ls.x - x, ls.g - g);
    const double rel = (f - ls.f) / std::max({std::abs(f), std::abs(ls.f), 1.0});
    x = std::move(ls.x);
    f = ls.f;
    g = std::move(ls.g);
    if (on_iter) on_iter(iter, f, x);
    if (f <= cfg.stop_below) return finish("objective reached stop_below", true, iter);
    if (rel <= cfg.rel_decrease_tol) return finish("relative decrease below tolerance", true, iter);
  }
  return finish("maximum iterations reached", false, cfg.max_iterations);
}

/// Runs L-BFGS-B on the objective from `init`. Bounds come from the loss's
/// lower bound unless given explicitly.
inline FitResult fit_lbfgsb(const LbfgsbConfig& cfg, const Objective& obj, const SymKruskal& init,
                            std::optional<Bounds> bounds = std::nullopt) {
  const bool with_lambda = obj.config().optimize_lambda;
  const Index nparams = parameter_count(init, with_lambda);
  const Bounds b = bounds ? *bounds : Bounds::for_loss(obj.config().loss.base, nparams);
  if (static_cast<Index>(b.lower.size()) != nparams || static_cast<Index>(b.upper.size()) != nparams)
    throw ShapeError("bounds do not match the parameter count");

  FitResult out;
  Stopwatch clock;
  GradientBundle bundle;
  FlatObjective fg = [&](const Vector& v, Vector& g) {
    const SymKruskal m = unflatten(v, init, with_lambda);
    try {
      const double f = obj.value_and_gradient(m, bundle);
      g = flatten(bundle, with_lambda);
      return f;
    } catch (const DomainError&) {
      // Outside the loss domain: the line search treats this as too long a step.
      g.setZero(v.size());
      return std::numeric_limits<double>::infinity();
    }
  };
  auto on_iter = [&](Index it, double f, const Vector&) {
    out.trace.add(it, clock.seconds(), f, TraceKind::exact);
  };
  FlatResult r = minimize_lbfgsb(fg, flatten(init, with_lambda), b, cfg, on_iter);
  out.model = unflatten(r.x, init, with_lambda);
  out.final_objective = r.f;
  out.iterations = r.iterations;
  out.status = r.status;
  out.converged = r.converged;
  return out;
}

// ---------------------------------------------------------------------------
// Adam with epoch checkpoints
// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Index iterations_per_epoch = 100;
  Index max_epochs = 1000;
  /// An epoch is bad unless the estimate drops below old - (1 - kappa)|old|.
  double kappa = 0.99;
  Index max_bad_epochs = 10;
  /// Learning-rate multiplier applied after each bad epoch (1 disables).
  double bad_epoch_decay = 0.5;
  bool project_bounds = true;
  SamplerConfig sampler;
  /// Size of the fixed loss-estimation set relative to the gradient batch.
  Index estimate_factor = 10;

  void validate() const {
    if (!(kappa > 0.0 && kappa < 1.0)) throw ValidationError("adam.kappa must be in (0, 1)");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      throw ValidationError("adam.beta1 and adam.beta2 must be in [0, 1)");
    if (!(learning_rate > 0.0)) throw ValidationError("adam.learning_rate must be > 0");
    if (!(epsilon > 0.0)) throw ValidationError("adam.epsilon must be > 0");
    if (iterations_per_epoch == 0) throw ValidationError("adam.iterations_per_epoch must be >= 1");
    if (max_bad_epochs == 0) throw ValidationError("adam.max_bad_epochs must be >= 1");
    if (!(bad_epoch_decay > 0.0 && bad_epoch_decay <= 1.0))
      throw ValidationError("adam.bad_epoch_decay must be in (0, 1]");
    if (estimate_factor == 0) throw ValidationError("adam.estimate_factor must be >= 1");
    sampler.validate();
  }
};

/// Parameters, first/second moment estimates and iteration counter.
struct AdamState {
  Vector params;
  Vector m;
  Vector v;
  Index t = 0;

  friend bool operator==(const AdamState& a, const AdamState& b) {
    return a.t == b.t && a.params.size() == b.params.size() && a.params == b.params &&
           a.m == b.m && a.v == b.v;
  }
};

struct EpochInfo {
  Index epoch = 0;
  double estimate = 0.0;
  bool bad = false;
  double learning_rate = 0.0;
  const AdamState& state;
  const AdamState& checkpoint;
  const SymKruskal& model;
};

using GradientSource = std::function<GradientBundle(const SymKruskal&)>;
using LossEstimator = std::function<double(const SymKruskal&)>;
using EpochCallback = std::function<void(const EpochInfo&)>;

inline bool is_bad_epoch(double estimate, double previous, double kappa) {
  return !(estimate < previous - (1.0 - kappa) * std::abs(previous));
}

/// Adam over fixed-length epochs. After every epoch the objective estimate
/// must drop by the factor kappa; otherwise the epoch is bad and the state
/// (parameters, both moments, iteration counter) is restored from the last
/// checkpoint. Stops after max_epochs or max_bad_epochs consecutive bad
/// epochs. Time spent inside `on_epoch` is excluded from the trace clock.
inline FitResult fit_adam(const AdamConfig& cfg, const GradientSource& grad_source,
                          const LossEstimator& estimate, const SymKruskal& init,
                          bool optimize_lambda, std::optional<Bounds> bounds = std::nullopt,
                          const EpochCallback& on_epoch = {}) {
  cfg.validate();
  const Index nparams = parameter_count(init, optimize_lambda);
  if (bounds && (static_cast<Index>(bounds->lower.size()) != nparams ||
                 static_cast<Index>(bounds->upper.size()) != nparams))
    throw ShapeError("bounds do not match the parameter count");

  Stopwatch clock;
  FitResult out;
  AdamState state{flatten(init, optimize_lambda), Vector::Zero(static_cast<Eigen::Index>(nparams)),
                  Vector::Zero(static_cast<Eigen::Index>(nparams)), 0};
  if (bounds && cfg.project_bounds) bounds->project(state.params);
  SymKruskal model = unflatten(state.params, init, optimize_lambda);
  double prev = estimate(model);
  out.trace.add(0, clock.seconds(), prev, TraceKind::estimated);
  AdamState checkpoint = state;
  double alpha = cfg.learning_rate;
  Index bad_streak = 0;
  Index epoch = 0;
  out.status = "maximum epochs reached";

  for (epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (Index it = 0; it < cfg.iterations_per_epoch; ++it) {
      const Vector g = flatten(grad_source(model), optimize_lambda);
      ++state.t;
      state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g;
      state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * g.cwiseAbs2();
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
      state.params.array() -=
          alpha * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.epsilon);
      if (bounds && cfg.project_bounds) bounds->project(state.params);
      model = unflatten(state.params, init, optimize_lambda);
    }

    const double est = estimate(model);
    const bool bad = !std::isfinite(est) || is_bad_epoch(est, prev, cfg.kappa);
    const double lr_used = alpha;
    if (bad) {
      out.trace.add(epoch, clock.seconds(), est, TraceKind::bad_epoch);
      state = checkpoint;
      model = unflatten(state.params, init, optimize_lambda);
      alpha *= cfg.bad_epoch_decay;
      ++bad_streak;
    } else {
      out.trace.add(epoch, clock.seconds(), est, TraceKind::estimated);
      checkpoint = state;
      prev = est;
      bad_streak = 0;
    }
    if (on_epoch)
      clock.exclude([&] { on_epoch({epoch, est, bad, lr_used, state, checkpoint, model}); });
    if (bad_streak >= cfg.max_bad_epochs) {
      out.status = "bad-epoch budget exhausted";
      break;
    }
  }

  out.model = model;
  out.final_objective = prev;
  out.iterations = state.t;
  out.converged = bad_streak >= cfg.max_bad_epochs;
  return out;
}

/// Stochastic gradient source and fixed-set loss estimator for a sparse data
/// tensor. The estimator includes the exact regularizer term.
struct StochasticProblem {
  GradientSource gradient;
  LossEstimator estimate;
  std::shared_ptr<Sampler> sampler;
  std::shared_ptr<const SampleSet> estimate_set;
};

inline StochasticProblem make_stochastic_problem(const ObjectiveConfig& cfg,
                                                 std::shared_ptr<const SparseTensor> x,
                                                 const AdamConfig& adam) {
  cfg.validate();
  cfg.partition.check_dims(x->dims());
  cfg.loss.check_shape(x->dims());
  auto sampler = std::make_shared<Sampler>(adam.sampler, x);
  auto est_set = std::make_shared<const SampleSet>(sampler->draw(adam.estimate_factor));
  StochasticProblem p;
  p.sampler = sampler;
  p.estimate_set = est_set;
  p.gradient = [cfg, sampler](const SymKruskal& m) {
    const SampledDerivative y = sampled_derivative(sampler->draw(), cfg.loss, m);
    return stochastic_gradient(y, m, cfg.gamma, cfg.optimize_lambda);
  };
  p.estimate = [cfg, est_set](const SymKruskal& m) {
    return estimate_loss(*est_set, cfg.loss, m) + regularizer(m, cfg.gamma);
  };
  return p;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

/// Frobenius norm of the model, computed from factor Gram matrices.
inline double model_norm(const SymKruskal& m) {
  Matrix gram = m.lambda * m.lambda.transpose();
  for (Index n = 0; n < m.ndims(); ++n) {
    const Matrix& a = m.mode_factor(n);
    gram = gram.cwiseProduct(a.transpose() * a);
  }
  return std::sqrt(std::max(0.0, gram.sum()));
}

/// Gaussian factors (absolute values when `nonnegative`), lambda = 1, all
/// factors scaled jointly so the model norm equals `data_norm`.
inline SymKruskal initialize_model(const Dims& dims, double data_norm, const ModePartition& partition,
                                   Index rank, std::uint64_t seed, bool nonnegative = false) {
  partition.check_dims(dims);
  if (rank == 0) throw ValidationError("rank must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Matrix> factors;
  for (Index k = 0; k < partition.ncells(); ++k) {
    Matrix a(static_cast<Eigen::Index>(dims[partition.cell(k).front()]),
             static_cast<Eigen::Index>(rank));
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const double v = normal(rng);
        a(i, j) = nonnegative ? std::abs(v) : v;
      }
    factors.push_back(std::move(a));
  }
  SymKruskal m(Vector::Ones(static_cast<Eigen::Index>(rank)), std::move(factors), partition);
  const double mnorm = model_norm(m);
  if (data_norm == 0.0 || mnorm == 0.0) {
    warn("zero-norm data tensor; initial factors left unscaled");
    return m;
  }
  const double c = std::pow(data_norm / mnorm, 1.0 / static_cast<double>(dims.size()));
  for (auto& f : m.factors) f *= c;
  return m;
}

inline SymKruskal initialize_model(const DenseTensor& x, const ModePartition& partition, Index rank,
                                   std::uint64_t seed, bool nonnegative = false) {
  return initialize_model(x.dims(), x.norm(), partition, rank, seed, nonnegative);
}

inline SymKruskal initialize_model(const SparseTensor& x, const ModePartition& partition, Index rank,
                                   std::uint64_t seed, bool nonnegative = false) {
  return initialize_model(x.dims(), x.norm(), partition, rank, seed, nonnegative);
}

}  // namespace symgcp

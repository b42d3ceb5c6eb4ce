// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any selected criterion fails.
//
//   acceptance                 criteria 1-9; criterion 6 at desk scale
//   acceptance --full          criterion 6 at full scale (4-way, n = 50) instead
//   acceptance --only 1,2,8    a subset

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "symgcp/cli.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace symgcp;
using namespace symgcp::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("symgcp_acceptance_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

/// Random partition of N modes into cells; `kind` 0 = full, 1 = singletons,
/// 2 = mixed (first two modes together, the rest alone).
ModePartition make_partition(Index N, int kind) {
  if (kind == 0) return ModePartition::full(N);
  if (kind == 1) return ModePartition::singletons(N);
  std::vector<std::vector<Index>> cells{{0, N - 1}};
  for (Index n = 1; n + 1 < N; ++n) cells.push_back({n});
  return ModePartition(cells);
}

ModePartition random_partition(Index N, std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> pick_cells(1, N);
  const Index K = pick_cells(rng);
  std::vector<Index> modes(N);
  std::iota(modes.begin(), modes.end(), Index{0});
  std::shuffle(modes.begin(), modes.end(), rng);
  std::vector<std::vector<Index>> cells(K);
  for (Index k = 0; k < K; ++k) cells[k].push_back(modes[k]);
  std::uniform_int_distribution<Index> pick(0, K - 1);
  for (Index n = K; n < N; ++n) cells[pick(rng)].push_back(modes[n]);
  return ModePartition(cells);
}

/// Data suited to the loss: counts for Poisson, binary for Bernoulli,
/// Gaussian for least squares.
DenseTensor random_data(const std::string& loss, const Dims& dims, std::mt19937_64& rng) {
  DenseTensor x(dims);
  std::poisson_distribution<int> counts(1.0);
  std::bernoulli_distribution coin(0.3);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index i = 0; i < x.size(); ++i)
    x[i] = loss == "poisson" ? counts(rng) : loss == "bernoulli-odds" ? (coin(rng) ? 1.0 : 0.0)
                                                                       : normal(rng);
  return x;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  const std::vector<std::string> losses{"least-squares", "bernoulli-odds", "poisson"};
  double worst = 0.0;
  int cases = 0;
  for (int c = 0; c < 50; ++c) {
    const Index N = 3 + static_cast<Index>(c % 2);
    const ModePartition p = make_partition(N, (c / 2) % 3);
    const std::string loss = losses[static_cast<std::size_t>((c / 6) % 3)];
    const double gamma = (c / 18) % 2 ? 0.1 : 0.0;
    const Dims dims = cell_dims(p, 2);
    const bool positive = loss != "least-squares";
    const SymKruskal m = random_model(p, dims, 2, rng, positive ? 0.2 : -1.0, 1.0);
    const DenseTensor x = random_data(loss, dims, rng);
    ObjectiveConfig cfg;
    cfg.loss = LossSpec::from_name(loss);
    cfg.partition = p;
    cfg.rank = 2;
    cfg.gamma = gamma;
    const Vector g = flatten(gradient(cfg, x, m), true);
    const Vector fd = fd_gradient(cfg, x, m, 1e-6);
    // Relative error per coordinate, floored at 1e-3 of the largest entry so
    // coordinates that are zero up to round-off do not divide by nothing.
    const double floor = 1e-3 * fd.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < g.size(); ++i)
      worst = std::max(worst, std::abs(g[i] - fd[i]) / std::max(std::abs(fd[i]), floor));
    ++cases;
  }
  const double t = seconds_since(t0);
  return {worst < 1e-5 && t < 60.0, std::to_string(cases) + " cases, max rel err " + fmt(worst) +
                                        " (< 1e-5), " + fmt(t, 3) + " s (< 60 s)"};
}

Outcome criterion2() {
  std::mt19937_64 rng(202);
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    const Index N = 2 + static_cast<Index>(c % 4);
    const ModePartition p = random_partition(N, rng);
    const Dims dims = cell_dims(p, 2);
    const SymKruskal m = random_model(p, dims, 1 + static_cast<Index>(c % 4), rng);
    worst = std::max(worst, symmetry_deviation(reconstruct(m), p));
  }
  return {worst < 1e-12, "100 models, max deviation " + fmt(worst) + " (< 1e-12)"};
}

Outcome criterion3() {
  std::mt19937_64 rng(303);
  double mttkrp_dev = 0.0, grad_dev = 0.0;
  for (int c = 0; c < 50; ++c) {
    const Index N = 3 + static_cast<Index>(c % 2);
    ModePartition p = random_partition(N, rng);
    if (p.ncells() == N) p = ModePartition::full(N);
    const Dims dims = cell_dims(p, 3);
    const SymKruskal m = random_model(p, dims, 3, rng);
    const DenseTensor y = symmetrize(random_dense(dims, rng), p);
    const FactorSequence fs(m);
    for (const auto& cell : p.cells()) {
      const Matrix ref = mttkrp_dense(y, fs, cell.front());
      for (Index n : cell)
        mttkrp_dev = std::max(mttkrp_dev, max_rel_diff(mttkrp_dense(y, fs, n), ref));
    }
    ObjectiveConfig cfg;
    cfg.loss = LossSpec::least_squares();
    cfg.partition = p;
    cfg.rank = 3;
    cfg.gamma = 0.1;
    const GradientBundle full = gradient(cfg, y, m);
    const GradientBundle fast = gradient_fastpath(cfg, y, m);
    grad_dev = std::max(grad_dev, max_abs_diff(full, fast) / std::max(1.0, max_abs(full)));
  }
  return {mttkrp_dev < 1e-12 && grad_dev < 1e-12,
          "50 cases, MTTKRP spread " + fmt(mttkrp_dev) + ", fast path vs full " + fmt(grad_dev) +
              " (both < 1e-12, relative)"};
}

Outcome criterion4() {
  std::mt19937_64 rng(404);
  double worst = 0.0;
  for (int c = 0; c < 50; ++c) {
    const Index N = 3 + static_cast<Index>(c % 3);
    const ModePartition p = random_partition(N, rng);
    const Dims dims = cell_dims(p, 3);
    const SymKruskal m = random_model(p, dims, 3, rng);
    SampledDerivative y;
    y.dims = dims;
    y.total_entries = numel(dims);
    std::uniform_int_distribution<Index> pick(0, numel(dims) - 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::set<Index> used;
    const Index s = 1 + static_cast<Index>(c);
    while (used.size() < std::min(s, numel(dims))) {
      const Index lin = pick(rng);
      if (!used.insert(lin).second) continue;
      const MultiIndex idx = unravel(lin, dims);
      y.subs.insert(y.subs.end(), idx.begin(), idx.end());
      y.linear.push_back(lin);
      y.values.push_back(normal(rng));
      y.multiplicity.push_back(1);
    }
    const double gamma = c % 2 ? 0.1 : 0.0;
    const GradientBundle sparse = stochastic_gradient(y, m, gamma);
    const GradientBundle dense = gradient_from_derivative(densify(y), m, gamma);
    worst = std::max(worst, max_abs_diff(sparse, dense) / std::max(1.0, max_abs(dense)));
  }
  return {worst < 1e-12, "50 cases, max diff " + fmt(worst) + " (< 1e-12, relative)"};
}

Outcome criterion5() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(505);
  const Dims dims{3, 3, 3};
  const auto p = ModePartition::full(3);
  const SymKruskal m = random_model(p, dims, 2, rng, 0.2, 1.0);
  std::vector<MultiIndex> subs;
  std::vector<double> vals;
  for (Index lin = 0; lin < 27; lin += 4) {
    subs.push_back(unravel(lin, dims));
    vals.push_back(1.0);
  }
  auto x = std::make_shared<const SparseTensor>(dims, subs, vals);
  const WeightedLoss loss(LossSpec::bernoulli_odds());
  const DenseTensor exact = derivative_tensor(loss, *x, m);
  const int batches = 100000;
  double worst = 0.0;
  std::string where;
  for (SamplerKind kind : {SamplerKind::uniform, SamplerKind::stratified}) {
    SamplerConfig sc;
    sc.kind = kind;
    sc.s = 8;
    sc.p = 4;
    sc.q = 4;
    sc.rng_seed = kind == SamplerKind::uniform ? 1 : 2;
    Sampler sampler(sc, x);
    std::vector<double> sum(27, 0.0), sumsq(27, 0.0);
    for (int b = 0; b < batches; ++b) {
      const SampledDerivative y = sampled_derivative(sampler.draw(), loss, m);
      const DenseTensor d = densify(y);
      for (Index i = 0; i < 27; ++i) {
        sum[i] += d[i];
        sumsq[i] += d[i] * d[i];
      }
    }
    for (Index i = 0; i < 27; ++i) {
      const double mean = sum[i] / batches;
      const double var = std::max(0.0, sumsq[i] / batches - mean * mean);
      const double se = std::sqrt(var / batches);
      const double z = se > 0.0 ? std::abs(mean - exact[i]) / se
                                : (std::abs(mean - exact[i]) < 1e-12 ? 0.0 : INFINITY);
      if (z > worst) {
        worst = z;
        where = to_string(kind) + " entry " + std::to_string(i + 1);
      }
    }
  }
  const double t = seconds_since(t0);
  return {worst < 4.0 && t < 120.0, "1e5 batches per sampler, max |z| " + fmt(worst, 3) + " at " +
                                        where + " (< 4), " + fmt(t, 3) + " s (< 120 s)"};
}

/// Runs the multi-start protocol on every instance for one loss and returns
/// the best-init score per instance.
std::vector<double> best_scores(const fs::path& data_dir, Index instances, const std::string& loss,
                                Index n_inits, Index rank, Index modes, const fs::path& work) {
  const Matrix a_star = io::read_csv(data_dir / "A_star.csv");
  std::vector<double> scores;
  for (Index i = 0; i < instances; ++i) {
    cli::RunConfig cfg;
    cfg.input = data_dir / ("X_" + std::to_string(i + 1) + ".tns");
    std::string spec = "[[";
    for (Index n = 0; n < modes; ++n) spec += (n ? "," : "") + std::to_string(n + 1);
    cfg.partition_spec = spec + "]]";
    cfg.rank = rank;
    cfg.loss = loss;
    cfg.n_initializations = n_inits;
    cfg.seed = 1000 + i;
    cfg.threads = std::max(1u, std::thread::hardware_concurrency());
    const fs::path run = work / (loss + "_" + std::to_string(i + 1));
    cli::cmd_decompose(cfg, run);
    const auto ev = cli::cmd_evaluate(a_star, run);
    scores.push_back(ev.best_score().value_or(NAN));
    std::cout << "    " << loss << " instance " << i + 1 << ": best-init score "
              << fmt(scores.back()) << std::endl;
  }
  return scores;
}

Outcome criterion6(bool full_scale) {
  const auto t0 = Clock::now();
  const fs::path work = scratch_dir(full_scale ? "c6_full" : "c6_desk");
  cli::GenConfig gc;
  gc.gen.modes = full_scale ? 4 : 3;
  gc.gen.size = full_scale ? 50 : 20;
  gc.gen.rank = 5;
  gc.gen.delta = 0.15;
  gc.gen.rho_high = 0.9;
  gc.gen.rho_low = 0.002;
  gc.gen.seed = 1;
  gc.instances = full_scale ? 5 : 2;
  const Index inits = full_scale ? 10 : 5;
  cli::cmd_generate(gc, work / "data");
  const auto bern = best_scores(work / "data", gc.instances, "bernoulli-odds", inits, 5,
                                gc.gen.modes, work);
  const auto ls =
      best_scores(work / "data", gc.instances, "least-squares", inits, 5, gc.gen.modes, work);
  const double mb = median(bern), ml = median(ls);
  const double t = seconds_since(t0);
  const bool ordered = mb > ml;
  std::string detail = "median best score bernoulli " + fmt(mb) + ", least-squares " + fmt(ml) +
                       " (bernoulli > least-squares";
  bool pass = ordered;
  if (full_scale) {
    pass = pass && mb >= 0.98;
    detail += ", bernoulli >= 0.98";
  } else {
    pass = pass && t < 120.0;
    detail += ", < 120 s";
  }
  detail += "), " + fmt(t, 4) + " s";
  fs::remove_all(work);
  return {pass, detail};
}

Outcome criterion7() {
  BinaryGenConfig gen;
  gen.seed = 1;
  const GroundTruth gt = generate_binary(gen);
  auto sparse = std::make_shared<const SparseTensor>(gt.X);
  auto dense = std::make_shared<const DenseTensor>(densify(gt.X));
  const auto p = ModePartition::full(4);

  // The baseline uses the plain evaluator. The symmetric shortcuts are this
  // library's additions, so they only screen which starts reach the target.
  ObjectiveConfig oc;
  oc.loss = LossSpec::bernoulli_odds();
  oc.partition = p;
  oc.rank = 5;
  const Objective plain(oc, dense);
  ObjectiveConfig fast_oc = oc;
  fast_oc.symmetric_data_fastpath = true;
  fast_oc.orbit_compression = true;
  const Objective fast(fast_oc, dense);

  // True model with unit-norm columns and the norms folded into lambda, so
  // the regularizer vanishes and the model tensor is unchanged.
  SymKruskal truth = gt.M_star;
  for (Eigen::Index j = 0; j < truth.lambda.size(); ++j) {
    const double nrm = truth.factors[0].col(j).norm();
    truth.factors[0].col(j) /= nrm;
    truth.lambda[j] *= std::pow(nrm, 4.0);
  }
  const double f_true = fast.value(truth);
  const double target = f_true + 0.01 * std::abs(f_true);
  std::cout << "    true-model objective " << fmt(f_true, 8) << ", target " << fmt(target, 8)
            << std::endl;

  auto time_to_target = [&](const FitTrace& tr) {
    for (const auto& r : tr.records)
      if (r.objective <= target) return r.wall_seconds;
    return std::numeric_limits<double>::infinity();
  };
  auto finite_median = [](std::vector<double> v) {
    std::erase_if(v, [](double t) { return !std::isfinite(t); });
    return v.empty() ? std::numeric_limits<double>::infinity() : median(v);
  };

  const Index n_inits = 10;
  std::vector<SymKruskal> starts;
  for (Index i = 0; i < n_inits; ++i)
    starts.push_back(initialize_model(*sparse, p, 5, derive_seed(7, i), true));

  std::vector<double> lb_times, lb_fast_times;
  for (Index i = 0; i < n_inits; ++i) {
    const FitResult screen = fit_lbfgsb(LbfgsbConfig{}, fast, starts[i]);
    const double t_fast = time_to_target(screen.trace);
    lb_fast_times.push_back(t_fast);
    std::string line = "    L-BFGS-B init " + std::to_string(i + 1) + ": final " +
                       fmt(screen.final_objective, 8) + ", " + fmt(t_fast) +
                       " s to target with symmetric evaluation";
    if (std::isfinite(t_fast)) {
      LbfgsbConfig to_target;
      to_target.stop_below = target;
      const FitResult base = fit_lbfgsb(to_target, plain, starts[i]);
      // A baseline run that never gets there is charged its full running time.
      double t = time_to_target(base.trace);
      if (!std::isfinite(t)) t = base.trace.records.back().wall_seconds;
      lb_times.push_back(t);
      line += ", " + fmt(t) + " s with the plain evaluator";
    }
    std::cout << line << std::endl;
  }

  AdamConfig ac;
  ac.sampler.kind = SamplerKind::stratified;
  ac.sampler.p = 500;
  ac.sampler.q = 500;
  std::vector<double> adam_times;
  double best_obj = std::numeric_limits<double>::infinity(), best_score = NAN;
  for (Index i = 0; i < n_inits; ++i) {
    ac.sampler.rng_seed = derive_seed(derive_seed(7, i), 1);
    const auto prob = make_stochastic_problem(oc, sparse, ac);
    // The exact objective is evaluated inside the callback, whose time the
    // optimizer leaves off its clock.
    Index reached_epoch = 0;
    double last_exact = std::numeric_limits<double>::infinity();
    const FitResult fit = fit_adam(
        ac, prob.gradient, prob.estimate, starts[i], true,
        Bounds::for_loss(oc.loss.base, parameter_count(starts[i])), [&](const EpochInfo& e) {
          if (e.bad) return;
          last_exact = fast.value(e.model);
          if (reached_epoch == 0 && last_exact <= target) reached_epoch = e.epoch;
        });
    if (!std::isfinite(last_exact)) last_exact = fast.value(fit.model);
    double t = std::numeric_limits<double>::infinity();
    for (const auto& r : fit.trace.records)
      if (reached_epoch != 0 && r.step == reached_epoch) t = r.wall_seconds;
    adam_times.push_back(t);
    const double score = cosine_score(gt.A_star, fit.model.factors[0]);
    std::cout << "    stratified Adam init " << i + 1 << ": exact " << fmt(last_exact, 8) << ", "
              << fmt(fit.trace.records.back().wall_seconds) << " s total, " << fmt(t)
              << " s to target, score " << fmt(score) << std::endl;
    if (last_exact < best_obj) {
      best_obj = last_exact;
      best_score = score;
    }
  }

  const auto reached = [](const std::vector<double>& v) {
    return std::count_if(v.begin(), v.end(), [](double t) { return std::isfinite(t); });
  };
  const double t_adam = finite_median(adam_times);
  const double t_lb = finite_median(lb_times);
  const double ratio = t_adam / t_lb;
  std::cout << "    with symmetric evaluation L-BFGS-B needs " << fmt(finite_median(lb_fast_times))
            << " s (ratio " << fmt(t_adam / finite_median(lb_fast_times), 3) << ")" << std::endl;
  return {std::isfinite(ratio) && ratio < 0.1 && best_score >= 0.95,
          "reached target: Adam " + std::to_string(reached(adam_times)) + "/10, L-BFGS-B " +
              std::to_string(lb_times.size()) + "/10; median time to target Adam " + fmt(t_adam) +
              " s vs L-BFGS-B " + fmt(t_lb) + " s, ratio " + fmt(ratio, 3) +
              " (< 0.1); best-init Adam score " + fmt(best_score) + " (>= 0.95)"};
}

Outcome criterion8() {
  int inside = 0;
  std::string fractions;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    BinaryGenConfig gen;
    gen.seed = seed;
    const GroundTruth gt = generate_binary(gen);
    const double frac = static_cast<double>(gt.X.nnz()) / static_cast<double>(gt.X.numel());
    if (frac >= 0.0040 && frac <= 0.0048) ++inside;
    fractions += (seed > 1 ? " " : "") + fmt(100.0 * frac, 3) + "%";
  }
  return {inside >= 9, std::to_string(inside) + "/10 seeds in [0.40%, 0.48%] (>= 9): " + fractions};
}

Outcome criterion9() {
  const fs::path work = scratch_dir("c9");
  std::mt19937_64 rng(909);
  const Index n = 8, k = 5, r = 3;
  const auto p = ModePartition::parse("[[1,2],[3]]");
  const SymKruskal truth = random_model(p, {n, n, k}, r, rng, 0.1, 1.0);
  // Counts drawn once per (i <= j, l) and mirrored, so the data is exactly
  // symmetric in the first two modes.
  std::vector<MultiIndex> subs;
  std::vector<double> vals;
  for (Index l = 0; l < k; ++l)
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i <= j; ++i) {
        std::poisson_distribution<int> draw(model_entry(truth, MultiIndex{i, j, l}));
        const int c = draw(rng);
        if (c == 0) continue;
        subs.push_back({i, j, l});
        vals.push_back(c);
        if (i != j) {
          subs.push_back({j, i, l});
          vals.push_back(c);
        }
      }
  io::write_sparse(work / "counts.tns", SparseTensor({n, n, k}, subs, vals));
  {
    std::ofstream os(work / "poisson.cfg");
    os << "input = counts.tns\npartition = [[1,2],[3]]\nrank = 3\nloss = poisson\n"
          "n_initializations = 3\nseed = 4\n";
  }
  const cli::RunConfig cfg = cli::RunConfig::load(work / "poisson.cfg");
  const auto summary = cli::cmd_decompose(cfg, work / "run");
  bool ok = summary.best.has_value();
  std::string detail;
  if (ok) {
    const auto& best = summary.inits[*summary.best];
    const double first = best.trace.records.front().objective;
    const double last = best.final_objective;
    const double dev = symmetry_deviation(reconstruct(best.model), p);
    ok = last < first && dev <= 1e-12;
    detail = "objective " + fmt(first, 6) + " -> " + fmt(last, 6) + ", symmetry deviation of fit " +
             fmt(dev) + " (<= 1e-12), status '" + best.status + "'";
  } else {
    detail = "no initialization succeeded";
  }
  fs::remove_all(work);
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"symgcp acceptance checks"};
  bool full = false;
  std::vector<int> only;
  app.add_flag("--full", full, "run criterion 6 at full scale instead of desk scale");
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  warning_handler() = [](const std::string&) {};
  std::map<int, std::pair<std::string, std::function<Outcome()>>> table{
      {1, {"gradient vs finite differences", criterion1}},
      {2, {"reconstruct is cell-symmetric", criterion2}},
      {3, {"symmetric MTTKRP and fast-path gradient", criterion3}},
      {4, {"sparse stochastic gradient is exact", criterion4}},
      {5, {"sampled derivative is unbiased", criterion5}},
      {6, {"bernoulli beats least squares (desk scale)", [] { return criterion6(false); }}},
      {7, {"stratified Adam vs L-BFGS-B", criterion7}},
      {8, {"generator sparsity", criterion8}},
      {9, {"poisson decomposition through the CLI", criterion9}},
  };

  if (full)
    table[6] = {"bernoulli beats least squares (full scale)", [] { return criterion6(true); }};

  int failures = 0;
  auto report = [&](int id, const std::string& name, const Outcome& o) {
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << name << ": "
              << o.detail << std::endl;
    if (!o.pass) ++failures;
  };
  for (const auto& [id, entry] : table) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = entry.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    report(id, entry.first, o);
  }
  return failures == 0 ? 0 : 1;
}

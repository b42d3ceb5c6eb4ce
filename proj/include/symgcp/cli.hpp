#pragma once

// Config files and the decompose / generate / evaluate commands.
//
// Config files are "key = value" lines. '#' starts a comment, and a
// "[section]" line prefixes the following keys with "section.". Unknown keys
// are errors.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "symgcp/io.hpp"
#include "symgcp/objective.hpp"
#include "symgcp/optimize.hpp"
#include "symgcp/random.hpp"
#include "symgcp/synth.hpp"

namespace symgcp::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Key-value config files
// ---------------------------------------------------------------------------

class KeyValueFile {
 public:
  struct Entry {
    std::string value;
    std::size_t line = 0;
    bool used = false;
  };

  static KeyValueFile parse(std::istream& is, std::string source = "config") {
    KeyValueFile kv;
    kv.source_ = std::move(source);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      const std::string t = trim(line);
      if (t.empty()) continue;
      if (t.front() == '[' && t.back() == ']') {
        section = trim(t.substr(1, t.size() - 2));
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ValidationError(kv.source_ + ":" + std::to_string(lineno) + ": expected 'key = value'");
      std::string key = trim(t.substr(0, eq));
      if (key.empty())
        throw ValidationError(kv.source_ + ":" + std::to_string(lineno) + ": empty key");
      if (!section.empty()) key = section + "." + key;
      if (kv.entries_.contains(key))
        throw ValidationError(kv.source_ + ":" + std::to_string(lineno) + ": duplicate key '" +
                              key + "' (first set on line " +
                              std::to_string(kv.entries_[key].line) + ")");
      kv.entries_[key] = {trim(t.substr(eq + 1)), lineno, false};
    }
    return kv;
  }

  static KeyValueFile load(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config '" + path.string() + "'");
    return parse(is, path.string());
  }

  bool has(const std::string& key) const { return entries_.contains(key); }

  std::optional<std::string> get(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    it->second.used = true;
    return it->second.value;
  }

  std::string require(const std::string& key) {
    auto v = get(key);
    if (!v) throw ValidationError(source_ + ": missing required key '" + key + "'");
    return *v;
  }

  double get_double(const std::string& key, double def) {
    auto v = get(key);
    return v ? to_double(key, *v) : def;
  }

  Index get_index(const std::string& key, Index def) {
    auto v = get(key);
    return v ? to_index(key, *v) : def;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t def) {
    auto v = get(key);
    return v ? static_cast<std::uint64_t>(to_index(key, *v)) : def;
  }

  bool get_bool(const std::string& key, bool def) {
    auto v = get(key);
    if (!v) return def;
    if (*v == "true" || *v == "yes" || *v == "1") return true;
    if (*v == "false" || *v == "no" || *v == "0") return false;
    throw field_error(key, "expected true or false, got '" + *v + "'");
  }

  /// Throws on the first key that no getter consumed.
  void check_all_used() const {
    for (const auto& [key, e] : entries_)
      if (!e.used)
        throw ValidationError(source_ + ":" + std::to_string(e.line) + ": unknown key '" + key + "'");
  }

  ValidationError field_error(const std::string& key, const std::string& msg) const {
    auto it = entries_.find(key);
    const std::string where =
        it == entries_.end() ? source_ : source_ + ":" + std::to_string(it->second.line);
    return ValidationError(where + ": " + key + ": " + msg);
  }

  const std::string& source() const noexcept { return source_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  double to_double(const std::string& key, const std::string& v) const {
    std::size_t used = 0;
    double d = 0.0;
    try {
      d = std::stod(v, &used);
    } catch (const std::logic_error&) {
      throw field_error(key, "expected a number, got '" + v + "'");
    }
    if (used != v.size()) throw field_error(key, "expected a number, got '" + v + "'");
    return d;
  }

  Index to_index(const std::string& key, const std::string& v) const {
    std::size_t used = 0;
    unsigned long long d = 0;
    try {
      d = std::stoull(v, &used);
    } catch (const std::logic_error&) {
      throw field_error(key, "expected a nonnegative integer, got '" + v + "'");
    }
    if (used != v.size() || v.front() == '-')
      throw field_error(key, "expected a nonnegative integer, got '" + v + "'");
    return static_cast<Index>(d);
  }

  std::string source_;
  std::map<std::string, Entry> entries_;
};

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

enum class OptimizerKind { lbfgsb, adam };
enum class FastpathMode { automatic, on, off };

struct RunConfig {
  fs::path input;
  io::TensorFormat input_format = io::TensorFormat::sparse;
  std::string partition_spec;
  Index rank = 1;
  std::string loss = "least-squares";
  double loss_epsilon = kDefaultLossEpsilon;
  double gamma = kDefaultGamma;
  bool optimize_lambda = true;
  bool dedup_weights = false;
  FastpathMode fastpath = FastpathMode::automatic;
  FastpathMode orbit_compression = FastpathMode::automatic;
  OptimizerKind optimizer = OptimizerKind::lbfgsb;
  LbfgsbConfig lbfgsb;
  AdamConfig adam;
  Index n_initializations = 1;
  std::uint64_t seed = 0;
  fs::path output;
  Index threads = 1;

  /// Parses and validates a decompose config. Relative paths are resolved
  /// against `base_dir`.
  static RunConfig from_kv(KeyValueFile& kv, const fs::path& base_dir = {}) {
    RunConfig c;
    c.input = kv.require("input");
    if (c.input.is_relative() && !base_dir.empty()) c.input = base_dir / c.input;
    if (auto f = kv.get("input_format")) {
      try {
        c.input_format = io::parse_format(*f);
      } catch (const ValidationError& e) {
        throw kv.field_error("input_format", e.what());
      }
    } else {
      c.input_format = io::format_from_extension(c.input);
    }
    c.partition_spec = kv.require("partition");
    try {
      (void)ModePartition::parse(c.partition_spec);
    } catch (const ValidationError& e) {
      throw kv.field_error("partition", e.what());
    }
    c.rank = kv.get_index("rank", 1);
    if (c.rank == 0) throw kv.field_error("rank", "must be >= 1");
    c.loss = kv.get("loss").value_or("least-squares");
    const auto& names = LossSpec::known_names();
    if (std::find(names.begin(), names.end(), c.loss) == names.end())
      throw kv.field_error("loss", "unknown loss '" + c.loss + "'");
    c.loss_epsilon = kv.get_double("loss_epsilon", kDefaultLossEpsilon);
    if (!(c.loss_epsilon >= 0.0)) throw kv.field_error("loss_epsilon", "must be >= 0");
    c.gamma = kv.get_double("gamma", kDefaultGamma);
    if (!(c.gamma >= 0.0)) throw kv.field_error("gamma", "must be >= 0");
    c.optimize_lambda = kv.get_bool("optimize_lambda", true);
    c.dedup_weights = kv.get_bool("dedup_weights", false);
    if (auto f = kv.get("fastpath")) {
      if (*f == "auto") c.fastpath = FastpathMode::automatic;
      else if (*f == "true") c.fastpath = FastpathMode::on;
      else if (*f == "false") c.fastpath = FastpathMode::off;
      else throw kv.field_error("fastpath", "expected auto, true or false");
    }
    if (auto f = kv.get("orbit_compression")) {
      if (*f == "auto") c.orbit_compression = FastpathMode::automatic;
      else if (*f == "true") c.orbit_compression = FastpathMode::on;
      else if (*f == "false") c.orbit_compression = FastpathMode::off;
      else throw kv.field_error("orbit_compression", "expected auto, true or false");
    }
    const std::string opt = kv.get("optimizer").value_or("lbfgsb");
    if (opt == "lbfgsb") c.optimizer = OptimizerKind::lbfgsb;
    else if (opt == "adam") c.optimizer = OptimizerKind::adam;
    else throw kv.field_error("optimizer", "expected lbfgsb or adam, got '" + opt + "'");

    c.lbfgsb.memory = kv.get_index("lbfgsb.memory", c.lbfgsb.memory);
    c.lbfgsb.max_iterations = kv.get_index("lbfgsb.max_iterations", c.lbfgsb.max_iterations);
    c.lbfgsb.pgtol = kv.get_double("lbfgsb.pgtol", c.lbfgsb.pgtol);
    c.lbfgsb.rel_decrease_tol = kv.get_double("lbfgsb.rel_decrease_tol", c.lbfgsb.rel_decrease_tol);
    try {
      c.lbfgsb.validate();
    } catch (const ValidationError& e) {
      throw ValidationError(kv.source() + ": " + e.what());
    }

    AdamConfig& a = c.adam;
    a.learning_rate = kv.get_double("adam.learning_rate", a.learning_rate);
    a.beta1 = kv.get_double("adam.beta1", a.beta1);
    a.beta2 = kv.get_double("adam.beta2", a.beta2);
    a.epsilon = kv.get_double("adam.epsilon", a.epsilon);
    a.iterations_per_epoch = kv.get_index("adam.iterations_per_epoch", a.iterations_per_epoch);
    a.max_epochs = kv.get_index("adam.max_epochs", a.max_epochs);
    a.kappa = kv.get_double("adam.kappa", a.kappa);
    a.max_bad_epochs = kv.get_index("adam.max_bad_epochs", a.max_bad_epochs);
    a.bad_epoch_decay = kv.get_double("adam.bad_epoch_decay", a.bad_epoch_decay);
    a.project_bounds = kv.get_bool("adam.project_bounds", a.project_bounds);
    a.estimate_factor = kv.get_index("adam.estimate_factor", a.estimate_factor);
    if (auto k = kv.get("sampler.kind")) {
      try {
        a.sampler.kind = parse_sampler_kind(*k);
      } catch (const ValidationError& e) {
        throw kv.field_error("sampler.kind", e.what());
      }
    }
    a.sampler.s = kv.get_index("sampler.s", a.sampler.s);
    a.sampler.p = kv.get_index("sampler.p", a.sampler.p);
    a.sampler.q = kv.get_index("sampler.q", a.sampler.q);
    a.sampler.max_rejection_iters =
        kv.get_index("sampler.max_rejection_iters", a.sampler.max_rejection_iters);
    if (auto z = kv.get("sampler.zero_rule")) {
      if (*z == "total-minus-nnz") a.sampler.zero_rule = ZeroScaleRule::total_minus_nnz;
      else if (*z == "one-minus-nnz") a.sampler.zero_rule = ZeroScaleRule::one_minus_nnz;
      else throw kv.field_error("sampler.zero_rule", "expected total-minus-nnz or one-minus-nnz");
    }
    try {
      a.validate();
    } catch (const ValidationError& e) {
      throw ValidationError(kv.source() + ": " + e.what());
    }

    c.n_initializations = kv.get_index("n_initializations", 1);
    if (c.n_initializations == 0) throw kv.field_error("n_initializations", "must be >= 1");
    c.seed = kv.get_u64("seed", 0);
    if (auto o = kv.get("output")) {
      c.output = *o;
      if (c.output.is_relative() && !base_dir.empty()) c.output = base_dir / c.output;
    }
    c.threads = kv.get_index("threads", 1);
    if (c.threads == 0) throw kv.field_error("threads", "must be >= 1");
    kv.check_all_used();
    return c;
  }

  static RunConfig load(const fs::path& path) {
    auto kv = KeyValueFile::load(path);
    return from_kv(kv, path.parent_path());
  }
};

struct GenConfig {
  BinaryGenConfig gen;
  Index instances = 1;
  fs::path output;

  static GenConfig from_kv(KeyValueFile& kv, const fs::path& base_dir = {}) {
    GenConfig c;
    c.gen.modes = kv.get_index("modes", c.gen.modes);
    c.gen.size = kv.get_index("size", c.gen.size);
    c.gen.rank = kv.get_index("rank", c.gen.rank);
    c.gen.delta = kv.get_double("delta", c.gen.delta);
    c.gen.rho_high = kv.get_double("rho_high", c.gen.rho_high);
    c.gen.rho_low = kv.get_double("rho_low", c.gen.rho_low);
    c.gen.signal_sd = kv.get_double("signal_sd", c.gen.signal_sd);
    c.gen.seed = kv.get_u64("seed", 0);
    c.instances = kv.get_index("instances", 1);
    if (c.instances == 0) throw kv.field_error("instances", "must be >= 1");
    if (auto o = kv.get("output")) {
      c.output = *o;
      if (c.output.is_relative() && !base_dir.empty()) c.output = base_dir / c.output;
    }
    kv.check_all_used();
    try {
      c.gen.validate();
    } catch (const ValidationError& e) {
      throw ValidationError(kv.source() + ": " + e.what());
    }
    return c;
  }

  static GenConfig load(const fs::path& path) {
    auto kv = KeyValueFile::load(path);
    return from_kv(kv, path.parent_path());
  }
};

// ---------------------------------------------------------------------------
// decompose
// ---------------------------------------------------------------------------

struct InitResult {
  Index init = 0;
  std::uint64_t seed = 0;
  double final_objective = std::numeric_limits<double>::quiet_NaN();
  Index iterations = 0;
  std::string status;
  bool failed = false;
  SymKruskal model;
  FitTrace trace;
};

struct DecomposeSummary {
  std::vector<InitResult> inits;
  std::optional<Index> best;  // index into inits
};

inline std::string init_dir_name(Index init) {
  std::ostringstream os;
  os << "init_" << std::setw(3) << std::setfill('0') << init + 1;
  return os.str();
}

/// Writes one initialization's outputs into `dir`.
inline void write_init_outputs(const fs::path& dir, const InitResult& r) {
  fs::create_directories(dir);
  if (!r.failed) {
    io::write_vector(dir / "lambda.csv", r.model.lambda);
    for (Index k = 0; k < r.model.factors.size(); ++k)
      io::write_csv(dir / ("factor_" + std::to_string(k + 1) + ".csv"), r.model.factors[k]);
  }
  {
    std::ofstream os(dir / "trace.csv");
    if (!os) throw IoError("cannot write " + (dir / "trace.csv").string());
    r.trace.write_csv(os);
  }
  std::ofstream os(dir / "result.txt");
  if (!os) throw IoError("cannot write " + (dir / "result.txt").string());
  os << std::setprecision(17);
  os << "seed = " << r.seed << '\n'
     << "final_objective = " << r.final_objective << '\n'
     << "iterations = " << r.iterations << '\n'
     << "status = " << r.status << '\n';
}

inline void write_summary(const fs::path& out, const DecomposeSummary& s) {
  std::ofstream os(out / "summary.csv");
  if (!os) throw IoError("cannot write " + (out / "summary.csv").string());
  os << std::setprecision(17);
  os << "init,seed,final_objective,iterations,status,best\n";
  for (Index i = 0; i < s.inits.size(); ++i) {
    const auto& r = s.inits[i];
    std::string status = r.status;
    std::replace(status.begin(), status.end(), ',', ';');
    os << r.init + 1 << ',' << r.seed << ',' << r.final_objective << ',' << r.iterations << ','
       << status << ',' << (s.best && *s.best == i ? 1 : 0) << '\n';
  }
}

struct LoadedData {
  std::shared_ptr<const SparseTensor> sparse;
  std::shared_ptr<const DenseTensor> dense;
};

inline LoadedData load_tensor(const fs::path& path, io::TensorFormat fmt) {
  LoadedData d;
  if (fmt == io::TensorFormat::sparse) {
    d.sparse = std::make_shared<const SparseTensor>(io::read_sparse(path));
    d.dense = std::make_shared<const DenseTensor>(densify(*d.sparse));
  } else {
    d.dense = std::make_shared<const DenseTensor>(io::read_dense(path));
    d.sparse = std::make_shared<const SparseTensor>(sparsify(*d.dense));
  }
  return d;
}

/// Builds the objective configuration for a run on the loaded data.
inline ObjectiveConfig make_objective_config(const RunConfig& cfg, const DenseTensor& x) {
  ObjectiveConfig oc;
  oc.partition = ModePartition::parse(cfg.partition_spec);
  try {
    oc.partition.check_dims(x.dims());
  } catch (const ShapeError& e) {
    throw ValidationError("partition " + cfg.partition_spec + " does not fit input " +
                          to_string(x.dims()) + ": " + e.what());
  }
  oc.rank = cfg.rank;
  oc.gamma = cfg.gamma;
  oc.optimize_lambda = cfg.optimize_lambda;
  LossSpec base = LossSpec::from_name(cfg.loss, cfg.loss_epsilon);
  oc.loss = cfg.dedup_weights ? WeightedLoss(base, symmetry_dedup_weights(x.dims(), oc.partition))
                              : WeightedLoss(base);
  const bool symmetric = symmetry_deviation(x, oc.partition) <= oc.symmetry_tol;
  auto resolve = [&](FastpathMode mode) {
    return mode == FastpathMode::on || (mode == FastpathMode::automatic && symmetric);
  };
  oc.symmetric_data_fastpath = resolve(cfg.fastpath);
  oc.orbit_compression = resolve(cfg.orbit_compression);
  return oc;
}

/// Fits one initialization. Never throws for optimizer/domain failures; they
/// are reported in the result's status.
inline InitResult run_initialization(const RunConfig& cfg, const Objective& obj,
                                     const LoadedData& data, Index init) {
  InitResult r;
  r.init = init;
  r.seed = derive_seed(cfg.seed, init);
  try {
    const auto& oc = obj.config();
    const bool nonneg = oc.loss.base.lower_bound().has_value();
    SymKruskal m0 = initialize_model(*data.dense, oc.partition, oc.rank, r.seed, nonneg);
    FitResult fit;
    if (cfg.optimizer == OptimizerKind::lbfgsb) {
      fit = fit_lbfgsb(cfg.lbfgsb, obj, m0);
    } else {
      AdamConfig ac = cfg.adam;
      ac.sampler.rng_seed = derive_seed(r.seed, 1);
      auto problem = make_stochastic_problem(oc, data.sparse, ac);
      const Index np = parameter_count(m0, oc.optimize_lambda);
      fit = fit_adam(ac, problem.gradient, problem.estimate, m0, oc.optimize_lambda,
                     Bounds::for_loss(oc.loss.base, np));
    }
    r.model = std::move(fit.model);
    r.trace = std::move(fit.trace);
    r.iterations = fit.iterations;
    r.status = fit.status;
    r.final_objective = obj.value(r.model);
  } catch (const Error& e) {
    r.failed = true;
    r.status = std::string("failed: ") + e.what();
  }
  return r;
}

/// Multi-start driver. Initializations run on `threads` workers; outputs go
/// to per-initialization subdirectories of `out`, the summary last.
inline DecomposeSummary cmd_decompose(const RunConfig& cfg, const fs::path& out) {
  const LoadedData data = load_tensor(cfg.input, cfg.input_format);
  ObjectiveConfig oc = make_objective_config(cfg, *data.dense);
  const Objective obj(oc, data.dense);

  fs::create_directories(out);
  {
    std::ofstream os(out / "run.txt");
    if (!os) throw IoError("cannot write " + (out / "run.txt").string());
    os << "input = " << cfg.input.string() << '\n'
       << "partition = " << oc.partition.to_string() << '\n'
       << "rank = " << cfg.rank << '\n'
       << "loss = " << cfg.loss << '\n'
       << "gamma = " << cfg.gamma << '\n'
       << "optimizer = " << (cfg.optimizer == OptimizerKind::lbfgsb ? "lbfgsb" : "adam") << '\n'
       << "fastpath = " << (oc.symmetric_data_fastpath ? "true" : "false") << '\n'
       << "orbit_compression = " << (oc.orbit_compression ? "true" : "false") << '\n'
       << "n_initializations = " << cfg.n_initializations << '\n'
       << "seed = " << cfg.seed << '\n';
  }

  DecomposeSummary summary;
  summary.inits.resize(cfg.n_initializations);
  std::atomic<Index> next{0};
  std::mutex io_mutex;
  std::vector<std::string> write_errors;
  auto worker = [&] {
    for (Index i = next++; i < cfg.n_initializations; i = next++) {
      InitResult r = run_initialization(cfg, obj, data, i);
      try {
        write_init_outputs(out / init_dir_name(i), r);
      } catch (const Error& e) {
        std::lock_guard lock(io_mutex);
        write_errors.push_back(e.what());
      }
      summary.inits[i] = std::move(r);
    }
  };
  const Index nthreads = std::min(cfg.threads, cfg.n_initializations);
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (Index t = 0; t < nthreads; ++t) pool.emplace_back(worker);
  }
  if (!write_errors.empty()) throw IoError(write_errors.front());

  for (Index i = 0; i < summary.inits.size(); ++i) {
    const auto& r = summary.inits[i];
    if (r.failed || !std::isfinite(r.final_objective)) continue;
    if (!summary.best || r.final_objective < summary.inits[*summary.best].final_objective)
      summary.best = i;
  }
  write_summary(out, summary);
  return summary;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateResult {
  Matrix A_star;
  std::vector<fs::path> tensor_files;
  std::vector<Index> nnz;
  std::vector<double> sparsity;
};

/// Writes A_star.csv, one X_<i>.tns per instance, and instances.csv.
inline GenerateResult cmd_generate(const GenConfig& cfg, const fs::path& out) {
  cfg.gen.validate();
  fs::create_directories(out);
  GenerateResult res;
  std::mt19937_64 rng(derive_seed(cfg.gen.seed, 0));
  res.A_star = generate_factor(cfg.gen, rng);
  io::write_csv(out / "A_star.csv", res.A_star);
  std::ofstream meta(out / "instances.csv");
  if (!meta) throw IoError("cannot write " + (out / "instances.csv").string());
  meta << std::setprecision(17) << "instance,file,nnz,sparsity,clamped\n";
  for (Index i = 0; i < cfg.instances; ++i) {
    GroundTruth gt = generate_binary_instance(cfg.gen, res.A_star, i);
    const fs::path file = out / ("X_" + std::to_string(i + 1) + ".tns");
    io::write_sparse(file, gt.X);
    const double sp = static_cast<double>(gt.X.nnz()) / static_cast<double>(gt.X.numel());
    meta << i + 1 << ',' << file.filename().string() << ',' << gt.X.nnz() << ',' << sp << ','
         << gt.clamped << '\n';
    res.tensor_files.push_back(file);
    res.nnz.push_back(gt.X.nnz());
    res.sparsity.push_back(sp);
  }
  return res;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct ScoreRow {
  Index init = 0;
  double final_objective = 0.0;
  double score = std::numeric_limits<double>::quiet_NaN();
  bool best = false;
};

struct EvaluateResult {
  std::vector<ScoreRow> rows;
  std::optional<Index> best;  // index into rows

  std::optional<double> best_score() const {
    if (!best) return std::nullopt;
    return rows[*best].score;
  }
};

namespace detail {

inline std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

}  // namespace detail

/// Scores factor `cell` (0-based) of every initialization in a decompose
/// output directory against A_star. Signs are fixed with negate_fix first;
/// the best initialization is the one with the lowest final objective.
inline EvaluateResult cmd_evaluate(const Matrix& A_star, const fs::path& run_dir, Index cell = 0) {
  const auto run = detail::read_key_values(run_dir / "run.txt");
  if (!run.contains("partition") || !run.contains("n_initializations"))
    throw IoError((run_dir / "run.txt").string() + " is missing partition or n_initializations");
  const ModePartition part = ModePartition::parse(run.at("partition"));
  if (cell >= part.ncells())
    throw ValidationError("cell " + std::to_string(cell + 1) + " out of range; run has " +
                          std::to_string(part.ncells()) + " cells");
  const Index ninit = std::stoull(run.at("n_initializations"));

  EvaluateResult res;
  for (Index i = 0; i < ninit; ++i) {
    const fs::path dir = run_dir / init_dir_name(i);
    const auto result = detail::read_key_values(dir / "result.txt");
    ScoreRow row;
    row.init = i;
    row.final_objective = result.contains("final_objective")
                              ? std::strtod(result.at("final_objective").c_str(), nullptr)
                              : std::numeric_limits<double>::quiet_NaN();
    const fs::path factor = dir / ("factor_" + std::to_string(cell + 1) + ".csv");
    if (fs::exists(factor)) {
      const Matrix a_hat = io::read_csv(factor);
      const Vector lam = io::read_vector(dir / "lambda.csv");
      if (a_hat.rows() != A_star.rows() || a_hat.cols() != A_star.cols())
        throw ShapeError("factor " + factor.string() + " is " + std::to_string(a_hat.rows()) + "x" +
                         std::to_string(a_hat.cols()) + ", A_star is " +
                         std::to_string(A_star.rows()) + "x" + std::to_string(A_star.cols()));
      auto [fixed, lam_fixed] = negate_fix(a_hat, lam, A_star, part.cell(cell).size());
      row.score = cosine_score(A_star, fixed);
    }
    res.rows.push_back(row);
  }
  for (Index i = 0; i < res.rows.size(); ++i) {
    if (!std::isfinite(res.rows[i].final_objective) || !std::isfinite(res.rows[i].score)) continue;
    if (!res.best || res.rows[i].final_objective < res.rows[*res.best].final_objective) res.best = i;
  }
  if (res.best) res.rows[*res.best].best = true;
  return res;
}

inline void write_scores(std::ostream& os, const EvaluateResult& r) {
  os << std::setprecision(17) << "init,final_objective,score,best\n";
  for (const auto& row : r.rows)
    os << row.init + 1 << ',' << row.final_objective << ',' << row.score << ','
       << (row.best ? 1 : 0) << '\n';
}

}  // namespace symgcp::cli

// symgcp: decompose, generate and evaluate from the command line.
//
// Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "symgcp/cli.hpp"

namespace {

namespace cli = symgcp::cli;
namespace fs = std::filesystem;

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

int run_decompose(const fs::path& config, std::optional<fs::path> output,
                  std::optional<std::uint64_t> seed, std::optional<std::size_t> threads) {
  cli::RunConfig cfg = cli::RunConfig::load(config);
  if (seed) cfg.seed = *seed;
  if (threads) {
    if (*threads == 0) throw symgcp::ValidationError("--threads must be >= 1");
    cfg.threads = *threads;
  }
  if (output) cfg.output = *output;
  if (cfg.output.empty())
    throw symgcp::ValidationError("no output directory: set 'output' in the config or pass --output");

  const auto summary = cli::cmd_decompose(cfg, cfg.output);
  std::size_t failed = 0;
  for (const auto& r : summary.inits) {
    std::cout << "init " << r.init + 1 << ": objective " << r.final_objective << " (" << r.status
              << ")\n";
    if (r.failed) ++failed;
  }
  if (!summary.best) {
    std::cerr << "error: all " << summary.inits.size() << " initializations failed\n";
    return kRuntime;
  }
  std::cout << "best init " << *summary.best + 1 << ", objective "
            << summary.inits[*summary.best].final_objective << "\n"
            << "wrote " << (cfg.output / "summary.csv").string() << '\n';
  if (failed > 0) std::cerr << "warning: " << failed << " initializations failed\n";
  return kOk;
}

int run_generate(const fs::path& config, std::optional<fs::path> output,
                 std::optional<std::uint64_t> seed) {
  cli::GenConfig cfg = cli::GenConfig::load(config);
  if (seed) cfg.gen.seed = *seed;
  if (output) cfg.output = *output;
  if (cfg.output.empty())
    throw symgcp::ValidationError("no output directory: set 'output' in the config or pass --output");
  const auto res = cli::cmd_generate(cfg, cfg.output);
  for (std::size_t i = 0; i < res.tensor_files.size(); ++i)
    std::cout << res.tensor_files[i].string() << ": nnz " << res.nnz[i] << ", density "
              << res.sparsity[i] << '\n';
  return kOk;
}

int run_evaluate(const fs::path& truth, const fs::path& run, std::optional<fs::path> output,
                 std::size_t cell) {
  if (cell == 0) throw symgcp::ValidationError("--cell is 1-based");
  const symgcp::Matrix a_star = symgcp::io::read_csv(truth);
  const auto res = cli::cmd_evaluate(a_star, run, cell - 1);
  const fs::path out = output.value_or(run / "scores.csv");
  std::ofstream os(out);
  if (!os) throw symgcp::IoError("cannot write " + out.string());
  cli::write_scores(os, res);
  if (auto s = res.best_score())
    std::cout << "best-init score " << *s << " (init " << *res.best + 1 << ")\n";
  else
    std::cout << "no scorable initialization\n";
  std::cout << "wrote " << out.string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Symmetric generalized CP decomposition"};
  app.require_subcommand(1);

  std::string config, output, truth, run;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::size_t cell = 1;

  auto* dec = app.add_subcommand("decompose", "fit a model with multiple initializations");
  dec->add_option("--config", config, "run config file")->required();
  dec->add_option("--output", output, "output directory (overrides config)");
  dec->add_option("--seed", seed, "root seed (overrides config)");
  dec->add_option("--threads", threads, "worker threads (overrides config)");

  auto* gen = app.add_subcommand("generate", "write synthetic binary tensors");
  gen->add_option("--config", config, "generator config file")->required();
  gen->add_option("--output", output, "output directory (overrides config)");
  gen->add_option("--seed", seed, "seed (overrides config)");

  auto* ev = app.add_subcommand("evaluate", "score a decompose run against a true factor");
  ev->add_option("--truth", truth, "true factor CSV (A_star.csv)")->required();
  ev->add_option("--run", run, "decompose output directory")->required();
  ev->add_option("--output", output, "scores CSV (default RUN/scores.csv)");
  ev->add_option("--cell", cell, "1-based cell whose factor is scored")->default_val(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  auto opt_path = [](const std::string& s) -> std::optional<fs::path> {
    if (s.empty()) return std::nullopt;
    return fs::path(s);
  };

  try {
    if (dec->parsed()) return run_decompose(config, opt_path(output), seed, threads);
    if (gen->parsed()) return run_generate(config, opt_path(output), seed);
    return run_evaluate(truth, run, opt_path(output), cell);
  } catch (const symgcp::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const symgcp::ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const symgcp::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
}

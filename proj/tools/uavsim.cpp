#include <csignal>
#include <fstream>
#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "uavnet/config.hpp"
#include "uavnet/harness.hpp"
#include "uavnet/oracles.hpp"

namespace fs = std::filesystem;
using namespace uavnet;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> episodes;
  std::vector<std::string> policies;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run configuration (defaults when omitted)");
  cmd->add_option("--seed", c.seed, "override the config seed");
  cmd->add_option("--out", c.out, "output directory (overrides output_dir)");
  cmd->add_option("--episodes", c.episodes, "override training.episodes");
  cmd->add_option("--policy", c.policies, "formation policy; compare takes several")->delimiter(',');
}

RunConfig resolve(const Common& c, bool single_policy) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.episodes) cfg.training.episodes = *c.episodes;
  if (single_policy && !c.policies.empty()) {
    if (c.policies.size() != 1) throw ConfigError("--policy: exactly one policy expected here");
    try {
      cfg.formation.kind = formation::policy_kind_from_string(c.policies.front());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("--policy: ") + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

void on_sigint(int) { harness::g_stop_requested.store(true); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-UAV data offloading simulator and trainer"};
  app.require_subcommand(1);
  Common c;
  auto* train = app.add_subcommand("train", "train BO-MADDPG agents");
  auto* eval = app.add_subcommand("eval", "run the checkpointed actors for one episode");
  auto* compare = app.add_subcommand("compare", "compare formation policies over a demand sweep");
  auto* oracle = app.add_subcommand("oracle-check", "run the independent oracle checks");
  for (auto* cmd : {train, eval, compare, oracle}) add_common(cmd, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? harness::kOk : harness::kConfigError;
  }

  std::signal(SIGINT, on_sigint);
  harness::tune_allocator();
  try {
    if (oracle->parsed()) {
      oracles::OracleOptions opt;
      if (c.seed) opt.seed = *c.seed;
      const auto report = oracles::run_oracle_checks(opt);
      for (const auto& r : report.results)
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " cases=" << r.cases << " max_error=" << r.max_error
                  << " tol=" << r.tolerance << " (" << r.detail << ")\n";
      std::cout << "oracle checks " << (report.passed() ? "passed" : "FAILED") << " in " << report.seconds << " s\n";
      if (!c.out.empty()) {
        fs::create_directories(c.out);
        std::ofstream(fs::path(c.out) / "oracle_report.json") << report.to_json().dump(2) << '\n';
      }
      return report.passed() ? harness::kOk : harness::kOracleFailure;
    }
    if (train->parsed()) {
      const auto cfg = resolve(c, true);
      return harness::run_train(cfg, cfg.output_dir);
    }
    if (eval->parsed()) {
      const auto cfg = resolve(c, true);
      return harness::run_eval(cfg, cfg.output_dir);
    }
    const auto cfg = resolve(c, false);
    return harness::run_compare(cfg, c.policies.empty() ? cfg.compare.policies : c.policies, cfg.output_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return harness::kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return harness::kRuntimeError;
  }
}

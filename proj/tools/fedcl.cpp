#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedcl/config.hpp"
#include "fedcl/errors.hpp"
#include "fedcl/experiment.hpp"
#include "fedcl/selfcheck.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRun = 3;

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw fedcl::ConfigError("cannot write: " + path);
  out << contents;
}

void print_summary(const fedcl::RunReport& report) {
  const auto j = report.to_json(false);
  std::printf("strategy           %s\n", report.strategy.c_str());
  std::printf("seed               %llu\n",
              static_cast<unsigned long long>(report.seed));
  if (j.contains("final")) {
    std::printf("final avg accuracy %.4f\n",
                j["final"]["avg_accuracy"].get<double>());
    std::printf("final forgetting   %.4f\n",
                j["final"]["mean_forgetting"].get<double>());
  }
  std::printf("bytes total        %llu\n",
              static_cast<unsigned long long>(report.ledger.bytes_total()));
  std::printf("sim comm seconds   %.6f\n",
              j["comm"]["sim_comm_seconds"].get<double>());
  std::printf("wall seconds       %.3f\n", report.wall_seconds);
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            const std::string& strategy_override, bool has_seed,
            std::uint64_t seed_override, const std::string& resume_path) {
  fedcl::ExperimentConfig cfg = fedcl::load_config(config_path);
  if (has_seed) cfg.seed = seed_override;
  if (!strategy_override.empty()) {
    cfg.strategy = fedcl::strategy_from_name(strategy_override);
  }
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (cfg.out_dir.empty()) cfg.out_dir = "out";
  fedcl::validate(cfg);

  std::filesystem::create_directories(cfg.out_dir);
  write_file(cfg.out_dir + "/manifest.json",
             fedcl::manifest_json(cfg).dump(2) + "\n");

  const fedcl::RunReport report =
      resume_path.empty() ? fedcl::run_experiment(cfg)
                          : fedcl::resume_experiment(cfg, resume_path);
  write_file(cfg.out_dir + "/report.json", report.to_json(true).dump(2) + "\n");

  print_summary(report);
  std::printf("report             %s/report.json\n", cfg.out_dir.c_str());
  return kExitOk;
}

int cmd_compare(const std::vector<std::string>& config_paths,
                const std::string& out_dir) {
  std::vector<fedcl::ExperimentConfig> cfgs;
  cfgs.reserve(config_paths.size());
  for (const auto& path : config_paths) cfgs.push_back(fedcl::load_config(path));

  const auto rows = fedcl::compare(cfgs);
  const std::string csv = fedcl::compare_csv(rows);

  const std::string dir = out_dir.empty() ? "out" : out_dir;
  std::filesystem::create_directories(dir);
  write_file(dir + "/compare.csv", csv);

  std::fputs(csv.c_str(), stdout);
  for (const auto& row : rows) {
    if (row.failed) {
      std::fprintf(stderr, "run failed (%s seed %llu): %s\n",
                   row.strategy.c_str(),
                   static_cast<unsigned long long>(row.seed),
                   row.error.c_str());
      return kExitRun;
    }
  }
  return kExitOk;
}

int cmd_selftest() {
  bool all_pass = true;
  for (const auto& check : fedcl::run_selfcheck()) {
    std::printf("%s %-28s %s\n", check.pass ? "PASS" : "FAIL",
                check.name.c_str(), check.detail.c_str());
    all_pass = all_pass && check.pass;
  }
  return all_pass ? kExitOk : kExitRun;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedcl: desk-scale federated continual learning simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string strategy_override;
  std::string resume_path;
  std::uint64_t seed_override = 0;

  auto* run = app.add_subcommand("run", "run one experiment config");
  run->add_option("--config", config_path, "experiment config (JSON)")
      ->required();
  auto* seed_opt =
      run->add_option("--seed", seed_override, "override the config seed");
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--strategy", strategy_override,
                  "override the config strategy");
  run->add_option("--resume", resume_path, "continue from a checkpoint file");

  std::vector<std::string> compare_paths;
  auto* cmp = app.add_subcommand("compare", "run several configs, emit CSV");
  cmp->add_option("--config", compare_paths, "experiment configs (repeatable)")
      ->required();
  cmp->add_option("--out", out_dir, "output directory");

  auto* selftest = app.add_subcommand("selftest", "run the oracle suites");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      return cmd_run(config_path, out_dir, strategy_override,
                     seed_opt->count() > 0, seed_override, resume_path);
    }
    if (cmp->parsed()) return cmd_compare(compare_paths, out_dir);
    if (selftest->parsed()) return cmd_selftest();
  } catch (const fedcl::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "run failed: %s\n", e.what());
    return kExitRun;
  }
  return kExitOk;
}

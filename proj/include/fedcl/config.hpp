#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "fedcl/federation.hpp"
#include "fedcl/knowledge.hpp"
#include "fedcl/mlp.hpp"

namespace fedcl {

enum class Strategy { Fedknow, FedavgOnly, NaiveLocal, LocalGem };

Strategy strategy_from_name(const std::string& name);
std::string strategy_name(Strategy strategy);
StrategyToggles strategy_toggles(Strategy strategy);

struct TaskgenConfig {
  int num_tasks = 5;
  int classes_per_task = 4;
  int input_dim = 16;
  double spread = 0.5;
  int samples_per_class = 120;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  int num_clients = 4;
  Strategy strategy = Strategy::Fedknow;
  MlpShape shape{{16, 32, 4}, Activation::Relu};
  RoundPlan plan{3, 10, 1};

  double eta_l0 = 0.4;
  double eta_g0 = 0.2;
  double mu = 1.0;
  double big_l = 8.0;

  double rho = 0.1;
  int k = 10;
  TaskgenConfig tasks;
  int batch_size = 16;
  double bandwidth_bytes_per_sec = 1.0e6;

  KnowledgeFinetuneConfig knowledge_finetune{25, 0.02};

  double qp_tol = kQpTol;
  int qp_max_iter = kQpMaxIter;
  DistanceKind distance = DistanceKind::Wasserstein;
  MaterializeMode materialize = MaterializeMode::Zeros;
  double lambda_bound = 1.0e3;

  bool checkpoint_enabled = false;
  std::string out_dir;
};

/// Throws ConfigError on any invariant violation.
void validate(const ExperimentConfig& cfg);

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);

}  // namespace fedcl

#include "fedcl/config.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "fedcl/errors.hpp"

namespace fedcl {

using nlohmann::json;

Strategy strategy_from_name(const std::string& name) {
  if (name == "fedknow") return Strategy::Fedknow;
  if (name == "fedavg_only") return Strategy::FedavgOnly;
  if (name == "naive_local") return Strategy::NaiveLocal;
  if (name == "local_gem") return Strategy::LocalGem;
  throw ConfigError("unknown strategy: " + name);
}

std::string strategy_name(Strategy strategy) {
  switch (strategy) {
    case Strategy::Fedknow: return "fedknow";
    case Strategy::FedavgOnly: return "fedavg_only";
    case Strategy::NaiveLocal: return "naive_local";
    case Strategy::LocalGem: return "local_gem";
  }
  throw ConfigError("unknown strategy enum value");
}

StrategyToggles strategy_toggles(Strategy strategy) {
  switch (strategy) {
    case Strategy::Fedknow: return {true, true, true, true};
    case Strategy::FedavgOnly: return {true, false, false, false};
    case Strategy::NaiveLocal: return {false, false, false, false};
    case Strategy::LocalGem: return {false, true, false, true};
  }
  throw ConfigError("unknown strategy enum value");
}

void validate(const ExperimentConfig& cfg) {
  validate_shape(cfg.shape);
  if (!(cfg.rho > 0.0 && cfg.rho <= 1.0)) throw ConfigError("rho must be in (0, 1]");
  if (cfg.k < 1) throw ConfigError("k must be >= 1");
  if (cfg.num_clients < 1) throw ConfigError("num_clients must be >= 1");
  if (cfg.plan.rounds_per_task < 1 || cfg.plan.local_iters < 1 ||
      cfg.plan.finetune_epochs < 1) {
    throw ConfigError("round plan entries must be >= 1");
  }
  if (!(cfg.bandwidth_bytes_per_sec > 0.0)) {
    throw ConfigError("bandwidth_bytes_per_sec must be positive");
  }
  if (cfg.tasks.num_tasks < 1) throw ConfigError("num_tasks must be >= 1");
  if (cfg.tasks.classes_per_task < 2) {
    throw ConfigError("classes_per_task must be >= 2");
  }
  if (cfg.tasks.samples_per_class < 2) {
    throw ConfigError("samples_per_class must be >= 2");
  }
  if (!(cfg.tasks.spread > 0.0)) throw ConfigError("spread must be positive");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (cfg.shape.layer_sizes.front() != cfg.tasks.input_dim) {
    throw ConfigError("model input layer must equal input_dim");
  }
  if (cfg.shape.layer_sizes.back() != cfg.tasks.classes_per_task) {
    throw ConfigError("model output layer must equal classes_per_task");
  }
  if (!(cfg.qp_tol > 0.0) || cfg.qp_max_iter < 1) {
    throw ConfigError("qp solver settings must be positive");
  }
  if (cfg.knowledge_finetune.steps < 0) {
    throw ConfigError("knowledge_finetune.steps must be >= 0");
  }
  // Construction re-checks the learning-rate bound.
  make_schedule(cfg.eta_l0, cfg.eta_g0, cfg.mu, cfg.big_l, cfg.plan.rounds_per_task);
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  try {
    cfg.seed = j.value("seed", cfg.seed);
    cfg.num_clients = j.value("num_clients", cfg.num_clients);
    if (j.contains("strategy")) {
      cfg.strategy = strategy_from_name(j.at("strategy").get<std::string>());
    }

    if (j.contains("model")) {
      const auto& m = j.at("model");
      cfg.shape.layer_sizes = m.at("layers").get<std::vector<int>>();
      const std::string act = m.value("activation", std::string("relu"));
      if (act == "relu") {
        cfg.shape.activation = Activation::Relu;
      } else if (act == "tanh") {
        cfg.shape.activation = Activation::Tanh;
      } else {
        throw ConfigError("unknown activation: " + act);
      }
    }

    if (j.contains("rounds")) {
      const auto& r = j.at("rounds");
      cfg.plan.rounds_per_task = r.value("rounds_per_task", cfg.plan.rounds_per_task);
      cfg.plan.local_iters = r.value("local_iters", cfg.plan.local_iters);
      cfg.plan.finetune_epochs = r.value("finetune_epochs", cfg.plan.finetune_epochs);
    }

    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      cfg.eta_l0 = s.value("eta_local0", cfg.eta_l0);
      cfg.eta_g0 = s.value("eta_global0", cfg.eta_g0);
      cfg.mu = s.value("mu", cfg.mu);
      cfg.big_l = s.value("big_l", cfg.big_l);
    }

    cfg.rho = j.value("rho", cfg.rho);
    cfg.k = j.value("k", cfg.k);

    if (j.contains("tasks")) {
      const auto& t = j.at("tasks");
      cfg.tasks.num_tasks = t.value("num_tasks", cfg.tasks.num_tasks);
      cfg.tasks.classes_per_task = t.value("classes_per_task", cfg.tasks.classes_per_task);
      cfg.tasks.input_dim = t.value("input_dim", cfg.tasks.input_dim);
      cfg.tasks.spread = t.value("spread", cfg.tasks.spread);
      cfg.tasks.samples_per_class = t.value("samples_per_class", cfg.tasks.samples_per_class);
    }

    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.bandwidth_bytes_per_sec =
        j.value("bandwidth_bytes_per_sec", cfg.bandwidth_bytes_per_sec);

    if (j.contains("knowledge_finetune")) {
      const auto& kf = j.at("knowledge_finetune");
      cfg.knowledge_finetune.steps = kf.value("steps", cfg.knowledge_finetune.steps);
      cfg.knowledge_finetune.lr = kf.value("lr", cfg.knowledge_finetune.lr);
    }

    if (j.contains("integration")) {
      const auto& in = j.at("integration");
      cfg.qp_tol = in.value("tol", cfg.qp_tol);
      cfg.qp_max_iter = in.value("max_iter", cfg.qp_max_iter);
      cfg.lambda_bound = in.value("lambda_bound", cfg.lambda_bound);
      const std::string dist = in.value("distance", std::string("wasserstein"));
      if (dist == "wasserstein") {
        cfg.distance = DistanceKind::Wasserstein;
      } else if (dist == "cosine") {
        cfg.distance = DistanceKind::Cosine;
      } else {
        throw ConfigError("unknown distance: " + dist);
      }
      const std::string mat = in.value("materialize", std::string("zeros"));
      if (mat == "zeros") {
        cfg.materialize = MaterializeMode::Zeros;
      } else if (mat == "frozen_full") {
        cfg.materialize = MaterializeMode::FrozenFull;
      } else {
        throw ConfigError("unknown materialize mode: " + mat);
      }
    }

    cfg.checkpoint_enabled = j.value("checkpoint", cfg.checkpoint_enabled);
    if (j.contains("output")) {
      cfg.out_dir = j.at("output").value("dir", cfg.out_dir);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }

  validate(cfg);
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["num_clients"] = cfg.num_clients;
  j["strategy"] = strategy_name(cfg.strategy);
  j["model"]["layers"] = cfg.shape.layer_sizes;
  j["model"]["activation"] =
      cfg.shape.activation == Activation::Relu ? "relu" : "tanh";
  j["rounds"]["rounds_per_task"] = cfg.plan.rounds_per_task;
  j["rounds"]["local_iters"] = cfg.plan.local_iters;
  j["rounds"]["finetune_epochs"] = cfg.plan.finetune_epochs;
  j["schedule"]["eta_local0"] = cfg.eta_l0;
  j["schedule"]["eta_global0"] = cfg.eta_g0;
  j["schedule"]["mu"] = cfg.mu;
  j["schedule"]["big_l"] = cfg.big_l;
  j["rho"] = cfg.rho;
  j["k"] = cfg.k;
  j["tasks"]["num_tasks"] = cfg.tasks.num_tasks;
  j["tasks"]["classes_per_task"] = cfg.tasks.classes_per_task;
  j["tasks"]["input_dim"] = cfg.tasks.input_dim;
  j["tasks"]["spread"] = cfg.tasks.spread;
  j["tasks"]["samples_per_class"] = cfg.tasks.samples_per_class;
  j["batch_size"] = cfg.batch_size;
  j["bandwidth_bytes_per_sec"] = cfg.bandwidth_bytes_per_sec;
  j["knowledge_finetune"]["steps"] = cfg.knowledge_finetune.steps;
  j["knowledge_finetune"]["lr"] = cfg.knowledge_finetune.lr;
  j["integration"]["tol"] = cfg.qp_tol;
  j["integration"]["max_iter"] = cfg.qp_max_iter;
  j["integration"]["lambda_bound"] = cfg.lambda_bound;
  j["integration"]["distance"] =
      cfg.distance == DistanceKind::Wasserstein ? "wasserstein" : "cosine";
  j["integration"]["materialize"] =
      cfg.materialize == MaterializeMode::Zeros ? "zeros" : "frozen_full";
  j["checkpoint"] = cfg.checkpoint_enabled;
  j["output"]["dir"] = cfg.out_dir;
  return j;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return config_from_json(j);
}

}  // namespace fedcl

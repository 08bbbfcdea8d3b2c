#include "fedcl/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <thread>
#include <tuple>

#include "fedcl/checkpoint.hpp"
#include "fedcl/errors.hpp"
#include "fedcl/taskgen.hpp"

namespace fedcl {

namespace {

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

int thread_cap(int num_clients) {
  int threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;
  threads = std::min(threads, num_clients);
  if (const char* env = std::getenv("FEDCL_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) threads = std::min(threads, cap);
  }
  return threads;
}

struct RunSink final : ProtocolEvents {
  RunReport* report = nullptr;

  void comm(int round, int client_id, std::uint64_t bytes_up,
            std::uint64_t bytes_down, double wallclock_sec) override {
    (void)wallclock_sec;
    report->ledger.records.push_back({round, client_id, bytes_up, bytes_down});
  }

  void integration(int client_id, bool finetune_phase,
                   const IterationDiag& diag) override {
    IntegratorStats& stats = report->integrator;
    if (diag.projected) {
      if (finetune_phase) {
        ++stats.finetune_projections;
      } else {
        ++stats.local_projections;
      }
    }
    if (!diag.qp_converged) {
      ++stats.qp_nonconverged;
      report->warnings.push_back("qp solver did not converge on client " +
                                 std::to_string(client_id) +
                                 "; stepped along the unprojected gradient");
    }
    if (diag.bound_exceeded) ++stats.bound_flags;
    stats.max_qp_iterations = std::max<std::uint64_t>(
        stats.max_qp_iterations, static_cast<std::uint64_t>(diag.qp_iterations));
    stats.max_g_prime_norm_sq =
        std::max(stats.max_g_prime_norm_sq, diag.g_prime_norm_sq);
  }
};

struct CurrentTaskData final : TaskDataSource {
  std::vector<TrainStream*> streams;  // indexed by client id

  Batch next_train_batch(int client_id) override {
    return streams[client_id]->next();
  }
  std::vector<Batch> finetune_epoch(int client_id, int tag) override {
    return streams[client_id]->epoch(tag);
  }
  Batch full_train_batch(int client_id) override {
    return streams[client_id]->full();
  }
  std::size_t train_count(int client_id) const override {
    return static_cast<std::size_t>(streams[client_id]->size());
  }
};

nlohmann::json partial_state_json(const RunReport& report, int next_task) {
  nlohmann::json j;
  j["next_task"] = next_task;
  j["acc"] = report.acc.rows;
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : report.ledger.records) {
    records.push_back({r.round, r.client_id, r.bytes_up, r.bytes_down});
  }
  j["comm"] = std::move(records);
  j["integrator"] = {
      {"local_projections", report.integrator.local_projections},
      {"finetune_projections", report.integrator.finetune_projections},
      {"qp_nonconverged", report.integrator.qp_nonconverged},
      {"bound_flags", report.integrator.bound_flags},
      {"max_qp_iterations", report.integrator.max_qp_iterations},
      {"max_g_prime_norm_sq", report.integrator.max_g_prime_norm_sq},
  };
  j["warnings"] = report.warnings;
  return j;
}

int restore_partial_state(const std::string& blob, RunReport& report) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(blob);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint blob parse error: ") + e.what());
  }
  report.acc.rows = j.at("acc").get<std::vector<std::vector<double>>>();
  for (const auto& r : j.at("comm")) {
    report.ledger.records.push_back({r.at(0).get<int>(), r.at(1).get<int>(),
                                     r.at(2).get<std::uint64_t>(),
                                     r.at(3).get<std::uint64_t>()});
  }
  const auto& stats = j.at("integrator");
  report.integrator.local_projections = stats.at("local_projections");
  report.integrator.finetune_projections = stats.at("finetune_projections");
  report.integrator.qp_nonconverged = stats.at("qp_nonconverged");
  report.integrator.bound_flags = stats.at("bound_flags");
  report.integrator.max_qp_iterations = stats.at("max_qp_iterations");
  report.integrator.max_g_prime_norm_sq = stats.at("max_g_prime_norm_sq");
  report.warnings = j.at("warnings").get<std::vector<std::string>>();
  return j.at("next_task").get<int>();
}

RunReport run_impl(const ExperimentConfig& cfg, const std::string* resume_path) {
  validate(cfg);

  RunReport report;
  report.strategy = strategy_name(cfg.strategy);
  report.seed = cfg.seed;
  report.config_echo = config_to_json(cfg);
  report.bandwidth_bytes_per_sec = cfg.bandwidth_bytes_per_sec;
  report.started_unix = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::seconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count());
  const auto t0 = std::chrono::steady_clock::now();

  const std::vector<TaskSpec> stream =
      make_stream(cfg.seed, cfg.tasks.num_tasks, cfg.tasks.classes_per_task,
                  cfg.tasks.input_dim, cfg.tasks.spread,
                  cfg.tasks.samples_per_class);
  const std::vector<ClientAllocation> allocations =
      allocate_clients(cfg.seed, stream, cfg.num_clients);
  report.mean_jaccard = mean_class_jaccard(allocations, cfg.tasks.num_tasks);

  // Materialize every client/task split once; test sets are needed for
  // evaluation long after their task finished.
  std::vector<std::vector<ClientTaskStreams>> data(cfg.num_clients);
  for (int c = 0; c < cfg.num_clients; ++c) {
    for (const TaskSpec& task : stream) {
      data[c].push_back(
          sample_batches(allocations[c], task, cfg.seed, cfg.batch_size));
    }
  }

  std::vector<ClientState> clients;
  int start_task = 0;
  if (resume_path) {
    Checkpoint checkpoint = load_checkpoint(*resume_path);
    if (static_cast<int>(checkpoint.clients.size()) != cfg.num_clients) {
      throw ConfigError("resume: checkpoint client count does not match config");
    }
    clients = std::move(checkpoint.clients);
    for (const auto& client : clients) {
      if (client.shape.layer_sizes != cfg.shape.layer_sizes) {
        throw ConfigError("resume: checkpoint model shape does not match config");
      }
    }
    start_task = restore_partial_state(checkpoint.blob, report);
  } else {
    clients.resize(cfg.num_clients);
    for (int c = 0; c < cfg.num_clients; ++c) {
      ClientState& client = clients[c];
      client.client_id = c;
      client.seed = stream_key(cfg.seed, static_cast<std::uint64_t>(c), 0,
                               Stream::ParamInit);
      client.shape = cfg.shape;
      Rng init(client.seed);
      client.params = init_params(cfg.shape, init);
      client.mask = head_partition(cfg.shape);
      client.rho = cfg.rho;
      client.k = cfg.k;
    }
  }

  RunSink sink;
  sink.report = &report;

  TaskRunConfig task_cfg;
  task_cfg.plan = cfg.plan;
  task_cfg.sched = make_schedule(cfg.eta_l0, cfg.eta_g0, cfg.mu, cfg.big_l,
                                 cfg.plan.rounds_per_task);
  task_cfg.integration.past_integration = strategy_toggles(cfg.strategy).past_integration;
  task_cfg.integration.prepost_integration =
      strategy_toggles(cfg.strategy).prepost_integration;
  task_cfg.integration.distance = cfg.distance;
  task_cfg.integration.materialize = cfg.materialize;
  task_cfg.integration.qp_tol = cfg.qp_tol;
  task_cfg.integration.qp_max_iter = cfg.qp_max_iter;
  task_cfg.integration.lambda_bound = cfg.lambda_bound;
  task_cfg.toggles = strategy_toggles(cfg.strategy);
  task_cfg.knowledge_finetune = cfg.knowledge_finetune;
  task_cfg.threads = thread_cap(cfg.num_clients);

  for (int t = start_task; t < cfg.tasks.num_tasks; ++t) {
    CurrentTaskData source;
    source.streams.resize(cfg.num_clients);
    for (int c = 0; c < cfg.num_clients; ++c) {
      source.streams[c] = &data[c][t].train;
    }

    task_cfg.task_id = t;
    task_cfg.round_base = t * cfg.plan.rounds_per_task;
    run_task(clients, source, task_cfg, &sink);

    // Accuracy row: every learned task, averaged over clients with test data.
    std::vector<double> row;
    for (int i = 0; i <= t; ++i) {
      double total = 0.0;
      int counted = 0;
      for (int c = 0; c < cfg.num_clients; ++c) {
        const Dataset& test = data[c][i].test;
        if (test.size() == 0) continue;
        Batch batch;
        batch.inputs = test.inputs;
        batch.labels = test.labels;
        total += accuracy(clients[c].shape, clients[c].params, batch);
        ++counted;
      }
      if (counted == 0) {
        report.warnings.push_back("no test data anywhere for task " +
                                  std::to_string(i));
        row.push_back(0.0);
      } else {
        row.push_back(total / counted);
      }
    }
    report.acc.rows.push_back(std::move(row));

    if (cfg.checkpoint_enabled) {
      const std::string dir = cfg.out_dir.empty() ? "." : cfg.out_dir;
      const std::string path =
          dir + "/checkpoint_task_" + std::to_string(t) + ".bin";
      save_checkpoint(path, clients,
                      partial_state_json(report, t + 1).dump());
    }
  }

  // Leak audit: train/test splits must be disjoint and training must have
  // touched only train rows.
  report.leak_free = true;
  for (int c = 0; c < cfg.num_clients; ++c) {
    for (int t = 0; t < cfg.tasks.num_tasks; ++t) {
      const auto& streams = data[c][t];
      std::set<std::tuple<int, int, int>> train_refs;
      for (const SampleRef& ref : streams.train.dataset().refs) {
        train_refs.insert({ref.task_id, ref.class_id, ref.index});
      }
      for (const SampleRef& ref : streams.test.refs) {
        if (train_refs.count({ref.task_id, ref.class_id, ref.index}) > 0) {
          report.leak_free = false;
        }
      }
      if (streams.train.touched_count() > streams.train.size()) {
        report.leak_free = false;
      }
    }
  }
  if (!report.leak_free) {
    report.warnings.push_back("train/test split audit failed");
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

}  // namespace

nlohmann::json RunReport::to_json(bool include_wallclock) const {
  nlohmann::json j;
  j["schema"] = "fedcl.report.v1";
  j["strategy"] = strategy;
  j["seed"] = seed;
  j["config"] = config_echo;
  j["accuracy_matrix"] = acc.rows;

  nlohmann::json per_task = nlohmann::json::array();
  for (int m = 0; m < acc.tasks_done(); ++m) {
    std::uint64_t bytes = 0;
    const int round_limit = (m + 1) * config_echo.at("rounds")
                                          .at("rounds_per_task")
                                          .get<int>();
    for (const auto& r : ledger.records) {
      if (r.round < round_limit) bytes += r.bytes_up + r.bytes_down;
    }
    per_task.push_back({
        {"task", m},
        {"avg_accuracy", avg_accuracy(acc, m)},
        {"mean_forgetting", mean_forgetting(acc, m)},
        {"bytes_total", bytes},
        {"sim_comm_seconds",
         static_cast<double>(bytes) / bandwidth_bytes_per_sec},
    });
  }
  j["per_task"] = std::move(per_task);

  const int last = acc.tasks_done() - 1;
  nlohmann::json final_forgetting = nlohmann::json::array();
  if (last >= 0) {
    for (int k = 0; k <= last; ++k) {
      const auto rate = forgetting_rate(acc, k, last);
      if (rate) {
        final_forgetting.push_back(*rate);
      } else {
        final_forgetting.push_back(nullptr);
      }
    }
    j["final"] = {
        {"avg_accuracy", avg_accuracy(acc, last)},
        {"mean_forgetting", mean_forgetting(acc, last)},
        {"forgetting_per_task", std::move(final_forgetting)},
    };
  }

  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : ledger.records) {
    records.push_back({{"round", r.round},
                       {"client", r.client_id},
                       {"bytes_up", r.bytes_up},
                       {"bytes_down", r.bytes_down}});
  }
  j["comm"] = {
      {"records", std::move(records)},
      {"bytes_up_total", ledger.bytes_up_total()},
      {"bytes_down_total", ledger.bytes_down_total()},
      {"bytes_total", ledger.bytes_total()},
      {"sim_comm_seconds", comm_time(ledger, bandwidth_bytes_per_sec)},
      {"sync_round_seconds", sync_round_seconds(ledger, bandwidth_bytes_per_sec)},
  };

  j["integrator"] = {
      {"local_projections", integrator.local_projections},
      {"finetune_projections", integrator.finetune_projections},
      {"qp_nonconverged", integrator.qp_nonconverged},
      {"bound_flags", integrator.bound_flags},
      {"max_qp_iterations", integrator.max_qp_iterations},
      {"max_g_prime_norm_sq", integrator.max_g_prime_norm_sq},
  };
  j["noniid"] = {{"mean_class_jaccard", mean_jaccard}};
  j["leak_free"] = leak_free;
  j["warnings"] = warnings;

  if (include_wallclock) {
    j["wallclock"] = {{"started_unix", started_unix},
                      {"seconds", wall_seconds}};
  }
  return j;
}

RunReport run_experiment(const ExperimentConfig& cfg) {
  return run_impl(cfg, nullptr);
}

RunReport resume_experiment(const ExperimentConfig& cfg,
                            const std::string& checkpoint_path) {
  return run_impl(cfg, &checkpoint_path);
}

nlohmann::json manifest_json(const ExperimentConfig& cfg) {
  validate(cfg);
  const auto stream =
      make_stream(cfg.seed, cfg.tasks.num_tasks, cfg.tasks.classes_per_task,
                  cfg.tasks.input_dim, cfg.tasks.spread,
                  cfg.tasks.samples_per_class);
  const auto allocations = allocate_clients(cfg.seed, stream, cfg.num_clients);

  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& task : stream) {
    tasks.push_back({{"task_id", task.task_id},
                     {"class_ids", task.class_ids},
                     {"means", task.means},
                     {"spread", task.spread},
                     {"samples_per_class", task.samples_per_class}});
  }

  nlohmann::json allocs = nlohmann::json::array();
  for (const auto& alloc : allocations) {
    nlohmann::json per_task = nlohmann::json::array();
    for (const auto& ta : alloc.tasks) {
      nlohmann::json slices = nlohmann::json::array();
      for (const auto& slice : ta.classes) {
        slices.push_back({{"class_id", slice.class_id},
                          {"label", slice.label},
                          {"start", slice.start},
                          {"count", slice.count}});
      }
      per_task.push_back({{"task_id", ta.task_id},
                          {"fraction", ta.fraction},
                          {"classes", std::move(slices)}});
    }
    allocs.push_back({{"client_id", alloc.client_id},
                      {"tasks", std::move(per_task)}});
  }

  return nlohmann::json{{"schema", "fedcl.manifest.v1"},
                        {"seed", cfg.seed},
                        {"stream", std::move(tasks)},
                        {"allocations", std::move(allocs)}};
}

std::vector<CompareRow> compare(const std::vector<ExperimentConfig>& cfgs) {
  std::vector<CompareRow> rows;
  for (const ExperimentConfig& cfg : cfgs) {
    try {
      const RunReport report = run_experiment(cfg);
      for (int m = 0; m < report.acc.tasks_done(); ++m) {
        CompareRow row;
        row.strategy = report.strategy;
        row.seed = report.seed;
        row.task_idx = m;
        row.avg_acc = avg_accuracy(report.acc, m);
        row.mean_forgetting = mean_forgetting(report.acc, m);
        const int round_limit = (m + 1) * cfg.plan.rounds_per_task;
        for (const auto& r : report.ledger.records) {
          if (r.round < round_limit) row.bytes_total += r.bytes_up + r.bytes_down;
        }
        row.sim_comm_seconds =
            static_cast<double>(row.bytes_total) / cfg.bandwidth_bytes_per_sec;
        rows.push_back(std::move(row));
      }
    } catch (const std::exception& e) {
      CompareRow row;
      row.strategy = strategy_name(cfg.strategy);
      row.seed = cfg.seed;
      row.task_idx = -1;
      row.avg_acc = std::nan("");
      row.mean_forgetting = std::nan("");
      row.bytes_total = 0;
      row.sim_comm_seconds = std::nan("");
      row.failed = true;
      row.error = e.what();
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::string csv =
      "strategy,seed,task_idx,avg_acc,mean_forgetting,bytes_total,"
      "sim_comm_seconds\n";
  for (const CompareRow& row : rows) {
    csv += row.strategy;
    csv += ',';
    csv += std::to_string(row.seed);
    csv += ',';
    csv += std::to_string(row.task_idx);
    csv += ',';
    csv += format_double(row.avg_acc);
    csv += ',';
    csv += format_double(row.mean_forgetting);
    csv += ',';
    csv += std::to_string(row.bytes_total);
    csv += ',';
    csv += format_double(row.sim_comm_seconds);
    csv += '\n';
  }
  return csv;
}

}  // namespace fedcl

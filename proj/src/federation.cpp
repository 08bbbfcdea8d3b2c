#include "fedcl/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>

#include "fedcl/errors.hpp"
#include "fedcl/matrix.hpp"

namespace fedcl {

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

// Runs fn(i) for i in [0, count) on up to `threads` workers. Work items are
// independent; the first exception is rethrown on the caller.
void run_parallel(std::size_t count, int threads,
                  const std::function<void(std::size_t)>& fn) {
  const int workers =
      std::max(1, std::min<int>(threads, static_cast<int>(count)));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }

  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

IterationDiag diag_from(const IntegrateDiag& idiag, int constraints,
                        const ParamVector& g_prime, double lambda_bound) {
  IterationDiag diag;
  diag.projected = idiag.projected;
  diag.qp_converged = idiag.converged;
  diag.qp_iterations = idiag.iterations;
  diag.constraints = constraints;
  diag.min_row_inner = idiag.min_row_inner;
  const BoundCheck bound = check_bounded(g_prime, lambda_bound);
  diag.g_prime_norm_sq = bound.norm_sq;
  diag.bound_exceeded = bound.exceeded;
  return diag;
}

}  // namespace

PartitionMask head_partition(const MlpShape& shape) {
  validate_shape(shape);
  const std::size_t total = param_count(shape);
  const int last = static_cast<int>(shape.layer_sizes.size()) - 2;
  const std::size_t head_start = layer_offset(shape, last);

  PartitionMask mask;
  mask.global_indices.reserve(head_start);
  mask.local_indices.reserve(total - head_start);
  for (std::size_t i = 0; i < head_start; ++i) mask.global_indices.push_back(i);
  for (std::size_t i = head_start; i < total; ++i) mask.local_indices.push_back(i);
  return mask;
}

ScheduleConfig make_schedule(double eta_l0, double eta_g0, double mu,
                             double big_l, int rounds_per_task) {
  if (!(eta_l0 > 0.0) || !(eta_g0 > 0.0) || !(mu > 0.0) || !(big_l > 0.0)) {
    throw ConfigError("schedule: rates and constants must be positive");
  }
  if (rounds_per_task < 1) throw ConfigError("schedule: rounds_per_task >= 1");

  ScheduleConfig cfg;
  cfg.eta_l0 = eta_l0;
  cfg.eta_g0 = eta_g0;
  cfg.mu = mu;
  cfg.big_l = big_l;
  cfg.gamma = std::max(8.0 * big_l / mu, static_cast<double>(rounds_per_task));

  // The min() in eta_global keeps the bound by construction; spot-check a
  // geometric sweep anyway so a bad edit cannot ship a violating schedule.
  for (int r = 1; r <= (1 << 20); r *= 2) {
    if (eta_global(cfg, r) * mu * (cfg.gamma + r) > 2.0 + 1e-12) {
      throw ConfigError("schedule: global rate violates the convergence bound");
    }
  }
  return cfg;
}

double eta_local(const ScheduleConfig& cfg, int r) {
  return cfg.eta_l0 / std::sqrt(static_cast<double>(r));
}

double eta_global(const ScheduleConfig& cfg, int r) {
  return std::min(cfg.eta_g0 / static_cast<double>(r),
                  2.0 / (cfg.mu * (cfg.gamma + static_cast<double>(r))));
}

IterationDiag local_train_iteration(ClientState& client, const Batch& batch,
                                    int r_iter, const ScheduleConfig& sched,
                                    const IntegrationOptions& opts) {
  const ParamVector g = grad_hard(client.shape, client.params, batch);

  IterationDiag diag;
  ParamVector g_prime;
  if (opts.past_integration && !client.store.empty()) {
    std::map<int, ParamVector> restored;
    for (const auto& knowledge : client.store.tasks()) {
      restored[knowledge.task_id] = restore_gradient(
          client.shape, client.params, knowledge, batch.inputs, opts.materialize);
    }
    const SignatureSelection selection = select_signature_tasks(
        client.store, g, restored, client.k, opts.distance);

    ConstraintSet constraints;
    for (int id : selection.selected_task_ids) {
      constraints.rows.push_back(restored.at(id));
      constraints.labels.push_back("task:" + std::to_string(id));
    }

    IntegrateDiag idiag;
    g_prime = integrate(constraints, g, opts.qp_tol, opts.qp_max_iter, &idiag);
    diag = diag_from(idiag, static_cast<int>(constraints.rows.size()), g_prime,
                     opts.lambda_bound);
  } else {
    g_prime = g;
    const BoundCheck bound = check_bounded(g_prime, opts.lambda_bound);
    diag.g_prime_norm_sq = bound.norm_sq;
    diag.bound_exceeded = bound.exceeded;
  }

  axpy(-eta_local(sched, r_iter), g_prime, client.params);
  client.pre_upload_gradient = std::move(g_prime);
  return diag;
}

std::vector<double> upload(const ClientState& client) {
  std::vector<double> slice;
  slice.reserve(client.mask.global_indices.size());
  for (std::size_t idx : client.mask.global_indices) {
    slice.push_back(client.params[idx]);
  }
  return slice;
}

void install_global(ClientState& client, const std::vector<double>& slice) {
  if (slice.size() != client.mask.global_indices.size()) {
    throw ProtocolError("install_global: slice length mismatch");
  }
  for (std::size_t i = 0; i < slice.size(); ++i) {
    client.params[client.mask.global_indices[i]] = slice[i];
  }
}

std::vector<double> aggregate(std::vector<UploadEntry> entries) {
  if (entries.empty()) throw ProtocolError("aggregate: zero participants");

  std::sort(entries.begin(), entries.end(),
            [](const UploadEntry& a, const UploadEntry& b) {
              return a.client_id < b.client_id;
            });
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].client_id == entries[i - 1].client_id) {
      throw ProtocolError("aggregate: duplicate client id");
    }
  }

  const std::size_t len = entries.front().slice.size();
  double weight_sum = 0.0;
  for (const auto& entry : entries) {
    if (entry.slice.size() != len) {
      throw ProtocolError("aggregate: slice length mismatch");
    }
    weight_sum += entry.weight.p;
  }
  if (std::fabs(weight_sum - 1.0) > 1e-12) {
    throw ProtocolError("aggregate: client weights must sum to 1");
  }

  std::vector<double> result(len, 0.0);
  for (const auto& entry : entries) {
    for (std::size_t i = 0; i < len; ++i) {
      result[i] += entry.weight.p * entry.slice[i];
    }
  }
  return result;
}

std::vector<IterationDiag> finetune_after_aggregation(
    ClientState& client, const std::vector<double>& aggregated_slice,
    const std::vector<Batch>& epoch_batches, int round_idx,
    const ScheduleConfig& sched, const IntegrationOptions& opts) {
  install_global(client, aggregated_slice);

  std::vector<IterationDiag> diags;
  diags.reserve(epoch_batches.size());
  const double lr = eta_global(sched, round_idx);
  for (const Batch& batch : epoch_batches) {
    const ParamVector g_after = grad_hard(client.shape, client.params, batch);

    IterationDiag diag;
    ParamVector g_prime;
    if (opts.prepost_integration && !client.pre_upload_gradient.empty()) {
      ConstraintSet constraints;
      constraints.rows.push_back(client.pre_upload_gradient);
      constraints.labels.emplace_back("pre-aggregation");
      IntegrateDiag idiag;
      g_prime = integrate(constraints, g_after, opts.qp_tol, opts.qp_max_iter,
                          &idiag);
      diag = diag_from(idiag, 1, g_prime, opts.lambda_bound);
    } else {
      g_prime = g_after;
      const BoundCheck bound = check_bounded(g_prime, opts.lambda_bound);
      diag.g_prime_norm_sq = bound.norm_sq;
      diag.bound_exceeded = bound.exceeded;
    }

    axpy(-lr, g_prime, client.params);
    diags.push_back(diag);
  }
  return diags;
}

void run_task(std::vector<ClientState>& clients, TaskDataSource& data,
              const TaskRunConfig& cfg, ProtocolEvents* events) {
  if (clients.empty()) throw ProtocolError("run_task: no clients");
  const int v = cfg.plan.local_iters;

  for (int round = 0; round < cfg.plan.rounds_per_task; ++round) {
    std::vector<std::vector<IterationDiag>> local_diags(clients.size());
    run_parallel(clients.size(), cfg.threads, [&](std::size_t c) {
      ClientState& client = clients[c];
      for (int it = 1; it <= v; ++it) {
        const int r_iter = round * v + it;
        const Batch batch = data.next_train_batch(client.client_id);
        local_diags[c].push_back(local_train_iteration(
            client, batch, r_iter, cfg.sched, cfg.integration));
      }
    });
    if (events) {
      for (std::size_t c = 0; c < clients.size(); ++c) {
        for (const auto& diag : local_diags[c]) {
          events->integration(clients[c].client_id, false, diag);
        }
      }
    }

    if (!cfg.toggles.federate) continue;

    std::uint64_t total_samples = 0;
    for (const auto& client : clients) {
      total_samples += data.train_count(client.client_id);
    }
    if (total_samples == 0) throw ProtocolError("run_task: no training samples");

    std::vector<UploadEntry> entries;
    entries.reserve(clients.size());
    for (const auto& client : clients) {
      UploadEntry entry;
      entry.client_id = client.client_id;
      entry.slice = upload(client);
      entry.weight.p = static_cast<double>(data.train_count(client.client_id)) /
                       static_cast<double>(total_samples);
      entries.push_back(std::move(entry));
    }
    const std::uint64_t slice_bytes =
         8ull * entries.front().slice.size();
    const std::vector<double> aggregated = aggregate(std::move(entries));

    if (events) {
      const double stamp = now_seconds();
      for (const auto& client : clients) {
        events->comm(cfg.round_base + round, client.client_id, slice_bytes,
                     slice_bytes, stamp);
      }
    }

    std::vector<std::vector<IterationDiag>> tune_diags(clients.size());
    run_parallel(clients.size(), cfg.threads, [&](std::size_t c) {
      ClientState& client = clients[c];
      std::vector<Batch> batches;
      for (int e = 0; e < cfg.plan.finetune_epochs; ++e) {
        const int tag = round * cfg.plan.finetune_epochs + e;
        auto epoch = data.finetune_epoch(client.client_id, tag);
        for (auto& b : epoch) batches.push_back(std::move(b));
      }
      tune_diags[c] = finetune_after_aggregation(
          client, aggregated, batches, round + 1, cfg.sched, cfg.integration);
    });
    if (events) {
      for (std::size_t c = 0; c < clients.size(); ++c) {
        for (const auto& diag : tune_diags[c]) {
          events->integration(clients[c].client_id, true, diag);
        }
      }
    }
  }

  run_parallel(clients.size(), cfg.threads, [&](std::size_t c) {
    ClientState& client = clients[c];
    if (cfg.toggles.extract) {
      TaskKnowledge knowledge =
          extract_knowledge(cfg.task_id, client.rho, client.params);
      if (cfg.knowledge_finetune.steps > 0) {
        const Batch full = data.full_train_batch(client.client_id);
        knowledge = finetune_knowledge(
            client.shape, client.params, knowledge, full,
            cfg.knowledge_finetune.steps, cfg.knowledge_finetune.lr,
            cfg.integration.materialize);
      } else if (cfg.integration.materialize == MaterializeMode::FrozenFull) {
        knowledge.frozen_full = client.params;
      }
      client.store.add(std::move(knowledge));
    }
    client.task_cursor += 1;
  });
}

}  // namespace fedcl

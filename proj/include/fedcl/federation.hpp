#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedcl/integrator.hpp"
#include "fedcl/knowledge.hpp"
#include "fedcl/mlp.hpp"

namespace fedcl {

/// Index split of the flat parameter vector into federated (global) and
/// on-device (local) weights. Disjoint, union covers everything.
struct PartitionMask {
  std::vector<std::size_t> global_indices;
  std::vector<std::size_t> local_indices;
};

/// Representation/head split: the last linear layer (weights + bias) stays
/// local, every earlier layer is shared.
PartitionMask head_partition(const MlpShape& shape);

/// Learning-rate schedules satisfying the convergence constraints:
/// eta_local decays as 1/sqrt(r), eta_global stays within 2/(mu(gamma+r)).
struct ScheduleConfig {
  double eta_l0 = 0.0;
  double eta_g0 = 0.0;
  double mu = 0.0;
  double big_l = 0.0;
  double gamma = 0.0;
};

ScheduleConfig make_schedule(double eta_l0, double eta_g0, double mu,
                             double big_l, int rounds_per_task);

double eta_local(const ScheduleConfig& cfg, int r);
double eta_global(const ScheduleConfig& cfg, int r);

struct RoundPlan {
  int rounds_per_task = 1;
  int local_iters = 1;
  int finetune_epochs = 1;
};

struct ClientWeight {
  double p = 0.0;
};

struct ClientState {
  int client_id = 0;
  std::uint64_t seed = 0;
  MlpShape shape;
  ParamVector params;
  PartitionMask mask;
  KnowledgeStore store;
  int task_cursor = 0;
  double rho = 0.1;
  int k = 10;
  // Last integrated gradient of the final local iteration before upload;
  // the pre-aggregation constraint for post-aggregation fine-tuning.
  ParamVector pre_upload_gradient;
};

struct IntegrationOptions {
  bool past_integration = false;
  bool prepost_integration = false;
  DistanceKind distance = DistanceKind::Wasserstein;
  MaterializeMode materialize = MaterializeMode::Zeros;
  double qp_tol = kQpTol;
  int qp_max_iter = kQpMaxIter;
  double lambda_bound = 1e3;
};

struct IterationDiag {
  bool projected = false;
  bool qp_converged = true;
  int qp_iterations = 0;
  int constraints = 0;
  double g_prime_norm_sq = 0.0;
  double min_row_inner = 0.0;
  bool bound_exceeded = false;
};

/// One SGD step on the current batch. With stored knowledge and past-task
/// integration enabled, restores every stored task's gradient, selects the
/// k most dissimilar as constraints, and steps along the integrated
/// gradient; otherwise along the plain gradient. r_iter is 1-based and
/// cumulative within the task.
IterationDiag local_train_iteration(ClientState& client, const Batch& batch,
                                    int r_iter, const ScheduleConfig& sched,
                                    const IntegrationOptions& opts);

/// Global slice leaving the client; the local head never does.
std::vector<double> upload(const ClientState& client);

void install_global(ClientState& client, const std::vector<double>& slice);

struct UploadEntry {
  int client_id = 0;
  std::vector<double> slice;
  ClientWeight weight;
};

/// FedAvg: elementwise sum of p_i * slice_i. Entries are summed in client-id
/// order so the result is independent of arrival order. Weights must sum to
/// 1 within 1e-12.
std::vector<double> aggregate(std::vector<UploadEntry> entries);

/// Installs the aggregated slice, then fine-tunes over the given batches at
/// eta_global(round_idx), constraining each step against the pre-upload
/// gradient when pre/post integration is on.
std::vector<IterationDiag> finetune_after_aggregation(
    ClientState& client, const std::vector<double>& aggregated_slice,
    const std::vector<Batch>& epoch_batches, int round_idx,
    const ScheduleConfig& sched, const IntegrationOptions& opts);

/// Which protocol surfaces a strategy exercises.
struct StrategyToggles {
  bool federate = false;
  bool past_integration = false;
  bool prepost_integration = false;
  bool extract = false;
};

struct KnowledgeFinetuneConfig {
  int steps = 0;
  double lr = 0.0;
};

/// Per-task data access; implemented by the task generator side.
class TaskDataSource {
 public:
  virtual ~TaskDataSource() = default;
  virtual Batch next_train_batch(int client_id) = 0;
  virtual std::vector<Batch> finetune_epoch(int client_id, int epoch_tag) = 0;
  virtual Batch full_train_batch(int client_id) = 0;
  virtual std::size_t train_count(int client_id) const = 0;
};

/// Protocol event sink. Calls arrive on the orchestrating thread, already
/// ordered by (round, client id).
class ProtocolEvents {
 public:
  virtual ~ProtocolEvents() = default;
  virtual void comm(int round, int client_id, std::uint64_t bytes_up,
                    std::uint64_t bytes_down, double wallclock_sec) = 0;
  virtual void integration(int client_id, bool finetune_phase,
                           const IterationDiag& diag) = 0;
};

struct TaskRunConfig {
  int task_id = 0;
  RoundPlan plan;
  ScheduleConfig sched;
  IntegrationOptions integration;
  StrategyToggles toggles;
  KnowledgeFinetuneConfig knowledge_finetune;
  int round_base = 0;  // global index of this task's first round
  int threads = 1;
};

/// Runs one task: rounds of local training, upload, FedAvg aggregation and
/// fine-tuning (when federating), then knowledge extraction and cursor
/// advance. Clients may execute phases in parallel; results do not depend
/// on the thread count.
void run_task(std::vector<ClientState>& clients, TaskDataSource& data,
              const TaskRunConfig& cfg, ProtocolEvents* events);

}  // namespace fedcl

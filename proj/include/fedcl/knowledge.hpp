#pragma once

#include <cstddef>
#include <map>
#include <utility>
#include <vector>

#include "fedcl/mlp.hpp"

namespace fedcl {

/// How non-retained positions are filled when a knowledge entry is turned
/// back into a dense parameter vector. Zeros is the default (pruning
/// semantics); FrozenFull keeps a dense snapshot of the model at extraction
/// time and exists only for ablation.
enum class MaterializeMode { Zeros, FrozenFull };

enum class DistanceKind { Wasserstein, Cosine };

/// Sparse (index, value) subset of a converged model's weights representing
/// one learned task.
struct TaskKnowledge {
  int task_id = 0;
  double rho = 0.0;
  std::vector<std::pair<std::size_t, double>> entries;  // sorted by index
  ParamVector frozen_full;  // populated only under MaterializeMode::FrozenFull
};

/// Ordered per-task knowledge, task ids contiguous from 0.
class KnowledgeStore {
 public:
  void add(TaskKnowledge knowledge);
  bool empty() const { return tasks_.empty(); }
  std::size_t size() const { return tasks_.size(); }
  const TaskKnowledge& task(int task_id) const;
  const std::vector<TaskKnowledge>& tasks() const { return tasks_; }

 private:
  std::vector<TaskKnowledge> tasks_;
};

struct SignatureSelection {
  int k = 0;
  std::vector<int> selected_task_ids;   // by descending distance, ties by id
  std::map<int, double> distances;      // every candidate task
};

/// Retains the ceil(rho*n) indices with the largest |value|; ties at the
/// threshold break toward the lower index. Values are the current values at
/// those indices.
TaskKnowledge extract_knowledge(int task_id, double rho, const ParamVector& params);

/// Runs `steps` gradient steps on loss_hard updating only the retained
/// indices; every other coordinate keeps its input value. Returns the
/// knowledge with updated entry values. Pass mode to refresh the frozen
/// snapshot the same way extract_knowledge would.
TaskKnowledge finetune_knowledge(const MlpShape& shape, const ParamVector& params,
                                 const TaskKnowledge& knowledge, const Batch& batch,
                                 int steps, double lr,
                                 MaterializeMode mode = MaterializeMode::Zeros);

/// Dense vector with retained values at their indices; remaining positions
/// per `mode`.
ParamVector materialize(const MlpShape& shape, const TaskKnowledge& knowledge,
                        MaterializeMode mode = MaterializeMode::Zeros);

/// Restores a past task's gradient from its knowledge using only the
/// current task's inputs: the soft-target gradient toward the materialized
/// model's predictions.
ParamVector restore_gradient(const MlpShape& shape, const ParamVector& current_params,
                             const TaskKnowledge& knowledge, const Matrix& inputs,
                             MaterializeMode mode = MaterializeMode::Zeros);

/// W1 between the empirical distributions of the two component multisets:
/// mean |sort(a)_i - sort(b)_i|.
double wasserstein1d(const ParamVector& a, const ParamVector& b);

/// 1 - cos(a, b); 0 when either vector is zero. Config-switch alternative
/// to wasserstein1d.
double cosine_distance(const ParamVector& a, const ParamVector& b);

/// Picks the min(k, m) stored tasks whose restored gradients are farthest
/// from the current gradient; ties break toward the lower task id.
SignatureSelection select_signature_tasks(const KnowledgeStore& store,
                                          const ParamVector& current_grad,
                                          const std::map<int, ParamVector>& restored_grads,
                                          int k,
                                          DistanceKind distance = DistanceKind::Wasserstein);

}  // namespace fedcl

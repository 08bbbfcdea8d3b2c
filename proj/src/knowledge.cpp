#include "fedcl/knowledge.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedcl/errors.hpp"

namespace fedcl {

void KnowledgeStore::add(TaskKnowledge knowledge) {
  if (knowledge.task_id != static_cast<int>(tasks_.size())) {
    throw ProtocolError("KnowledgeStore: task ids must be contiguous from 0");
  }
  tasks_.push_back(std::move(knowledge));
}

const TaskKnowledge& KnowledgeStore::task(int task_id) const {
  if (task_id < 0 || task_id >= static_cast<int>(tasks_.size())) {
    throw ProtocolError("KnowledgeStore: unknown task id");
  }
  return tasks_[task_id];
}

TaskKnowledge extract_knowledge(int task_id, double rho, const ParamVector& params) {
  if (!(rho > 0.0 && rho <= 1.0)) {
    throw ConfigError("extract_knowledge: rho must be in (0, 1]");
  }
  const std::size_t n = params.size();
  std::size_t keep = static_cast<std::size_t>(std::ceil(rho * static_cast<double>(n)));
  keep = std::min(std::max<std::size_t>(keep, 1), n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::nth_element(order.begin(), order.begin() + (keep - 1), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     const double ma = std::fabs(params[a]);
                     const double mb = std::fabs(params[b]);
                     if (ma != mb) return ma > mb;
                     return a < b;
                   });
  order.resize(keep);
  std::sort(order.begin(), order.end());

  TaskKnowledge knowledge;
  knowledge.task_id = task_id;
  knowledge.rho = rho;
  knowledge.entries.reserve(keep);
  for (std::size_t idx : order) knowledge.entries.emplace_back(idx, params[idx]);
  return knowledge;
}

TaskKnowledge finetune_knowledge(const MlpShape& shape, const ParamVector& params,
                                 const TaskKnowledge& knowledge, const Batch& batch,
                                 int steps, double lr, MaterializeMode mode) {
  for (const auto& [idx, value] : knowledge.entries) {
    (void)value;
    if (idx >= params.size()) {
      throw DimensionError("finetune_knowledge: entry index out of range");
    }
  }

  ParamVector work = params;
  for (const auto& [idx, value] : knowledge.entries) work[idx] = value;

  for (int s = 0; s < steps; ++s) {
    const ParamVector grad = grad_hard(shape, work, batch);
    for (const auto& [idx, value] : knowledge.entries) {
      (void)value;
      work[idx] -= lr * grad[idx];
    }
  }

  TaskKnowledge updated;
  updated.task_id = knowledge.task_id;
  updated.rho = knowledge.rho;
  updated.entries.reserve(knowledge.entries.size());
  for (const auto& [idx, value] : knowledge.entries) {
    (void)value;
    updated.entries.emplace_back(idx, work[idx]);
  }
  if (mode == MaterializeMode::FrozenFull) updated.frozen_full = params;
  return updated;
}

ParamVector materialize(const MlpShape& shape, const TaskKnowledge& knowledge,
                        MaterializeMode mode) {
  const std::size_t n = param_count(shape);
  ParamVector dense;
  if (mode == MaterializeMode::FrozenFull && !knowledge.frozen_full.empty()) {
    if (knowledge.frozen_full.size() != n) {
      throw DimensionError("materialize: frozen snapshot length mismatch");
    }
    dense = knowledge.frozen_full;
  } else {
    dense.assign(n, 0.0);
  }
  for (const auto& [idx, value] : knowledge.entries) {
    if (idx >= n) throw DimensionError("materialize: entry index out of range");
    dense[idx] = value;
  }
  return dense;
}

ParamVector restore_gradient(const MlpShape& shape, const ParamVector& current_params,
                             const TaskKnowledge& knowledge, const Matrix& inputs,
                             MaterializeMode mode) {
  const ParamVector snapshot = materialize(shape, knowledge, mode);
  const LogitTargets targets = forward(shape, snapshot, inputs);
  return grad_soft(shape, current_params, inputs, targets);
}

double wasserstein1d(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) throw DimensionError("wasserstein1d: length mismatch");
  if (a.empty()) return 0.0;
  ParamVector sa = a;
  ParamVector sb = b;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  double total = 0.0;
  for (std::size_t i = 0; i < sa.size(); ++i) total += std::fabs(sa[i] - sb[i]);
  return total / static_cast<double>(sa.size());
}

double cosine_distance(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) throw DimensionError("cosine_distance: length mismatch");
  const double na = std::sqrt(norm_sq(a));
  const double nb = std::sqrt(norm_sq(b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return 1.0 - dot(a, b) / (na * nb);
}

SignatureSelection select_signature_tasks(const KnowledgeStore& store,
                                          const ParamVector& current_grad,
                                          const std::map<int, ParamVector>& restored_grads,
                                          int k, DistanceKind distance) {
  if (k < 1) throw ConfigError("select_signature_tasks: k must be >= 1");

  SignatureSelection selection;
  selection.k = k;
  for (const auto& knowledge : store.tasks()) {
    const auto it = restored_grads.find(knowledge.task_id);
    if (it == restored_grads.end()) {
      throw ProtocolError("select_signature_tasks: missing restored gradient");
    }
    const double d = distance == DistanceKind::Wasserstein
                         ? wasserstein1d(it->second, current_grad)
                         : cosine_distance(it->second, current_grad);
    selection.distances[knowledge.task_id] = d;
  }

  std::vector<int> ids;
  ids.reserve(selection.distances.size());
  for (const auto& [id, d] : selection.distances) {
    (void)d;
    ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end(), [&](int a, int b) {
    const double da = selection.distances.at(a);
    const double db = selection.distances.at(b);
    if (da != db) return da > db;
    return a < b;
  });
  const std::size_t take = std::min<std::size_t>(k, ids.size());
  selection.selected_task_ids.assign(ids.begin(), ids.begin() + take);
  return selection;
}

}  // namespace fedcl

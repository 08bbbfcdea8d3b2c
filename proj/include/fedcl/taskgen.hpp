#pragma once

#include <cstdint>
#include <vector>

#include "fedcl/mlp.hpp"
#include "fedcl/rng.hpp"

namespace fedcl {

/// One classification task: a set of global class ids with Gaussian class
/// clusters around fixed centroids.
struct TaskSpec {
  int task_id = 0;
  std::vector<int> class_ids;               // global ids; position = label
  std::vector<std::vector<double>> means;   // one centroid per class
  double spread = 1.0;
  int samples_per_class = 0;
};

/// A client's chunk of one class's sample pool: indices [start, start+count).
/// Chunks are disjoint across clients, so allocation samples without
/// replacement.
struct ClassSlice {
  int class_id = 0;
  int label = 0;  // within-task class index
  int start = 0;
  int count = 0;
};

struct TaskAllocation {
  int task_id = 0;
  double fraction = 0.0;  // drawn from [0.05, 0.10]
  std::vector<ClassSlice> classes;
};

struct ClientAllocation {
  int client_id = 0;
  std::vector<TaskAllocation> tasks;
};

/// Identity of a generated sample, for train/test bookkeeping.
struct SampleRef {
  int task_id = 0;
  int class_id = 0;
  int index = 0;  // position in the class's pool

  bool operator==(const SampleRef&) const = default;
};

struct Dataset {
  Matrix inputs;
  std::vector<int> labels;
  std::vector<SampleRef> refs;

  int size() const { return inputs.rows; }
};

/// Seeded synthetic stream: centroids are random unit vectors scaled by 3,
/// class ids partitioned disjointly across tasks.
std::vector<TaskSpec> make_stream(std::uint64_t seed, int num_tasks,
                                  int classes_per_task, int input_dim,
                                  double spread, int samples_per_class);

/// Non-IID allocation: per client and task, 2..min(5, classes_per_task)
/// classes and a 5-10% sample fraction, redrawn (bounded) until every class
/// of every task lands on at least one client.
std::vector<ClientAllocation> allocate_clients(std::uint64_t seed,
                                               const std::vector<TaskSpec>& stream,
                                               int num_clients);

/// Deterministic minibatch source over a client's train split. next() cycles
/// with a fresh shuffle per epoch; epoch(tag) yields one full pass in a
/// permutation derived from the tag. Served train rows are recorded so leak
/// checks can compare against the split.
class TrainStream {
 public:
  TrainStream() = default;
  TrainStream(Dataset train, std::uint64_t seed, int client_id, int task_id,
              int batch_size);

  Batch next();
  std::vector<Batch> epoch(int tag);
  Batch full();
  int size() const { return train_.size(); }
  int touched_count() const;
  const Dataset& dataset() const { return train_; }

 private:
  Batch take_rows(const std::vector<int>& rows);

  Dataset train_;
  Rng order_rng_{0};
  std::vector<int> perm_;
  std::size_t pos_ = 0;
  int batch_size_ = 1;
  std::uint64_t seed_ = 0;
  int client_id_ = 0;
  int task_id_ = 0;
  std::vector<bool> touched_;
};

struct ClientTaskStreams {
  TrainStream train;
  Dataset test;
};

/// Materializes a client's train/test splits for one task and wraps the
/// train side in a batch stream. Gaussian draws come from the per-class
/// sample streams, so the same (seed, allocation) always yields the same
/// data regardless of which clients share a class.
ClientTaskStreams sample_batches(const ClientAllocation& allocation,
                                 const TaskSpec& task, std::uint64_t seed,
                                 int batch_size);

/// Mean pairwise Jaccard similarity of per-task class sets across clients;
/// the non-IID certificate reported in the run report.
double mean_class_jaccard(const std::vector<ClientAllocation>& allocations,
                          int num_tasks);

}  // namespace fedcl

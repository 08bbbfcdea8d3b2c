#include "fedcl/taskgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "fedcl/errors.hpp"

namespace fedcl {

namespace {

constexpr int kCoverageRetries = 1000;
constexpr double kCentroidRadius = 3.0;

// Full pool of Gaussian draws for one class; samples are identified by their
// position, so any slice of the pool is reproducible.
Matrix class_pool(const TaskSpec& task, int label, std::uint64_t seed) {
  const int dim = static_cast<int>(task.means[label].size());
  Rng rng = stream_rng(seed, static_cast<std::uint64_t>(task.task_id),
                       static_cast<std::uint64_t>(task.class_ids[label]),
                       Stream::Samples);
  Matrix pool(task.samples_per_class, dim);
  for (int i = 0; i < task.samples_per_class; ++i) {
    for (int d = 0; d < dim; ++d) {
      pool.at(i, d) = task.means[label][d] + task.spread * rng.normal();
    }
  }
  return pool;
}

}  // namespace

std::vector<TaskSpec> make_stream(std::uint64_t seed, int num_tasks,
                                  int classes_per_task, int input_dim,
                                  double spread, int samples_per_class) {
  if (num_tasks < 1 || classes_per_task < 1 || input_dim < 1) {
    throw ConfigError("make_stream: counts must be >= 1");
  }
  if (samples_per_class < 2) {
    throw ConfigError("make_stream: samples_per_class must be >= 2");
  }
  if (!(spread > 0.0)) throw ConfigError("make_stream: spread must be positive");

  std::vector<TaskSpec> stream;
  stream.reserve(num_tasks);
  for (int t = 0; t < num_tasks; ++t) {
    TaskSpec task;
    task.task_id = t;
    task.spread = spread;
    task.samples_per_class = samples_per_class;
    for (int c = 0; c < classes_per_task; ++c) {
      const int class_id = t * classes_per_task + c;
      task.class_ids.push_back(class_id);

      Rng rng = stream_rng(seed, static_cast<std::uint64_t>(class_id), 0,
                           Stream::Centroid);
      std::vector<double> mean(input_dim);
      double norm = 0.0;
      do {
        norm = 0.0;
        for (double& x : mean) {
          x = rng.normal();
          norm += x * x;
        }
      } while (norm == 0.0);
      norm = std::sqrt(norm);
      for (double& x : mean) x *= kCentroidRadius / norm;
      task.means.push_back(std::move(mean));
    }
    stream.push_back(std::move(task));
  }
  return stream;
}

std::vector<ClientAllocation> allocate_clients(std::uint64_t seed,
                                               const std::vector<TaskSpec>& stream,
                                               int num_clients) {
  if (num_clients < 1) throw ConfigError("allocate_clients: need >= 1 client");

  std::vector<ClientAllocation> allocations(num_clients);
  for (int c = 0; c < num_clients; ++c) allocations[c].client_id = c;

  for (const TaskSpec& task : stream) {
    const int cpt = static_cast<int>(task.class_ids.size());
    if (cpt < 2) throw ConfigError("allocate_clients: classes_per_task must be >= 2");
    const int hi = std::min(5, cpt);

    Rng rng = stream_rng(seed, static_cast<std::uint64_t>(task.task_id), 0,
                         Stream::Allocation);

    // Subset draw per client, redrawn as a block until every class is
    // covered by someone.
    std::vector<std::vector<int>> chosen(num_clients);
    bool covered = false;
    for (int attempt = 0; attempt < kCoverageRetries && !covered; ++attempt) {
      std::vector<bool> seen(cpt, false);
      for (int c = 0; c < num_clients; ++c) {
        const int size = 2 + static_cast<int>(rng.below(hi - 2 + 1));
        std::vector<int> labels(cpt);
        std::iota(labels.begin(), labels.end(), 0);
        for (int i = 0; i < size; ++i) {
          const std::size_t j = i + rng.below(cpt - i);
          std::swap(labels[i], labels[j]);
        }
        labels.resize(size);
        std::sort(labels.begin(), labels.end());
        for (int label : labels) seen[label] = true;
        chosen[c] = std::move(labels);
      }
      covered = std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
    }
    if (!covered) {
      throw ConfigError("allocate_clients: could not cover every class; add clients");
    }

    std::vector<double> fractions(num_clients);
    for (int c = 0; c < num_clients; ++c) fractions[c] = rng.uniform(0.05, 0.10);

    // Disjoint chunks of each class pool, walked in client order.
    std::vector<int> cursor(cpt, 0);
    for (int c = 0; c < num_clients; ++c) {
      TaskAllocation alloc;
      alloc.task_id = task.task_id;
      alloc.fraction = fractions[c];
      for (int label : chosen[c]) {
        const int want = std::max(
            1, static_cast<int>(fractions[c] * task.samples_per_class));
        const int remaining = task.samples_per_class - cursor[label];
        if (remaining <= 0) {
          throw ConfigError(
              "allocate_clients: class pool exhausted; raise samples_per_class");
        }
        ClassSlice slice;
        slice.class_id = task.class_ids[label];
        slice.label = label;
        slice.start = cursor[label];
        slice.count = std::min(want, remaining);
        cursor[label] += slice.count;
        alloc.classes.push_back(slice);
      }
      allocations[c].tasks.push_back(std::move(alloc));
    }
  }
  return allocations;
}

TrainStream::TrainStream(Dataset train, std::uint64_t seed, int client_id,
                         int task_id, int batch_size)
    : train_(std::move(train)),
      order_rng_(stream_key(seed, static_cast<std::uint64_t>(client_id),
                            static_cast<std::uint64_t>(task_id),
                            Stream::BatchOrder)),
      batch_size_(batch_size),
      seed_(seed),
      client_id_(client_id),
      task_id_(task_id),
      touched_(static_cast<std::size_t>(train_.size()), false) {
  if (batch_size_ < 1) throw ConfigError("TrainStream: batch_size must be >= 1");
}

Batch TrainStream::take_rows(const std::vector<int>& rows) {
  Batch batch;
  batch.inputs = Matrix(static_cast<int>(rows.size()), train_.inputs.cols);
  batch.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int r = rows[i];
    touched_[r] = true;
    for (int c = 0; c < train_.inputs.cols; ++c) {
      batch.inputs.at(static_cast<int>(i), c) = train_.inputs.at(r, c);
    }
    batch.labels[i] = train_.labels[r];
  }
  return batch;
}

Batch TrainStream::next() {
  const int n = train_.size();
  if (n == 0) throw ProtocolError("TrainStream: empty train split");
  std::vector<int> rows;
  const int take = std::min(batch_size_, n);
  rows.reserve(take);
  while (static_cast<int>(rows.size()) < take) {
    if (pos_ >= perm_.size()) {
      perm_.resize(n);
      std::iota(perm_.begin(), perm_.end(), 0);
      for (int i = n - 1; i > 0; --i) {
        const std::size_t j = order_rng_.below(i + 1);
        std::swap(perm_[i], perm_[j]);
      }
      pos_ = 0;
    }
    rows.push_back(perm_[pos_++]);
  }
  return take_rows(rows);
}

std::vector<Batch> TrainStream::epoch(int tag) {
  const int n = train_.size();
  if (n == 0) throw ProtocolError("TrainStream: empty train split");
  Rng rng = stream_rng(seed_, static_cast<std::uint64_t>(client_id_),
                       (static_cast<std::uint64_t>(task_id_) << 20) |
                           static_cast<std::uint64_t>(tag),
                       Stream::FinetuneOrder);
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const std::size_t j = rng.below(i + 1);
    std::swap(perm[i], perm[j]);
  }

  std::vector<Batch> batches;
  for (int start = 0; start < n; start += batch_size_) {
    const int end = std::min(start + batch_size_, n);
    batches.push_back(take_rows(
        std::vector<int>(perm.begin() + start, perm.begin() + end)));
  }
  return batches;
}

Batch TrainStream::full() {
  std::vector<int> rows(train_.size());
  std::iota(rows.begin(), rows.end(), 0);
  return take_rows(rows);
}

int TrainStream::touched_count() const {
  return static_cast<int>(std::count(touched_.begin(), touched_.end(), true));
}

ClientTaskStreams sample_batches(const ClientAllocation& allocation,
                                 const TaskSpec& task, std::uint64_t seed,
                                 int batch_size) {
  const TaskAllocation* alloc = nullptr;
  for (const auto& ta : allocation.tasks) {
    if (ta.task_id == task.task_id) {
      alloc = &ta;
      break;
    }
  }
  if (!alloc) throw ConfigError("sample_batches: allocation lacks this task");

  const int dim = static_cast<int>(task.means.front().size());
  Dataset train;
  Dataset test;
  int train_rows = 0;
  int test_rows = 0;
  for (const ClassSlice& slice : alloc->classes) {
    const int n_test = slice.count >= 2 ? std::max(1, slice.count / 5) : 0;
    train_rows += slice.count - n_test;
    test_rows += n_test;
  }
  train.inputs = Matrix(train_rows, dim);
  test.inputs = Matrix(test_rows, dim);

  int tr = 0;
  int te = 0;
  for (const ClassSlice& slice : alloc->classes) {
    const Matrix pool = class_pool(task, slice.label, seed);
    const int n_test = slice.count >= 2 ? std::max(1, slice.count / 5) : 0;
    const int n_train = slice.count - n_test;
    for (int i = 0; i < slice.count; ++i) {
      const int pool_idx = slice.start + i;
      const bool is_train = i < n_train;
      Matrix& target = is_train ? train.inputs : test.inputs;
      const int row = is_train ? tr : te;
      for (int d = 0; d < dim; ++d) target.at(row, d) = pool.at(pool_idx, d);
      const SampleRef ref{task.task_id, slice.class_id, pool_idx};
      if (is_train) {
        train.labels.push_back(slice.label);
        train.refs.push_back(ref);
        ++tr;
      } else {
        test.labels.push_back(slice.label);
        test.refs.push_back(ref);
        ++te;
      }
    }
  }

  ClientTaskStreams streams{
      TrainStream(std::move(train), seed, allocation.client_id, task.task_id,
                  batch_size),
      std::move(test)};
  return streams;
}

double mean_class_jaccard(const std::vector<ClientAllocation>& allocations,
                          int num_tasks) {
  if (allocations.size() < 2) return 1.0;
  double total = 0.0;
  int pairs = 0;
  for (int t = 0; t < num_tasks; ++t) {
    std::vector<std::set<int>> sets;
    for (const auto& alloc : allocations) {
      std::set<int> classes;
      for (const auto& ta : alloc.tasks) {
        if (ta.task_id != t) continue;
        for (const auto& slice : ta.classes) classes.insert(slice.class_id);
      }
      sets.push_back(std::move(classes));
    }
    for (std::size_t a = 0; a < sets.size(); ++a) {
      for (std::size_t b = a + 1; b < sets.size(); ++b) {
        std::set<int> inter;
        std::set_intersection(sets[a].begin(), sets[a].end(), sets[b].begin(),
                              sets[b].end(), std::inserter(inter, inter.begin()));
        std::set<int> uni;
        std::set_union(sets[a].begin(), sets[a].end(), sets[b].begin(),
                       sets[b].end(), std::inserter(uni, uni.begin()));
        total += uni.empty() ? 1.0
                             : static_cast<double>(inter.size()) /
                                   static_cast<double>(uni.size());
        ++pairs;
      }
    }
  }
  return pairs == 0 ? 1.0 : total / pairs;
}

}  // namespace fedcl

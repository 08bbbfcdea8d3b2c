#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include "doctest.h"
#include "fedcl/errors.hpp"
#include "fedcl/taskgen.hpp"

using namespace fedcl;

TEST_CASE("make_stream is deterministic and partitions class ids") {
  const auto a = make_stream(42, 5, 4, 16, 0.5, 50);
  const auto b = make_stream(42, 5, 4, 16, 0.5, 50);
  REQUIRE(a.size() == 5);
  for (int t = 0; t < 5; ++t) {
    CHECK(a[t].class_ids == b[t].class_ids);
    CHECK(a[t].means == b[t].means);
    CHECK(a[t].class_ids ==
          std::vector<int>{4 * t, 4 * t + 1, 4 * t + 2, 4 * t + 3});
  }
  const auto c = make_stream(43, 5, 4, 16, 0.5, 50);
  CHECK(a[0].means != c[0].means);
}

TEST_CASE("centroids live on the radius-3 sphere") {
  const auto stream = make_stream(7, 3, 4, 8, 1.0, 50);
  for (const auto& task : stream) {
    for (const auto& mean : task.means) {
      double norm = 0.0;
      for (double x : mean) norm += x * x;
      CHECK(std::fabs(std::sqrt(norm) - 3.0) <= 1e-12);
    }
  }
}

TEST_CASE("make_stream rejects bad parameters") {
  CHECK_THROWS_AS(make_stream(1, 0, 4, 8, 1.0, 50), ConfigError);
  CHECK_THROWS_AS(make_stream(1, 2, 4, 8, -1.0, 50), ConfigError);
  CHECK_THROWS_AS(make_stream(1, 2, 4, 8, 1.0, 1), ConfigError);
}

TEST_CASE("allocation coverage, sizes and fractions across 50 seeds") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto stream = make_stream(seed, 2, 10, 6, 1.0, 400);
    const auto allocations = allocate_clients(seed, stream, 20);
    REQUIRE(allocations.size() == 20);

    for (const auto& task : stream) {
      std::set<int> covered;
      for (const auto& alloc : allocations) {
        for (const auto& ta : alloc.tasks) {
          if (ta.task_id != task.task_id) continue;
          CHECK(ta.fraction >= 0.05);
          CHECK(ta.fraction <= 0.10);
          CHECK(ta.classes.size() >= 2);
          CHECK(ta.classes.size() <= 5);
          for (const auto& slice : ta.classes) covered.insert(slice.class_id);
        }
      }
      CHECK(covered.size() == task.class_ids.size());
    }

    // non-IID certificate: with classes_per_task > 5 clients cannot all match
    CHECK(mean_class_jaccard(allocations, 2) < 1.0);
  }
}

TEST_CASE("slices are disjoint within each class pool") {
  const auto stream = make_stream(9, 3, 6, 8, 1.0, 300);
  const auto allocations = allocate_clients(9, stream, 12);
  for (const auto& task : stream) {
    std::map<int, std::vector<std::pair<int, int>>> ranges;
    for (const auto& alloc : allocations) {
      for (const auto& ta : alloc.tasks) {
        if (ta.task_id != task.task_id) continue;
        for (const auto& slice : ta.classes) {
          ranges[slice.class_id].emplace_back(slice.start,
                                              slice.start + slice.count);
        }
      }
    }
    for (auto& [class_id, spans] : ranges) {
      (void)class_id;
      std::sort(spans.begin(), spans.end());
      for (std::size_t i = 1; i < spans.size(); ++i) {
        CHECK(spans[i].first >= spans[i - 1].second);
      }
      CHECK(spans.back().second <= task.samples_per_class);
    }
  }
}

TEST_CASE("single client gets a small subset; coverage fails when impossible") {
  const auto stream4 = make_stream(3, 1, 4, 8, 1.0, 100);
  const auto single = allocate_clients(3, stream4, 1);
  REQUIRE(single.size() == 1);
  const auto& classes = single[0].tasks[0].classes;
  CHECK(classes.size() >= 2);
  CHECK(classes.size() <= 5);
  CHECK(classes.size() == 4);  // only a full subset covers all 4 classes

  const auto stream10 = make_stream(3, 1, 10, 8, 1.0, 100);
  CHECK_THROWS_AS(allocate_clients(3, stream10, 1), ConfigError);
}

TEST_CASE("sample_batches: labels, split disjointness, determinism") {
  const auto stream = make_stream(21, 2, 4, 8, 0.7, 120);
  const auto allocations = allocate_clients(21, stream, 3);

  auto streams = sample_batches(allocations[1], stream[0], 21, 8);
  auto again = sample_batches(allocations[1], stream[0], 21, 8);
  CHECK(streams.train.dataset().inputs.data == again.train.dataset().inputs.data);
  CHECK(streams.test.inputs.data == again.test.inputs.data);

  std::set<int> allocated_labels;
  for (const auto& slice : allocations[1].tasks[0].classes) {
    allocated_labels.insert(slice.label);
  }
  for (int y : streams.train.dataset().labels) {
    CHECK(allocated_labels.count(y) == 1);
  }
  for (int y : streams.test.labels) CHECK(allocated_labels.count(y) == 1);

  std::set<std::tuple<int, int, int>> train_refs;
  for (const auto& ref : streams.train.dataset().refs) {
    train_refs.insert({ref.task_id, ref.class_id, ref.index});
  }
  for (const auto& ref : streams.test.refs) {
    CHECK(train_refs.count({ref.task_id, ref.class_id, ref.index}) == 0);
  }
  CHECK(streams.test.size() > 0);
  CHECK(streams.train.size() > streams.test.size());
}

TEST_CASE("class-conditional sample means concentrate on the centroid") {
  // One client, large pool so per-class counts reach the CLT regime.
  const double spread = 0.8;
  const auto stream = make_stream(33, 1, 4, 8, spread, 4000);
  const auto allocations = allocate_clients(33, stream, 1);
  auto streams = sample_batches(allocations[0], stream[0], 33, 16);

  std::map<int, std::pair<std::vector<double>, int>> sums;
  const auto& train = streams.train.dataset();
  for (int r = 0; r < train.size(); ++r) {
    auto& [sum, count] = sums[train.labels[r]];
    sum.resize(8, 0.0);
    for (int d = 0; d < 8; ++d) sum[d] += train.inputs.at(r, d);
    count += 1;
  }
  for (const auto& [label, entry] : sums) {
    const auto& [sum, count] = entry;
    REQUIRE(count >= 100);
    const double tolerance = 3.0 * spread / std::sqrt(static_cast<double>(count));
    for (int d = 0; d < 8; ++d) {
      CHECK(std::fabs(sum[d] / count - stream[0].means[label][d]) <= tolerance);
    }
  }
}

TEST_CASE("train stream epochs cover each sample exactly once") {
  const auto stream = make_stream(5, 1, 4, 6, 1.0, 120);
  const auto allocations = allocate_clients(5, stream, 2);
  auto streams = sample_batches(allocations[0], stream[0], 5, 7);
  const int n = streams.train.size();

  const auto batches = streams.train.epoch(0);
  int total = 0;
  for (const auto& batch : batches) total += batch.inputs.rows;
  CHECK(total == n);

  // next() walks one full permutation before repeating
  std::map<std::pair<double, double>, int> seen;
  int drawn = 0;
  while (drawn < n) {
    const Batch batch = streams.train.next();
    for (int r = 0; r < batch.inputs.rows && drawn < n; ++r, ++drawn) {
      seen[{batch.inputs.at(r, 0), batch.inputs.at(r, 1)}] += 1;
    }
  }
  for (const auto& [key, count] : seen) {
    (void)key;
    CHECK(count == 1);
  }
  CHECK(streams.train.touched_count() == n);
}

TEST_CASE("spread calibration: 0.1 is separable in 200 steps, 2.0 is not") {
  auto train_and_test = [](double spread) {
    const auto stream = make_stream(11, 1, 4, 16, spread, 400);
    const auto allocations = allocate_clients(11, stream, 1);
    auto streams = sample_batches(allocations[0], stream[0], 11, 32);

    const MlpShape shape{{16, 24, 4}};
    Rng init(stream_key(11, 0, 0, Stream::ParamInit));
    ParamVector params = init_params(shape, init);
    for (int step = 0; step < 200; ++step) {
      const Batch batch = streams.train.next();
      axpy(-0.05, grad_hard(shape, params, batch), params);
    }
    Batch test;
    test.inputs = streams.test.inputs;
    test.labels = streams.test.labels;
    return accuracy(shape, params, test);
  };

  CHECK(train_and_test(0.1) >= 0.9);
  CHECK(train_and_test(2.0) < 0.9);
}

TEST_CASE("jaccard certificate is 1.0 for a single client") {
  const auto stream = make_stream(2, 2, 4, 6, 1.0, 100);
  const auto allocations = allocate_clients(2, stream, 1);
  CHECK(mean_class_jaccard(allocations, 2) == 1.0);
}

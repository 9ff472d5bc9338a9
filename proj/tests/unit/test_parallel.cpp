#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <vector>

#include "noisebench/error.hpp"
#include "noisebench/parallel.hpp"

using namespace noisebench;

TEST(ParallelFor, RunsEveryIndexOnce) {
  std::vector<int> hits(200, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(ParallelFor, NestedCallsComplete) {
  std::atomic<int> total{0};
  parallel_for(8, [&](std::size_t) { parallel_for(8, [&](std::size_t) { ++total; }); });
  EXPECT_EQ(total.load(), 64);
}

TEST(ParallelFor, RethrowsLowestFailingIndex) {
  try {
    parallel_for(20, [](std::size_t i) {
      if (i == 7 || i == 13) throw std::runtime_error("task " + std::to_string(i));
    });
    FAIL() << "expected an exception";
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "task 7");
  }
}

TEST(WorkerLimit, OverrideAndEnvironment) {
  set_worker_limit(3);
  EXPECT_EQ(worker_limit(), 3u);
  set_worker_limit(0);
  ::setenv("NOISEBENCH_WORKERS", "2", 1);
  EXPECT_EQ(worker_limit(), 2u);
  ::setenv("NOISEBENCH_WORKERS", "zero", 1);
  EXPECT_THROW(worker_limit(), ValidationError);
  ::unsetenv("NOISEBENCH_WORKERS");
  EXPECT_GE(worker_limit(), 1u);
}

TEST(WorkerLimit, SingleWorkerStillRunsAll) {
  set_worker_limit(1);
  std::vector<int> hits(10, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] = static_cast<int>(i); });
  for (std::size_t i = 0; i < hits.size(); ++i) EXPECT_EQ(hits[i], static_cast<int>(i));
  set_worker_limit(0);
}

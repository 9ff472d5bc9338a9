#include "noisebench/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "noisebench/error.hpp"

namespace noisebench {

namespace {

std::atomic<std::size_t> limit_override{0};
// Threads currently spawned by parallel_for across the whole process.
std::atomic<std::size_t> busy_threads{0};

std::size_t default_limit() {
  if (const char* env = std::getenv("NOISEBENCH_WORKERS"); env && *env) {
    try {
      std::size_t used = 0;
      const long value = std::stol(env, &used);
      if (used == std::string(env).size() && value >= 1) return static_cast<std::size_t>(value);
    } catch (const std::exception&) {
    }
    throw ValidationError(std::string("NOISEBENCH_WORKERS must be a positive integer, got '") + env +
                          "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

bool try_acquire_slot() {
  // the calling thread occupies one slot itself
  const std::size_t spare = worker_limit() - 1;
  auto current = busy_threads.load();
  while (current < spare) {
    if (busy_threads.compare_exchange_weak(current, current + 1)) return true;
  }
  return false;
}

}  // namespace

std::size_t worker_limit() {
  const auto forced = limit_override.load();
  return forced ? forced : default_limit();
}

void set_worker_limit(std::size_t workers) { limit_override = workers; }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> threads;
  auto run = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (i + 1 < n && try_acquire_slot()) {
      threads.emplace_back([&run, i] {
        run(i);
        --busy_threads;
      });
    } else {
      run(i);
    }
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace noisebench

#include "formnet/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace formnet {

int thread_count() {
  if (const char* env = std::getenv("FORMNET_THREADS")) {
    try {
      const int requested = std::stoi(env);
      if (requested >= 1) return requested;
    } catch (...) {
      // fall through to the hardware default on unparsable values
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

void parallel_for(int n, const std::function<void(int)>& fn, int n_threads) {
  if (n <= 0) return;
  // FORMNET_THREADS acts as a cap even over an explicit request.
  n_threads = n_threads <= 0 ? thread_count()
                             : std::min(n_threads, thread_count());
  n_threads = std::min(n_threads, n);

  if (n_threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }

  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto worker = [&] {
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace formnet

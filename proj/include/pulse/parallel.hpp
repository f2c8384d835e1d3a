/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <queue>
#include <thread>
#include <vector>

namespace pulse {

namespace detail {

inline thread_local bool tls_in_worker = false;

class ThreadPool {
 public:
  explicit ThreadPool(int n_threads)
  {
    for (int t = 0; t < n_threads; ++t) {
      workers_.emplace_back([this] {
        tls_in_worker = true;
        for (;;) {
          std::function<void()> job;
          {
            std::unique_lock<std::mutex> lock(mutex_);
            cv_.wait(lock, [this] { return stop_ || !jobs_.empty(); });
            if (stop_ && jobs_.empty()) return;
            job = std::move(jobs_.front());
            jobs_.pop();
          }
          job();
        }
      });
    }
  }

  ~ThreadPool()
  {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& w : workers_) w.join();
  }

  void submit(std::function<void()> job)
  {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      jobs_.push(std::move(job));
    }
    cv_.notify_one();
  }

  int size() const { return static_cast<int>(workers_.size()); }

 private:
  std::vector<std::thread> workers_;
  std::queue<std::function<void()>> jobs_;
  std::mutex mutex_;
  std::condition_variable cv_;
  bool stop_ = false;
};

}  // namespace detail

// Worker count: hardware concurrency capped by the PULSE_THREADS env var.
inline int max_threads()
{
  static const int n = [] {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    if (const char* env = std::getenv("PULSE_THREADS")) {
      const int cap = std::atoi(env);
      if (cap >= 1 && cap < hw) hw = cap;
    }
    return hw;
  }();
  return n;
}

namespace detail {

inline ThreadPool& pool()
{
  static ThreadPool p(max_threads());
  return p;
}

}  // namespace detail

// Runs f(i) for i in [begin, end) on the shared pool. Chunks are contiguous
// and writes must be disjoint per index, so results do not depend on the
// thread count. Nested calls from inside a worker run inline.
template <class F>
void parallel_for(int begin, int end, F&& f, int grain = 256)
{
  const int n = end - begin;
  if (n <= 0) return;
  const int threads = max_threads();
  if (threads <= 1 || detail::tls_in_worker || n <= grain) {
    for (int i = begin; i < end; ++i) f(i);
    return;
  }
  const int n_chunks = std::min(threads * 4, (n + grain - 1) / grain);
  const int chunk = (n + n_chunks - 1) / n_chunks;
  std::atomic<int> pending(n_chunks);
  std::mutex m;
  std::condition_variable done;
  for (int c = 0; c < n_chunks; ++c) {
    const int lo = begin + c * chunk;
    const int hi = std::min(end, lo + chunk);
    detail::pool().submit([&, lo, hi] {
      for (int i = lo; i < hi; ++i) f(i);
      if (pending.fetch_sub(1) == 1) {
        std::lock_guard<std::mutex> lock(m);
        done.notify_one();
      }
    });
  }
  std::unique_lock<std::mutex> lock(m);
  done.wait(lock, [&] { return pending.load() == 0; });
}

// Runs two independent tasks, possibly concurrently.
template <class F0, class F1>
void parallel_invoke(F0&& f0, F1&& f1)
{
  if (max_threads() <= 1 || detail::tls_in_worker) {
    f0();
    f1();
    return;
  }
  std::atomic<bool> f0_done(false);
  std::mutex m;
  std::condition_variable done;
  detail::pool().submit([&] {
    f0();
    {
      std::lock_guard<std::mutex> lock(m);
      f0_done.store(true);
    }
    done.notify_one();
  });
  f1();
  std::unique_lock<std::mutex> lock(m);
  done.wait(lock, [&] { return f0_done.load(); });
}

}  // namespace pulse

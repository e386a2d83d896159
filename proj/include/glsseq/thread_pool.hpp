#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace glsseq {

/// Fixed-size pool. The calling thread takes part as worker 0, so a pool of
/// size 1 spawns no threads at all.
class ThreadPool {
 public:
  using Task = std::function<void(std::size_t task, std::size_t worker)>;

  explicit ThreadPool(std::size_t workers);
  ~ThreadPool();

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  std::size_t size() const noexcept { return threads_.size() + 1; }

  /// Runs fn(task, worker) for task in [0, tasks) and blocks until all are
  /// done. The first exception thrown by any task is rethrown here.
  void run(std::size_t tasks, const Task& fn);

 private:
  void worker_loop(std::size_t worker);
  void drain(std::size_t worker);

  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const Task* job_ = nullptr;
  std::size_t job_tasks_ = 0;
  std::atomic<std::size_t> next_{0};
  std::size_t generation_ = 0;
  std::size_t finished_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

}  // namespace glsseq

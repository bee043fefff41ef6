#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace mlrn {

// Worker pool used by the heavy kernels. Ranges are split into one
// contiguous chunk per worker, so every output element is written by
// exactly one thread and the arithmetic order inside a chunk is fixed.
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool(default_thread_count());
        return pool;
    }

    int size() const { return static_cast<int>(workers_.size()) + 1; }

    // Runs fn(chunk_begin, chunk_end) on [begin, end) split across the pool.
    // The calling thread executes chunk 0. Nested calls run inline.
    void parallel_for(std::int64_t begin, std::int64_t end,
                      const std::function<void(std::int64_t, std::int64_t)>& fn) {
        const std::int64_t n = end - begin;
        if (n <= 0) return;
        const int threads = size();
        if (threads == 1 || n == 1 || in_parallel_) {
            fn(begin, end);
            return;
        }
        in_parallel_ = true;
        const int chunks = static_cast<int>(std::min<std::int64_t>(threads, n));
        const std::int64_t per = n / chunks;
        const std::int64_t rem = n % chunks;
        std::int64_t lo = begin;
        std::vector<std::pair<std::int64_t, std::int64_t>> ranges(chunks);
        for (int c = 0; c < chunks; ++c) {
            std::int64_t hi = lo + per + (c < rem ? 1 : 0);
            ranges[c] = {lo, hi};
            lo = hi;
        }
        {
            std::unique_lock<std::mutex> lock(mu_);
            pending_ = chunks - 1;
            task_ = &fn;
            task_ranges_ = &ranges;
            next_chunk_ = 1;
            ++generation_;
        }
        cv_.notify_all();
        std::exception_ptr err;
        try {
            fn(ranges[0].first, ranges[0].second);
        } catch (...) {
            err = std::current_exception();
        }
        std::unique_lock<std::mutex> lock(mu_);
        done_cv_.wait(lock, [this] { return pending_ == 0; });
        task_ = nullptr;
        task_ranges_ = nullptr;
        in_parallel_ = false;
        if (err) std::rethrow_exception(err);
    }

    static int default_thread_count() {
        if (const char* env = std::getenv("MLRN_THREADS")) {
            int n = std::atoi(env);
            if (n >= 1) return n;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }

    ~ThreadPool() {
        {
            std::unique_lock<std::mutex> lock(mu_);
            stop_ = true;
            ++generation_;
        }
        cv_.notify_all();
        for (auto& t : workers_) t.join();
    }

private:
    explicit ThreadPool(int threads) {
        for (int i = 1; i < threads; ++i) {
            workers_.emplace_back([this] { worker_loop(); });
        }
    }

    void worker_loop() {
        std::uint64_t seen = 0;
        for (;;) {
            std::unique_lock<std::mutex> lock(mu_);
            cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
            seen = generation_;
            if (stop_) return;
            while (task_ && next_chunk_ < static_cast<int>(task_ranges_->size())) {
                const int c = next_chunk_++;
                auto range = (*task_ranges_)[c];
                lock.unlock();
                (*task_)(range.first, range.second);
                lock.lock();
                if (--pending_ == 0) done_cv_.notify_one();
            }
        }
    }

    std::vector<std::thread> workers_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::function<void(std::int64_t, std::int64_t)>* task_ = nullptr;
    const std::vector<std::pair<std::int64_t, std::int64_t>>* task_ranges_ = nullptr;
    int next_chunk_ = 0;
    int pending_ = 0;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
    std::atomic<bool> in_parallel_{false};
};

template <typename F>
void parallel_for(std::int64_t begin, std::int64_t end, F&& fn) {
    ThreadPool::instance().parallel_for(begin, end, std::function<void(std::int64_t, std::int64_t)>(std::forward<F>(fn)));
}

// Dispatching a few hundred scalar ops to the pool costs more than running
// them; callers pass an estimate of total scalar work to gate the dispatch.
inline constexpr std::int64_t kParallelWorkThreshold = 32768;

template <typename F>
void parallel_for(std::int64_t begin, std::int64_t end, std::int64_t total_work, F&& fn) {
    if (total_work < kParallelWorkThreshold) {
        fn(begin, end);
        return;
    }
    parallel_for(begin, end, std::forward<F>(fn));
}

}  // namespace mlrn

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace posbias {

/// Number of worker threads used by the parallel helpers (default 1). Passing
/// 0 selects std::thread::hardware_concurrency().
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs fn(i) for i in [0, n) across thread_count() workers using static
/// contiguous chunks. fn must only write state owned by index i.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn)
{
    const std::size_t workers = std::min<std::size_t>(thread_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) {
            break;
        }
        pool.emplace_back([&, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i) {
                    fn(i);
                }
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

/// Neumaier-compensated accumulator.
class compensated_sum {
  public:
    void add(double x) noexcept
    {
        const double t = m_sum + x;
        if (std::abs(m_sum) >= std::abs(x)) {
            m_comp += (m_sum - t) + x;
        } else {
            m_comp += (x - t) + m_sum;
        }
        m_sum = t;
    }

    double value() const noexcept { return m_sum + m_comp; }

  private:
    double m_sum = 0.0;
    double m_comp = 0.0;
};

inline double stable_sum(std::span<const double> xs)
{
    compensated_sum acc;
    for (double x : xs) {
        acc.add(x);
    }
    return acc.value();
}

inline double stable_mean(std::span<const double> xs)
{
    return xs.empty() ? 0.0 : stable_sum(xs) / static_cast<double>(xs.size());
}

/// Population standard deviation (divides by n).
inline double population_stddev(std::span<const double> xs)
{
    if (xs.empty()) {
        return 0.0;
    }
    const double mean = stable_mean(xs);
    compensated_sum acc;
    for (double x : xs) {
        acc.add((x - mean) * (x - mean));
    }
    return std::sqrt(acc.value() / static_cast<double>(xs.size()));
}

}  // namespace posbias

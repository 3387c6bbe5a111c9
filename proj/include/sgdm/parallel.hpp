#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sgdm {

/// Evaluates fn(i) for i in [0, n) on `workers` threads and returns results in index order.
/// If any call throws, the exception of the smallest failing index is rethrown.
template <class T, class Fn>
std::vector<T> parallel_map(long n, int workers, Fn&& fn) {
    std::vector<T> out(static_cast<std::size_t>(std::max(0L, n)));
    std::atomic<long> next{0};
    std::mutex err_mu;
    long err_index = -1;
    std::exception_ptr err;
    auto work = [&]() {
        for (long i = next++; i < n; i = next++) {
            try {
                out[static_cast<std::size_t>(i)] = fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (err_index < 0 || i < err_index) {
                    err_index = i;
                    err = std::current_exception();
                }
            }
        }
    };
    const int nw = static_cast<int>(std::clamp<long>(workers, 1, std::max(1L, n)));
    if (nw == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(nw));
        for (int w = 0; w < nw; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (err) std::rethrow_exception(err);
    return out;
}

}  // namespace sgdm

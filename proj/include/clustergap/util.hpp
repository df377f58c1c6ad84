#pragma once
// Shared scalar aliases and the thread-capped parallel loop used for
// independent per-pole work.

#include <complex>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace clustergap {

using Complex = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

// Concurrency cap: min(CLUSTER_GAP_THREADS, hardware concurrency).
inline int thread_cap() {
    unsigned hw = std::thread::hardware_concurrency();
    int cap = hw ? static_cast<int>(hw) : 1;
    if (const char* env = std::getenv("CLUSTER_GAP_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1 && v < cap) cap = v;
    }
    return cap;
}

// Runs fn(i) for i in [0, n). Workers own disjoint index strides so results
// can be written into preallocated slots; exceptions are rethrown here.
template <class Fn>
void parallel_for_index(int n, Fn&& fn) {
    int nt = std::min(thread_cap(), n);
    if (nt <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<size_t>(nt));
    pool.reserve(static_cast<size_t>(nt));
    for (int t = 0; t < nt; ++t) {
        pool.emplace_back([&fn, &errors, t, n, nt] {
            try {
                for (int i = t; i < n; i += nt) fn(i);
            } catch (...) {
                errors[static_cast<size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace clustergap

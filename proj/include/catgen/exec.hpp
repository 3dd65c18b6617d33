#pragma once

#include <cstdint>
#include <exception>
#include <mutex>

#include <omp.h>

namespace catgen {

// Execution policy for the data-parallel kernels. Serial is the reference
// path; OpenMP must produce bitwise-identical results, which every kernel
// guarantees by writing to disjoint, preallocated slots and reducing in
// index order.
enum class Exec { Serial, OpenMP };

inline void set_max_threads(int n) {
    if (n < 1) n = 1;
    omp_set_num_threads(n);
}

inline int max_threads() { return omp_get_max_threads(); }

// Index-parallel loop. fn(i) must only touch state owned by index i.
// Exceptions are captured and rethrown on the calling thread (first wins).
template <class Fn>
void for_each_index(std::int64_t n, Exec exec, Fn&& fn) {
    if (exec == Exec::Serial) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr err;
    std::mutex err_mutex;
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            fn(i);
        } catch (...) {
            std::lock_guard<std::mutex> lock(err_mutex);
            if (!err) err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);
}

} // namespace catgen

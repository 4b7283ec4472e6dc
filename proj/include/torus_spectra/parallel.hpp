#pragma once

#include <cstdlib>
#include <exception>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace torus_spectra {

// Worker count, capped by TORUS_SPECTRA_THREADS when set.
inline int worker_count() {
    int n = 1;
#ifdef _OPENMP
    n = omp_get_max_threads();
#endif
    if (const char* env = std::getenv("TORUS_SPECTRA_THREADS")) {
        int cap = std::atoi(env);
        if (cap > 0 && cap < n) n = cap;
    }
    return n < 1 ? 1 : n;
}

// Results must be written to preallocated per-index slots so output stays deterministic.
template <class F>
void parallel_for(long n, F&& f) {
#ifdef _OPENMP
    const int nt = worker_count();
    if (nt > 1 && n > 1) {
        std::exception_ptr err;
#pragma omp parallel for schedule(dynamic, 16) num_threads(nt)
        for (long i = 0; i < n; ++i) {
            try {
                f(i);
            } catch (...) {
#pragma omp critical(torus_spectra_err)
                if (!err) err = std::current_exception();
            }
        }
        if (err) std::rethrow_exception(err);
        return;
    }
    for (long i = 0; i < n; ++i) f(i);
#else
    for (long i = 0; i < n; ++i) f(i);
#endif
}

}  // namespace torus_spectra

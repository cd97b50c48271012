#include "robustlr/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace robustlr {

int max_threads() {
    if (const char* env = std::getenv("ROBUSTLR_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

} // namespace robustlr

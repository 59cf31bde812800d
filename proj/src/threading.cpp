#include "hashconv/threading.hpp"

#include <omp.h>

#include <atomic>
#include <cstdlib>

namespace hashconv {

namespace {
std::atomic<int> g_override{0};

int env_cap() {
    static const int cap = [] {
        const char* v = std::getenv("HASHCONV_THREADS");
        if (!v) return 0;
        const int n = std::atoi(v);
        return n > 0 ? n : 0;
    }();
    return cap;
}
}  // namespace

int max_threads() {
    // A programmatic override wins outright (tests use it to force specific
    // worker counts); otherwise the env var caps the OpenMP default.
    if (const int ovr = g_override.load(); ovr > 0) return ovr;
    int n = omp_get_max_threads();
    if (const int cap = env_cap(); cap > 0 && cap < n) n = cap;
    return n < 1 ? 1 : n;
}

void set_thread_override(int count) { g_override.store(count); }

}  // namespace hashconv

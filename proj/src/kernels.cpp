#include "dk/kernels.hpp"

#include <atomic>
#include <cstring>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dk::kernels {

namespace {
std::atomic<bool> g_parallel{true};

inline bool use_parallel() {
#ifdef _OPENMP
    return g_parallel.load(std::memory_order_relaxed) && !omp_in_parallel();
#else
    return false;
#endif
}
} // namespace

void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }
bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// ---------------------------------------------------------------------------
// matmul: c = a * b, ikj loop order. Additions into c[i*n+j] happen in
// increasing-k order in both variants, so serial and parallel agree bitwise.
// ---------------------------------------------------------------------------

namespace {
inline void matmul_rows(const double* a, const double* b, double* c,
                        int i0, int i1, int k, int n, bool acc) {
    for (int i = i0; i < i1; ++i) {
        double* ci = c + static_cast<long>(i) * n;
        if (!acc) std::memset(ci, 0, sizeof(double) * static_cast<long>(n));
        const double* ai = a + static_cast<long>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double aip = ai[p];
            if (aip == 0.0) continue;
            const double* bp = b + static_cast<long>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

inline void matmul_abt_rows(const double* a, const double* b, double* c,
                            int i0, int i1, int k, int n, bool acc) {
    for (int i = i0; i < i1; ++i) {
        const double* ai = a + static_cast<long>(i) * k;
        double* ci = c + static_cast<long>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* bj = b + static_cast<long>(j) * k;
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
            ci[j] = acc ? ci[j] + s : s;
        }
    }
}

inline void matmul_atb_rows(const double* a, const double* b, double* c,
                            int i0, int i1, int m, int k, int n, bool acc) {
    for (int i = i0; i < i1; ++i) {
        double* ci = c + static_cast<long>(i) * n;
        if (!acc) std::memset(ci, 0, sizeof(double) * static_cast<long>(n));
        for (int p = 0; p < m; ++p) {
            const double api = a[static_cast<long>(p) * k + i];
            if (api == 0.0) continue;
            const double* bp = b + static_cast<long>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
        }
    }
}

inline void pairwise_row(const double* x, int n, int d, double* out, int i) {
    const double* xi = x + static_cast<long>(i) * d;
    double* oi = out + static_cast<long>(i) * n;
    oi[i] = 0.0;
    for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double* xj = x + static_cast<long>(j) * d;
        double s = 0.0;
        for (int p = 0; p < d; ++p) {
            const double diff = xi[p] - xj[p];
            s += diff * diff;
        }
        oi[j] = s;
    }
}

inline void nearest_point(const double* pts, int d, const double* cent, int k,
                          int i, int* assign, double* dist2) {
    const double* pi = pts + static_cast<long>(i) * d;
    double best = std::numeric_limits<double>::infinity();
    int best_j = 0;
    for (int j = 0; j < k; ++j) {
        const double* cj = cent + static_cast<long>(j) * d;
        double s = 0.0;
        for (int p = 0; p < d; ++p) {
            const double diff = pi[p] - cj[p];
            s += diff * diff;
        }
        if (s < best) {
            best = s;
            best_j = j;
        }
    }
    assign[i] = best_j;
    if (dist2) dist2[i] = best;
}
} // namespace

void matmul_serial(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
    matmul_rows(a, b, c, 0, m, k, n, acc);
}

void matmul_omp(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) matmul_rows(a, b, c, i, i + 1, k, n, acc);
}

void matmul(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
    if (use_parallel() && m > 1)
        matmul_omp(a, b, c, m, k, n, acc);
    else
        matmul_serial(a, b, c, m, k, n, acc);
}

void matmul_abt_serial(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
    matmul_abt_rows(a, b, c, 0, m, k, n, acc);
}

void matmul_abt_omp(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) matmul_abt_rows(a, b, c, i, i + 1, k, n, acc);
}

void matmul_abt(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
    if (use_parallel() && m > 1)
        matmul_abt_omp(a, b, c, m, k, n, acc);
    else
        matmul_abt_serial(a, b, c, m, k, n, acc);
}

void matmul_atb_serial(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
    matmul_atb_rows(a, b, c, 0, k, m, k, n, acc);
}

void matmul_atb_omp(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < k; ++i) matmul_atb_rows(a, b, c, i, i + 1, m, k, n, acc);
}

void matmul_atb(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
    if (use_parallel() && k > 1)
        matmul_atb_omp(a, b, c, m, k, n, acc);
    else
        matmul_atb_serial(a, b, c, m, k, n, acc);
}

void pairwise_sqdist_serial(const double* x, int n, int d, double* out) {
    for (int i = 0; i < n; ++i) pairwise_row(x, n, d, out, i);
}

void pairwise_sqdist_omp(const double* x, int n, int d, double* out) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) pairwise_row(x, n, d, out, i);
}

void pairwise_sqdist(const double* x, int n, int d, double* out) {
    if (use_parallel() && n > 1)
        pairwise_sqdist_omp(x, n, d, out);
    else
        pairwise_sqdist_serial(x, n, d, out);
}

void nearest_centroid_serial(const double* pts, int n, int d, const double* cent, int k,
                             int* assign, double* dist2) {
    for (int i = 0; i < n; ++i) nearest_point(pts, d, cent, k, i, assign, dist2);
}

void nearest_centroid_omp(const double* pts, int n, int d, const double* cent, int k,
                          int* assign, double* dist2) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) nearest_point(pts, d, cent, k, i, assign, dist2);
}

void nearest_centroid(const double* pts, int n, int d, const double* cent, int k,
                      int* assign, double* dist2) {
    if (use_parallel() && n > 1)
        nearest_centroid_omp(pts, n, d, cent, k, assign, dist2);
    else
        nearest_centroid_serial(pts, n, d, cent, k, assign, dist2);
}

} // namespace dk::kernels

#pragma once

// Dense numeric kernels backing the tensor ops, clustering and distance
// computations. Every kernel exists twice: a plain serial reference and an
// OpenMP-parallel variant. The parallel variants split work along output
// rows only, so each output element sees the identical sequence of
// floating-point operations and the two variants produce bit-identical
// results for any thread count.
//
// The dispatching entry points (matmul, pairwise_sqdist, ...) pick the
// parallel path when OpenMP is compiled in, the process-wide toggle is on
// and we are not already inside a parallel region.

namespace dk::kernels {

void set_parallel(bool on);
bool parallel_enabled();
int max_threads();

// c[m x n] = a[m x k] * b[k x n]; acc=true accumulates into c.
void matmul_serial(const double* a, const double* b, double* c, int m, int k, int n, bool acc = false);
void matmul_omp(const double* a, const double* b, double* c, int m, int k, int n, bool acc = false);
void matmul(const double* a, const double* b, double* c, int m, int k, int n, bool acc = false);

// c[m x n] = a[m x k] * b[n x k]^T
void matmul_abt_serial(const double* a, const double* b, double* c, int m, int k, int n, bool acc = false);
void matmul_abt_omp(const double* a, const double* b, double* c, int m, int k, int n, bool acc = false);
void matmul_abt(const double* a, const double* b, double* c, int m, int k, int n, bool acc = false);

// c[k x n] = a[m x k]^T * b[m x n]
void matmul_atb_serial(const double* a, const double* b, double* c, int m, int k, int n, bool acc = false);
void matmul_atb_omp(const double* a, const double* b, double* c, int m, int k, int n, bool acc = false);
void matmul_atb(const double* a, const double* b, double* c, int m, int k, int n, bool acc = false);

// out[n x n], out[i*n+j] = squared euclidean distance between rows i and j of x[n x d].
void pairwise_sqdist_serial(const double* x, int n, int d, double* out);
void pairwise_sqdist_omp(const double* x, int n, int d, double* out);
void pairwise_sqdist(const double* x, int n, int d, double* out);

// For each point, index of the nearest centroid (squared distance, lowest
// index wins ties). dist2 may be null.
void nearest_centroid_serial(const double* pts, int n, int d, const double* cent, int k,
                             int* assign, double* dist2);
void nearest_centroid_omp(const double* pts, int n, int d, const double* cent, int k,
                          int* assign, double* dist2);
void nearest_centroid(const double* pts, int n, int d, const double* cent, int k,
                      int* assign, double* dist2);

} // namespace dk::kernels

#pragma once

// Dense inner loops used by the tensor engine and the vector index.
//
// Every kernel has a serial reference and an OpenMP version. Both compute
// each output element with the same summation order, so results are
// bit-identical regardless of thread count.

#include <cstddef>

namespace mockforge::kernels {

/// C[m,n] = op(A) * op(B) (+ C when accumulate). op(A) is m x k, op(B) is k x n.
/// A is stored row-major as m x k (or k x m when trans_a), B as k x n (or n x k when trans_b).
void gemm_serial(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
                 const double* b, double* c, bool accumulate);
void gemm_parallel(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
                   const double* b, double* c, bool accumulate);
/// Dispatches to the parallel kernel when the problem is large enough to amortize thread startup.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
          double* c, bool accumulate);

/// out[r] = <row r of matrix, query>
void row_dots_serial(const float* matrix, std::size_t rows, std::size_t dim, const float* query, double* out);
void row_dots_parallel(const float* matrix, std::size_t rows, std::size_t dim, const float* query, double* out);

/// out[r] = ||row r of matrix - query||^2
void row_sqdist_serial(const float* matrix, std::size_t rows, std::size_t dim, const float* query, double* out);
void row_sqdist_parallel(const float* matrix, std::size_t rows, std::size_t dim, const float* query, double* out);

/// Number of threads OpenMP would use; 1 when built without OpenMP.
int max_threads();

}  // namespace mockforge::kernels

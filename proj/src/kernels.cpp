#include "mockforge/kernels.hpp"

#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mockforge::kernels {

namespace {

constexpr std::size_t kParallelFlops = 1 << 16;
constexpr std::size_t kParallelRows = 4096;

inline void gemm_row(bool trans_a, bool trans_b, std::size_t i, std::size_t m, std::size_t n, std::size_t k,
                     const double* a, const double* b, double* c, bool accumulate) {
  double* crow = c + i * n;
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    if (!trans_a && !trans_b) {
      const double* arow = a + i * k;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * b[p * n + j];
    } else if (!trans_a && trans_b) {
      const double* arow = a + i * k;
      const double* brow = b + j * k;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
    } else if (trans_a && !trans_b) {
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
    } else {
      const double* brow = b + j * k;
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * brow[p];
    }
    crow[j] = accumulate ? crow[j] + acc : acc;
  }
}

// The untransposed case is by far the most common; stream over B rows so the
// inner loop is contiguous. Sum order per element is still p = 0..k-1.
inline void gemm_row_nn(std::size_t i, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                        double* scratch, bool accumulate) {
  for (std::size_t j = 0; j < n; ++j) scratch[j] = 0.0;
  const double* arow = a + i * k;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = arow[p];
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) scratch[j] += av * brow[j];
  }
  double* crow = c + i * n;
  for (std::size_t j = 0; j < n; ++j) crow[j] = accumulate ? crow[j] + scratch[j] : scratch[j];
}

}  // namespace

void gemm_serial(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
                 const double* b, double* c, bool accumulate) {
  if (!trans_a && !trans_b) {
    std::vector<double> scratch(n);
    for (std::size_t i = 0; i < m; ++i) gemm_row_nn(i, n, k, a, b, c, scratch.data(), accumulate);
    return;
  }
  for (std::size_t i = 0; i < m; ++i) gemm_row(trans_a, trans_b, i, m, n, k, a, b, c, accumulate);
}

void gemm_parallel(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
                   const double* b, double* c, bool accumulate) {
  const auto rows = static_cast<std::int64_t>(m);
  if (!trans_a && !trans_b) {
#pragma omp parallel
    {
      std::vector<double> scratch(n);
#pragma omp for schedule(static)
      for (std::int64_t i = 0; i < rows; ++i) {
        gemm_row_nn(static_cast<std::size_t>(i), n, k, a, b, c, scratch.data(), accumulate);
      }
    }
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i) {
    gemm_row(trans_a, trans_b, static_cast<std::size_t>(i), m, n, k, a, b, c, accumulate);
  }
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
          double* c, bool accumulate) {
  if (max_threads() > 1 && m > 1 && m * n * k >= kParallelFlops) {
    gemm_parallel(trans_a, trans_b, m, n, k, a, b, c, accumulate);
  } else {
    gemm_serial(trans_a, trans_b, m, n, k, a, b, c, accumulate);
  }
}

void row_dots_serial(const float* matrix, std::size_t rows, std::size_t dim, const float* query, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = matrix + r * dim;
    double acc = 0.0;
    for (std::size_t d = 0; d < dim; ++d) acc += static_cast<double>(row[d]) * query[d];
    out[r] = acc;
  }
}

void row_dots_parallel(const float* matrix, std::size_t rows, std::size_t dim, const float* query, double* out) {
  const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (rows >= kParallelRows)
  for (std::int64_t r = 0; r < n; ++r) {
    const float* row = matrix + static_cast<std::size_t>(r) * dim;
    double acc = 0.0;
    for (std::size_t d = 0; d < dim; ++d) acc += static_cast<double>(row[d]) * query[d];
    out[r] = acc;
  }
}

void row_sqdist_serial(const float* matrix, std::size_t rows, std::size_t dim, const float* query, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = matrix + r * dim;
    double acc = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = static_cast<double>(row[d]) - query[d];
      acc += diff * diff;
    }
    out[r] = acc;
  }
}

void row_sqdist_parallel(const float* matrix, std::size_t rows, std::size_t dim, const float* query, double* out) {
  const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (rows >= kParallelRows)
  for (std::int64_t r = 0; r < n; ++r) {
    const float* row = matrix + static_cast<std::size_t>(r) * dim;
    double acc = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = static_cast<double>(row[d]) - query[d];
      acc += diff * diff;
    }
    out[r] = acc;
  }
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace mockforge::kernels

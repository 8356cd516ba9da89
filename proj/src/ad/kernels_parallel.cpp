#include <omp.h>

#include <algorithm>
#include <vector>

#include "styleforge/ad/kernels.hpp"

namespace styleforge::kernels::parallel {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

inline double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// Register tile of C += A * B. Every C element sums over k in order, so the
// result does not depend on how tiles are spread over threads.
constexpr std::size_t kMr = 8;
constexpr std::size_t kNr = 16;

template <std::size_t MR, std::size_t NR>
inline void tile(std::size_t k, const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                 std::size_t ldc) {
  double acc[MR][NR];
  for (std::size_t r = 0; r < MR; ++r)
    for (std::size_t j = 0; j < NR; ++j) acc[r][j] = c[r * ldc + j];
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b + p * ldb;
    for (std::size_t r = 0; r < MR; ++r) {
      const double av = a[r * lda + p];
#pragma omp simd
      for (std::size_t j = 0; j < NR; ++j) acc[r][j] += av * bp[j];
    }
  }
  for (std::size_t r = 0; r < MR; ++r)
    for (std::size_t j = 0; j < NR; ++j) c[r * ldc + j] = acc[r][j];
}

std::vector<double> transpose(const double* src, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = src[i * cols + j];
  return t;
}

}  // namespace

void im2col(const ConvGeometry& g, std::span<const double> input, std::span<double> col) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), positions = oh * ow;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        double* row = col.data() + ((c * g.kernel_h + ky) * g.kernel_w + kx) * positions;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const double* src = input.data() + (c * g.height + oy * g.stride + ky) * g.width + kx;
          for (std::size_t ox = 0; ox < ow; ++ox) row[oy * ow + ox] = src[ox * g.stride];
        }
      }
}

namespace {

void gemm_core(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  const auto col_blocks = static_cast<std::ptrdiff_t>((n + kNr - 1) / kNr);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (std::ptrdiff_t jb = 0; jb < col_blocks; ++jb) {
    const std::size_t j = static_cast<std::size_t>(jb) * kNr;
    const std::size_t nr = std::min(kNr, n - j);
    if (nr == kNr) {
      std::size_t i = 0;
      for (; i + kMr <= m; i += kMr) tile<kMr, kNr>(k, a + i * k, k, b + j, n, c + i * n + j, n);
      for (; i < m; ++i) tile<1, kNr>(k, a + i * k, k, b + j, n, c + i * n + j, n);
      continue;
    }
    // Ragged last panel: run the full-width tile on zero-padded copies.
    std::vector<double> panel(k * kNr, 0.0);
    for (std::size_t p = 0; p < k; ++p) std::copy_n(b + p * n + j, nr, panel.data() + p * kNr);
    double ctile[kMr * kNr] = {};
    for (std::size_t i = 0; i < m; i += kMr) {
      const std::size_t mr = std::min(kMr, m - i);
      for (std::size_t r = 0; r < mr; ++r) std::copy_n(c + (i + r) * n + j, nr, ctile + r * kNr);
      if (mr == kMr)
        tile<kMr, kNr>(k, a + i * k, k, panel.data(), kNr, ctile, kNr);
      else
        for (std::size_t r = 0; r < mr; ++r) tile<1, kNr>(k, a + (i + r) * k, k, panel.data(), kNr, ctile + r * kNr, kNr);
      for (std::size_t r = 0; r < mr; ++r) std::copy_n(ctile + r * kNr, nr, c + (i + r) * n + j);
    }
  }
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  if (n >= kNr) {
    gemm_core(m, n, k, a, b, c);
    return;
  }
  // Narrow output: one vectorized dot product per element over a transposed B.
  const auto bt = transpose(b, k, n);
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot(a + i * k, bt.data() + j * k, k);
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> col, std::span<const double> kernel,
                    std::span<const double> bias, std::span<double> out) {
  const std::size_t patch = g.patch(), positions = g.positions();
  for (std::size_t f = 0; f < g.filters; ++f)
    std::fill(out.data() + f * positions, out.data() + (f + 1) * positions, bias[f]);
  gemm_nn(g.filters, positions, patch, kernel.data(), col.data(), out.data());
}

void conv2d_backward_params(const ConvGeometry& g, std::span<const double> col,
                            std::span<const double> grad_out, std::span<double> grad_kernel,
                            std::span<double> grad_bias) {
  const std::size_t patch = g.patch(), positions = g.positions();
  for (std::size_t f = 0; f < g.filters; ++f) {
    const double* go = grad_out.data() + f * positions;
    double sum = 0.0;
    for (std::size_t p = 0; p < positions; ++p) sum += go[p];
    grad_bias[f] += sum;
  }
  const std::vector<double> col_t = transpose(col.data(), patch, positions);
  gemm_nn(g.filters, patch, positions, grad_out.data(), col_t.data(), grad_kernel.data());
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> kernel,
                           std::span<const double> grad_out, std::span<double> grad_in) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), positions = oh * ow, patch = g.patch();
  const std::vector<double> kernel_t = transpose(kernel.data(), g.filters, patch);
  std::vector<double> gcol(patch * positions, 0.0);
  gemm_nn(patch, positions, g.filters, kernel_t.data(), grad_out.data(), gcol.data());
  // col2im: each input pixel gathers from every patch slot that read it.
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const double* row = gcol.data() + ((c * g.kernel_h + ky) * g.kernel_w + kx) * positions;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          double* dst = grad_in.data() + (c * g.height + oy * g.stride + ky) * g.width + kx;
          for (std::size_t ox = 0; ox < ow; ++ox) dst[ox * g.stride] += row[oy * ow + ox];
        }
      }
}

void dense_forward(std::size_t rows, std::size_t cols, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (std::ptrdiff_t i = 0; i < n; ++i) y[i] = b[i] + dot(w.data() + i * cols, x.data(), cols);
}

void dense_backward_input(std::size_t rows, std::size_t cols, std::span<const double> w,
                          std::span<const double> grad_y, std::span<double> grad_x) {
  constexpr std::size_t kBlock = 256;
  const auto blocks = static_cast<std::ptrdiff_t>((cols + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const std::size_t j0 = blk * kBlock, len = std::min(kBlock, cols - j0);
    for (std::size_t i = 0; i < rows; ++i) axpy(grad_y[i], w.data() + i * cols + j0, grad_x.data() + j0, len);
  }
}

void dense_backward_params(std::size_t rows, std::size_t cols, std::span<const double> x,
                           std::span<const double> grad_y, std::span<double> grad_w, std::span<double> grad_b) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    grad_b[i] += grad_y[i];
    axpy(grad_y[i], x.data(), grad_w.data() + i * cols, cols);
  }
}

}  // namespace styleforge::kernels::parallel

#pragma once

#include <cstddef>
#include <span>

// Convolution and affine kernels. `serial` is the plain-loop reference used
// by tests; `parallel` is the im2col/OpenMP path the tape runs on. Backward
// kernels accumulate into their outputs.
namespace styleforge::kernels {

struct ConvGeometry {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t filters = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;

  std::size_t out_h() const noexcept { return (height - kernel_h) / stride + 1; }
  std::size_t out_w() const noexcept { return (width - kernel_w) / stride + 1; }
  std::size_t patch() const noexcept { return channels * kernel_h * kernel_w; }
  std::size_t positions() const noexcept { return out_h() * out_w(); }
};

namespace serial {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input, std::span<const double> kernel,
                    std::span<const double> bias, std::span<double> out);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> kernel,
                           std::span<const double> grad_out, std::span<double> grad_in);
void conv2d_backward_params(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_out, std::span<double> grad_kernel,
                            std::span<double> grad_bias);

void dense_forward(std::size_t rows, std::size_t cols, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y);
void dense_backward_input(std::size_t rows, std::size_t cols, std::span<const double> w,
                          std::span<const double> grad_y, std::span<double> grad_x);
void dense_backward_params(std::size_t rows, std::size_t cols, std::span<const double> x,
                           std::span<const double> grad_y, std::span<double> grad_w, std::span<double> grad_b);

}  // namespace serial

namespace parallel {

// Unfolds input patches into a [patch x positions] matrix.
void im2col(const ConvGeometry& g, std::span<const double> input, std::span<double> col);
// C[m x n] += A[m x k] * B[k x n], dense row-major. The summation order
// depends only on the shapes, never on the thread count.
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);

void conv2d_forward(const ConvGeometry& g, std::span<const double> col, std::span<const double> kernel,
                    std::span<const double> bias, std::span<double> out);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> kernel,
                           std::span<const double> grad_out, std::span<double> grad_in);
void conv2d_backward_params(const ConvGeometry& g, std::span<const double> col,
                            std::span<const double> grad_out, std::span<double> grad_kernel,
                            std::span<double> grad_bias);

void dense_forward(std::size_t rows, std::size_t cols, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y);
void dense_backward_input(std::size_t rows, std::size_t cols, std::span<const double> w,
                          std::span<const double> grad_y, std::span<double> grad_x);
void dense_backward_params(std::size_t rows, std::size_t cols, std::span<const double> x,
                           std::span<const double> grad_y, std::span<double> grad_w, std::span<double> grad_b);

}  // namespace parallel

}  // namespace styleforge::kernels

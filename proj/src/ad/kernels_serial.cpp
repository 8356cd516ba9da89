#include "styleforge/ad/kernels.hpp"

namespace styleforge::kernels::serial {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input, std::span<const double> kernel,
                    std::span<const double> bias, std::span<double> out) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t f = 0; f < g.filters; ++f) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = bias[f];
        for (std::size_t c = 0; c < g.channels; ++c)
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx)
              acc += kernel[((f * g.channels + c) * g.kernel_h + ky) * g.kernel_w + kx] *
                     input[(c * g.height + oy * g.stride + ky) * g.width + ox * g.stride + kx];
        out[(f * oh + oy) * ow + ox] = acc;
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> kernel,
                           std::span<const double> grad_out, std::span<double> grad_in) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t f = 0; f < g.filters; ++f)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double go = grad_out[(f * oh + oy) * ow + ox];
        for (std::size_t c = 0; c < g.channels; ++c)
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx)
              grad_in[(c * g.height + oy * g.stride + ky) * g.width + ox * g.stride + kx] +=
                  kernel[((f * g.channels + c) * g.kernel_h + ky) * g.kernel_w + kx] * go;
      }
}

void conv2d_backward_params(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_out, std::span<double> grad_kernel,
                            std::span<double> grad_bias) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t f = 0; f < g.filters; ++f)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double go = grad_out[(f * oh + oy) * ow + ox];
        grad_bias[f] += go;
        for (std::size_t c = 0; c < g.channels; ++c)
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx)
              grad_kernel[((f * g.channels + c) * g.kernel_h + ky) * g.kernel_w + kx] +=
                  input[(c * g.height + oy * g.stride + ky) * g.width + ox * g.stride + kx] * go;
      }
}

void dense_forward(std::size_t rows, std::size_t cols, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y) {
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = b[i];
    for (std::size_t j = 0; j < cols; ++j) acc += w[i * cols + j] * x[j];
    y[i] = acc;
  }
}

void dense_backward_input(std::size_t rows, std::size_t cols, std::span<const double> w,
                          std::span<const double> grad_y, std::span<double> grad_x) {
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) grad_x[j] += w[i * cols + j] * grad_y[i];
}

void dense_backward_params(std::size_t rows, std::size_t cols, std::span<const double> x,
                           std::span<const double> grad_y, std::span<double> grad_w, std::span<double> grad_b) {
  for (std::size_t i = 0; i < rows; ++i) {
    grad_b[i] += grad_y[i];
    for (std::size_t j = 0; j < cols; ++j) grad_w[i * cols + j] += grad_y[i] * x[j];
  }
}

}  // namespace styleforge::kernels::serial

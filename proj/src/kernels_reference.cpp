#include <algorithm>

#include "fh/kernels.hpp"

namespace fh::kernels::reference {

template <class T>
void gemm(int m, int n, int k, std::span<const T> a, std::span<const T> b, std::span<T> c,
          bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T acc = accumulate ? c[static_cast<std::size_t>(i) * n + j] : T(0);
      for (int p = 0; p < k; ++p)
        acc += a[static_cast<std::size_t>(i) * k + p] * b[static_cast<std::size_t>(p) * n + j];
      c[static_cast<std::size_t>(i) * n + j] = acc;
    }
  }
}

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y) {
  const int ho = g.out_h(), wo = g.out_w(), k = g.kernel;
  for (int n = 0; n < g.batch; ++n)
    for (int co = 0; co < g.out_channels; ++co)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          T acc = bias.empty() ? T(0) : bias[co];
          for (int ci = 0; ci < g.in_channels; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                acc += x[((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix] *
                       w[((co * g.in_channels + ci) * k + ky) * k + kx];
              }
          y[((n * g.out_channels + co) * ho + oy) * wo + ox] = acc;
        }
}

template <class T>
void conv2d_backward_data(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w,
                          std::span<T> dx) {
  const int ho = g.out_h(), wo = g.out_w(), k = g.kernel;
  std::fill(dx.begin(), dx.end(), T(0));
  for (int n = 0; n < g.batch; ++n)
    for (int co = 0; co < g.out_channels; ++co)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          const T grad = dy[((n * g.out_channels + co) * ho + oy) * wo + ox];
          for (int ci = 0; ci < g.in_channels; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                dx[((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix] +=
                    grad * w[((co * g.in_channels + ci) * k + ky) * k + kx];
              }
        }
}

template <class T>
void conv2d_backward_weights(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy,
                             std::span<T> dw, std::span<T> dbias) {
  const int ho = g.out_h(), wo = g.out_w(), k = g.kernel;
  std::fill(dw.begin(), dw.end(), T(0));
  std::fill(dbias.begin(), dbias.end(), T(0));
  for (int n = 0; n < g.batch; ++n)
    for (int co = 0; co < g.out_channels; ++co)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          const T grad = dy[((n * g.out_channels + co) * ho + oy) * wo + ox];
          if (!dbias.empty()) dbias[co] += grad;
          for (int ci = 0; ci < g.in_channels; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                dw[((co * g.in_channels + ci) * k + ky) * k + kx] +=
                    grad * x[((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix];
              }
        }
}

template <class T>
void conv_transpose2d_forward(const TransposedConvGeometry& g, std::span<const T> x,
                              std::span<const T> w, std::span<const T> bias, std::span<T> y) {
  const int ho = g.out_h(), wo = g.out_w(), k = g.kernel;
  for (int n = 0; n < g.batch; ++n)
    for (int co = 0; co < g.out_channels; ++co)
      for (int p = 0; p < ho * wo; ++p)
        y[(n * g.out_channels + co) * ho * wo + p] = bias.empty() ? T(0) : bias[co];
  for (int n = 0; n < g.batch; ++n)
    for (int ci = 0; ci < g.in_channels; ++ci)
      for (int iy = 0; iy < g.in_h; ++iy)
        for (int ix = 0; ix < g.in_w; ++ix) {
          const T v = x[((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix];
          for (int co = 0; co < g.out_channels; ++co)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int oy = iy * g.stride - g.pad + ky;
                const int ox = ix * g.stride - g.pad + kx;
                if (oy < 0 || oy >= ho || ox < 0 || ox >= wo) continue;
                y[((n * g.out_channels + co) * ho + oy) * wo + ox] +=
                    v * w[((ci * g.out_channels + co) * k + ky) * k + kx];
              }
        }
}

template <class T>
void conv_transpose2d_backward_data(const TransposedConvGeometry& g, std::span<const T> dy,
                                    std::span<const T> w, std::span<T> dx) {
  const int ho = g.out_h(), wo = g.out_w(), k = g.kernel;
  for (int n = 0; n < g.batch; ++n)
    for (int ci = 0; ci < g.in_channels; ++ci)
      for (int iy = 0; iy < g.in_h; ++iy)
        for (int ix = 0; ix < g.in_w; ++ix) {
          T acc = 0;
          for (int co = 0; co < g.out_channels; ++co)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int oy = iy * g.stride - g.pad + ky;
                const int ox = ix * g.stride - g.pad + kx;
                if (oy < 0 || oy >= ho || ox < 0 || ox >= wo) continue;
                acc += dy[((n * g.out_channels + co) * ho + oy) * wo + ox] *
                       w[((ci * g.out_channels + co) * k + ky) * k + kx];
              }
          dx[((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix] = acc;
        }
}

template <class T>
void conv_transpose2d_backward_weights(const TransposedConvGeometry& g, std::span<const T> x,
                                       std::span<const T> dy, std::span<T> dw,
                                       std::span<T> dbias) {
  const int ho = g.out_h(), wo = g.out_w(), k = g.kernel;
  std::fill(dw.begin(), dw.end(), T(0));
  std::fill(dbias.begin(), dbias.end(), T(0));
  for (int n = 0; n < g.batch; ++n) {
    if (!dbias.empty())
      for (int co = 0; co < g.out_channels; ++co)
        for (int p = 0; p < ho * wo; ++p) dbias[co] += dy[(n * g.out_channels + co) * ho * wo + p];
    for (int ci = 0; ci < g.in_channels; ++ci)
      for (int iy = 0; iy < g.in_h; ++iy)
        for (int ix = 0; ix < g.in_w; ++ix) {
          const T v = x[((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix];
          for (int co = 0; co < g.out_channels; ++co)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int oy = iy * g.stride - g.pad + ky;
                const int ox = ix * g.stride - g.pad + kx;
                if (oy < 0 || oy >= ho || ox < 0 || ox >= wo) continue;
                dw[((ci * g.out_channels + co) * k + ky) * k + kx] +=
                    v * dy[((n * g.out_channels + co) * ho + oy) * wo + ox];
              }
        }
  }
}

#include "kernel_instances.inc"

FH_INSTANTIATE(float)
FH_INSTANTIATE(double)

}  // namespace fh::kernels::reference

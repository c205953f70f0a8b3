#pragma once

// Convolution and matrix kernels used by the autograd ops.
//
// Two implementations share one interface:
//   fh::kernels::parallel   im2col + blocked GEMM, OpenMP over the batch
//   fh::kernels::reference  direct nested loops, single threaded
//
// The parallel kernels keep a fixed summation order for every output element,
// so results are bitwise identical for any OpenMP thread count. The reference
// kernels sum in a different order and are compared against with a tolerance.

#include <span>

namespace fh::kernels {

/// Convolution x[N,Ci,H,W] (*) w[Co,Ci,k,k] -> y[N,Co,Ho,Wo].
struct ConvGeometry {
  int batch = 1;
  int in_channels = 1;
  int in_h = 1;
  int in_w = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int pad = 0;

  int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

/// Transposed convolution x[N,Ci,H,W] -> y[N,Co,Ho,Wo] with w[Ci,Co,k,k],
/// Ho = (H-1)*stride - 2*pad + k.
struct TransposedConvGeometry {
  int batch = 1;
  int in_channels = 1;
  int in_h = 1;
  int in_w = 1;
  int out_channels = 1;
  int kernel = 4;
  int stride = 2;
  int pad = 1;

  int out_h() const { return (in_h - 1) * stride - 2 * pad + kernel; }
  int out_w() const { return (in_w - 1) * stride - 2 * pad + kernel; }
};

#define FH_DECLARE_KERNELS                                                                  \
  /* C[M,N] = A[M,K] B[K,N] (+ C when accumulate) */                                        \
  template <class T>                                                                        \
  void gemm(int m, int n, int k, std::span<const T> a, std::span<const T> b, std::span<T> c, \
            bool accumulate);                                                               \
                                                                                            \
  /* y is overwritten. bias may be empty. */                                                \
  template <class T>                                                                        \
  void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,     \
                      std::span<const T> bias, std::span<T> y);                             \
  /* dx is overwritten. */                                                                  \
  template <class T>                                                                        \
  void conv2d_backward_data(const ConvGeometry& g, std::span<const T> dy,                   \
                            std::span<const T> w, std::span<T> dx);                         \
  /* dw and dbias are overwritten; dbias may be empty. */                                   \
  template <class T>                                                                        \
  void conv2d_backward_weights(const ConvGeometry& g, std::span<const T> x,                 \
                               std::span<const T> dy, std::span<T> dw, std::span<T> dbias); \
                                                                                            \
  template <class T>                                                                        \
  void conv_transpose2d_forward(const TransposedConvGeometry& g, std::span<const T> x,      \
                                std::span<const T> w, std::span<const T> bias,             \
                                std::span<T> y);                                            \
  template <class T>                                                                        \
  void conv_transpose2d_backward_data(const TransposedConvGeometry& g,                      \
                                      std::span<const T> dy, std::span<const T> w,          \
                                      std::span<T> dx);                                     \
  template <class T>                                                                        \
  void conv_transpose2d_backward_weights(const TransposedConvGeometry& g,                   \
                                         std::span<const T> x, std::span<const T> dy,       \
                                         std::span<T> dw, std::span<T> dbias);

namespace parallel {
FH_DECLARE_KERNELS
}

namespace reference {
FH_DECLARE_KERNELS
}

#undef FH_DECLARE_KERNELS

/// Number of OpenMP threads the parallel kernels will use.
int thread_count();
/// Set the OpenMP thread count (n <= 0 restores the runtime default).
void set_thread_count(int n);

}  // namespace fh::kernels

#include <omp.h>

#include <algorithm>
#include <cstring>
#include <type_traits>
#include <vector>

#include "fh/kernels.hpp"

namespace fh::kernels {

int thread_count() { return omp_get_max_threads(); }

void set_thread_count(int n) {
  static const int initial = omp_get_max_threads();
  omp_set_num_threads(n > 0 ? n : initial);
}

namespace parallel {
namespace {

// 64-byte vectors; two per tile row.
template <class T>
struct Vec {
  typedef T type __attribute__((vector_size(64)));
  static constexpr int lanes = 64 / sizeof(T);
};

template <class T>
inline typename Vec<T>::type load_vec(const T* p) {
  typename Vec<T>::type v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <class T>
inline void store_vec(T* p, const typename Vec<T>::type& v) {
  std::memcpy(p, &v, sizeof v);
}

template <class T>
constexpr int kTileCols = 2 * Vec<T>::lanes;

// One Rows x cols tile of C, accumulated in registers over ascending k.
template <class T, int Rows>
inline void gemm_tile(int n, int ldb, int k, int cols, const T* a, const T* b, T* c, bool accumulate) {
  using V = typename Vec<T>::type;
  constexpr int L = Vec<T>::lanes;
  if (cols == kTileCols<T>) {
    V lo[Rows], hi[Rows];
    for (int r = 0; r < Rows; ++r) {
      if (accumulate) {
        lo[r] = load_vec(c + static_cast<std::size_t>(r) * n);
        hi[r] = load_vec(c + static_cast<std::size_t>(r) * n + L);
      } else {
        lo[r] = V{};
        hi[r] = V{};
      }
    }
    for (int p = 0; p < k; ++p) {
      const T* bp = b + static_cast<std::size_t>(p) * ldb;
      const V b0 = load_vec(bp), b1 = load_vec(bp + L);
      for (int r = 0; r < Rows; ++r) {
        const T av = a[static_cast<std::size_t>(r) * k + p];
        lo[r] += av * b0;
        hi[r] += av * b1;
      }
    }
    for (int r = 0; r < Rows; ++r) {
      store_vec(c + static_cast<std::size_t>(r) * n, lo[r]);
      store_vec(c + static_cast<std::size_t>(r) * n + L, hi[r]);
    }
    return;
  }
  T acc[Rows][kTileCols<T>];
  for (int r = 0; r < Rows; ++r)
    for (int j = 0; j < cols; ++j) acc[r][j] = accumulate ? c[static_cast<std::size_t>(r) * n + j] : T(0);
  for (int p = 0; p < k; ++p) {
    const T* bp = b + static_cast<std::size_t>(p) * ldb;
    for (int r = 0; r < Rows; ++r) {
      const T av = a[static_cast<std::size_t>(r) * k + p];
      for (int j = 0; j < cols; ++j) acc[r][j] += av * bp[j];
    }
  }
  for (int r = 0; r < Rows; ++r)
    for (int j = 0; j < cols; ++j) c[static_cast<std::size_t>(r) * n + j] = acc[r][j];
}

// Serial GEMM on raw pointers, C = A B (+ C), with leading dimensions ldb and
// ldc for B and C. Each C element accumulates over k in ascending order. B is
// copied one column panel at a time into a contiguous buffer shared by all
// row tiles.
template <class T>
void gemm_serial(int m, int n, int k, const T* a, const T* b, int ldb, T* c, int ldc, bool accumulate) {
  constexpr int W = kTileCols<T>;
  thread_local std::vector<T> panel;
  panel.resize(static_cast<std::size_t>(k) * W);
  for (int j = 0; j < n; j += W) {
    const int cols = std::min(W, n - j);
    if (cols == W) {
      for (int p = 0; p < k; ++p) {
        const T* src = b + static_cast<std::size_t>(p) * ldb + j;
        T* dst = panel.data() + static_cast<std::size_t>(p) * W;
        store_vec(dst, load_vec(src));
        store_vec(dst + Vec<T>::lanes, load_vec(src + Vec<T>::lanes));
      }
    } else {
      for (int p = 0; p < k; ++p)
        std::memcpy(panel.data() + static_cast<std::size_t>(p) * W, b + static_cast<std::size_t>(p) * ldb + j,
                    cols * sizeof(T));
    }
    auto rows_of = [&](auto rows_tag, int i) {
      constexpr int R = decltype(rows_tag)::value;
      gemm_tile<T, R>(ldc, W, k, cols, a + static_cast<std::size_t>(i) * k, panel.data(),
                      c + static_cast<std::size_t>(i) * ldc + j, accumulate);
    };
    int i = 0;
    if (m % 8 != 0)
      for (; i + 12 <= m; i += 12) rows_of(std::integral_constant<int, 12>{}, i);
    for (; i + 8 <= m; i += 8) rows_of(std::integral_constant<int, 8>{}, i);
    for (; i + 4 <= m; i += 4) rows_of(std::integral_constant<int, 4>{}, i);
    for (; i < m; ++i) rows_of(std::integral_constant<int, 1>{}, i);
  }
}

template <class T>
void gemm_serial(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  gemm_serial(m, n, k, a, b, n, c, n, accumulate);
}

// Output columns [lo, hi) whose input column ox*stride - pad + kx lies inside [0, w).
inline void valid_range(int w, int wo, int kx, int stride, int pad, int& lo, int& hi) {
  const int first = pad - kx;
  lo = first <= 0 ? 0 : (first + stride - 1) / stride;
  const int last = w - 1 + pad - kx;
  hi = last < 0 ? 0 : std::min(wo, last / stride + 1);
  if (hi < lo) hi = lo;
}

// cols[(c*k*k + ky*k + kx), (oy - oy0)*wo + ox] for output rows [oy0, oy1).
template <class T>
void im2col(const T* img, int channels, int h, int w, int kernel, int stride, int pad, int ho,
            int wo, T* cols, int oy0 = 0, int oy1 = -1) {
  if (oy1 < 0) oy1 = ho;
  const int plane = (oy1 - oy0) * wo;
  for (int c = 0; c < channels; ++c) {
    const T* src = img + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        T* dst = cols + static_cast<std::size_t>((c * kernel + ky) * kernel + kx) * plane;
        int lo, hi;
        valid_range(w, wo, kx, stride, pad, lo, hi);
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* row = dst + (oy - oy0) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(row, row + wo, T(0));
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(iy) * w - pad + kx;
          std::fill(row, row + lo, T(0));
          if (stride == 1) {
            std::copy(srow + lo, srow + hi, row + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) row[ox] = srow[ox * stride];
          }
          std::fill(row + hi, row + wo, T(0));
        }
      }
    }
  }
}

// Scatter-add cols (output rows [oy0, oy1)) into an image.
template <class T>
void col2im(const T* cols, int channels, int h, int w, int kernel, int stride, int pad, int ho,
            int wo, T* img, int oy0 = 0, int oy1 = -1) {
  if (oy1 < 0) oy1 = ho;
  const int plane = (oy1 - oy0) * wo;
  for (int c = 0; c < channels; ++c) {
    T* dst = img + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const T* src = cols + static_cast<std::size_t>((c * kernel + ky) * kernel + kx) * plane;
        int lo, hi;
        valid_range(w, wo, kx, stride, pad, lo, hi);
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          T* drow = dst + static_cast<std::size_t>(iy) * w - pad + kx;
          const T* srow = src + (oy - oy0) * wo;
          if (stride == 1) {
#pragma omp simd
            for (int ox = lo; ox < hi; ++ox) drow[ox] += srow[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) drow[ox * stride] += srow[ox];
          }
        }
      }
    }
  }
}

// Output rows per block so that a block's column matrix stays near 256 KB.
template <class T>
int row_block(int kk, int wo, int ho) {
  const int rows = static_cast<int>((std::size_t{256} << 10) / (sizeof(T) * kk * std::max(wo, 1)));
  return std::clamp(rows, 1, ho);
}

template <class T>
inline T hsum(const typename Vec<T>::type& v) {
  T s = 0;
  for (int l = 0; l < Vec<T>::lanes; ++l) s += v[l];
  return s;
}

// Lane-wise partial sums of a Rows x Cols tile over vectors of p in [p0, p1).
// The first block starts from zero, later blocks resume from acc; the last
// block reduces across lanes, adds the scalar tail and writes c.
template <class T, int Rows, int Cols>
inline void gemm_nt_tile(int k, int p0, int p1, bool first, bool last, const T* a, const T* b,
                         typename Vec<T>::type* acc, int acc_stride, T* c, int ldc) {
  using V = typename Vec<T>::type;
  constexpr int L = Vec<T>::lanes;
  V r_acc[Rows][Cols];
  for (int r = 0; r < Rows; ++r)
    for (int q = 0; q < Cols; ++q) r_acc[r][q] = first ? V{} : acc[r * acc_stride + q];
  for (int p = p0; p < p1; p += L) {
    V bv[Cols];
    for (int q = 0; q < Cols; ++q) bv[q] = load_vec(b + static_cast<std::size_t>(q) * k + p);
    for (int r = 0; r < Rows; ++r) {
      const V av = load_vec(a + static_cast<std::size_t>(r) * k + p);
      for (int q = 0; q < Cols; ++q) r_acc[r][q] += av * bv[q];
    }
  }
  if (!last) {
    for (int r = 0; r < Rows; ++r)
      for (int q = 0; q < Cols; ++q) acc[r * acc_stride + q] = r_acc[r][q];
    return;
  }
  for (int r = 0; r < Rows; ++r)
    for (int q = 0; q < Cols; ++q) {
      T sum = hsum<T>(r_acc[r][q]);
      for (int t = p1; t < k; ++t) sum += a[static_cast<std::size_t>(r) * k + t] * b[static_cast<std::size_t>(q) * k + t];
      c[static_cast<std::size_t>(r) * ldc + q] = sum;
    }
}

// c[i][j] = sum over p of a[i][p] * b[j][p]; both operands are row-major with
// k contiguous. Each sum runs lane-wise over vectors of p, then across lanes,
// then over the scalar tail, in a fixed order. p is walked in blocks of 256 so
// the operand rows of a block stay in cache; columns of C are taken in groups
// whose partial sums fit in 64 KB.
template <class T>
void gemm_nt_serial(int m, int n, int k, const T* a, const T* b, T* c) {
  using V = typename Vec<T>::type;
  constexpr int L = Vec<T>::lanes;
  constexpr int kBlock = 256;
  const int kv = k / L * L;
  const int blocks = std::max(1, (kv + kBlock - 1) / kBlock);
  const int jb_max = std::max(4, static_cast<int>(65536 / sizeof(V)) / std::max(1, m) / 4 * 4);
  thread_local std::vector<V> acc;
  acc.resize(static_cast<std::size_t>(m) * jb_max);
  for (int j0 = 0; j0 < n; j0 += jb_max) {
    const int jb = std::min(jb_max, n - j0);
    for (int blk = 0; blk < blocks; ++blk) {
      const int p0 = blk * kBlock, p1 = std::min(kv, p0 + kBlock);
      const bool first = blk == 0, last = blk == blocks - 1;
      auto row_tiles = [&](auto cols_tag, int j) {
        constexpr int C = decltype(cols_tag)::value;
        const T* bj = b + static_cast<std::size_t>(j0 + j) * k;
        int i = 0;
        for (; i + 4 <= m; i += 4)
          gemm_nt_tile<T, 4, C>(k, p0, p1, first, last, a + static_cast<std::size_t>(i) * k, bj,
                                acc.data() + static_cast<std::size_t>(i) * jb_max + j, jb_max,
                                c + static_cast<std::size_t>(i) * n + j0 + j, n);
        for (; i < m; ++i)
          gemm_nt_tile<T, 1, C>(k, p0, p1, first, last, a + static_cast<std::size_t>(i) * k, bj,
                                acc.data() + static_cast<std::size_t>(i) * jb_max + j, jb_max,
                                c + static_cast<std::size_t>(i) * n + j0 + j, n);
      };
      int j = 0;
      for (; j + 4 <= jb; j += 4) row_tiles(std::integral_constant<int, 4>{}, j);
      for (; j < jb; ++j) row_tiles(std::integral_constant<int, 1>{}, j);
    }
  }
}

template <class T>
std::vector<T> transpose(const T* a, int rows, int cols) {
  std::vector<T> t(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) t[static_cast<std::size_t>(c) * rows + r] = a[r * cols + c];
  return t;
}

template <class T>
void add_bias(T* y, int channels, int plane, std::span<const T> bias) {
  if (bias.empty()) return;
  for (int c = 0; c < channels; ++c) {
    T* row = y + static_cast<std::size_t>(c) * plane;
    const T b = bias[c];
    for (int p = 0; p < plane; ++p) row[p] += b;
  }
}

// dbias[c] = sum over n, p of dy[n, c, p], summed in (n, p) order.
template <class T>
void reduce_bias(std::span<const T> dy, int batch, int channels, int plane, std::span<T> dbias) {
  if (dbias.empty()) return;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    T acc = 0;
    for (int n = 0; n < batch; ++n) {
      const T* row = dy.data() + (static_cast<std::size_t>(n) * channels + c) * plane;
      for (int p = 0; p < plane; ++p) acc += row[p];
    }
    dbias[c] = acc;
  }
}

// Sums per-sample partials in sample order.
template <class T>
void reduce_partials(const std::vector<T>& partials, int batch, std::span<T> out) {
  const std::size_t len = out.size();
  std::copy(partials.begin(), partials.begin() + len, out.begin());
  for (int n = 1; n < batch; ++n) {
    const T* src = partials.data() + n * len;
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < len; ++i) out[i] += src[i];
  }
}

}  // namespace

template <class T>
void gemm(int m, int n, int k, std::span<const T> a, std::span<const T> b, std::span<T> c,
          bool accumulate) {
  // Rows of C are independent; split them across threads.
  const int chunk = std::max(4, (m + omp_get_max_threads() - 1) / omp_get_max_threads());
  const int chunks = (m + chunk - 1) / chunk;
#pragma omp parallel for schedule(static)
  for (int t = 0; t < chunks; ++t) {
    const int i0 = t * chunk;
    const int rows = std::min(chunk, m - i0);
    gemm_serial(rows, n, k, a.data() + static_cast<std::size_t>(i0) * k, b.data(),
                c.data() + static_cast<std::size_t>(i0) * n, accumulate);
  }
}

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y) {
  const int ho = g.out_h(), wo = g.out_w();
  const int plane = ho * wo;
  const int kk = g.in_channels * g.kernel * g.kernel;
  const bool direct = g.kernel == 1 && g.stride == 1 && g.pad == 0;
  const int rows = row_block<T>(kk, wo, ho);
  const std::size_t in_sample = static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w;
  const std::size_t out_sample = static_cast<std::size_t>(g.out_channels) * plane;
#pragma omp parallel
  {
    std::vector<T> cols(direct ? 0 : static_cast<std::size_t>(kk) * rows * wo);
#pragma omp for schedule(static)
    for (int n = 0; n < g.batch; ++n) {
      const T* xn = x.data() + n * in_sample;
      T* yn = y.data() + n * out_sample;
      if (direct) {
        gemm_serial(g.out_channels, plane, kk, w.data(), xn, yn, false);
      } else {
        for (int oy0 = 0; oy0 < ho; oy0 += rows) {
          const int oy1 = std::min(ho, oy0 + rows), cn = (oy1 - oy0) * wo;
          im2col(xn, g.in_channels, g.in_h, g.in_w, g.kernel, g.stride, g.pad, ho, wo, cols.data(), oy0, oy1);
          gemm_serial(g.out_channels, cn, kk, w.data(), cols.data(), cn, yn + oy0 * wo, plane, false);
        }
      }
      add_bias(yn, g.out_channels, plane, bias);
    }
  }
}

template <class T>
void conv2d_backward_data(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w,
                          std::span<T> dx) {
  const int ho = g.out_h(), wo = g.out_w();
  const int plane = ho * wo;
  const int kk = g.in_channels * g.kernel * g.kernel;
  const int rows = row_block<T>(kk, wo, ho);
  const std::vector<T> wt = transpose(w.data(), g.out_channels, kk);
  const std::size_t in_sample = static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w;
  const std::size_t out_sample = static_cast<std::size_t>(g.out_channels) * plane;
#pragma omp parallel
  {
    std::vector<T> cols(static_cast<std::size_t>(kk) * rows * wo);
#pragma omp for schedule(static)
    for (int n = 0; n < g.batch; ++n) {
      T* dxn = dx.data() + n * in_sample;
      std::fill(dxn, dxn + in_sample, T(0));
      for (int oy0 = 0; oy0 < ho; oy0 += rows) {
        const int oy1 = std::min(ho, oy0 + rows), cn = (oy1 - oy0) * wo;
        gemm_serial(kk, cn, g.out_channels, wt.data(), dy.data() + n * out_sample + oy0 * wo, plane, cols.data(),
                    cn, false);
        col2im(cols.data(), g.in_channels, g.in_h, g.in_w, g.kernel, g.stride, g.pad, ho, wo, dxn, oy0, oy1);
      }
    }
  }
}

template <class T>
void conv2d_backward_weights(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy,
                             std::span<T> dw, std::span<T> dbias) {
  const int ho = g.out_h(), wo = g.out_w();
  const int plane = ho * wo;
  const int kk = g.in_channels * g.kernel * g.kernel;
  const std::size_t wsize = static_cast<std::size_t>(g.out_channels) * kk;
  const std::size_t in_sample = static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w;
  const std::size_t out_sample = static_cast<std::size_t>(g.out_channels) * plane;
  std::vector<T> partials(wsize * g.batch);
#pragma omp parallel
  {
    std::vector<T> cols(static_cast<std::size_t>(kk) * plane);
#pragma omp for schedule(static)
    for (int n = 0; n < g.batch; ++n) {
      im2col(x.data() + n * in_sample, g.in_channels, g.in_h, g.in_w, g.kernel, g.stride, g.pad,
             ho, wo, cols.data());
      gemm_nt_serial(g.out_channels, kk, plane, dy.data() + n * out_sample, cols.data(),
                     partials.data() + n * wsize);
    }
  }
  reduce_partials(partials, g.batch, dw);
  reduce_bias(dy, g.batch, g.out_channels, plane, dbias);
}

template <class T>
void conv_transpose2d_forward(const TransposedConvGeometry& g, std::span<const T> x,
                              std::span<const T> w, std::span<const T> bias, std::span<T> y) {
  const int ho = g.out_h(), wo = g.out_w();
  const int in_plane = g.in_h * g.in_w;
  const int okk = g.out_channels * g.kernel * g.kernel;
  const std::vector<T> wt = transpose(w.data(), g.in_channels, okk);
  const std::size_t in_sample = static_cast<std::size_t>(g.in_channels) * in_plane;
  const std::size_t out_sample = static_cast<std::size_t>(g.out_channels) * ho * wo;
#pragma omp parallel
  {
    std::vector<T> cols(static_cast<std::size_t>(okk) * in_plane);
#pragma omp for schedule(static)
    for (int n = 0; n < g.batch; ++n) {
      T* yn = y.data() + n * out_sample;
      gemm_serial(okk, in_plane, g.in_channels, wt.data(), x.data() + n * in_sample, cols.data(),
                  false);
      std::fill(yn, yn + out_sample, T(0));
      col2im(cols.data(), g.out_channels, ho, wo, g.kernel, g.stride, g.pad, g.in_h, g.in_w, yn);
      add_bias(yn, g.out_channels, ho * wo, bias);
    }
  }
}

template <class T>
void conv_transpose2d_backward_data(const TransposedConvGeometry& g, std::span<const T> dy,
                                    std::span<const T> w, std::span<T> dx) {
  const int ho = g.out_h(), wo = g.out_w();
  const int in_plane = g.in_h * g.in_w;
  const int okk = g.out_channels * g.kernel * g.kernel;
  const std::size_t in_sample = static_cast<std::size_t>(g.in_channels) * in_plane;
  const std::size_t out_sample = static_cast<std::size_t>(g.out_channels) * ho * wo;
#pragma omp parallel
  {
    std::vector<T> cols(static_cast<std::size_t>(okk) * in_plane);
#pragma omp for schedule(static)
    for (int n = 0; n < g.batch; ++n) {
      im2col(dy.data() + n * out_sample, g.out_channels, ho, wo, g.kernel, g.stride, g.pad,
             g.in_h, g.in_w, cols.data());
      gemm_serial(g.in_channels, in_plane, okk, w.data(), cols.data(), dx.data() + n * in_sample,
                  false);
    }
  }
}

template <class T>
void conv_transpose2d_backward_weights(const TransposedConvGeometry& g, std::span<const T> x,
                                       std::span<const T> dy, std::span<T> dw,
                                       std::span<T> dbias) {
  const int ho = g.out_h(), wo = g.out_w();
  const int in_plane = g.in_h * g.in_w;
  const int okk = g.out_channels * g.kernel * g.kernel;
  const std::size_t wsize = static_cast<std::size_t>(g.in_channels) * okk;
  const std::size_t in_sample = static_cast<std::size_t>(g.in_channels) * in_plane;
  const std::size_t out_sample = static_cast<std::size_t>(g.out_channels) * ho * wo;
  std::vector<T> partials(wsize * g.batch);
#pragma omp parallel
  {
    std::vector<T> cols(static_cast<std::size_t>(okk) * in_plane);
#pragma omp for schedule(static)
    for (int n = 0; n < g.batch; ++n) {
      im2col(dy.data() + n * out_sample, g.out_channels, ho, wo, g.kernel, g.stride, g.pad,
             g.in_h, g.in_w, cols.data());
      gemm_nt_serial(g.in_channels, okk, in_plane, x.data() + n * in_sample, cols.data(),
                     partials.data() + n * wsize);
    }
  }
  reduce_partials(partials, g.batch, dw);
  reduce_bias(dy, g.batch, g.out_channels, ho * wo, dbias);
}

#include "kernel_instances.inc"

FH_INSTANTIATE(float)
FH_INSTANTIATE(double)

}  // namespace parallel
}  // namespace fh::kernels

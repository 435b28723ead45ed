#include "xlid/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace xlid::kernels {
namespace {

// Packed GEMM. op(a) is copied into zero-padded row panels of kRows rows and
// op(b) into zero-padded column panels of kVecs vectors, so every output
// element runs through the same register-blocked loop: a plain ascending sum
// over k. A row's result never depends on which other rows share the call.
template <typename Real>
struct Simd;
template <>
struct Simd<float> {
  typedef float Vec __attribute__((vector_size(64), aligned(4), may_alias));
};
template <>
struct Simd<double> {
  typedef double Vec __attribute__((vector_size(64), aligned(8), may_alias));
};

constexpr Index kRows = 6;
constexpr Index kVecs = 4;

template <typename Real>
constexpr Index lanes() {
  return static_cast<Index>(64 / sizeof(Real));
}

template <typename Real>
void micro_kernel(Index k, const Real* ap, const Real* bp, Real* c, Index ldc, Index rows, Index cols,
                  bool accumulate) {
  using Vec = typename Simd<Real>::Vec;
  constexpr Index w = lanes<Real>();
  Vec acc[kRows][kVecs] = {};
  for (Index p = 0; p < k; ++p) {
    Vec bv[kVecs];
#pragma GCC unroll 8
    for (Index v = 0; v < kVecs; ++v) bv[v] = *reinterpret_cast<const Vec*>(bp + p * kVecs * w + v * w);
#pragma GCC unroll 8
    for (Index r = 0; r < kRows; ++r) {
      const Real a = ap[p * kRows + r];
#pragma GCC unroll 8
      for (Index v = 0; v < kVecs; ++v) acc[r][v] += a * bv[v];
    }
  }
  Real tile[kRows][kVecs * w];
#pragma GCC unroll 8
  for (Index r = 0; r < kRows; ++r) {
#pragma GCC unroll 8
    for (Index v = 0; v < kVecs; ++v) *reinterpret_cast<Vec*>(tile[r] + v * w) = acc[r][v];
  }
  for (Index r = 0; r < rows; ++r) {
    Real* dst = c + r * ldc;
    if (accumulate) {
      for (Index j = 0; j < cols; ++j) dst[j] += tile[r][j];
    } else {
      for (Index j = 0; j < cols; ++j) dst[j] = tile[r][j];
    }
  }
}

template <typename Real>
void packed_gemm(bool trans_a, bool trans_b, Index m, Index n, Index k, const Real* a, const Real* b,
                 Real* c, bool accumulate) {
  constexpr Index nb = kVecs * lanes<Real>();
  const Index row_panels = (m + kRows - 1) / kRows;
  const Index col_panels = (n + nb - 1) / nb;
  std::vector<Real> ap(static_cast<std::size_t>(row_panels * kRows * k));
  std::vector<Real> bp(static_cast<std::size_t>(col_panels * nb * k));

#pragma omp parallel
  {
#pragma omp for schedule(static)
    for (Index rp = 0; rp < row_panels; ++rp) {
      Real* dst = ap.data() + rp * kRows * k;
      for (Index p = 0; p < k; ++p) {
        for (Index r = 0; r < kRows; ++r) {
          const Index i = rp * kRows + r;
          dst[p * kRows + r] = i < m ? (trans_a ? a[p * m + i] : a[i * k + p]) : Real(0);
        }
      }
    }
#pragma omp for schedule(static)
    for (Index cp = 0; cp < col_panels; ++cp) {
      Real* dst = bp.data() + cp * nb * k;
      for (Index p = 0; p < k; ++p) {
        for (Index jj = 0; jj < nb; ++jj) {
          const Index j = cp * nb + jj;
          dst[p * nb + jj] = j < n ? (trans_b ? b[j * k + p] : b[p * n + j]) : Real(0);
        }
      }
    }
#pragma omp for collapse(2) schedule(static)
    for (Index cp = 0; cp < col_panels; ++cp) {
      for (Index rp = 0; rp < row_panels; ++rp) {
        const Index rows = std::min(kRows, m - rp * kRows);
        const Index cols = std::min(nb, n - cp * nb);
        micro_kernel<Real>(k, ap.data() + rp * kRows * k, bp.data() + cp * nb * k,
                           c + rp * kRows * n + cp * nb, n, rows, cols, accumulate);
      }
    }
  }
}

// Sum of v in ascending order; v is sorted in place.
template <typename Real>
Real sorted_sum(std::vector<Real>& v) {
  std::sort(v.begin(), v.end());
  Real s = 0;
  for (Real x : v) s += x;
  return s;
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

template <typename Real>
void gemm(bool trans_a, bool trans_b, Index m, Index n, Index k, const Real* a, const Real* b,
          Real* c, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) std::fill(c, c + m * n, Real(0));
    return;
  }
  packed_gemm(trans_a, trans_b, m, n, k, a, b, c, accumulate);
}

template <typename Real>
void splice(const Real* x, Index batch, Index t_in, Index dim, std::span<const int> offsets,
            Real* out) {
  const Index taps = static_cast<Index>(offsets.size());
  const Index t_out = t_in - (offsets.back() - offsets.front());
  const Index width = taps * dim;
#pragma omp parallel for collapse(2) schedule(static)
  for (Index b = 0; b < batch; ++b) {
    for (Index t = 0; t < t_out; ++t) {
      Real* dst = out + (b * t_out + t) * width;
      for (Index o = 0; o < taps; ++o) {
        const Real* src = x + (b * t_in + t + offsets[o] - offsets.front()) * dim;
        std::copy(src, src + dim, dst + o * dim);
      }
    }
  }
}

template <typename Real>
void splice_backward(const Real* grad_out, Index batch, Index t_in, Index dim,
                     std::span<const int> offsets, Real* grad_x) {
  const Index taps = static_cast<Index>(offsets.size());
  const Index t_out = t_in - (offsets.back() - offsets.front());
  const Index width = taps * dim;
  // Gather form: each input frame collects from the output frames that read
  // it, so threads never write the same row.
#pragma omp parallel for collapse(2) schedule(static)
  for (Index b = 0; b < batch; ++b) {
    for (Index s = 0; s < t_in; ++s) {
      Real* dst = grad_x + (b * t_in + s) * dim;
      for (Index o = 0; o < taps; ++o) {
        const Index t = s - (offsets[o] - offsets.front());
        if (t < 0 || t >= t_out) continue;
        const Real* src = grad_out + (b * t_out + t) * width + o * dim;
        for (Index d = 0; d < dim; ++d) dst[d] += src[d];
      }
    }
  }
}

template <typename Real>
void add_bias(Real* y, const Real* bias, Index rows, Index cols) {
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < rows; ++r) {
    Real* row = y + r * cols;
    for (Index c = 0; c < cols; ++c) row[c] += bias[c];
  }
}

template <typename Real>
void bias_backward(const Real* grad_y, Index rows, Index cols, Real* grad_bias) {
#pragma omp parallel for schedule(static)
  for (Index c = 0; c < cols; ++c) {
    Real s = 0;
    for (Index r = 0; r < rows; ++r) s += grad_y[r * cols + c];
    grad_bias[c] += s;
  }
}

template <typename Real>
void relu(const Real* x, Real* y, Index n) {
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) y[i] = x[i] > Real(0) ? x[i] : Real(0);
}

template <typename Real>
void relu_backward(const Real* x, const Real* grad_y, Real* grad_x, Index n) {
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) {
    if (x[i] > Real(0)) grad_x[i] += grad_y[i];
  }
}

template <typename Real>
void stats_pool(const Real* x, Index batch, Index t, Index dim, Real eps, Real* out) {
#pragma omp parallel
  {
    std::vector<Real> col(static_cast<std::size_t>(t));
#pragma omp for collapse(2) schedule(static)
    for (Index b = 0; b < batch; ++b) {
      for (Index d = 0; d < dim; ++d) {
        const Real* base = x + b * t * dim + d;
        for (Index i = 0; i < t; ++i) col[static_cast<std::size_t>(i)] = base[i * dim];
        const Real mean = sorted_sum(col) / static_cast<Real>(t);
        for (Real& v : col) v = (v - mean) * (v - mean);
        const Real var = sorted_sum(col) / static_cast<Real>(t);
        out[b * 2 * dim + d] = mean;
        out[b * 2 * dim + dim + d] = std::sqrt(var + eps);
      }
    }
  }
}

template <typename Real>
void stats_pool_backward(const Real* x, const Real* out, const Real* grad_out, Index batch,
                         Index t, Index dim, Real* grad_x) {
  const Real inv_t = Real(1) / static_cast<Real>(t);
#pragma omp parallel for collapse(2) schedule(static)
  for (Index b = 0; b < batch; ++b) {
    for (Index i = 0; i < t; ++i) {
      const Real* mean = out + b * 2 * dim;
      const Real* stddev = mean + dim;
      const Real* g_mean = grad_out + b * 2 * dim;
      const Real* g_std = g_mean + dim;
      const Real* xi = x + (b * t + i) * dim;
      Real* gi = grad_x + (b * t + i) * dim;
      for (Index d = 0; d < dim; ++d) {
        gi[d] += g_mean[d] * inv_t + g_std[d] * (xi[d] - mean[d]) * inv_t / stddev[d];
      }
    }
  }
}

namespace serial {

template <typename Real>
void gemm(bool trans_a, bool trans_b, Index m, Index n, Index k, const Real* a, const Real* b,
          Real* c, bool accumulate) {
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) {
      Real s = 0;
      for (Index p = 0; p < k; ++p) {
        const Real av = trans_a ? a[p * m + i] : a[i * k + p];
        const Real bv = trans_b ? b[j * k + p] : b[p * n + j];
        s += av * bv;
      }
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

template <typename Real>
void splice(const Real* x, Index batch, Index t_in, Index dim, std::span<const int> offsets,
            Real* out) {
  const Index taps = static_cast<Index>(offsets.size());
  const Index t_out = t_in - (offsets.back() - offsets.front());
  for (Index b = 0; b < batch; ++b)
    for (Index t = 0; t < t_out; ++t)
      for (Index o = 0; o < taps; ++o)
        for (Index d = 0; d < dim; ++d)
          out[((b * t_out + t) * taps + o) * dim + d] =
              x[(b * t_in + t + offsets[o] - offsets.front()) * dim + d];
}

template <typename Real>
void splice_backward(const Real* grad_out, Index batch, Index t_in, Index dim,
                     std::span<const int> offsets, Real* grad_x) {
  const Index taps = static_cast<Index>(offsets.size());
  const Index t_out = t_in - (offsets.back() - offsets.front());
  for (Index b = 0; b < batch; ++b)
    for (Index t = 0; t < t_out; ++t)
      for (Index o = 0; o < taps; ++o)
        for (Index d = 0; d < dim; ++d)
          grad_x[(b * t_in + t + offsets[o] - offsets.front()) * dim + d] +=
              grad_out[((b * t_out + t) * taps + o) * dim + d];
}

template <typename Real>
void stats_pool(const Real* x, Index batch, Index t, Index dim, Real eps, Real* out) {
  for (Index b = 0; b < batch; ++b) {
    for (Index d = 0; d < dim; ++d) {
      Real sum = 0;
      for (Index i = 0; i < t; ++i) sum += x[(b * t + i) * dim + d];
      const Real mean = sum / static_cast<Real>(t);
      Real sq = 0;
      for (Index i = 0; i < t; ++i) {
        const Real dev = x[(b * t + i) * dim + d] - mean;
        sq += dev * dev;
      }
      out[b * 2 * dim + d] = mean;
      out[b * 2 * dim + dim + d] = std::sqrt(sq / static_cast<Real>(t) + eps);
    }
  }
}

template <typename Real>
void stats_pool_backward(const Real* x, const Real* out, const Real* grad_out, Index batch,
                         Index t, Index dim, Real* grad_x) {
  for (Index b = 0; b < batch; ++b)
    for (Index i = 0; i < t; ++i)
      for (Index d = 0; d < dim; ++d) {
        const Real mean = out[b * 2 * dim + d];
        const Real sd = out[b * 2 * dim + dim + d];
        grad_x[(b * t + i) * dim + d] +=
            grad_out[b * 2 * dim + d] / static_cast<Real>(t) +
            grad_out[b * 2 * dim + dim + d] * (x[(b * t + i) * dim + d] - mean) /
                (static_cast<Real>(t) * sd);
      }
}

}  // namespace serial

#define XLID_INSTANTIATE_SHARED(NS, R)                                                        \
  template void NS gemm<R>(bool, bool, Index, Index, Index, const R*, const R*, R*, bool);    \
  template void NS splice<R>(const R*, Index, Index, Index, std::span<const int>, R*);        \
  template void NS splice_backward<R>(const R*, Index, Index, Index, std::span<const int>, R*); \
  template void NS stats_pool<R>(const R*, Index, Index, Index, R, R*);                       \
  template void NS stats_pool_backward<R>(const R*, const R*, const R*, Index, Index, Index, R*);

#define XLID_INSTANTIATE(R)                                          \
  XLID_INSTANTIATE_SHARED(, R)                                       \
  XLID_INSTANTIATE_SHARED(serial::, R)                               \
  template void add_bias<R>(R*, const R*, Index, Index);             \
  template void bias_backward<R>(const R*, Index, Index, R*);        \
  template void relu<R>(const R*, R*, Index);                        \
  template void relu_backward<R>(const R*, const R*, R*, Index);

XLID_INSTANTIATE(float)
XLID_INSTANTIATE(double)

}  // namespace xlid::kernels

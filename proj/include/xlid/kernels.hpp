#pragma once

// Dense kernels behind the autodiff ops. The functions in `xlid::kernels`
// are the OpenMP versions used for training; `xlid::kernels::serial`
// holds plain loop reference versions with identical contracts, kept for
// tests and the benchmark.
//
// Sequence tensors are row-major [batch, time, dim]. Splicing uses effective
// frame offsets (tap * dilation), sorted ascending; output frame t reads
// input frames t + (offset - offsets.front()).

#include <cstddef>
#include <span>

namespace xlid::kernels {

using Index = std::ptrdiff_t;

/// c[m x n] = op(a) * op(b), or += when accumulate. op transposes when the
/// flag is set; a is m x k after op, b is k x n after op.
template <typename Real>
void gemm(bool trans_a, bool trans_b, Index m, Index n, Index k, const Real* a, const Real* b,
          Real* c, bool accumulate);

/// out[b, t, o*dim + d] = x[b, t + offsets[o] - offsets[0], d] for
/// t < t_in - span.
template <typename Real>
void splice(const Real* x, Index batch, Index t_in, Index dim, std::span<const int> offsets,
            Real* out);

/// grad_x += adjoint of splice applied to grad_out.
template <typename Real>
void splice_backward(const Real* grad_out, Index batch, Index t_in, Index dim,
                     std::span<const int> offsets, Real* grad_x);

template <typename Real>
void add_bias(Real* y, const Real* bias, Index rows, Index cols);

/// grad_bias += column sums of grad_y.
template <typename Real>
void bias_backward(const Real* grad_y, Index rows, Index cols, Real* grad_bias);

template <typename Real>
void relu(const Real* x, Real* y, Index n);

/// grad_x += grad_y where x > 0.
template <typename Real>
void relu_backward(const Real* x, const Real* grad_y, Real* grad_x, Index n);

/// out[b] = [mean over t | sqrt(population variance + eps)] per dim.
/// Sums run over values in sorted order, so the result is bitwise invariant
/// to permutations of the time axis.
template <typename Real>
void stats_pool(const Real* x, Index batch, Index t, Index dim, Real eps, Real* out);

/// grad_x += d(out)/d(x)^T grad_out, using the forward output for mean/std.
template <typename Real>
void stats_pool_backward(const Real* x, const Real* out, const Real* grad_out, Index batch,
                         Index t, Index dim, Real* grad_x);

namespace serial {

template <typename Real>
void gemm(bool trans_a, bool trans_b, Index m, Index n, Index k, const Real* a, const Real* b,
          Real* c, bool accumulate);
template <typename Real>
void splice(const Real* x, Index batch, Index t_in, Index dim, std::span<const int> offsets,
            Real* out);
template <typename Real>
void splice_backward(const Real* grad_out, Index batch, Index t_in, Index dim,
                     std::span<const int> offsets, Real* grad_x);
template <typename Real>
void stats_pool(const Real* x, Index batch, Index t, Index dim, Real eps, Real* out);
template <typename Real>
void stats_pool_backward(const Real* x, const Real* out, const Real* grad_out, Index batch,
                         Index t, Index dim, Real* grad_x);

}  // namespace serial

/// Threads used by the parallel kernels.
int max_threads();

}  // namespace xlid::kernels

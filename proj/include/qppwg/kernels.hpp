#pragma once

#include <complex>
#include <cstdint>
#include <span>

// Hot inner loops of the engine. The primary kernels are OpenMP-parallel over
// independent output rows; qppwg::kernels::serial holds naive single-thread
// reference implementations used as test oracles and as the baseline in the
// kernel benchmark. Parallel and serial variants perform the same
// floating-point operations in the same per-element order, so their results
// are bit-identical (builds use -ffp-contract=off).
//
// Layout convention: [batch, channel, time] row-major, i.e.
// x[b, c, t] = data[(b * channels + c) * time + t].

namespace qppwg::kernels {

// out[b,o,t] = bias[o] + sum_i w[o,i] * in[b,i,t], accumulated in ascending i.
// bias may be null (accumulation then starts from 0).
template <typename S>
void conv1x1_forward(S* out, const S* in, const S* w, const S* bias,
                     int batch, int c_in, int c_out, int time);

// din[b,i,t] += sum_o w[o,i] * dout[b,o,t]
template <typename S>
void conv1x1_backward_input(S* din, const S* w, const S* dout,
                            int batch, int c_in, int c_out, int time);

// dw[o,i] += sum_{b,t} dout[b,o,t] * in[b,i,t]
template <typename S>
void conv1x1_backward_weight(S* dw, const S* in, const S* dout,
                             int batch, int c_in, int c_out, int time);

// db[o] += sum_{b,t} dout[b,o,t]
template <typename S>
void conv1x1_backward_bias(S* db, const S* dout, int batch, int c_out, int time);

// out[b,c,t] = in[b,c,t+offsets[t]] when the source index is in range, else 0.
template <typename S>
void gather_forward(S* out, const S* in, const int32_t* offsets,
                    int batch, int channels, int time);

// din[b,c,t+offsets[t]] += dout[b,c,t]; rows (b,c) are independent, the time
// loop within a row stays sequential because offsets may collide.
template <typename S>
void gather_backward(S* din, const S* dout, const int32_t* offsets,
                     int batch, int channels, int time);

// In-place iterative radix-2 FFT; n must be a power of two.
// sign = -1: forward DFT  X_k = sum_n x_n e^{-2 pi i k n / n}
// sign = +1: unnormalized inverse direction.
template <typename S>
void fft_radix2(std::complex<S>* a, int n, int sign);

bool is_power_of_two(int n);

namespace serial {

// Naive per-timestep matrix multiply, the conv1x1 oracle.
template <typename S>
void conv1x1_forward(S* out, const S* in, const S* w, const S* bias,
                     int batch, int c_in, int c_out, int time);

// Per-sample loop oracle for gather.
template <typename S>
void gather_forward(S* out, const S* in, const int32_t* offsets,
                    int batch, int channels, int time);

// Naive per-sample three-tap convolution with a per-sample dilation:
// out[b,o,t] = bias[o] + Wc*x_t + Wp*x_{t-d_t} + Wf*x_{t+d_t},
// zero padded, each tap accumulated as its own partial sum.
template <typename S>
void pdcnn_forward(S* out, const S* in, const S* w_cur, const S* w_past,
                   const S* w_fut, const S* bias, const int32_t* dilations,
                   int batch, int c_in, int c_out, int time);

// Standard kernel-3 dilated convolution with a constant dilation, same
// three-filter decomposition and tap order as pdcnn_forward.
template <typename S>
void dilated_conv3_forward(S* out, const S* in, const S* w_cur, const S* w_past,
                           const S* w_fut, const S* bias, int dilation,
                           int batch, int c_in, int c_out, int time);

// O(n^2) real DFT magnitudes of one frame: mags[k] = |sum_n x_n e^{-2 pi i k n / n}|
// for k = 0 .. n/2.
template <typename S>
void dft_magnitude(const S* frame, int n, S* mags);

}  // namespace serial

}  // namespace qppwg::kernels

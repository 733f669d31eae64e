#include "qppwg/kernels.hpp"

#include <cmath>
#include <mutex>
#include <numbers>
#include <unordered_map>
#include <vector>

namespace qppwg::kernels {

namespace {

// e^{-2 pi i k / n} for k < n/2, cached per size. References stay valid across
// inserts, so callers may hold one while other threads add new sizes.
const std::vector<std::complex<double>>& twiddle_table(int n) {
    static std::mutex mutex;
    static std::unordered_map<int, std::vector<std::complex<double>>> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto& table = cache[n];
    if (table.empty() && n >= 2) {
        table.resize(static_cast<size_t>(n) / 2);
        for (int k = 0; k < n / 2; ++k) {
            const double ang = -2.0 * std::numbers::pi * k / n;
            table[static_cast<size_t>(k)] = {std::cos(ang), std::sin(ang)};
        }
    }
    return table;
}

}  // namespace

template <typename S>
void conv1x1_forward(S* out, const S* in, const S* w, const S* bias,
                     int batch, int c_in, int c_out, int time) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < batch; ++b) {
        for (int o = 0; o < c_out; ++o) {
            S* out_row = out + (static_cast<int64_t>(b) * c_out + o) * time;
            const S init = bias ? bias[o] : S(0);
            for (int t = 0; t < time; ++t) out_row[t] = init;
            for (int i = 0; i < c_in; ++i) {
                const S wv = w[o * c_in + i];
                const S* in_row = in + (static_cast<int64_t>(b) * c_in + i) * time;
                for (int t = 0; t < time; ++t) out_row[t] += wv * in_row[t];
            }
        }
    }
}

template <typename S>
void conv1x1_backward_input(S* din, const S* w, const S* dout,
                            int batch, int c_in, int c_out, int time) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < batch; ++b) {
        for (int i = 0; i < c_in; ++i) {
            S* din_row = din + (static_cast<int64_t>(b) * c_in + i) * time;
            for (int o = 0; o < c_out; ++o) {
                const S wv = w[o * c_in + i];
                const S* dout_row = dout + (static_cast<int64_t>(b) * c_out + o) * time;
                for (int t = 0; t < time; ++t) din_row[t] += wv * dout_row[t];
            }
        }
    }
}

template <typename S>
void conv1x1_backward_weight(S* dw, const S* in, const S* dout,
                             int batch, int c_in, int c_out, int time) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int o = 0; o < c_out; ++o) {
        for (int i = 0; i < c_in; ++i) {
            S acc = S(0);
            for (int b = 0; b < batch; ++b) {
                const S* dout_row = dout + (static_cast<int64_t>(b) * c_out + o) * time;
                const S* in_row = in + (static_cast<int64_t>(b) * c_in + i) * time;
                for (int t = 0; t < time; ++t) acc += dout_row[t] * in_row[t];
            }
            dw[o * c_in + i] += acc;
        }
    }
}

template <typename S>
void conv1x1_backward_bias(S* db, const S* dout, int batch, int c_out, int time) {
#pragma omp parallel for schedule(static)
    for (int o = 0; o < c_out; ++o) {
        S acc = S(0);
        for (int b = 0; b < batch; ++b) {
            const S* dout_row = dout + (static_cast<int64_t>(b) * c_out + o) * time;
            for (int t = 0; t < time; ++t) acc += dout_row[t];
        }
        db[o] += acc;
    }
}

template <typename S>
void gather_forward(S* out, const S* in, const int32_t* offsets,
                    int batch, int channels, int time) {
    const int64_t rows = static_cast<int64_t>(batch) * channels;
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < rows; ++r) {
        S* out_row = out + r * time;
        const S* in_row = in + r * time;
        for (int t = 0; t < time; ++t) {
            const int64_t src = static_cast<int64_t>(t) + offsets[t];
            out_row[t] = (src >= 0 && src < time) ? in_row[src] : S(0);
        }
    }
}

template <typename S>
void gather_backward(S* din, const S* dout, const int32_t* offsets,
                     int batch, int channels, int time) {
    const int64_t rows = static_cast<int64_t>(batch) * channels;
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < rows; ++r) {
        S* din_row = din + r * time;
        const S* dout_row = dout + r * time;
        for (int t = 0; t < time; ++t) {
            const int64_t src = static_cast<int64_t>(t) + offsets[t];
            if (src >= 0 && src < time) din_row[src] += dout_row[t];
        }
    }
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

template <typename S>
void fft_radix2(std::complex<S>* a, int n, int sign) {
    if (n <= 1) return;
    const auto& table = twiddle_table(n);
    // bit-reversal permutation
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        const int stride = n / len;
        for (int i = 0; i < n; i += len) {
            for (int k = 0; k < len / 2; ++k) {
                const std::complex<double> tw = table[static_cast<size_t>(k) * stride];
                const std::complex<S> w(static_cast<S>(tw.real()),
                                        static_cast<S>(sign < 0 ? tw.imag() : -tw.imag()));
                const std::complex<S> u = a[i + k];
                const std::complex<S> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
            }
        }
    }
}

template void conv1x1_forward<float>(float*, const float*, const float*, const float*, int, int, int, int);
template void conv1x1_forward<double>(double*, const double*, const double*, const double*, int, int, int, int);
template void conv1x1_backward_input<float>(float*, const float*, const float*, int, int, int, int);
template void conv1x1_backward_input<double>(double*, const double*, const double*, int, int, int, int);
template void conv1x1_backward_weight<float>(float*, const float*, const float*, int, int, int, int);
template void conv1x1_backward_weight<double>(double*, const double*, const double*, int, int, int, int);
template void conv1x1_backward_bias<float>(float*, const float*, int, int, int);
template void conv1x1_backward_bias<double>(double*, const double*, int, int, int);
template void gather_forward<float>(float*, const float*, const int32_t*, int, int, int);
template void gather_forward<double>(double*, const double*, const int32_t*, int, int, int);
template void gather_backward<float>(float*, const float*, const int32_t*, int, int, int);
template void gather_backward<double>(double*, const double*, const int32_t*, int, int, int);
template void fft_radix2<float>(std::complex<float>*, int, int);
template void fft_radix2<double>(std::complex<double>*, int, int);

}  // namespace qppwg::kernels

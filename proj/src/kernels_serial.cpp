#include "qppwg/kernels.hpp"

#include <cmath>
#include <numbers>

// Reference implementations: straight loops, no threading. Kept as the oracle
// half of every kernel pair and as the baseline the benchmark compares against.

namespace qppwg::kernels::serial {

template <typename S>
void conv1x1_forward(S* out, const S* in, const S* w, const S* bias,
                     int batch, int c_in, int c_out, int time) {
    for (int b = 0; b < batch; ++b) {
        for (int t = 0; t < time; ++t) {
            for (int o = 0; o < c_out; ++o) {
                S acc = bias ? bias[o] : S(0);
                for (int i = 0; i < c_in; ++i)
                    acc += w[o * c_in + i] * in[(static_cast<int64_t>(b) * c_in + i) * time + t];
                out[(static_cast<int64_t>(b) * c_out + o) * time + t] = acc;
            }
        }
    }
}

template <typename S>
void gather_forward(S* out, const S* in, const int32_t* offsets,
                    int batch, int channels, int time) {
    for (int b = 0; b < batch; ++b) {
        for (int c = 0; c < channels; ++c) {
            const int64_t row = (static_cast<int64_t>(b) * channels + c) * time;
            for (int t = 0; t < time; ++t) {
                const int64_t src = static_cast<int64_t>(t) + offsets[t];
                out[row + t] = (src >= 0 && src < time) ? in[row + src] : S(0);
            }
        }
    }
}

template <typename S>
void pdcnn_forward(S* out, const S* in, const S* w_cur, const S* w_past,
                   const S* w_fut, const S* bias, const int32_t* dilations,
                   int batch, int c_in, int c_out, int time) {
    for (int b = 0; b < batch; ++b) {
        const S* x = in + static_cast<int64_t>(b) * c_in * time;
        for (int t = 0; t < time; ++t) {
            const int64_t tp = static_cast<int64_t>(t) - dilations[t];
            const int64_t tf = static_cast<int64_t>(t) + dilations[t];
            for (int o = 0; o < c_out; ++o) {
                S acc = bias ? bias[o] : S(0);
                for (int i = 0; i < c_in; ++i)
                    acc += w_cur[o * c_in + i] * x[static_cast<int64_t>(i) * time + t];
                S past = S(0);
                for (int i = 0; i < c_in; ++i)
                    past += w_past[o * c_in + i] *
                            ((tp >= 0 && tp < time) ? x[static_cast<int64_t>(i) * time + tp] : S(0));
                acc += past;
                S fut = S(0);
                for (int i = 0; i < c_in; ++i)
                    fut += w_fut[o * c_in + i] *
                           ((tf >= 0 && tf < time) ? x[static_cast<int64_t>(i) * time + tf] : S(0));
                acc += fut;
                out[(static_cast<int64_t>(b) * c_out + o) * time + t] = acc;
            }
        }
    }
}

template <typename S>
void dilated_conv3_forward(S* out, const S* in, const S* w_cur, const S* w_past,
                           const S* w_fut, const S* bias, int dilation,
                           int batch, int c_in, int c_out, int time) {
    for (int b = 0; b < batch; ++b) {
        const S* x = in + static_cast<int64_t>(b) * c_in * time;
        for (int t = 0; t < time; ++t) {
            const int64_t tp = static_cast<int64_t>(t) - dilation;
            const int64_t tf = static_cast<int64_t>(t) + dilation;
            for (int o = 0; o < c_out; ++o) {
                S acc = bias ? bias[o] : S(0);
                for (int i = 0; i < c_in; ++i)
                    acc += w_cur[o * c_in + i] * x[static_cast<int64_t>(i) * time + t];
                S past = S(0);
                for (int i = 0; i < c_in; ++i)
                    past += w_past[o * c_in + i] *
                            ((tp >= 0 && tp < time) ? x[static_cast<int64_t>(i) * time + tp] : S(0));
                acc += past;
                S fut = S(0);
                for (int i = 0; i < c_in; ++i)
                    fut += w_fut[o * c_in + i] *
                           ((tf >= 0 && tf < time) ? x[static_cast<int64_t>(i) * time + tf] : S(0));
                acc += fut;
                out[(static_cast<int64_t>(b) * c_out + o) * time + t] = acc;
            }
        }
    }
}

template <typename S>
void dft_magnitude(const S* frame, int n, S* mags) {
    for (int k = 0; k <= n / 2; ++k) {
        double re = 0.0, im = 0.0;
        for (int i = 0; i < n; ++i) {
            const double ang = -2.0 * std::numbers::pi * k * i / n;
            re += static_cast<double>(frame[i]) * std::cos(ang);
            im += static_cast<double>(frame[i]) * std::sin(ang);
        }
        mags[k] = static_cast<S>(std::sqrt(re * re + im * im));
    }
}

template void conv1x1_forward<float>(float*, const float*, const float*, const float*, int, int, int, int);
template void conv1x1_forward<double>(double*, const double*, const double*, const double*, int, int, int, int);
template void gather_forward<float>(float*, const float*, const int32_t*, int, int, int);
template void gather_forward<double>(double*, const double*, const int32_t*, int, int, int);
template void pdcnn_forward<float>(float*, const float*, const float*, const float*, const float*, const float*, const int32_t*, int, int, int, int);
template void pdcnn_forward<double>(double*, const double*, const double*, const double*, const double*, const double*, const int32_t*, int, int, int, int);
template void dilated_conv3_forward<float>(float*, const float*, const float*, const float*, const float*, const float*, int, int, int, int, int);
template void dilated_conv3_forward<double>(double*, const double*, const double*, const double*, const double*, const double*, int, int, int, int, int);
template void dft_magnitude<float>(const float*, int, float*);
template void dft_magnitude<double>(const double*, int, double*);

}  // namespace qppwg::kernels::serial

#pragma once

#include <span>
#include <string>

#include "qppwg/conditioning.hpp"
#include "qppwg/tensor.hpp"

// Pitch-dependent dilated convolution: a kernel-3 dilated convolution
// decomposed into current/past/future 1x1 filters whose tap distance may vary
// per sample. With a constant dilation it is exactly the fixed DCNN.

namespace qppwg {

template <typename S>
struct Parameter {
    std::string name;
    Tensor<S> tensor;
};

template <typename S>
struct PdcnnLayer {
    Parameter<S> w_current;  // [Cout, Cin]
    Parameter<S> w_past;     // [Cout, Cin]
    Parameter<S> w_future;   // [Cout, Cin]
    Parameter<S> bias;       // [Cout]
    int base_dilation = 1;
    bool adaptive = false;
    int schedule_row = -1;  // index into DilationSchedule::d_prime when adaptive
};

// out_t = Wc * x_t + Wp * x_{t - d_t} + Wf * x_{t + d_t} + bias, zero padded.
// Realized as shift -> conv1x1 -> add so the engine provides the gradients.
template <typename S>
Tensor<S> pdcnn_forward(const Tensor<S>& x, const PdcnnLayer<S>& layer,
                        std::span<const int32_t> dilations) {
    if (x.shape().size() != 3)
        throw ConfigError("pdcnn_forward: expected [B,Cin,T] input, got " +
                          detail::shape_str(x.shape()));
    const int time = x.shape()[2];
    if (static_cast<int>(dilations.size()) != time)
        throw ConfigError("pdcnn_forward: dilation schedule length " +
                          std::to_string(dilations.size()) + " != time extent " +
                          std::to_string(time));
    std::vector<int32_t> past_off(static_cast<size_t>(time));
    std::vector<int32_t> future_off(static_cast<size_t>(time));
    for (int t = 0; t < time; ++t) {
        const int32_t d = dilations[static_cast<size_t>(t)];
        if (d < 1)
            throw ConfigError("pdcnn_forward: dilation " + std::to_string(d) + " < 1 at sample " +
                              std::to_string(t));
        past_off[static_cast<size_t>(t)] = -d;
        future_off[static_cast<size_t>(t)] = d;
    }
    Tensor<S> cur = conv1x1(x, layer.w_current.tensor, layer.bias.tensor);
    Tensor<S> past = conv1x1(shift(x, std::move(past_off)), layer.w_past.tensor);
    Tensor<S> fut = conv1x1(shift(x, std::move(future_off)), layer.w_future.tensor);
    return add(add(cur, past), fut);
}

// Fixed-dilation (DCNN) forward: the constant-schedule special case.
template <typename S>
Tensor<S> pdcnn_forward(const Tensor<S>& x, const PdcnnLayer<S>& layer) {
    if (x.shape().size() != 3)
        throw ConfigError("pdcnn_forward: expected [B,Cin,T] input, got " +
                          detail::shape_str(x.shape()));
    std::vector<int32_t> dilations(static_cast<size_t>(x.shape()[2]),
                                   static_cast<int32_t>(layer.base_dilation));
    return pdcnn_forward(x, layer, dilations);
}

// Width of a layer's input span: 2 * d' for adaptive layers, 2 * d for fixed.
inline int64_t receptive_extent(bool adaptive, int base_dilation, double e_t) {
    if (adaptive) return 2 * static_cast<int64_t>(round_dilation(e_t, base_dilation));
    return 2 * static_cast<int64_t>(base_dilation);
}

}  // namespace qppwg

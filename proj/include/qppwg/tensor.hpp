#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "qppwg/errors.hpp"
#include "qppwg/kernels.hpp"

// Define-by-run reverse-mode autodiff over dense [batch, channel, time]
// arrays. The graph is rebuilt on every forward pass; backward() walks it in
// reverse topological order. Gradients accumulate across repeated backward
// calls until zero_grad() is invoked.
//
// float is the runtime scalar type; double instantiations exist for gradient
// checking and bit-exact oracle comparisons.

namespace qppwg {

namespace detail {

inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

inline int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = shape.empty() ? 0 : 1;
    for (int d : shape) n *= d;
    return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

}  // namespace detail

// Disables graph construction for the enclosing scope (inference paths).
struct NoGradGuard {
    NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

   private:
    bool prev_;
};

template <typename S>
struct TensorNode {
    std::vector<int> shape;
    std::vector<S> value;
    std::vector<S> grad;  // empty until ensure_grad()
    bool requires_grad = false;
    bool needs_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), S(0));
    }
};

template <typename S>
class Tensor {
   public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        return leaf(std::move(shape), {}, requires_grad, true);
    }
    static Tensor full(std::vector<int> shape, S fill) {
        Tensor t = zeros(std::move(shape));
        std::fill(t.node_->value.begin(), t.node_->value.end(), fill);
        return t;
    }
    static Tensor from_data(std::vector<int> shape, std::vector<S> data,
                            bool requires_grad = false) {
        if (detail::shape_numel(shape) != static_cast<int64_t>(data.size()))
            throw ConfigError("tensor data length " + std::to_string(data.size()) +
                              " does not match shape " + detail::shape_str(shape));
        return leaf(std::move(shape), std::move(data), requires_grad, false);
    }
    static Tensor scalar(S v) { return from_data({1}, {v}); }

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }
    std::span<const S> values() const { return node_->value; }
    std::span<S> values_mut() { return node_->value; }
    std::span<const S> grad() const { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool needs_grad() const { return node_ && node_->needs_grad; }

    S item() const {
        if (numel() != 1) throw UsageError("item() on non-scalar tensor " + detail::shape_str(shape()));
        return node_->value[0];
    }

    void zero_grad() {
        if (node_) std::fill(node_->grad.begin(), node_->grad.end(), S(0));
    }
    void free_grad() {
        if (node_) {
            node_->grad.clear();
            node_->grad.shrink_to_fit();
        }
    }

    std::shared_ptr<TensorNode<S>>& impl() { return node_; }
    const std::shared_ptr<TensorNode<S>>& impl() const { return node_; }

   private:
    static Tensor leaf(std::vector<int> shape, std::vector<S> data, bool requires_grad,
                       bool zero_fill) {
        for (int d : shape)
            if (d <= 0) throw ConfigError("non-positive extent in shape " + detail::shape_str(shape));
        Tensor t;
        t.node_ = std::make_shared<TensorNode<S>>();
        t.node_->shape = std::move(shape);
        if (zero_fill)
            t.node_->value.assign(static_cast<size_t>(detail::shape_numel(t.node_->shape)), S(0));
        else
            t.node_->value = std::move(data);
        t.node_->requires_grad = requires_grad;
        t.node_->needs_grad = requires_grad;
        return t;
    }

    std::shared_ptr<TensorNode<S>> node_;
};

namespace detail {

constexpr int64_t kPointwiseParallelCutoff = 1 << 14;

// Gradient-guard epsilon for norm and magnitude derivatives (kept out of the
// forward values so exact identities like |STFT(0)| = 0 hold).
constexpr double kGradEps = 1e-7;

template <typename S>
Tensor<S> make_node(std::vector<int> shape, std::vector<S> value,
                    std::vector<Tensor<S>> parents,
                    std::function<void(TensorNode<S>&)> backward_fn) {
    Tensor<S> out = Tensor<S>::from_data(std::move(shape), std::move(value));
    bool needs = false;
    if (grad_mode())
        for (const auto& p : parents) needs = needs || p.needs_grad();
    if (needs) {
        auto& node = *out.impl();
        node.needs_grad = true;
        node.parents.reserve(parents.size());
        for (auto& p : parents) node.parents.push_back(p.impl());
        node.backward_fn = std::move(backward_fn);
    }
    return out;
}

template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                          " vs " + shape_str(b.shape()));
}

template <typename S, class Fwd, class Dydx>
Tensor<S> pointwise_unary(const Tensor<S>& x, Fwd f, Dydx df) {
    const int64_t n = x.numel();
    std::vector<S> value(static_cast<size_t>(n));
    const S* xv = x.values().data();
#pragma omp parallel for schedule(static) if (n >= kPointwiseParallelCutoff)
    for (int64_t i = 0; i < n; ++i) value[static_cast<size_t>(i)] = f(xv[i]);
    return make_node<S>(
        x.shape(), std::move(value), {x}, [df, n](TensorNode<S>& node) {
            auto& parent = *node.parents[0];
            if (!parent.needs_grad) return;
            parent.ensure_grad();
            const S* xv = parent.value.data();
            const S* yv = node.value.data();
            const S* g = node.grad.data();
            S* xg = parent.grad.data();
#pragma omp parallel for schedule(static) if (n >= kPointwiseParallelCutoff)
            for (int64_t i = 0; i < n; ++i) xg[i] += df(xv[i], yv[i]) * g[i];
        });
}

}  // namespace detail

// ---- pointwise ----

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape(a, b, "add");
    const int64_t n = a.numel();
    std::vector<S> value(static_cast<size_t>(n));
    const S* av = a.values().data();
    const S* bv = b.values().data();
#pragma omp parallel for schedule(static) if (n >= detail::kPointwiseParallelCutoff)
    for (int64_t i = 0; i < n; ++i) value[static_cast<size_t>(i)] = av[i] + bv[i];
    return detail::make_node<S>(a.shape(), std::move(value), {a, b}, [n](TensorNode<S>& node) {
        const S* g = node.grad.data();
        for (int side = 0; side < 2; ++side) {
            auto& parent = *node.parents[static_cast<size_t>(side)];
            if (!parent.needs_grad) continue;
            parent.ensure_grad();
            S* pg = parent.grad.data();
#pragma omp parallel for schedule(static) if (n >= detail::kPointwiseParallelCutoff)
            for (int64_t i = 0; i < n; ++i) pg[i] += g[i];
        }
    });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape(a, b, "sub");
    const int64_t n = a.numel();
    std::vector<S> value(static_cast<size_t>(n));
    const S* av = a.values().data();
    const S* bv = b.values().data();
#pragma omp parallel for schedule(static) if (n >= detail::kPointwiseParallelCutoff)
    for (int64_t i = 0; i < n; ++i) value[static_cast<size_t>(i)] = av[i] - bv[i];
    return detail::make_node<S>(a.shape(), std::move(value), {a, b}, [n](TensorNode<S>& node) {
        const S* g = node.grad.data();
        auto& pa = *node.parents[0];
        if (pa.needs_grad) {
            pa.ensure_grad();
            S* pg = pa.grad.data();
            for (int64_t i = 0; i < n; ++i) pg[i] += g[i];
        }
        auto& pb = *node.parents[1];
        if (pb.needs_grad) {
            pb.ensure_grad();
            S* pg = pb.grad.data();
            for (int64_t i = 0; i < n; ++i) pg[i] -= g[i];
        }
    });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape(a, b, "mul");
    const int64_t n = a.numel();
    std::vector<S> value(static_cast<size_t>(n));
    const S* av = a.values().data();
    const S* bv = b.values().data();
#pragma omp parallel for schedule(static) if (n >= detail::kPointwiseParallelCutoff)
    for (int64_t i = 0; i < n; ++i) value[static_cast<size_t>(i)] = av[i] * bv[i];
    return detail::make_node<S>(a.shape(), std::move(value), {a, b}, [n](TensorNode<S>& node) {
        const S* g = node.grad.data();
        const S* av = node.parents[0]->value.data();
        const S* bv = node.parents[1]->value.data();
        auto& pa = *node.parents[0];
        if (pa.needs_grad) {
            pa.ensure_grad();
            S* pg = pa.grad.data();
#pragma omp parallel for schedule(static) if (n >= detail::kPointwiseParallelCutoff)
            for (int64_t i = 0; i < n; ++i) pg[i] += bv[i] * g[i];
        }
        auto& pb = *node.parents[1];
        if (pb.needs_grad) {
            pb.ensure_grad();
            S* pg = pb.grad.data();
#pragma omp parallel for schedule(static) if (n >= detail::kPointwiseParallelCutoff)
            for (int64_t i = 0; i < n; ++i) pg[i] += av[i] * g[i];
        }
    });
}

// y = scale * x + offset
template <typename S>
Tensor<S> affine(const Tensor<S>& x, S scale_v, S offset_v) {
    return detail::pointwise_unary(
        x, [scale_v, offset_v](S v) { return scale_v * v + offset_v; },
        [scale_v](S, S) { return scale_v; });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S factor) {
    return affine(x, factor, S(0));
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& x) {
    return detail::pointwise_unary(
        x, [](S v) { return std::tanh(v); }, [](S, S y) { return S(1) - y * y; });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
    return detail::pointwise_unary(
        x, [](S v) { return S(1) / (S(1) + std::exp(-v)); },
        [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Tensor<S> leaky_relu(const Tensor<S>& x, S slope) {
    return detail::pointwise_unary(
        x, [slope](S v) { return v >= S(0) ? v : slope * v; },
        [slope](S v, S) { return v >= S(0) ? S(1) : slope; });
}

// log(max(x, floor)); gradient is zero on the floored region
template <typename S>
Tensor<S> log_clamped(const Tensor<S>& x, S floor_v) {
    return detail::pointwise_unary(
        x, [floor_v](S v) { return std::log(std::max(v, floor_v)); },
        [floor_v](S v, S) { return v > floor_v ? S(1) / v : S(0); });
}

// ---- structure ----

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, std::vector<int> shape) {
    if (detail::shape_numel(shape) != x.numel())
        throw ConfigError("reshape: element count mismatch " + detail::shape_str(x.shape()) +
                          " -> " + detail::shape_str(shape));
    std::vector<S> value(x.values().begin(), x.values().end());
    const int64_t n = x.numel();
    return detail::make_node<S>(std::move(shape), std::move(value), {x},
                                [n](TensorNode<S>& node) {
                                    auto& parent = *node.parents[0];
                                    if (!parent.needs_grad) return;
                                    parent.ensure_grad();
                                    const S* g = node.grad.data();
                                    S* pg = parent.grad.data();
                                    for (int64_t i = 0; i < n; ++i) pg[i] += g[i];
                                });
}

template <typename S>
Tensor<S> channel_slice(const Tensor<S>& x, int c0, int c1) {
    if (x.shape().size() != 3)
        throw ConfigError("channel_slice: expected rank-3 input, got " + detail::shape_str(x.shape()));
    const int batch = x.shape()[0], channels = x.shape()[1], time = x.shape()[2];
    if (c0 < 0 || c1 > channels || c0 >= c1)
        throw ConfigError("channel_slice: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                          ") invalid for " + std::to_string(channels) + " channels");
    const int c_out = c1 - c0;
    std::vector<S> value(static_cast<size_t>(batch) * c_out * time);
    const S* xv = x.values().data();
    for (int b = 0; b < batch; ++b)
        std::copy_n(xv + (static_cast<int64_t>(b) * channels + c0) * time,
                    static_cast<int64_t>(c_out) * time,
                    value.data() + static_cast<int64_t>(b) * c_out * time);
    return detail::make_node<S>(
        {batch, c_out, time}, std::move(value), {x},
        [batch, channels, time, c0, c_out](TensorNode<S>& node) {
            auto& parent = *node.parents[0];
            if (!parent.needs_grad) return;
            parent.ensure_grad();
            const S* g = node.grad.data();
            S* pg = parent.grad.data();
            for (int b = 0; b < batch; ++b) {
                const S* gb = g + static_cast<int64_t>(b) * c_out * time;
                S* pb = pg + (static_cast<int64_t>(b) * channels + c0) * time;
                for (int64_t i = 0; i < static_cast<int64_t>(c_out) * time; ++i) pb[i] += gb[i];
            }
        });
}

// Slice [t0, t1) along the innermost (time) axis.
template <typename S>
Tensor<S> time_slice(const Tensor<S>& x, int t0, int t1) {
    if (x.shape().empty())
        throw ConfigError("time_slice: undefined input");
    const int time = x.shape().back();
    if (t0 < 0 || t1 > time || t0 >= t1)
        throw ConfigError("time_slice: range [" + std::to_string(t0) + "," + std::to_string(t1) +
                          ") invalid for time extent " + std::to_string(time));
    const int t_out = t1 - t0;
    const int64_t rows = x.numel() / time;
    std::vector<int> shape = x.shape();
    shape.back() = t_out;
    std::vector<S> value(static_cast<size_t>(rows) * t_out);
    const S* xv = x.values().data();
    for (int64_t r = 0; r < rows; ++r)
        std::copy_n(xv + r * time + t0, t_out, value.data() + r * t_out);
    return detail::make_node<S>(std::move(shape), std::move(value), {x},
                                [rows, time, t0, t_out](TensorNode<S>& node) {
                                    auto& parent = *node.parents[0];
                                    if (!parent.needs_grad) return;
                                    parent.ensure_grad();
                                    const S* g = node.grad.data();
                                    S* pg = parent.grad.data();
                                    for (int64_t r = 0; r < rows; ++r)
                                        for (int t = 0; t < t_out; ++t)
                                            pg[r * time + t0 + t] += g[r * t_out + t];
                                });
}

// ---- conv1x1 and shift ----

template <typename S>
Tensor<S> conv1x1(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias) {
    if (x.shape().size() != 3)
        throw ConfigError("conv1x1: expected [B,Cin,T] input, got " + detail::shape_str(x.shape()));
    if (weight.shape().size() != 2)
        throw ConfigError("conv1x1: expected [Cout,Cin] weight, got " +
                          detail::shape_str(weight.shape()));
    const int batch = x.shape()[0], c_in = x.shape()[1], time = x.shape()[2];
    const int c_out = weight.shape()[0];
    if (weight.shape()[1] != c_in)
        throw ConfigError("conv1x1: weight " + detail::shape_str(weight.shape()) +
                          " does not match input channels " + std::to_string(c_in));
    const bool has_bias = bias.defined();
    if (has_bias && (bias.shape().size() != 1 || bias.shape()[0] != c_out))
        throw ConfigError("conv1x1: bias " + detail::shape_str(bias.shape()) +
                          " does not match output channels " + std::to_string(c_out));

    std::vector<S> value(static_cast<size_t>(batch) * c_out * time);
    kernels::conv1x1_forward(value.data(), x.values().data(), weight.values().data(),
                             has_bias ? bias.values().data() : nullptr, batch, c_in, c_out, time);
    std::vector<Tensor<S>> parents = {x, weight};
    if (has_bias) parents.push_back(bias);
    return detail::make_node<S>(
        {batch, c_out, time}, std::move(value), std::move(parents),
        [batch, c_in, c_out, time, has_bias](TensorNode<S>& node) {
            const S* g = node.grad.data();
            auto& px = *node.parents[0];
            auto& pw = *node.parents[1];
            if (px.needs_grad) {
                px.ensure_grad();
                kernels::conv1x1_backward_input(px.grad.data(), pw.value.data(), g, batch, c_in,
                                                c_out, time);
            }
            if (pw.needs_grad) {
                pw.ensure_grad();
                kernels::conv1x1_backward_weight(pw.grad.data(), px.value.data(), g, batch, c_in,
                                                 c_out, time);
            }
            if (has_bias) {
                auto& pb = *node.parents[2];
                if (pb.needs_grad) {
                    pb.ensure_grad();
                    kernels::conv1x1_backward_bias(pb.grad.data(), g, batch, c_out, time);
                }
            }
        });
}

template <typename S>
Tensor<S> conv1x1(const Tensor<S>& x, const Tensor<S>& weight) {
    return conv1x1(x, weight, Tensor<S>());
}

// out[..., t] = x[..., t + offsets[t]], zero outside [0, T).
template <typename S>
Tensor<S> shift(const Tensor<S>& x, std::vector<int32_t> offsets) {
    if (x.shape().size() != 3)
        throw ConfigError("shift: expected [B,C,T] input, got " + detail::shape_str(x.shape()));
    const int batch = x.shape()[0], channels = x.shape()[1], time = x.shape()[2];
    if (static_cast<int>(offsets.size()) != time)
        throw ConfigError("shift: offsets length " + std::to_string(offsets.size()) +
                          " does not match time extent " + std::to_string(time));
    std::vector<S> value(x.values().size());
    kernels::gather_forward(value.data(), x.values().data(), offsets.data(), batch, channels,
                            time);
    return detail::make_node<S>(
        x.shape(), std::move(value), {x},
        [batch, channels, time, offsets = std::move(offsets)](TensorNode<S>& node) {
            auto& parent = *node.parents[0];
            if (!parent.needs_grad) return;
            parent.ensure_grad();
            kernels::gather_backward(parent.grad.data(), node.grad.data(), offsets.data(), batch,
                                     channels, time);
        });
}

// ---- reductions ----

namespace detail {

template <typename S>
void check_nonempty(const Tensor<S>& x, const char* op) {
    if (!x.defined() || x.numel() == 0)
        throw ConfigError(std::string(op) + ": empty tensor");
}

}  // namespace detail

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
    detail::check_nonempty(x, "sum");
    double acc = 0.0;
    for (S v : x.values()) acc += static_cast<double>(v);
    const int64_t n = x.numel();
    return detail::make_node<S>({1}, {static_cast<S>(acc)}, {x}, [n](TensorNode<S>& node) {
        auto& parent = *node.parents[0];
        if (!parent.needs_grad) return;
        parent.ensure_grad();
        const S g = node.grad[0];
        S* pg = parent.grad.data();
        for (int64_t i = 0; i < n; ++i) pg[i] += g;
    });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
    detail::check_nonempty(x, "mean");
    double acc = 0.0;
    for (S v : x.values()) acc += static_cast<double>(v);
    const int64_t n = x.numel();
    return detail::make_node<S>({1}, {static_cast<S>(acc / static_cast<double>(n))}, {x},
                                [n](TensorNode<S>& node) {
                                    auto& parent = *node.parents[0];
                                    if (!parent.needs_grad) return;
                                    parent.ensure_grad();
                                    const S g = node.grad[0] / static_cast<S>(n);
                                    S* pg = parent.grad.data();
                                    for (int64_t i = 0; i < n; ++i) pg[i] += g;
                                });
}

template <typename S>
Tensor<S> l1_norm(const Tensor<S>& x) {
    detail::check_nonempty(x, "l1_norm");
    double acc = 0.0;
    for (S v : x.values()) acc += std::abs(static_cast<double>(v));
    const int64_t n = x.numel();
    return detail::make_node<S>({1}, {static_cast<S>(acc)}, {x}, [n](TensorNode<S>& node) {
        auto& parent = *node.parents[0];
        if (!parent.needs_grad) return;
        parent.ensure_grad();
        const S g = node.grad[0];
        const S* xv = parent.value.data();
        S* pg = parent.grad.data();
        for (int64_t i = 0; i < n; ++i)
            pg[i] += xv[i] > S(0) ? g : (xv[i] < S(0) ? -g : S(0));
    });
}

// sqrt(sum x^2); the gradient denominator carries the 1e-7 guard so silent
// inputs yield zero gradient instead of NaN.
template <typename S>
Tensor<S> frobenius_norm(const Tensor<S>& x) {
    detail::check_nonempty(x, "frobenius_norm");
    double sumsq = 0.0;
    for (S v : x.values()) sumsq += static_cast<double>(v) * static_cast<double>(v);
    const int64_t n = x.numel();
    const double inv_denom = 1.0 / std::sqrt(sumsq + detail::kGradEps);
    return detail::make_node<S>(
        {1}, {static_cast<S>(std::sqrt(sumsq))}, {x}, [n, inv_denom](TensorNode<S>& node) {
            auto& parent = *node.parents[0];
            if (!parent.needs_grad) return;
            parent.ensure_grad();
            const S g = node.grad[0] * static_cast<S>(inv_denom);
            const S* xv = parent.value.data();
            S* pg = parent.grad.data();
            for (int64_t i = 0; i < n; ++i) pg[i] += g * xv[i];
        });
}

// Scalar division num / (den + eps); eps keeps silent-reference spectral
// losses finite.
template <typename S>
Tensor<S> div_guarded(const Tensor<S>& num, const Tensor<S>& den, S eps) {
    if (num.numel() != 1 || den.numel() != 1)
        throw ConfigError("div_guarded: expected scalar operands");
    const S nv = num.values()[0];
    const S dv = den.values()[0] + eps;
    return detail::make_node<S>({1}, {nv / dv}, {num, den}, [dv](TensorNode<S>& node) {
        const S g = node.grad[0];
        const S nv = node.parents[0]->value[0];
        auto& pn = *node.parents[0];
        if (pn.needs_grad) {
            pn.ensure_grad();
            pn.grad[0] += g / dv;
        }
        auto& pd = *node.parents[1];
        if (pd.needs_grad) {
            pd.ensure_grad();
            pd.grad[0] -= g * nv / (dv * dv);
        }
    });
}

// ---- STFT magnitude ----

struct StftResolution {
    int fft_size = 1024;
    int hop = 120;
    int win_length = 600;
};

inline std::vector<double> hann_window(int win_length) {
    std::vector<double> w(static_cast<size_t>(win_length));
    for (int n = 0; n < win_length; ++n)
        w[static_cast<size_t>(n)] = 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * n / win_length);
    return w;
}

// x: [B,T] -> magnitudes [B, fft/2+1, frames]; Hann window, zero padding to
// fft_size, frames start at multiples of hop.
template <typename S>
Tensor<S> stft_magnitude(const Tensor<S>& x, const StftResolution& res) {
    if (x.shape().size() != 2)
        throw ConfigError("stft_magnitude: expected [B,T] signal, got " +
                          detail::shape_str(x.shape()));
    if (res.win_length > res.fft_size)
        throw ConfigError("stft_magnitude: win_length " + std::to_string(res.win_length) +
                          " exceeds fft_size " + std::to_string(res.fft_size));
    if (!kernels::is_power_of_two(res.fft_size))
        throw ConfigError("stft_magnitude: fft_size " + std::to_string(res.fft_size) +
                          " is not a power of two");
    if (res.hop < 1) throw ConfigError("stft_magnitude: hop must be >= 1");
    const int batch = x.shape()[0], time = x.shape()[1];
    if (time < res.win_length)
        throw ConfigError("stft_magnitude: signal length " + std::to_string(time) +
                          " shorter than one frame (win_length " +
                          std::to_string(res.win_length) + ")");
    const int frames = (time - res.win_length) / res.hop + 1;
    const int bins = res.fft_size / 2 + 1;
    const std::vector<double> window = hann_window(res.win_length);

    std::vector<S> value(static_cast<size_t>(batch) * bins * frames);
    const bool keep_spectra = detail::grad_mode() && x.needs_grad();
    // per (b, frame, bin) spectra retained for the backward pass
    auto spectra = std::make_shared<std::vector<std::complex<S>>>();
    if (keep_spectra) spectra->resize(static_cast<size_t>(batch) * frames * bins);

    const S* xv = x.values().data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < batch; ++b) {
        for (int j = 0; j < frames; ++j) {
            std::vector<std::complex<S>> buf(static_cast<size_t>(res.fft_size),
                                             std::complex<S>(S(0), S(0)));
            const S* seg = xv + static_cast<int64_t>(b) * time + static_cast<int64_t>(j) * res.hop;
            for (int n = 0; n < res.win_length; ++n)
                buf[static_cast<size_t>(n)] =
                    std::complex<S>(seg[n] * static_cast<S>(window[static_cast<size_t>(n)]), S(0));
            kernels::fft_radix2(buf.data(), res.fft_size, -1);
            for (int k = 0; k < bins; ++k) {
                const S re = buf[static_cast<size_t>(k)].real();
                const S im = buf[static_cast<size_t>(k)].imag();
                value[(static_cast<size_t>(b) * bins + static_cast<size_t>(k)) * frames +
                      static_cast<size_t>(j)] = std::sqrt(re * re + im * im);
                if (keep_spectra)
                    (*spectra)[(static_cast<size_t>(b) * frames + static_cast<size_t>(j)) * bins +
                               static_cast<size_t>(k)] = buf[static_cast<size_t>(k)];
            }
        }
    }

    return detail::make_node<S>(
        {batch, bins, frames}, std::move(value), {x},
        [batch, time, frames, bins, res, window, spectra](TensorNode<S>& node) {
            auto& parent = *node.parents[0];
            if (!parent.needs_grad) return;
            parent.ensure_grad();
            const S* g = node.grad.data();
            S* pg = parent.grad.data();
#pragma omp parallel for schedule(static)
            for (int b = 0; b < batch; ++b) {
                std::vector<std::complex<S>> buf(static_cast<size_t>(res.fft_size));
                for (int j = 0; j < frames; ++j) {
                    std::fill(buf.begin(), buf.end(), std::complex<S>(S(0), S(0)));
                    for (int k = 0; k < bins; ++k) {
                        const auto spec =
                            (*spectra)[(static_cast<size_t>(b) * frames + static_cast<size_t>(j)) *
                                           bins +
                                       static_cast<size_t>(k)];
                        const S re = spec.real(), im = spec.imag();
                        const S denom =
                            std::sqrt(re * re + im * im + static_cast<S>(detail::kGradEps));
                        const S gk = g[(static_cast<size_t>(b) * bins + static_cast<size_t>(k)) *
                                           frames +
                                       static_cast<size_t>(j)];
                        buf[static_cast<size_t>(k)] =
                            std::complex<S>(gk * re / denom, gk * im / denom);
                    }
                    kernels::fft_radix2(buf.data(), res.fft_size, +1);
                    S* dst = pg + static_cast<int64_t>(b) * time + static_cast<int64_t>(j) * res.hop;
                    for (int n = 0; n < res.win_length; ++n)
                        dst[n] += static_cast<S>(window[static_cast<size_t>(n)]) *
                                  buf[static_cast<size_t>(n)].real();
                }
            }
        });
}

// ---- backward ----

// Reverse-mode sweep from a scalar loss. Seeds d(loss)/d(loss) = 1 and
// accumulates into .grad of every requires_grad tensor reachable from it.
// Interior (op-output) gradients are pass-local; only leaf grads persist, so
// repeated backward calls without zero_grad() add up one unit each.
template <typename S>
void backward(const Tensor<S>& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw UsageError("backward: loss must be a defined scalar tensor");
    auto* root = loss.impl().get();
    if (!root->backward_fn) {
        if (root->requires_grad) {
            root->ensure_grad();
            root->grad[0] += S(1);
        }
        return;
    }

    // iterative post-order DFS over the op nodes
    std::vector<TensorNode<S>*> order;
    std::unordered_set<TensorNode<S>*> visited;
    std::vector<std::pair<TensorNode<S>*, size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->parents.size()) {
            TensorNode<S>* child = node->parents[next_child].get();
            ++next_child;
            if (child->backward_fn && !visited.count(child)) {
                visited.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (auto* node : order) {
        node->ensure_grad();
        std::fill(node->grad.begin(), node->grad.end(), S(0));
    }
    root->grad[0] = S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) (*it)->backward_fn(**it);
}

}  // namespace qppwg

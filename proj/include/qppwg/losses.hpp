#pragma once

#include <vector>

#include "qppwg/tensor.hpp"

// Least-squares GAN objectives and the multi-resolution STFT regularizer.
// Expectations over per-timestep discriminator outputs are realized as means
// over every element (batch and time).

namespace qppwg {

struct StftLossConfig {
    std::vector<StftResolution> resolutions = {
        {1024, 120, 600}, {2048, 240, 1200}, {512, 50, 240}};

    void validate() const {
        if (resolutions.empty()) throw ConfigError("stft loss config: no resolutions");
        for (const auto& r : resolutions)
            if (r.win_length > r.fft_size)
                throw ConfigError("stft loss config: win_length " + std::to_string(r.win_length) +
                                  " exceeds fft_size " + std::to_string(r.fft_size));
    }
};

struct GanWeights {
    float lambda_adv = 4.0f;
};

inline constexpr double kLogMagFloor = 1e-7;  // log(max(|X|, floor))
inline constexpr double kScDenomEps = 1e-7;   // silent-reference guard

// || |STFT(x)| - |STFT(x_hat)| ||_F / || |STFT(x)| ||_F
template <typename S>
Tensor<S> spectral_convergence(const Tensor<S>& x, const Tensor<S>& x_hat,
                               const StftResolution& res) {
    detail::check_same_shape(x, x_hat, "spectral_convergence");
    Tensor<S> mag_ref = stft_magnitude(x, res);
    Tensor<S> mag_hat = stft_magnitude(x_hat, res);
    Tensor<S> num = frobenius_norm(sub(mag_ref, mag_hat));
    Tensor<S> den = frobenius_norm(mag_ref);
    return div_guarded(num, den, static_cast<S>(kScDenomEps));
}

// (1/N) * || log|STFT(x)| - log|STFT(x_hat)| ||_L1
template <typename S>
Tensor<S> log_stft_magnitude(const Tensor<S>& x, const Tensor<S>& x_hat,
                             const StftResolution& res) {
    detail::check_same_shape(x, x_hat, "log_stft_magnitude");
    Tensor<S> log_ref = log_clamped(stft_magnitude(x, res), static_cast<S>(kLogMagFloor));
    Tensor<S> log_hat = log_clamped(stft_magnitude(x_hat, res), static_cast<S>(kLogMagFloor));
    Tensor<S> l1 = l1_norm(sub(log_ref, log_hat));
    return scale(l1, S(1) / static_cast<S>(log_ref.numel()));
}

template <typename S>
struct MultiResStftLoss {
    Tensor<S> sc;     // sum of spectral-convergence terms
    Tensor<S> mag;    // sum of log-magnitude terms
    Tensor<S> total;  // sc + mag
};

// Sum (not mean) over resolutions of L_sc + L_m.
template <typename S>
MultiResStftLoss<S> multi_res_stft(const Tensor<S>& x, const Tensor<S>& x_hat,
                                   const StftLossConfig& cfg) {
    cfg.validate();
    MultiResStftLoss<S> out;
    for (const auto& res : cfg.resolutions) {
        Tensor<S> sc = spectral_convergence(x, x_hat, res);
        Tensor<S> mag = log_stft_magnitude(x, x_hat, res);
        out.sc = out.sc.defined() ? add(out.sc, sc) : sc;
        out.mag = out.mag.defined() ? add(out.mag, mag) : mag;
    }
    out.total = add(out.sc, out.mag);
    return out;
}

// mean (1 - D(x))^2 + mean D(G(z))^2
template <typename S>
Tensor<S> loss_d(const Tensor<S>& d_real, const Tensor<S>& d_fake) {
    Tensor<S> one_minus_real = affine(d_real, S(-1), S(1));
    Tensor<S> real_term = mean(mul(one_minus_real, one_minus_real));
    Tensor<S> fake_term = mean(mul(d_fake, d_fake));
    return add(real_term, fake_term);
}

// mean (1 - D(G(z)))^2
template <typename S>
Tensor<S> loss_adv(const Tensor<S>& d_fake) {
    Tensor<S> one_minus = affine(d_fake, S(-1), S(1));
    return mean(mul(one_minus, one_minus));
}

// L_sp + lambda_adv * L_adv once adversarial training is enabled; L_sp alone
// during the warmup phase.
template <typename S>
Tensor<S> loss_g(const Tensor<S>& l_sp, const Tensor<S>& l_adv, const GanWeights& weights,
                 bool adversarial_enabled) {
    if (!adversarial_enabled) return l_sp;
    return add(l_sp, scale(l_adv, static_cast<S>(weights.lambda_adv)));
}

}  // namespace qppwg

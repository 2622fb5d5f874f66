#pragma once

#include "swinfuse/config.hpp"
#include "swinfuse/image.hpp"
#include "swinfuse/pipeline.hpp"
#include "swinfuse/tensor.hpp"
#include "swinfuse/weights.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace swinfuse {

struct TrainConfig {
    double lr = 1e-5;
    int batch = 4;
    int epochs = 50;
    double lambda = 1e3;     // weight of the SSIM term
    std::uint64_t seed = 0;
    int ssim_window = 11;
};

// ============================================================================
// Losses (differentiable through the tape)
// ============================================================================

namespace detail {

// Normalized 2-d Gaussian window, sigma 1.5, computed in double.
template <typename T>
std::vector<T> gaussian_kernel(int size, double sigma = 1.5) {
    std::vector<double> k(static_cast<std::size_t>(size) * size);
    const double c = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
            const double d2 = (i - c) * (i - c) + (j - c) * (j - c);
            k[static_cast<std::size_t>(i) * size + j] = std::exp(-d2 / (2.0 * sigma * sigma));
            sum += k[static_cast<std::size_t>(i) * size + j];
        }
    std::vector<T> out(k.size());
    for (std::size_t i = 0; i < k.size(); ++i) out[i] = static_cast<T>(k[i] / sum);
    return out;
}

} // namespace detail

// Mean local SSIM over valid window positions, Gaussian window (sigma 1.5),
// C1 = (0.01 L)^2, C2 = (0.03 L)^2 with dynamic range L = 2 for [-1,1] planes.
template <typename T>
Tensor<T> ssim_t(const Tensor<T>& a, const Tensor<T>& b, int window = 11) {
    detail::require_same_shape(a, b, "ssim");
    detail::require_rank2(a, "ssim");
    if (static_cast<int>(a.rows()) < window || static_cast<int>(a.cols()) < window)
        throw ContractError("ssim: image " + detail::shape_str(a.shape()) +
                            " smaller than window " + std::to_string(window));
    const T C1 = T(0.01 * 2.0) * T(0.01 * 2.0);
    const T C2 = T(0.03 * 2.0) * T(0.03 * 2.0);
    const auto kernel = detail::gaussian_kernel<T>(window);
    const auto k = static_cast<std::size_t>(window);

    Tensor<T> mu_a = conv2d_valid(a, kernel, k);
    Tensor<T> mu_b = conv2d_valid(b, kernel, k);
    Tensor<T> var_a = sub(conv2d_valid(mul(a, a), kernel, k), mul(mu_a, mu_a));
    Tensor<T> var_b = sub(conv2d_valid(mul(b, b), kernel, k), mul(mu_b, mu_b));
    Tensor<T> cov = sub(conv2d_valid(mul(a, b), kernel, k), mul(mu_a, mu_b));

    Tensor<T> num = mul(add_scalar(mul_scalar(mul(mu_a, mu_b), T(2)), C1),
                        add_scalar(mul_scalar(cov, T(2)), C2));
    Tensor<T> den = mul(add_scalar(add(mul(mu_a, mu_a), mul(mu_b, mu_b)), C1),
                        add_scalar(add(var_a, var_b), C2));
    return mean(div(num, den));
}

inline double ssim(const ImagePlane& a, const ImagePlane& b, int window = 11) {
    if (a.height != b.height || a.width != b.width)
        throw ShapeError("ssim: image dimensions disagree");
    return ssim_t(plane_to_tensor<double>(a), plane_to_tensor<double>(b), window).value();
}

// 1 - SSIM(out, in)
template <typename T>
Tensor<T> ssim_loss(const Tensor<T>& out, const Tensor<T>& in, int window = 11) {
    return add_scalar(mul_scalar(ssim_t(out, in, window), T(-1)), T(1));
}

// Mean absolute difference over all pixels; subgradient at 0 is 0.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& out, const Tensor<T>& in) {
    detail::require_same_shape(out, in, "l1_loss");
    return mean(abs_t(sub(out, in)));
}

// L_l1 + lambda * L_ssim
template <typename T>
Tensor<T> total_loss(const Tensor<T>& out, const Tensor<T>& in, T lambda, int window = 11) {
    return add(l1_loss(out, in), mul_scalar(ssim_loss(out, in, window), lambda));
}

// ============================================================================
// Adam
// ============================================================================

template <typename T>
struct AdamState {
    struct Slot {
        std::vector<T> m, v;
    };
    std::vector<Slot> slots;
    std::int64_t step = 0;
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
};

// One bias-corrected Adam update over a fixed parameter list. Parameters with
// no populated gradient are treated as zero-gradient.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state, T lr) {
    if (state.slots.empty()) {
        state.slots.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.slots[i].m.assign(params[i].size(), T(0));
            state.slots[i].v.assign(params[i].size(), T(0));
        }
    }
    if (state.slots.size() != params.size())
        throw ContractError("adam_step: parameter list changed size");
    state.step += 1;
    const T bc1 = T(1) - std::pow(state.beta1, static_cast<T>(state.step));
    const T bc2 = T(1) - std::pow(state.beta2, static_cast<T>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& slot = state.slots[i];
        if (slot.m.size() != params[i].size())
            throw ContractError("adam_step: parameter shape changed");
        auto& data = params[i].data();
        const bool has = params[i].has_grad();
        for (std::size_t j = 0; j < data.size(); ++j) {
            const T g = has ? params[i].grad()[j] : T(0);
            slot.m[j] = state.beta1 * slot.m[j] + (T(1) - state.beta1) * g;
            slot.v[j] = state.beta2 * slot.v[j] + (T(1) - state.beta2) * g * g;
            const T mhat = slot.m[j] / bc1;
            const T vhat = slot.v[j] / bc2;
            data[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

// ============================================================================
// Trainer
// ============================================================================

// One CSV row per processed batch.
struct TrainLogRow {
    int epoch = 0;
    int iteration = 0;
    double l1 = 0.0;
    double ssim_term = 0.0;
    double total = 0.0;
};

// Autoencoder training over pre-tiled planes (fusion layer removed):
// encode -> reconstruct -> L_l1 + lambda L_ssim -> Adam. Single-threaded and
// bitwise reproducible for a fixed seed. `csv` receives per-iteration rows;
// `log` receives per-epoch mean loss lines. Either may be null.
WeightStore train(const std::vector<ImagePlane>& tiles, const ModelConfig& model_cfg,
                  const TrainConfig& train_cfg, std::ostream* csv = nullptr,
                  std::ostream* log = nullptr);

} // namespace swinfuse

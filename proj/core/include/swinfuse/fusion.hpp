#pragma once

#include "swinfuse/encoder.hpp"
#include "swinfuse/errors.hpp"
#include "swinfuse/tensor.hpp"

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace swinfuse {

// Sequence-feature fusion variants. RowPlusCol is the published method; the
// single-dimension variants exist for ablations.
enum class FusionMode { RowOnly, ColOnly, RowPlusCol };

inline const char* to_string(FusionMode m) {
    switch (m) {
        case FusionMode::RowOnly: return "row";
        case FusionMode::ColOnly: return "col";
        case FusionMode::RowPlusCol: return "both";
    }
    return "?";
}

inline FusionMode fusion_mode_from_string(const std::string& s) {
    if (s == "row") return FusionMode::RowOnly;
    if (s == "col") return FusionMode::ColOnly;
    if (s == "both") return FusionMode::RowPlusCol;
    throw ContractError("unknown fusion mode '" + s + "' (expected row|col|both)");
}

namespace detail {

// Two-way softmax of L1 norms with max subtraction; mathematically identical
// to the unshifted form, which overflows for the norms this model produces.
template <typename T>
inline std::pair<T, T> activity_pair(T norm_a, T norm_b) {
    const T mx = std::max(norm_a, norm_b);
    const T ea = std::exp(norm_a - mx);
    const T eb = std::exp(norm_b - mx);
    const T denom = ea + eb;
    return {ea / denom, eb / denom};
}

template <typename T>
void require_matching_features(const SequenceFeatures<T>& a, const SequenceFeatures<T>& b) {
    if (a.tokens.shape() != b.tokens.shape() || a.grid_h != b.grid_h || a.grid_w != b.grid_w)
        throw ShapeError("fusion inputs disagree: " + shape_str(a.tokens.shape()) + " vs " +
                         shape_str(b.tokens.shape()));
}

} // namespace detail

// Per-row activity levels: softmax over the modalities of each row's L1 norm.
// Weight pairs sum to 1.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> row_activity(const SequenceFeatures<T>& ir,
                                                       const SequenceFeatures<T>& vis) {
    detail::require_matching_features(ir, vis);
    const std::size_t R = ir.tokens.rows(), C = ir.tokens.cols();
    std::vector<T> wi(R), wv(R);
    for (std::size_t i = 0; i < R; ++i) {
        T ni = T(0), nv = T(0);
        const T* ri = ir.tokens.data().data() + i * C;
        const T* rv = vis.tokens.data().data() + i * C;
        for (std::size_t j = 0; j < C; ++j) {
            ni += std::abs(ri[j]);
            nv += std::abs(rv[j]);
        }
        const auto [a, b] = detail::activity_pair(ni, nv);
        wi[i] = a;
        wv[i] = b;
    }
    return {std::move(wi), std::move(wv)};
}

// Column-wise analogue of row_activity.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> col_activity(const SequenceFeatures<T>& ir,
                                                       const SequenceFeatures<T>& vis) {
    detail::require_matching_features(ir, vis);
    const std::size_t R = ir.tokens.rows(), C = ir.tokens.cols();
    std::vector<T> ni(C, T(0)), nv(C, T(0));
    for (std::size_t i = 0; i < R; ++i) {
        const T* ri = ir.tokens.data().data() + i * C;
        const T* rv = vis.tokens.data().data() + i * C;
        for (std::size_t j = 0; j < C; ++j) {
            ni[j] += std::abs(ri[j]);
            nv[j] += std::abs(rv[j]);
        }
    }
    std::vector<T> wi(C), wv(C);
    for (std::size_t j = 0; j < C; ++j) {
        const auto [a, b] = detail::activity_pair(ni[j], nv[j]);
        wi[j] = a;
        wv[j] = b;
    }
    return {std::move(wi), std::move(wv)};
}

// Activity-weighted combination of the two modalities. Each term is a convex
// combination per entry; RowPlusCol adds the row- and column-fused features
// element-wise without renormalization, so identical inputs double.
// Parameter-free and used only at inference; gradients never flow through it.
template <typename T>
SequenceFeatures<T> fuse_features(const SequenceFeatures<T>& ir, const SequenceFeatures<T>& vis,
                                  FusionMode mode) {
    detail::require_matching_features(ir, vis);
    const std::size_t R = ir.tokens.rows(), C = ir.tokens.cols();
    const T* pi = ir.tokens.data().data();
    const T* pv = vis.tokens.data().data();
    std::vector<T> out(R * C, T(0));

    if (mode == FusionMode::RowOnly || mode == FusionMode::RowPlusCol) {
        const auto [wi, wv] = row_activity(ir, vis);
        for (std::size_t i = 0; i < R; ++i)
            for (std::size_t j = 0; j < C; ++j)
                out[i * C + j] += pi[i * C + j] * wi[i] + pv[i * C + j] * wv[i];
    }
    if (mode == FusionMode::ColOnly || mode == FusionMode::RowPlusCol) {
        const auto [wi, wv] = col_activity(ir, vis);
        for (std::size_t i = 0; i < R; ++i)
            for (std::size_t j = 0; j < C; ++j)
                out[i * C + j] += pi[i * C + j] * wi[j] + pv[i * C + j] * wv[j];
    }
    return {Tensor<T>({R, C}, std::move(out)), ir.grid_h, ir.grid_w};
}

} // namespace swinfuse

#pragma once

#include "swinfuse/config.hpp"
#include "swinfuse/errors.hpp"
#include "swinfuse/tensor.hpp"
#include "swinfuse/weights.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace swinfuse {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kAttentionMaskValue = -1e9;   // additive stand-in for -inf

// Token matrix plus the spatial grid it was flattened from.
template <typename T>
struct SequenceFeatures {
    Tensor<T> tokens;   // {grid_h * grid_w, C}
    int grid_h = 0;
    int grid_w = 0;
};

// ============================================================================
// Relative position bias
// ============================================================================

// Index map for an N x N window: entry (i, j) addresses the table row for the
// relative offset between token positions i and j.
inline std::vector<int> relpos_index_map(int window) {
    const int n = window;
    const int span = 2 * n - 1;
    std::vector<int> idx(static_cast<std::size_t>(n * n) * (n * n));
    for (int a = 0; a < n * n; ++a) {
        const int ar = a / n, ac = a % n;
        for (int b = 0; b < n * n; ++b) {
            const int br = b / n, bc = b % n;
            const int dr = ar - br + n - 1;
            const int dc = ac - bc + n - 1;
            idx[static_cast<std::size_t>(a) * (n * n) + b] = dr * span + dc;
        }
    }
    return idx;
}

// Learnable positional decoding term p of the attention scores: a table of
// per-offset scalars, one column per head, shared by all windows of a block.
template <typename T>
struct RelativePositionBias {
    Tensor<T> table;          // {(2N-1)^2, heads}
    std::vector<int> index;   // tokens^2 entries into the table rows
    std::size_t tokens = 0;   // tokens per window

    static RelativePositionBias for_window(int window, int heads) {
        RelativePositionBias b;
        const std::size_t span = static_cast<std::size_t>(2 * window - 1);
        b.table = Tensor<T>({span * span, static_cast<std::size_t>(heads)});
        b.index = relpos_index_map(window);
        b.tokens = static_cast<std::size_t>(window) * window;
        return b;
    }
};

// ============================================================================
// Parameters
// ============================================================================

template <typename T>
struct AttentionParams {
    Tensor<T> wq, wk, wv, wo;   // all {C, C}
};

template <typename T>
struct StlParams {
    Tensor<T> ln1_gamma, ln1_beta;
    AttentionParams<T> attn;
    Tensor<T> ln2_gamma, ln2_beta;
    Tensor<T> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

template <typename T>
struct RstbParams {
    std::vector<StlParams<T>> layers;
    RelativePositionBias<T> bias;
};

template <typename T>
struct ModelParams {
    Tensor<T> pos_weight, pos_bias;     // {C,1}, {C}
    std::vector<RstbParams<T>> blocks;
    Tensor<T> recon_weight, recon_bias; // {C,1}, {1}
};

// Canonical parameter order; one source of truth for names used by the
// weight file, the optimizer and the gradient checks.
template <typename T, typename Fn>
void for_each_param(ModelParams<T>& p, Fn&& fn) {
    fn("pos.weight", p.pos_weight);
    fn("pos.bias", p.pos_bias);
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        const std::string bp = "rstb" + std::to_string(i) + ".";
        fn(bp + "bias_table", p.blocks[i].bias.table);
        for (std::size_t j = 0; j < p.blocks[i].layers.size(); ++j) {
            const std::string lp = bp + "stl" + std::to_string(j) + ".";
            auto& l = p.blocks[i].layers[j];
            fn(lp + "ln1.gamma", l.ln1_gamma);
            fn(lp + "ln1.beta", l.ln1_beta);
            fn(lp + "attn.wq", l.attn.wq);
            fn(lp + "attn.wk", l.attn.wk);
            fn(lp + "attn.wv", l.attn.wv);
            fn(lp + "attn.wo", l.attn.wo);
            fn(lp + "ln2.gamma", l.ln2_gamma);
            fn(lp + "ln2.beta", l.ln2_beta);
            fn(lp + "mlp.w1", l.mlp_w1);
            fn(lp + "mlp.b1", l.mlp_b1);
            fn(lp + "mlp.w2", l.mlp_w2);
            fn(lp + "mlp.b2", l.mlp_b2);
        }
    }
    fn("recon.weight", p.recon_weight);
    fn("recon.bias", p.recon_bias);
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> named_params(ModelParams<T>& p) {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    for_each_param(p, [&](const std::string& n, Tensor<T>& t) { out.emplace_back(n, t); });
    return out;
}

template <typename T>
ModelParams<T> make_params(const ModelConfig& cfg) {
    cfg.validate();
    const auto C = static_cast<std::size_t>(cfg.channels);
    const auto hidden = static_cast<std::size_t>(cfg.mlp_hidden());
    ModelParams<T> p;
    p.pos_weight = Tensor<T>({C, 1});
    p.pos_bias = Tensor<T>({C});
    p.blocks.resize(static_cast<std::size_t>(cfg.rstb_count));
    for (int i = 0; i < cfg.rstb_count; ++i) {
        auto& blk = p.blocks[static_cast<std::size_t>(i)];
        blk.bias = RelativePositionBias<T>::for_window(cfg.window, cfg.heads[static_cast<std::size_t>(i)]);
        blk.layers.resize(static_cast<std::size_t>(cfg.stl_count));
        for (auto& l : blk.layers) {
            l.ln1_gamma = Tensor<T>({C});
            l.ln1_beta = Tensor<T>({C});
            l.attn.wq = Tensor<T>({C, C});
            l.attn.wk = Tensor<T>({C, C});
            l.attn.wv = Tensor<T>({C, C});
            l.attn.wo = Tensor<T>({C, C});
            l.ln2_gamma = Tensor<T>({C});
            l.ln2_beta = Tensor<T>({C});
            l.mlp_w1 = Tensor<T>({C, hidden});
            l.mlp_b1 = Tensor<T>({hidden});
            l.mlp_w2 = Tensor<T>({hidden, C});
            l.mlp_b2 = Tensor<T>({C});
        }
    }
    p.recon_weight = Tensor<T>({C, 1});
    p.recon_bias = Tensor<T>({1});
    return p;
}

// Seeded initialization: truncated normal (std 0.02) for projection weights
// and the bias table, ones/zeros for LayerNorm affine, zeros for biases.
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams<T> p = make_params<T>(cfg);
    std::mt19937_64 rng(seed);
    const T std02 = T(0.02);
    fill_trunc_normal(p.pos_weight, rng, std02);
    for (auto& blk : p.blocks) {
        fill_trunc_normal(blk.bias.table, rng, std02);
        for (auto& l : blk.layers) {
            std::fill(l.ln1_gamma.data().begin(), l.ln1_gamma.data().end(), T(1));
            std::fill(l.ln2_gamma.data().begin(), l.ln2_gamma.data().end(), T(1));
            fill_trunc_normal(l.attn.wq, rng, std02);
            fill_trunc_normal(l.attn.wk, rng, std02);
            fill_trunc_normal(l.attn.wv, rng, std02);
            fill_trunc_normal(l.attn.wo, rng, std02);
            fill_trunc_normal(l.mlp_w1, rng, std02);
            fill_trunc_normal(l.mlp_w2, rng, std02);
        }
    }
    fill_trunc_normal(p.recon_weight, rng, std02);
    return p;
}

template <typename T>
void set_trainable(ModelParams<T>& p, bool trainable) {
    for_each_param(p, [trainable](const std::string&, Tensor<T>& t) { t.set_requires_grad(trainable); });
}

// ============================================================================
// Store conversions
// ============================================================================

inline WeightStore to_store(ModelParams<float>& p) {
    WeightStore s;
    for_each_param(p, [&](const std::string& n, Tensor<float>& t) {
        s.add(n, Tensor<float>(t.shape(), t.data()));
    });
    return s;
}

template <typename T>
ModelParams<T> params_from_store(const WeightStore& store, const ModelConfig& cfg) {
    ModelParams<T> p = make_params<T>(cfg);
    std::vector<std::string> expected;
    for_each_param(p, [&](const std::string& n, Tensor<T>& t) {
        expected.push_back(n);
        if (!store.contains(n))
            throw ConfigError("weight/config mismatch: tensor '" + n + "' missing from weight store");
        const Tensor<float>& src = store.get(n);
        if (src.shape() != t.shape())
            throw ConfigError("weight/config mismatch: tensor '" + n + "' has shape " +
                              detail::shape_str(src.shape()) + ", config expects " +
                              detail::shape_str(t.shape()));
        for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = static_cast<T>(src.at(i));
    });
    if (expected.size() != store.count()) {
        for (const auto& [name, tensor] : store.entries())
            if (std::find(expected.begin(), expected.end(), name) == expected.end())
                throw ConfigError("weight/config mismatch: store holds unexpected tensor '" + name + "'");
    }
    return p;
}

// Recovers architecture hyperparameters from tensor names and shapes. Tile and
// residual cannot be derived and are carried over from `base`.
ModelConfig config_from_store(const WeightStore& store, const ModelConfig& base = {});

// ============================================================================
// Window machinery
// ============================================================================

// Non-overlapping N x N window split: {H, W, C} -> {H W / N^2, N^2, C}.
// Window order is row-major over the window grid, token order row-major
// within a window. Lossless rearrangement.
template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, int N) {
    if (x.rank() != 3)
        throw ShapeError("window_partition expects {H,W,C}, got " + detail::shape_str(x.shape()));
    const std::size_t H = x.shape()[0], W = x.shape()[1], C = x.shape()[2];
    const auto n = static_cast<std::size_t>(N);
    if (N <= 0 || H % n != 0 || W % n != 0)
        throw ShapeError("window size " + std::to_string(N) + " does not divide plane " +
                         detail::shape_str(x.shape()));
    const std::size_t wy = H / n, wx = W / n, nw = wy * wx;
    std::vector<std::size_t> perm(H * W);
    std::size_t o = 0;
    for (std::size_t gy = 0; gy < wy; ++gy)
        for (std::size_t gx = 0; gx < wx; ++gx)
            for (std::size_t ty = 0; ty < n; ++ty)
                for (std::size_t tx = 0; tx < n; ++tx)
                    perm[o++] = (gy * n + ty) * W + (gx * n + tx);
    return gather_rows(x, perm, {nw, n * n, C});
}

// Exact inverse of window_partition.
template <typename T>
Tensor<T> window_reverse(const Tensor<T>& windows, int N, int H, int W) {
    if (windows.rank() != 3)
        throw ShapeError("window_reverse expects {nw,N^2,C}, got " + detail::shape_str(windows.shape()));
    const auto n = static_cast<std::size_t>(N);
    const auto h = static_cast<std::size_t>(H), w = static_cast<std::size_t>(W);
    const std::size_t C = windows.shape()[2];
    if (windows.shape()[1] != n * n || windows.shape()[0] * n * n != h * w)
        throw ShapeError("window_reverse count mismatch: " + detail::shape_str(windows.shape()) +
                         " does not cover " + std::to_string(H) + "x" + std::to_string(W));
    const std::size_t wx = w / n;
    std::vector<std::size_t> perm(h * w);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const std::size_t win = (i / n) * wx + (j / n);
            const std::size_t tok = (i % n) * n + (j % n);
            perm[i * w + j] = win * (n * n) + tok;
        }
    return gather_rows(windows, perm, {h, w, C});
}

// np.roll semantics: content moves down by dy and right by dx (negative
// values shift up/left). Pure permutation, exact inverse is the negated shift.
template <typename T>
Tensor<T> cyclic_shift(const Tensor<T>& x, int dy, int dx) {
    if (x.rank() != 3)
        throw ShapeError("cyclic_shift expects {H,W,C}, got " + detail::shape_str(x.shape()));
    const std::size_t H = x.shape()[0], W = x.shape()[1];
    const auto mod = [](long v, std::size_t m) {
        long r = v % static_cast<long>(m);
        return static_cast<std::size_t>(r < 0 ? r + static_cast<long>(m) : r);
    };
    std::vector<std::size_t> perm(H * W);
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j)
            perm[i * W + j] = mod(static_cast<long>(i) - dy, H) * W + mod(static_cast<long>(j) - dx, W);
    return gather_rows(x, perm, x.shape());
}

// Per-window additive masks for shifted attention. A window entry (i, j) is
// masked when tokens i and j originate from non-adjacent regions of the
// pre-shift plane. Windows without any masked pair get an empty handle.
template <typename T>
std::vector<Tensor<T>> shift_attention_masks(int H, int W, int N, int shift) {
    const auto band = [N, shift](int u, int limit) {
        if (u < limit - N) return 0;
        if (u < limit - shift) return 1;
        return 2;
    };
    const int wy = H / N, wx = W / N;
    std::vector<Tensor<T>> masks(static_cast<std::size_t>(wy) * wx);
    const int tpw = N * N;
    std::vector<int> labels(static_cast<std::size_t>(tpw));
    for (int gy = 0; gy < wy; ++gy)
        for (int gx = 0; gx < wx; ++gx) {
            bool uniform = true;
            for (int ty = 0; ty < N; ++ty)
                for (int tx = 0; tx < N; ++tx) {
                    labels[static_cast<std::size_t>(ty * N + tx)] =
                        band(gy * N + ty, H) * 3 + band(gx * N + tx, W);
                    uniform = uniform && labels[static_cast<std::size_t>(ty * N + tx)] == labels[0];
                }
            if (uniform) continue;
            Tensor<T> m({static_cast<std::size_t>(tpw), static_cast<std::size_t>(tpw)});
            for (int a = 0; a < tpw; ++a)
                for (int b = 0; b < tpw; ++b)
                    if (labels[static_cast<std::size_t>(a)] != labels[static_cast<std::size_t>(b)])
                        m(static_cast<std::size_t>(a), static_cast<std::size_t>(b)) = T(kAttentionMaskValue);
            masks[static_cast<std::size_t>(gy) * wx + gx] = std::move(m);
        }
    return masks;
}

// ============================================================================
// Attention
// ============================================================================

// Multi-head self-attention inside each window: Q = x Wq, K = x Wk, V = x Wv,
// scores = Q K^T / sqrt(d) + p (+ mask), row softmax, weighted sum of V, heads
// concatenated and projected by Wo.
template <typename T>
Tensor<T> window_attention(const Tensor<T>& windows, const AttentionParams<T>& p, int heads,
                           const RelativePositionBias<T>* bias = nullptr,
                           const std::vector<Tensor<T>>* masks = nullptr) {
    if (windows.rank() != 3)
        throw ShapeError("window_attention expects {nw,tokens,C}, got " + detail::shape_str(windows.shape()));
    const std::size_t nw = windows.shape()[0], tpw = windows.shape()[1], C = windows.shape()[2];
    if (heads <= 0 || C % static_cast<std::size_t>(heads) != 0)
        throw ConfigError("channel count " + std::to_string(C) + " not divisible by " +
                          std::to_string(heads) + " heads");
    if (bias && bias->tokens != tpw)
        throw ShapeError("relative position bias built for " + std::to_string(bias->tokens) +
                         " tokens, window has " + std::to_string(tpw));
    const std::size_t d = C / static_cast<std::size_t>(heads);
    const T scale = T(1) / std::sqrt(static_cast<T>(d));

    Tensor<T> flat = reshape(windows, {nw * tpw, C});
    Tensor<T> q = matmul(flat, p.wq);
    Tensor<T> k = matmul(flat, p.wk);
    Tensor<T> v = matmul(flat, p.wv);

    // per-head column views and bias matrices are shared across windows
    std::vector<Tensor<T>> qh, kh, vh, bh;
    for (int h = 0; h < heads; ++h) {
        qh.push_back(slice_cols(q, static_cast<std::size_t>(h) * d, d));
        kh.push_back(slice_cols(k, static_cast<std::size_t>(h) * d, d));
        vh.push_back(slice_cols(v, static_cast<std::size_t>(h) * d, d));
        if (bias)
            bh.push_back(gather_entries(bias->table, bias->index, static_cast<std::size_t>(h), tpw, tpw));
    }

    std::vector<Tensor<T>> window_out;
    window_out.reserve(nw);
    std::vector<Tensor<T>> head_out(static_cast<std::size_t>(heads));
    for (std::size_t w = 0; w < nw; ++w) {
        const Tensor<T>* mask = nullptr;
        if (masks && w < masks->size() && (*masks)[w].valid()) mask = &(*masks)[w];
        for (int h = 0; h < heads; ++h) {
            Tensor<T> qw = slice_rows(qh[static_cast<std::size_t>(h)], w * tpw, tpw);
            Tensor<T> kw = slice_rows(kh[static_cast<std::size_t>(h)], w * tpw, tpw);
            Tensor<T> vw = slice_rows(vh[static_cast<std::size_t>(h)], w * tpw, tpw);
            Tensor<T> scores = mul_scalar(matmul(qw, transpose(kw)), scale);
            if (bias) scores = add(scores, bh[static_cast<std::size_t>(h)]);
            if (mask) scores = add(scores, *mask);
            head_out[static_cast<std::size_t>(h)] = matmul(softmax_rows(scores), vw);
        }
        window_out.push_back(heads == 1 ? head_out[0] : concat_cols(head_out));
    }
    Tensor<T> merged = nw == 1 ? window_out[0] : concat_rows(window_out);
    return reshape(matmul(merged, p.wo), {nw, tpw, C});
}

// W-MSA (shift = 0) or SW-MSA on a {H, W, C} plane: cyclic shift, window
// partition, masked attention, reverse partition, inverse shift.
template <typename T>
Tensor<T> shifted_window_attention(const Tensor<T>& x, const AttentionParams<T>& p, int heads,
                                   const RelativePositionBias<T>* bias, int N, int shift) {
    if (x.rank() != 3)
        throw ShapeError("shifted_window_attention expects {H,W,C}, got " + detail::shape_str(x.shape()));
    const int H = static_cast<int>(x.shape()[0]), W = static_cast<int>(x.shape()[1]);
    if (shift == 0) {
        Tensor<T> windows = window_partition(x, N);
        return window_reverse(window_attention(windows, p, heads, bias), N, H, W);
    }
    Tensor<T> rolled = cyclic_shift(x, -shift, -shift);
    Tensor<T> windows = window_partition(rolled, N);
    const std::vector<Tensor<T>> masks = shift_attention_masks<T>(H, W, N, shift);
    Tensor<T> attended = window_attention(windows, p, heads, bias, &masks);
    return cyclic_shift(window_reverse(attended, N, H, W), shift, shift);
}

// ============================================================================
// Transformer layers
// ============================================================================

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    return add_row(matmul(x, w), b);
}

// One Swin Transformer layer: x += MSA(LN(x)); x += MLP(LN(x)).
template <typename T>
Tensor<T> stl_forward(const Tensor<T>& tokens, int grid_h, int grid_w, const StlParams<T>& p,
                      const RelativePositionBias<T>& bias, int heads, int window, bool shifted) {
    const std::size_t C = tokens.cols();
    const T eps = T(kLayerNormEps);
    const int shift = shifted ? window / 2 : 0;

    Tensor<T> normed = layer_norm(tokens, p.ln1_gamma, p.ln1_beta, eps);
    Tensor<T> plane = reshape(normed, {static_cast<std::size_t>(grid_h), static_cast<std::size_t>(grid_w), C});
    Tensor<T> attended = shifted_window_attention(plane, p.attn, heads, &bias, window, shift);
    Tensor<T> x1 = add(tokens, reshape(attended, tokens.shape()));

    Tensor<T> normed2 = layer_norm(x1, p.ln2_gamma, p.ln2_beta, eps);
    Tensor<T> hidden = gelu(linear(normed2, p.mlp_w1, p.mlp_b1));
    return add(x1, linear(hidden, p.mlp_w2, p.mlp_b2));
}

// Per-layer record of what the encoder executed; used by tests.
struct EncodeTrace {
    struct Layer {
        int block = 0;
        int layer = 0;
        bool shifted = false;
        std::size_t tokens = 0;
    };
    std::vector<Layer> layers;
};

// Residual Swin Transformer block: n STLs alternating W-MSA / SW-MSA starting
// unshifted, plus a skip connection adding the block input (unless disabled).
template <typename T>
Tensor<T> rstb_forward(const Tensor<T>& tokens, int grid_h, int grid_w, const RstbParams<T>& p,
                       int heads, int window, bool residual, int block_index = 0,
                       EncodeTrace* trace = nullptr) {
    Tensor<T> x = tokens;
    for (std::size_t j = 0; j < p.layers.size(); ++j) {
        const bool shifted = (j % 2) == 1;
        x = stl_forward(x, grid_h, grid_w, p.layers[j], p.bias, heads, window, shifted);
        if (trace)
            trace->layers.push_back({block_index, static_cast<int>(j), shifted, x.rows()});
    }
    return residual ? add(x, tokens) : x;
}

// ============================================================================
// Encoder
// ============================================================================

// Pixel-wise linear lift from one channel to C: a 1x1 convolution. No spatial
// mixing; output (i, j) depends only on input (i, j).
template <typename T>
Tensor<T> positional_encode(const Tensor<T>& image, const Tensor<T>& weight, const Tensor<T>& bias) {
    detail::require_rank2(image, "positional_encode");
    const std::size_t H = image.rows(), W = image.cols(), C = weight.rows();
    Tensor<T> cols = reshape(image, {H * W, 1});
    Tensor<T> tokens = add_row(matmul(cols, transpose(weight)), bias);
    return reshape(tokens, {H, W, C});
}

// Full global-feature extraction: positional encoding, tokenization, m RSTBs.
template <typename T>
SequenceFeatures<T> encode(const Tensor<T>& image, const ModelParams<T>& params,
                           const ModelConfig& cfg, EncodeTrace* trace = nullptr) {
    detail::require_rank2(image, "encode");
    const int H = static_cast<int>(image.rows()), W = static_cast<int>(image.cols());
    if (H != cfg.tile || W != cfg.tile)
        throw ShapeError("encode input " + detail::shape_str(image.shape()) + " does not match tile side " +
                         std::to_string(cfg.tile));
    const auto C = static_cast<std::size_t>(cfg.channels);

    Tensor<T> lifted = positional_encode(image, params.pos_weight, params.pos_bias);
    Tensor<T> tokens = reshape(lifted, {static_cast<std::size_t>(H) * W, C});
    for (std::size_t i = 0; i < params.blocks.size(); ++i)
        tokens = rstb_forward(tokens, H, W, params.blocks[i], cfg.heads[i], cfg.window,
                              cfg.residual, static_cast<int>(i), trace);
    return {tokens, H, W};
}

} // namespace swinfuse

#pragma once

#include "swinfuse/config.hpp"
#include "swinfuse/encoder.hpp"
#include "swinfuse/fusion.hpp"
#include "swinfuse/image.hpp"
#include "swinfuse/tensor.hpp"

#include <utility>
#include <vector>

namespace swinfuse {

// Non-overlapping square tiling of a zero-padded plane. Padded dims are the
// smallest multiples of `side` covering the original; origins are row-major.
struct TilePlan {
    int side = 224;
    int orig_h = 0;
    int orig_w = 0;
    int tiles_y = 0;
    int tiles_x = 0;
    std::vector<std::pair<int, int>> origins;

    std::size_t count() const { return origins.size(); }
};

// Splits into tiles, padding the invalid region with 0 (mid-gray in [-1,1]).
std::pair<TilePlan, std::vector<ImagePlane>> make_tiles(const ImagePlane& plane, int side = 224);

// Inverse of make_tiles followed by a crop to the original dimensions.
ImagePlane reassemble(const TilePlan& plan, const std::vector<ImagePlane>& tiles);

template <typename T>
Tensor<T> plane_to_tensor(const ImagePlane& p) {
    std::vector<T> data(p.pixels.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(p.pixels[i]);
    return Tensor<T>({static_cast<std::size_t>(p.height), static_cast<std::size_t>(p.width)},
                     std::move(data));
}

template <typename T>
ImagePlane tensor_to_plane(const Tensor<T>& t) {
    detail::require_rank2(t, "tensor_to_plane");
    ImagePlane p(static_cast<int>(t.rows()), static_cast<int>(t.cols()));
    for (std::size_t i = 0; i < t.size(); ++i) p.pixels[i] = static_cast<float>(t.at(i));
    return p;
}

// Feature reconstruction: tokens back to a tile through a per-pixel linear
// map C -> 1 and Tanh, so the output lies strictly inside (-1, 1).
template <typename T>
Tensor<T> reconstruct(const SequenceFeatures<T>& features, const ModelParams<T>& params) {
    const std::size_t H = static_cast<std::size_t>(features.grid_h);
    const std::size_t W = static_cast<std::size_t>(features.grid_w);
    if (features.tokens.rows() != H * W)
        throw ShapeError("reconstruct: token count " + std::to_string(features.tokens.rows()) +
                         " does not match grid " + std::to_string(H) + "x" + std::to_string(W));
    Tensor<T> lin = add_row(matmul(features.tokens, params.recon_weight), params.recon_bias);
    return reshape(tanh_t(lin), {H, W});
}

// End-to-end fusion of a registered pair: shared tile plan, per tile
// encode both -> fuse -> reconstruct, then reassembly. Tiles are independent,
// so the result does not depend on `threads`.
ImagePlane fuse_image_pair(const ImagePlane& ir, const ImagePlane& vis,
                           const ModelParams<float>& params, const ModelConfig& cfg,
                           FusionMode mode = FusionMode::RowPlusCol, int threads = 1);

} // namespace swinfuse

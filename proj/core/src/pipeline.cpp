#include "swinfuse/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

namespace swinfuse {

std::pair<TilePlan, std::vector<ImagePlane>> make_tiles(const ImagePlane& plane, int side) {
    if (side <= 0) throw ContractError("make_tiles: tile side must be positive");
    if (plane.height <= 0 || plane.width <= 0) throw ContractError("make_tiles: empty plane");

    TilePlan plan;
    plan.side = side;
    plan.orig_h = plane.height;
    plan.orig_w = plane.width;
    plan.tiles_y = (plane.height + side - 1) / side;
    plan.tiles_x = (plane.width + side - 1) / side;

    std::vector<ImagePlane> tiles;
    tiles.reserve(static_cast<std::size_t>(plan.tiles_y) * plan.tiles_x);
    for (int ty = 0; ty < plan.tiles_y; ++ty)
        for (int tx = 0; tx < plan.tiles_x; ++tx) {
            plan.origins.emplace_back(ty * side, tx * side);
            ImagePlane tile(side, side);   // zero fill = mid-gray in [-1,1]
            const int y0 = ty * side, x0 = tx * side;
            const int rows = std::min(side, plane.height - y0);
            const int cols = std::min(side, plane.width - x0);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) tile.at(r, c) = plane.at(y0 + r, x0 + c);
            tiles.push_back(std::move(tile));
        }
    return {std::move(plan), std::move(tiles)};
}

ImagePlane reassemble(const TilePlan& plan, const std::vector<ImagePlane>& tiles) {
    if (tiles.size() != plan.count())
        throw ContractError("reassemble: got " + std::to_string(tiles.size()) + " tiles, plan needs " +
                            std::to_string(plan.count()));
    ImagePlane out(plan.orig_h, plan.orig_w);
    for (std::size_t t = 0; t < tiles.size(); ++t) {
        const auto [y0, x0] = plan.origins[t];
        const ImagePlane& tile = tiles[t];
        if (tile.height != plan.side || tile.width != plan.side)
            throw ContractError("reassemble: tile " + std::to_string(t) + " has wrong size");
        const int rows = std::min(plan.side, plan.orig_h - y0);
        const int cols = std::min(plan.side, plan.orig_w - x0);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) out.at(y0 + r, x0 + c) = tile.at(r, c);
    }
    return out;
}

ImagePlane fuse_image_pair(const ImagePlane& ir, const ImagePlane& vis,
                           const ModelParams<float>& params, const ModelConfig& cfg,
                           FusionMode mode, int threads) {
    if (ir.height != vis.height || ir.width != vis.width)
        throw ContractError("fuse_image_pair: image dimensions disagree: " +
                            std::to_string(ir.height) + "x" + std::to_string(ir.width) + " vs " +
                            std::to_string(vis.height) + "x" + std::to_string(vis.width));
    cfg.validate();

    auto [plan, ir_tiles] = make_tiles(ir, cfg.tile);
    auto vis_tiles = make_tiles(vis, cfg.tile).second;

    std::vector<ImagePlane> out_tiles(plan.count());
    const auto run_tile = [&](std::size_t t) {
        SequenceFeatures<float> fi = encode(plane_to_tensor<float>(ir_tiles[t]), params, cfg);
        SequenceFeatures<float> fv = encode(plane_to_tensor<float>(vis_tiles[t]), params, cfg);
        SequenceFeatures<float> fused = fuse_features(fi, fv, mode);
        out_tiles[t] = tensor_to_plane(reconstruct(fused, params));
    };

    int n_threads = threads;
    if (n_threads <= 0) n_threads = static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::max(1, std::min<int>(n_threads, static_cast<int>(plan.count())));

    if (n_threads == 1) {
        for (std::size_t t = 0; t < plan.count(); ++t) run_tile(t);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (int w = 0; w < n_threads; ++w)
            pool.emplace_back([&] {
                for (std::size_t t = next.fetch_add(1); t < plan.count(); t = next.fetch_add(1))
                    run_tile(t);
            });
        for (auto& th : pool) th.join();
    }
    return reassemble(plan, out_tiles);
}

ModelConfig config_from_store(const WeightStore& store, const ModelConfig& base) {
    ModelConfig cfg = base;
    if (!store.contains("pos.weight"))
        throw ConfigError("weight store lacks tensor 'pos.weight'");
    const auto& pw = store.get("pos.weight");
    if (pw.rank() != 2 || pw.cols() != 1)
        throw ConfigError("tensor 'pos.weight' has unexpected shape " + detail::shape_str(pw.shape()));
    cfg.channels = static_cast<int>(pw.rows());

    int m = 0;
    while (store.contains("rstb" + std::to_string(m) + ".bias_table")) ++m;
    if (m == 0) throw ConfigError("weight store lacks tensor 'rstb0.bias_table'");
    cfg.rstb_count = m;

    int n = 0;
    while (store.contains("rstb0.stl" + std::to_string(n) + ".ln1.gamma")) ++n;
    if (n == 0) throw ConfigError("weight store lacks tensor 'rstb0.stl0.ln1.gamma'");
    cfg.stl_count = n;

    cfg.heads.clear();
    for (int i = 0; i < m; ++i) {
        const auto& table = store.get("rstb" + std::to_string(i) + ".bias_table");
        if (table.rank() != 2)
            throw ConfigError("tensor 'rstb" + std::to_string(i) + ".bias_table' has unexpected shape " +
                              detail::shape_str(table.shape()));
        cfg.heads.push_back(static_cast<int>(table.cols()));
        if (i == 0) {
            // table rows = (2N-1)^2
            const auto span2 = table.rows();
            int N = 1;
            while (static_cast<std::size_t>(2 * N - 1) * (2 * N - 1) < span2) ++N;
            if (static_cast<std::size_t>(2 * N - 1) * (2 * N - 1) != span2)
                throw ConfigError("tensor 'rstb0.bias_table' row count " + std::to_string(span2) +
                                  " is not a (2N-1)^2 square");
            cfg.window = N;
        }
    }

    const auto& w1 = store.get("rstb0.stl0.mlp.w1");
    if (w1.rank() != 2 || w1.rows() != static_cast<std::size_t>(cfg.channels))
        throw ConfigError("tensor 'rstb0.stl0.mlp.w1' has unexpected shape " + detail::shape_str(w1.shape()));
    cfg.mlp_ratio = static_cast<double>(w1.cols()) / static_cast<double>(cfg.channels);

    if (cfg.tile % cfg.window != 0) {
        // keep a usable default when the carried-over tile does not match
        cfg.tile = cfg.window * std::max(1, base.tile / cfg.window);
    }
    cfg.validate();
    return cfg;
}

} // namespace swinfuse

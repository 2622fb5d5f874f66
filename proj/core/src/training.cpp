#include "swinfuse/training.hpp"

#include <iomanip>
#include <numeric>
#include <ostream>

namespace swinfuse {

namespace {

// Deterministic Fisher-Yates; avoids std::shuffle's library-defined draws.
template <typename Rng>
void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng() % i)]);
}

} // namespace

WeightStore train(const std::vector<ImagePlane>& tiles, const ModelConfig& model_cfg,
                  const TrainConfig& train_cfg, std::ostream* csv, std::ostream* log) {
    if (tiles.empty()) throw ContractError("train: empty dataset");
    if (train_cfg.batch <= 0 || train_cfg.epochs <= 0) throw ContractError("train: batch and epochs must be positive");
    if (train_cfg.lambda <= 0.0) throw ContractError("train: lambda must be positive");
    model_cfg.validate();
    for (const auto& t : tiles)
        if (t.height != model_cfg.tile || t.width != model_cfg.tile)
            throw ContractError("train: dataset tile " + std::to_string(t.height) + "x" +
                                std::to_string(t.width) + " does not match configured side " +
                                std::to_string(model_cfg.tile));
    if (model_cfg.tile < train_cfg.ssim_window)
        throw ContractError("train: tile side smaller than ssim window");

    ModelParams<float> params = init_params<float>(model_cfg, train_cfg.seed);
    set_trainable(params, true);
    auto named = named_params(params);
    std::vector<Tensor<float>> flat;
    flat.reserve(named.size());
    for (auto& [n, t] : named) flat.push_back(t);

    AdamState<float> adam;
    std::mt19937_64 shuffle_rng(train_cfg.seed ^ 0x9e3779b97f4a7c15ull);
    const auto lambda = static_cast<float>(train_cfg.lambda);
    const auto lr = static_cast<float>(train_cfg.lr);

    if (csv) (*csv) << "epoch,iteration,l1,ssim,total\n";

    std::vector<std::size_t> order(tiles.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
        shuffle_indices(order, shuffle_rng);
        double epoch_total = 0.0;
        int iterations = 0;

        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(train_cfg.batch)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(train_cfg.batch));
            const auto batch_n = static_cast<float>(stop - start);

            for (auto& t : flat) t.zero_grad();
            double l1_sum = 0.0, ssim_sum = 0.0, total_sum = 0.0;

            for (std::size_t s = start; s < stop; ++s) {
                Tensor<float> input = plane_to_tensor<float>(tiles[order[s]]);
                SequenceFeatures<float> feats = encode(input, params, model_cfg);
                Tensor<float> output = reconstruct(feats, params);

                Tensor<float> l1 = l1_loss(output, input);
                Tensor<float> ss = ssim_loss(output, input, train_cfg.ssim_window);
                Tensor<float> total = add(l1, mul_scalar(ss, lambda));
                l1_sum += l1.value();
                ssim_sum += ss.value();
                total_sum += total.value();

                backward(mul_scalar(total, 1.0f / batch_n));
            }
            adam_step(flat, adam, lr);

            ++iterations;
            epoch_total += total_sum / batch_n;
            if (csv) {
                (*csv) << epoch << ',' << iterations << ',' << std::setprecision(9)
                       << l1_sum / batch_n << ',' << ssim_sum / batch_n << ','
                       << total_sum / batch_n << '\n';
            }
        }
        if (log)
            (*log) << "epoch " << epoch << "/" << train_cfg.epochs << " mean total loss "
                   << std::setprecision(9) << epoch_total / iterations << '\n';
    }

    set_trainable(params, false);
    return to_store(params);
}

} // namespace swinfuse

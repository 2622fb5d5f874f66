#pragma once

#include "swinfuse/errors.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace swinfuse {

// Architecture hyperparameters. Defaults are the full-size network; tests use
// much smaller instances.
struct ModelConfig {
    int channels = 96;            // C
    int rstb_count = 3;           // m
    int stl_count = 6;            // n, per block
    int window = 7;               // N
    std::vector<int> heads = {1, 2, 4};   // one entry per block
    double mlp_ratio = 4.0;
    int tile = 224;               // square inference tile side
    bool residual = true;         // block-level skip connection

    int head_dim(int block) const { return channels / heads.at(static_cast<std::size_t>(block)); }
    int mlp_hidden() const { return static_cast<int>(channels * mlp_ratio + 0.5); }

    // Throws ConfigError when internally inconsistent.
    void validate() const;
};

// Fills the heads list to match rstb_count: the configured prefix is kept,
// extra blocks repeat the last entry.
std::vector<int> extend_heads(const std::vector<int>& heads, int rstb_count);

// Flat key=value config file. Unknown keys are rejected. Recognized keys:
//   channels, rstb, stl, window, heads (comma list), mlp_ratio, tile, residual
ModelConfig load_config_file(const std::filesystem::path& path, ModelConfig base = {});
void save_config_file(const ModelConfig& cfg, const std::filesystem::path& path);

} // namespace swinfuse

// swinfuse: infrared/visible image fusion with a residual Swin-transformer
// encoder and an L1-norm row/column fusion layer.
//
// Subcommands:
//   fuse   fuse a registered infrared/visible pair into one image
//   train  train encoder + reconstruction weights as a single-image autoencoder
//   eval   fusion-quality metrics (AG, SF, SD, MI, SCD, MS_SSIM) as CSV

#include "swinfuse/config.hpp"
#include "swinfuse/image.hpp"
#include "swinfuse/metrics.hpp"
#include "swinfuse/pipeline.hpp"
#include "swinfuse/training.hpp"
#include "swinfuse/weights.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace swinfuse;

namespace {

struct FuseArgs {
    std::string ir, vis, weights, out;
    std::string mode = "both";
    int tile = 0;
    std::string config;
    int threads = 0;
};

struct TrainArgs {
    std::string data, out;
    int epochs = 50;
    int batch = 4;
    double lr = 1e-5;
    double lambda = 1e3;
    std::uint64_t seed = 0;
    std::string config;
    bool no_residual = false;
    int rstb = 3;
    int stl = 6;
    int tile = 0;
    int ssim_window = 11;
    std::string log;
    int threads = 1;
};

struct EvalArgs {
    std::string ir, vis, fused;
    std::string csv;
};

std::vector<fs::path> list_images(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string ext = e.path().extension().string();
        if (ext == ".png" || ext == ".pgm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

int run_fuse(const FuseArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();

    ImagePlane ir = load_image(a.ir);
    ImagePlane vis = load_image(a.vis);
    if (ir.height != vis.height || ir.width != vis.width)
        throw ContractError("input dimensions disagree: " + std::to_string(ir.height) + "x" +
                            std::to_string(ir.width) + " (ir) vs " + std::to_string(vis.height) +
                            "x" + std::to_string(vis.width) + " (vis)");

    WeightStore store = load_weights(a.weights);

    // architecture comes from the config file when given, otherwise from the
    // weight tensors themselves; tile and fusion mode are interface-level
    ModelConfig cfg;
    if (!a.config.empty()) cfg = load_config_file(a.config);
    else cfg = config_from_store(store);
    if (a.tile > 0) cfg.tile = a.tile;
    cfg.validate();

    ModelParams<float> params = params_from_store<float>(store, cfg);
    const FusionMode mode = fusion_mode_from_string(a.mode);

    ImagePlane fused = fuse_image_pair(ir, vis, params, cfg, mode, a.threads);

    const fs::path out_path(a.out);
    const fs::path tmp = out_path.string() + ".tmp" + out_path.extension().string();
    save_image(fused, tmp);
    fs::rename(tmp, out_path);

    const auto t1 = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(t1 - t0).count();
    const auto plan = make_tiles(ir, cfg.tile).first;
    std::cout << "fused " << fused.height << "x" << fused.width << " (" << plan.count()
              << (plan.count() == 1 ? " tile" : " tiles") << ", mode " << a.mode << ") in "
              << secs << " s -> " << a.out << "\n";
    return 0;
}

int run_train(const TrainArgs& a, bool rstb_given, bool stl_given) {
    ModelConfig cfg;
    if (!a.config.empty()) cfg = load_config_file(a.config);
    if (rstb_given) {
        cfg.rstb_count = a.rstb;
        cfg.heads = extend_heads(cfg.heads, a.rstb);
    }
    if (stl_given) cfg.stl_count = a.stl;
    if (a.tile > 0) cfg.tile = a.tile;
    if (a.no_residual) cfg.residual = false;
    cfg.validate();

    if (a.threads != 1)
        throw ContractError("train supports --threads 1 only (deterministic mode)");

    const fs::path dir(a.data);
    if (!fs::is_directory(dir)) throw IoError("--data is not a directory: " + a.data);
    const auto files = list_images(dir);
    if (files.empty()) throw ContractError("no .png/.pgm images in " + a.data);

    std::vector<ImagePlane> tiles;
    for (const auto& f : files) {
        auto [plan, img_tiles] = make_tiles(load_image(f), cfg.tile);
        for (auto& t : img_tiles) tiles.push_back(std::move(t));
    }
    std::cerr << "training on " << tiles.size() << " tiles of " << cfg.tile << "x" << cfg.tile
              << " from " << files.size() << " images\n";

    TrainConfig tc;
    tc.lr = a.lr;
    tc.batch = a.batch;
    tc.epochs = a.epochs;
    tc.lambda = a.lambda;
    tc.seed = a.seed;
    tc.ssim_window = a.ssim_window;

    std::ofstream log_file;
    std::ostream* csv = &std::cout;
    if (!a.log.empty()) {
        log_file.open(a.log);
        if (!log_file) throw IoError("cannot write log file " + a.log);
        csv = &log_file;
    }

    WeightStore result = train(tiles, cfg, tc, csv, &std::cerr);

    const fs::path out_path(a.out);
    const fs::path tmp = out_path.string() + ".tmp";
    save_weights(result, tmp);
    fs::rename(tmp, out_path);
    std::cerr << "wrote " << result.count() << " tensors -> " << a.out << "\n";
    return 0;
}

int run_eval(const EvalArgs& a) {
    struct Triple {
        std::string name;
        fs::path f, ir, vis;
    };
    std::vector<Triple> triples;

    const bool dir_mode = fs::is_directory(a.ir);
    if (dir_mode != fs::is_directory(a.vis) || dir_mode != fs::is_directory(a.fused))
        throw ContractError("--ir, --vis and --fused must be all files or all directories");

    if (dir_mode) {
        const auto fi = list_images(a.ir);
        const auto fv = list_images(a.vis);
        const auto ff = list_images(a.fused);
        const std::size_t n = std::min({fi.size(), fv.size(), ff.size()});
        if (fi.size() != fv.size() || fi.size() != ff.size()) {
            std::string orphans;
            for (std::size_t i = n; i < fi.size(); ++i) orphans += " " + fi[i].filename().string();
            for (std::size_t i = n; i < fv.size(); ++i) orphans += " " + fv[i].filename().string();
            for (std::size_t i = n; i < ff.size(); ++i) orphans += " " + ff[i].filename().string();
            throw ContractError("unpaired files across directories:" + orphans);
        }
        for (std::size_t i = 0; i < n; ++i)
            triples.push_back({ff[i].filename().string(), ff[i], fi[i], fv[i]});
    } else {
        triples.push_back({fs::path(a.fused).filename().string(), a.fused, a.ir, a.vis});
    }

    std::ofstream csv_file;
    std::ostream* os = &std::cout;
    if (!a.csv.empty()) {
        csv_file.open(a.csv);
        if (!csv_file) throw IoError("cannot write csv file " + a.csv);
        os = &csv_file;
    }

    metrics::write_csv_header(*os);
    for (const auto& t : triples) {
        const ImagePlane f = load_image(t.f);
        const ImagePlane ir = load_image(t.ir);
        const ImagePlane vis = load_image(t.vis);
        metrics::write_csv_row(*os, t.name, metrics::evaluate(f, ir, vis));
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"infrared/visible image fusion with a Swin-transformer encoder"};
    app.require_subcommand(1);

    FuseArgs fa;
    auto* fuse = app.add_subcommand("fuse", "fuse an infrared/visible pair");
    fuse->add_option("--ir", fa.ir, "infrared image (PNG or PGM)")->required();
    fuse->add_option("--vis", fa.vis, "visible image (PNG or PGM)")->required();
    fuse->add_option("--weights", fa.weights, "SWNF weight file")->required();
    fuse->add_option("--out", fa.out, "output image path (.png or .pgm)")->required();
    fuse->add_option("--mode", fa.mode, "fusion mode: row|col|both")
        ->check(CLI::IsMember({"row", "col", "both"}))
        ->capture_default_str();
    fuse->add_option("--tile", fa.tile, "tile side override (0 = from config/weights)");
    fuse->add_option("--config", fa.config, "architecture config file");
    fuse->add_option("--threads", fa.threads, "tile worker threads (0 = hardware)");

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "train autoencoder weights");
    train_cmd->add_option("--data", ta.data, "directory of training images")->required();
    train_cmd->add_option("--out", ta.out, "output SWNF weight file")->required();
    train_cmd->add_option("--epochs", ta.epochs)->capture_default_str();
    train_cmd->add_option("--batch", ta.batch)->capture_default_str();
    train_cmd->add_option("--lr", ta.lr, "learning rate")->capture_default_str();
    train_cmd->add_option("--lambda", ta.lambda, "SSIM loss weight")->capture_default_str();
    train_cmd->add_option("--seed", ta.seed)->capture_default_str();
    train_cmd->add_option("--config", ta.config, "architecture config file");
    train_cmd->add_flag("--no-residual", ta.no_residual, "disable block skip connections");
    auto* rstb_opt = train_cmd->add_option("--rstb", ta.rstb, "block count")->capture_default_str();
    auto* stl_opt = train_cmd->add_option("--stl", ta.stl, "layers per block")->capture_default_str();
    train_cmd->add_option("--tile", ta.tile, "tile side override");
    train_cmd->add_option("--ssim-window", ta.ssim_window, "SSIM window size")->capture_default_str();
    train_cmd->add_option("--log", ta.log, "CSV loss log file (default: stdout)");
    train_cmd->add_option("--threads", ta.threads, "must be 1 (deterministic)")->capture_default_str();

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("eval", "fusion-quality metrics");
    eval_cmd->add_option("--ir", ea.ir, "infrared image or directory")->required();
    eval_cmd->add_option("--vis", ea.vis, "visible image or directory")->required();
    eval_cmd->add_option("--fused", ea.fused, "fused image or directory")->required();
    eval_cmd->add_option("--csv", ea.csv, "CSV output file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (fuse->parsed()) return run_fuse(fa);
        if (train_cmd->parsed()) return run_train(ta, rstb_opt->count() > 0, stl_opt->count() > 0);
        if (eval_cmd->parsed()) return run_eval(ea);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

#include "swinfuse/config.hpp"

#include <fstream>
#include <sstream>

namespace swinfuse {

void ModelConfig::validate() const {
    if (channels <= 0 || rstb_count <= 0 || stl_count <= 0 || window <= 0 || tile <= 0)
        throw ConfigError("config: all architecture sizes must be positive");
    if (mlp_ratio <= 0.0) throw ConfigError("config: mlp_ratio must be positive");
    if (heads.size() != static_cast<std::size_t>(rstb_count))
        throw ConfigError("config: " + std::to_string(heads.size()) + " head entries for " +
                          std::to_string(rstb_count) + " blocks");
    for (int h : heads) {
        if (h <= 0) throw ConfigError("config: head counts must be positive");
        if (channels % h != 0)
            throw ConfigError("config: channels " + std::to_string(channels) +
                              " not divisible by head count " + std::to_string(h));
    }
    if (tile % window != 0)
        throw ConfigError("config: tile side " + std::to_string(tile) +
                          " not divisible by window size " + std::to_string(window));
}

std::vector<int> extend_heads(const std::vector<int>& heads, int rstb_count) {
    std::vector<int> out = heads;
    if (out.empty()) out.push_back(1);
    if (out.size() > static_cast<std::size_t>(rstb_count)) out.resize(static_cast<std::size_t>(rstb_count));
    while (out.size() < static_cast<std::size_t>(rstb_count)) out.push_back(out.back());
    return out;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<int> parse_int_list(const std::string& s, const std::string& key) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoi(trim(item)));
        } catch (const std::exception&) {
            throw ConfigError("config: bad value '" + item + "' for key " + key);
        }
    }
    return out;
}

} // namespace

ModelConfig load_config_file(const std::filesystem::path& path, ModelConfig base) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    ModelConfig cfg = base;
    bool heads_given = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config " + path.string() + ":" + std::to_string(lineno) +
                              ": expected key=value, got '" + t + "'");
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        try {
            if (key == "channels") cfg.channels = std::stoi(val);
            else if (key == "rstb") cfg.rstb_count = std::stoi(val);
            else if (key == "stl") cfg.stl_count = std::stoi(val);
            else if (key == "window") cfg.window = std::stoi(val);
            else if (key == "heads") { cfg.heads = parse_int_list(val, key); heads_given = true; }
            else if (key == "mlp_ratio") cfg.mlp_ratio = std::stod(val);
            else if (key == "tile") cfg.tile = std::stoi(val);
            else if (key == "residual") cfg.residual = std::stoi(val) != 0;
            else
                throw ConfigError("config " + path.string() + ":" + std::to_string(lineno) +
                                  ": unknown key '" + key + "'");
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("config " + path.string() + ":" + std::to_string(lineno) +
                              ": bad value '" + val + "' for key '" + key + "'");
        }
    }
    cfg.heads = heads_given ? extend_heads(cfg.heads, cfg.rstb_count)
                            : extend_heads(base.heads, cfg.rstb_count);
    return cfg;
}

void save_config_file(const ModelConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write config file " + path.string());
    out << "channels=" << cfg.channels << "\n";
    out << "rstb=" << cfg.rstb_count << "\n";
    out << "stl=" << cfg.stl_count << "\n";
    out << "window=" << cfg.window << "\n";
    out << "heads=";
    for (std::size_t i = 0; i < cfg.heads.size(); ++i) out << (i ? "," : "") << cfg.heads[i];
    out << "\n";
    out << "mlp_ratio=" << cfg.mlp_ratio << "\n";
    out << "tile=" << cfg.tile << "\n";
    out << "residual=" << (cfg.residual ? 1 : 0) << "\n";
    if (!out) throw IoError("failed writing config file " + path.string());
}

} // namespace swinfuse

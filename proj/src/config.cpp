#include "tetdiff/config.hpp"

#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "tetdiff/errors.hpp"

namespace tetdiff {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    std::size_t e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& value);

template <>
int parse_value<int>(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    int v;
    try {
        v = std::stoi(value, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + value + "'");
    }
    if (pos != value.size())
        throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + value + "'");
    return v;
}

template <>
double parse_value<double>(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    double v;
    try {
        v = std::stod(value, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + value + "'");
    }
    if (pos != value.size())
        throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + value + "'");
    return v;
}

template <>
bool parse_value<bool>(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw std::invalid_argument("config: key '" + key + "' expects true/false, got '" + value + "'");
}

template <>
std::string parse_value<std::string>(const std::string& key, const std::string& value) {
    (void)key;
    return value;
}

template <>
std::uint64_t parse_value<std::uint64_t>(const std::string& key, const std::string& value) {
    try {
        return std::stoull(value);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' expects an unsigned integer, got '" +
                                    value + "'");
    }
}

using Setter = std::function<void(Config&, const std::string&, const std::string&)>;

template <typename Section, typename T>
Setter make_setter(Section Config::* section, T Section::* field) {
    return [section, field](Config& c, const std::string& key, const std::string& value) {
        c.*section.*field = parse_value<T>(key, value);
    };
}

const std::map<std::string, Setter>& registry() {
    static const std::map<std::string, Setter> reg = [] {
        std::map<std::string, Setter> r;
        r["grid.resolution"] = make_setter(&Config::grid, &Config::Grid::resolution);
        r["grid.extent"] = make_setter(&Config::grid, &Config::Grid::extent);
        r["grid.delta_max_multiplier"] =
            make_setter(&Config::grid, &Config::Grid::delta_max_multiplier);

        r["fit.learning_rate"] = make_setter(&Config::fit, &Config::Fit::learning_rate);
        r["fit.iterations"] = make_setter(&Config::fit, &Config::Fit::iterations);
        r["fit.chamfer_samples"] = make_setter(&Config::fit, &Config::Fit::chamfer_samples);
        r["fit.sdf_reg_start"] = make_setter(&Config::fit, &Config::Fit::sdf_reg_start);
        r["fit.sdf_reg_end"] = make_setter(&Config::fit, &Config::Fit::sdf_reg_end);

        r["diffusion.T"] = make_setter(&Config::diffusion, &Config::Diffusion::T);
        r["diffusion.beta_start"] = make_setter(&Config::diffusion, &Config::Diffusion::beta_start);
        r["diffusion.beta_end"] = make_setter(&Config::diffusion, &Config::Diffusion::beta_end);
        r["diffusion.sampler"] = make_setter(&Config::diffusion, &Config::Diffusion::sampler);
        r["diffusion.steps"] = make_setter(&Config::diffusion, &Config::Diffusion::steps);
        r["diffusion.spacing"] = make_setter(&Config::diffusion, &Config::Diffusion::spacing);
        r["diffusion.unfreeze_T"] = make_setter(&Config::diffusion, &Config::Diffusion::unfreeze_T);
        r["diffusion.boundary_vacuum"] =
            make_setter(&Config::diffusion, &Config::Diffusion::boundary_vacuum);

        r["train.steps"] = make_setter(&Config::train, &Config::Train::steps);
        r["train.batch"] = make_setter(&Config::train, &Config::Train::batch);
        r["train.learning_rate"] = make_setter(&Config::train, &Config::Train::learning_rate);
        r["train.beta1"] = make_setter(&Config::train, &Config::Train::beta1);
        r["train.beta2"] = make_setter(&Config::train, &Config::Train::beta2);
        r["train.jitter"] = make_setter(&Config::train, &Config::Train::jitter);
        r["train.layers"] = make_setter(&Config::train, &Config::Train::layers);
        r["train.width1"] = make_setter(&Config::train, &Config::Train::width1);
        r["train.width2"] = make_setter(&Config::train, &Config::Train::width2);
        r["train.time_dim"] = make_setter(&Config::train, &Config::Train::time_dim);

        r["postprocess.smooth_lambda"] =
            make_setter(&Config::postprocess, &Config::Postprocess::smooth_lambda);
        r["postprocess.smooth_steps"] =
            make_setter(&Config::postprocess, &Config::Postprocess::smooth_steps);
        r["postprocess.component_fraction"] =
            make_setter(&Config::postprocess, &Config::Postprocess::component_fraction);

        r["metrics.samples"] = make_setter(&Config::metrics, &Config::Metrics::samples);
        r["metrics.jsd_resolution"] = make_setter(&Config::metrics, &Config::Metrics::jsd_resolution);
        r["metrics.emd"] = make_setter(&Config::metrics, &Config::Metrics::emd);
        r["metrics.emd_subsample"] = make_setter(&Config::metrics, &Config::Metrics::emd_subsample);

        r["paths.out_dir"] = make_setter(&Config::paths, &Config::Paths::out_dir);

        r["seed"] = [](Config& c, const std::string& key, const std::string& value) {
            c.seed = parse_value<std::uint64_t>(key, value);
        };
        return r;
    }();
    return reg;
}

} // namespace

void apply_override(Config& cfg, const std::string& key, const std::string& value) {
    auto it = registry().find(key);
    if (it == registry().end()) throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second(cfg, key, trim(value));
}

void validate(const Config& cfg) {
    auto bad = [](const std::string& key, const std::string& why) {
        throw std::invalid_argument("config: invalid value for '" + key + "': " + why);
    };
    if (cfg.grid.resolution < 2) bad("grid.resolution", "must be >= 2");
    if (cfg.grid.extent <= 0) bad("grid.extent", "must be positive");
    if (cfg.grid.delta_max_multiplier <= 0) bad("grid.delta_max_multiplier", "must be positive");
    if (cfg.fit.learning_rate <= 0) bad("fit.learning_rate", "must be positive");
    if (cfg.fit.iterations < 0) bad("fit.iterations", "must be >= 0");
    if (cfg.fit.chamfer_samples < 1) bad("fit.chamfer_samples", "must be positive");
    if (cfg.fit.sdf_reg_end > cfg.fit.sdf_reg_start) bad("fit.sdf_reg_end", "decay end > start");
    if (cfg.diffusion.T < 2) bad("diffusion.T", "must be >= 2");
    if (!(cfg.diffusion.beta_start > 0) || cfg.diffusion.beta_start > cfg.diffusion.beta_end ||
        cfg.diffusion.beta_end >= 1)
        bad("diffusion.beta_start/beta_end", "need 0 < beta_start <= beta_end < 1");
    if (cfg.diffusion.sampler != "ddpm" && cfg.diffusion.sampler != "ddim")
        bad("diffusion.sampler", "must be ddpm or ddim");
    if (cfg.diffusion.steps < 1 || cfg.diffusion.steps > cfg.diffusion.T)
        bad("diffusion.steps", "need 1 <= steps <= T");
    if (cfg.diffusion.spacing != "quadratic" && cfg.diffusion.spacing != "uniform")
        bad("diffusion.spacing", "must be quadratic or uniform");
    if (cfg.diffusion.unfreeze_T < 0 || cfg.diffusion.unfreeze_T > cfg.diffusion.T)
        bad("diffusion.unfreeze_T", "must be in [0, T]");
    if (cfg.train.steps < 0) bad("train.steps", "must be >= 0");
    if (cfg.train.batch < 1) bad("train.batch", "must be >= 1");
    if (cfg.train.learning_rate <= 0) bad("train.learning_rate", "must be positive");
    if (cfg.train.jitter < 0) bad("train.jitter", "must be >= 0");
    if (cfg.train.width1 < 1 || cfg.train.width2 < 1) bad("train.width1/width2", "must be >= 1");
    if (cfg.train.layers < 2) bad("train.layers", "must be >= 2");
    if (cfg.train.time_dim < 2 || cfg.train.time_dim % 2 != 0)
        bad("train.time_dim", "must be even and >= 2");
    if (cfg.postprocess.smooth_lambda < 0 || cfg.postprocess.smooth_lambda > 1)
        bad("postprocess.smooth_lambda", "must be in [0,1]");
    if (cfg.postprocess.smooth_steps < 0) bad("postprocess.smooth_steps", "must be >= 0");
    if (cfg.postprocess.component_fraction < 0 || cfg.postprocess.component_fraction >= 1)
        bad("postprocess.component_fraction", "must be in [0,1)");
    if (cfg.metrics.samples < 1) bad("metrics.samples", "must be positive");
    if (cfg.metrics.jsd_resolution < 1) bad("metrics.jsd_resolution", "must be positive");
    if (cfg.metrics.emd_subsample < 1) bad("metrics.emd_subsample", "must be positive");
}

Config parse_config(const std::string& path, const std::vector<std::string>& overrides) {
    Config cfg;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("config: cannot open: " + path);
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            std::size_t eq = t.find('=');
            if (eq == std::string::npos) throw ParseError("config: expected 'key = value'", line_no);
            std::string key = trim(t.substr(0, eq));
            std::string value = trim(t.substr(eq + 1));
            if (key.empty() || value.empty())
                throw ParseError("config: expected 'key = value'", line_no);
            apply_override(cfg, key, value);
        }
    }
    for (const std::string& ov : overrides) {
        std::size_t eq = ov.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: override must be key=value, got '" + ov + "'");
        apply_override(cfg, trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
    }
    validate(cfg);
    return cfg;
}

} // namespace tetdiff

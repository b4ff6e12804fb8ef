#include "hpylori/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdio>
#include <functional>
#include <sstream>
#include <vector>

#include "hpylori/error.hpp"
#include "text_util.hpp"

namespace hpylori {

namespace {

struct Field {
    const char* section;
    const char* key;
    std::function<std::string()> get;
    std::function<void(const std::string&)> set;
};

template <typename V>
V parse_value(const std::string& text, const std::string& name) {
    try {
        return detail::parse<V>(text, name);
    } catch (const Error&) {
        fail(ErrorKind::Config, "invalid value '" + text + "' for " + name);
    }
}

template <typename V>
Field scalar(const char* section, const char* key, V& ref) {
    const std::string name = std::string(section) + "." + key;
    return {section, key,
            [&ref] {
                if constexpr (std::is_floating_point_v<V>) return detail::fmt(ref);
                else return std::to_string(ref);
            },
            [&ref, name](const std::string& v) { ref = parse_value<V>(v, name); }};
}

Field int_list(const char* section, const char* key, std::vector<int>& ref) {
    const std::string name = std::string(section) + "." + key;
    return {section, key,
            [&ref] {
                std::string out;
                for (std::size_t i = 0; i < ref.size(); ++i) out += (i ? "," : "") + std::to_string(ref[i]);
                return out;
            },
            [&ref, name](const std::string& v) {
                std::vector<int> out;
                for (const auto& part : detail::split(v)) out.push_back(parse_value<int>(part, name));
                ref = std::move(out);
            }};
}

Field path_field(const char* section, const char* key, std::filesystem::path& ref) {
    return {section, key, [&ref] { return ref.string(); },
            [&ref](const std::string& v) { ref = detail::trim(v); }};
}

// The single table describing the file schema; canonical(), to_ini(),
// parsing and overrides all walk it in this order.
std::vector<Field> fields(PipelineConfig& c) {
    auto& s = c.synth;
    return {
        scalar("red", "hue_half_width", c.red.hue_half_width),
        scalar("red", "min_saturation", c.red.min_saturation),
        scalar("red", "min_value", c.red.min_value),
        scalar("mask", "close_radius", c.mask.close_radius),
        scalar("mask", "min_component_px", c.mask.min_component_px),
        scalar("mask", "saturation_floor", c.mask.saturation_floor),
        scalar("sampling", "n_train_windows", c.sampling.n_train_windows),
        scalar("sampling", "stride", c.sampling.stride),
        scalar("sampling", "window_size", c.sampling.window_size),
        scalar("sampling", "resized_to", c.sampling.resized_to),
        scalar("autoencoder", "input_channels", c.autoencoder.input_channels),
        int_list("autoencoder", "enc_channels", c.autoencoder.enc_channels),
        int_list("autoencoder", "enc_strides", c.autoencoder.enc_strides),
        int_list("autoencoder", "dec_channels", c.autoencoder.dec_channels),
        int_list("autoencoder", "dec_strides", c.autoencoder.dec_strides),
        scalar("autoencoder", "kernel", c.autoencoder.kernel),
        scalar("autoencoder", "leaky_slope", c.autoencoder.leaky_slope),
        scalar("autoencoder", "bn_momentum", c.autoencoder.bn_momentum),
        scalar("autoencoder", "bn_eps", c.autoencoder.bn_eps),
        scalar("train", "epochs", c.train.epochs),
        scalar("train", "batch_size", c.train.batch_size),
        scalar("train", "learning_rate", c.train.learning_rate),
        scalar("train", "beta1", c.train.beta1),
        scalar("train", "beta2", c.train.beta2),
        scalar("train", "adam_eps", c.train.adam_eps),
        scalar("evaluation", "k", c.evaluation.k),
        scalar("synth", "n_negative", s.n_negative),
        scalar("synth", "n_positive", s.n_positive),
        scalar("synth", "density_min", s.density_min),
        scalar("synth", "density_max", s.density_max),
        scalar("synth", "slides_per_patient", s.slides_per_patient),
        scalar("synth", "width", s.slide.width),
        scalar("synth", "height", s.slide.height),
        scalar("synth", "n_blobs", s.slide.n_blobs),
        scalar("synth", "tissue_hue_min", s.slide.tissue_hue_min),
        scalar("synth", "tissue_hue_max", s.slide.tissue_hue_max),
        scalar("synth", "spot_radius_min", s.slide.spot_radius_min),
        scalar("synth", "spot_radius_max", s.slide.spot_radius_max),
        scalar("synth", "spot_hue_min", s.slide.spot_hue_min),
        scalar("synth", "spot_hue_max", s.slide.spot_hue_max),
        scalar("synth", "texture_noise", s.slide.texture_noise),
        path_field("paths", "workdir", c.paths.workdir),
        path_field("paths", "manifest", c.paths.manifest),
        scalar("seeds", "seed", c.seed),
    };
}

void set_field(PipelineConfig& cfg, const std::string& section, const std::string& key,
               const std::string& value) {
    for (auto& f : fields(cfg)) {
        if (section == f.section && key == f.key) {
            f.set(value);
            // The network input is the resized window; there is no separate key.
            cfg.autoencoder.input_size = cfg.sampling.resized_to;
            return;
        }
    }
    fail(ErrorKind::Config, "unknown config key " + section + "." + key);
}

}  // namespace

void PipelineConfig::validate() const {
    auto bad = [](const std::string& m) { fail(ErrorKind::Config, m); };
    if (!(red.hue_half_width >= 0.0 && red.hue_half_width <= 180.0)) bad("red.hue_half_width must lie in [0, 180]");
    if (!(red.min_saturation >= 0.0 && red.min_saturation <= 1.0)) bad("red.min_saturation must lie in [0, 1]");
    if (!(red.min_value >= 0.0 && red.min_value <= 1.0)) bad("red.min_value must lie in [0, 1]");
    if (mask.close_radius < 0) bad("mask.close_radius must be >= 0");
    if (mask.min_component_px < 0) bad("mask.min_component_px must be >= 0");
    if (!(mask.saturation_floor >= 0.0 && mask.saturation_floor < 1.0)) bad("mask.saturation_floor must lie in [0, 1)");
    if (sampling.n_train_windows < 1) bad("sampling.n_train_windows must be >= 1");
    if (sampling.stride < 1) bad("sampling.stride must be >= 1");
    if (sampling.window_size < 1 || sampling.resized_to < 1) bad("sampling window sizes must be >= 1");
    if (sampling.resized_to > sampling.window_size) bad("sampling.resized_to must not exceed window_size");
    if (sampling.resized_to != autoencoder.input_size) {
        bad("sampling.resized_to must equal the autoencoder input size (" +
            std::to_string(autoencoder.input_size) + ")");
    }
    autoencoder.validate();
    train.validate();
    if (evaluation.k < 2) bad("evaluation.k must be >= 2");
    synth.validate();
    if (paths.workdir.empty()) bad("paths.workdir must not be empty");
}

std::string PipelineConfig::canonical() const {
    PipelineConfig copy = *this;
    std::string out;
    for (const auto& f : fields(copy)) {
        if (std::string(f.section) == "paths") continue;
        out += std::string(f.section) + "." + f.key + "=" + f.get() + "\n";
    }
    return out;
}

std::string PipelineConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string PipelineConfig::to_ini() const {
    PipelineConfig copy = *this;
    std::string out;
    std::string current;
    for (const auto& f : fields(copy)) {
        if (current != f.section) {
            out += (current.empty() ? "[" : "\n[") + std::string(f.section) + "]\n";
            current = f.section;
        }
        out += std::string(f.key) + " = " + f.get() + "\n";
    }
    return out;
}

PipelineConfig parse_config(const std::string& ini_text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in(ini_text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        fail(ErrorKind::Config, std::string("config syntax error: ") + e.what());
    }
    PipelineConfig cfg;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            fail(ErrorKind::Config, "config key '" + section + "' is outside any section");
        }
        for (const auto& [key, value] : body) set_field(cfg, section, key, value.data());
    }
    cfg.validate();
    return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Config, "cannot open config file " + path.string());
    std::stringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

void apply_override(PipelineConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
        fail(ErrorKind::Config, "override must look like section.key=value, got '" + assignment + "'");
    }
    set_field(cfg, detail::trim(assignment.substr(0, dot)), detail::trim(assignment.substr(dot + 1, eq - dot - 1)),
              assignment.substr(eq + 1));
}

}  // namespace hpylori

#include "redgan/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace redgan {

void TrainConfig::validate() const
{
    if (epochs_seg == 0) throw ConfigError("epochs_seg must be positive");
    if (epochs_gan == 0 && gan_steps == 0) throw ConfigError("epochs_gan must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    for (auto [name, v] : {std::pair{"lr_g", lr_g}, {"lr_d", lr_d}, {"lr_seg", lr_seg}})
        if (!(v > 0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be positive");
    for (auto [name, v] : {std::pair{"beta1", beta1}, {"beta2", beta2}, {"seg_beta1", seg_beta1}, {"seg_beta2", seg_beta2}})
        if (!(v >= 0 && v < 1)) throw ConfigError(std::string(name) + " must lie in [0, 1)");
    weights.validate();
    if (folds == 0) throw ConfigError("folds must be positive");
    if (!(test_fraction > 0 && test_fraction < 1)) throw ConfigError("test_fraction must lie in (0, 1)");
}

void RunConfig::sync()
{
    generator.image_size = segmentor.image_size = data.image_size;
    generator.n_classes = data.n_classes;
    generator.n_modalities = discriminator.n_modalities = segmentor.n_modalities = data.n_modalities;
    generator.n_labels = discriminator.n_labels = segmentor.n_labels = data.n_labels;
    discriminator.feat_channels = segmentor.feature_channels();
}

void RunConfig::validate() const
{
    data.validate();
    generator.validate();
    discriminator.validate();
    segmentor.validate();
    train.validate();
}

RunConfig default_run_config()
{
    RunConfig c;
    c.sync();
    return c;
}

namespace {

std::string fmt_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v)
{
    std::size_t pos = 0;
    unsigned long long x = 0;
    try {
        if (v.empty() || v[0] == '-') throw std::invalid_argument("neg");
        x = std::stoull(v, &pos);
    } catch (const std::exception&) {
        pos = std::string::npos;
    }
    if (pos != v.size()) throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
    return x;
}

double parse_double(const std::string& key, const std::string& v)
{
    std::size_t pos = 0;
    double x = 0;
    try {
        x = std::stod(v, &pos);
    } catch (const std::exception&) {
        pos = std::string::npos;
    }
    if (pos != v.size() || !std::isfinite(x))
        throw ConfigError("key '" + key + "': expected a finite number, got '" + v + "'");
    return x;
}

bool parse_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

template <class F>
auto parse_list(const std::string& key, const std::string& v, F parse)
{
    std::vector<decltype(parse(key, v))> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse(key, trim(item)));
    if (out.empty()) throw ConfigError("key '" + key + "': empty list");
    return out;
}

template <class V>
std::string join(const std::vector<V>& v, std::string (*f)(V))
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + f(v[i]);
    return s;
}

std::string fmt_size(std::size_t v) { return std::to_string(v); }

struct Key {
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define REDGAN_SIZE(path)                                                                                      \
    Key{[](RunConfig& c, const std::string& k, const std::string& v) {                                         \
            c.path = static_cast<std::size_t>(parse_u64(k, v));                                                \
        },                                                                                                     \
        [](const RunConfig& c) { return std::to_string(c.path); }}
#define REDGAN_DOUBLE(path)                                                                                    \
    Key{[](RunConfig& c, const std::string& k, const std::string& v) { c.path = parse_double(k, v); },         \
        [](const RunConfig& c) { return fmt_double(c.path); }}
#define REDGAN_SIZE_LIST(path)                                                                                 \
    Key{[](RunConfig& c, const std::string& k, const std::string& v) {                                         \
            auto l = parse_list(k, v, parse_u64);                                                              \
            c.path.assign(l.begin(), l.end());                                                                 \
        },                                                                                                     \
        [](const RunConfig& c) { return join<std::size_t>(c.path, fmt_size); }}
#define REDGAN_STYLE(field)                                                                                    \
    Key{[](RunConfig& c, const std::string& k, const std::string& v) {                                         \
            auto l = parse_list(k, v, parse_double);                                                           \
            if (c.data.styles.size() < l.size()) c.data.styles.resize(l.size());                               \
            for (std::size_t i = 0; i < l.size(); ++i) c.data.styles[i].field = l[i];                          \
        },                                                                                                     \
        [](const RunConfig& c) {                                                                               \
            std::vector<double> l;                                                                             \
            for (const auto& s : c.data.styles) l.push_back(s.field);                                          \
            return join<double>(l, fmt_double);                                                                \
        }}

const std::map<std::string, Key>& keys()
{
    static const std::map<std::string, Key> table = {
        {"n_records", REDGAN_SIZE(data.n_records)},
        {"image_size", REDGAN_SIZE(data.image_size)},
        {"n_classes", REDGAN_SIZE(data.n_classes)},
        {"n_modalities", REDGAN_SIZE(data.n_modalities)},
        {"n_labels", REDGAN_SIZE(data.n_labels)},
        {"class_proportions",
         Key{[](RunConfig& c, const std::string& k, const std::string& v) {
                 c.data.class_proportions = parse_list(k, v, parse_double);
             },
             [](const RunConfig& c) { return join<double>(c.data.class_proportions, fmt_double); }}},
        {"class_gains", REDGAN_STYLE(gain)},
        {"class_texture_frequencies", REDGAN_STYLE(texture_frequency)},
        {"class_noise_sigmas", REDGAN_STYLE(noise_sigma)},
        {"lesions_min", REDGAN_SIZE(data.lesions_min)},
        {"lesions_max", REDGAN_SIZE(data.lesions_max)},
        {"radius_min", REDGAN_DOUBLE(data.radius_min)},
        {"radius_max", REDGAN_DOUBLE(data.radius_max)},
        {"g_n_blocks", REDGAN_SIZE(generator.n_blocks)},
        {"g_n_upsamples", REDGAN_SIZE(generator.n_upsamples)},
        {"g_base_channels", REDGAN_SIZE(generator.base_channels)},
        {"g_min_channels", REDGAN_SIZE(generator.min_channels)},
        {"g_spade_hidden", REDGAN_SIZE(generator.spade_hidden)},
        {"g_embed_width", REDGAN_SIZE(generator.embed_width)},
        {"d_n_scales", REDGAN_SIZE(discriminator.n_scales)},
        {"d_base_channels", REDGAN_SIZE(discriminator.base_channels)},
        {"s_stage_depths", REDGAN_SIZE_LIST(segmentor.stage_depths)},
        {"s_encoder_widths", REDGAN_SIZE_LIST(segmentor.encoder_widths)},
        {"s_decoder_widths", REDGAN_SIZE_LIST(segmentor.decoder_widths)},
        {"s_features",
         Key{[](RunConfig& c, const std::string& k, const std::string& v) {
                 if (v == "probabilities")
                     c.segmentor.features = FeatureSource::Probabilities;
                 else if (v == "decoder")
                     c.segmentor.features = FeatureSource::DecoderActivations;
                 else
                     throw ConfigError("key '" + k + "': expected probabilities or decoder, got '" + v + "'");
             },
             [](const RunConfig& c) {
                 return std::string(c.segmentor.features == FeatureSource::Probabilities ? "probabilities"
                                                                                         : "decoder");
             }}},
        {"epochs_seg", REDGAN_SIZE(train.epochs_seg)},
        {"epochs_gan", REDGAN_SIZE(train.epochs_gan)},
        {"gan_steps", REDGAN_SIZE(train.gan_steps)},
        {"batch_size", REDGAN_SIZE(train.batch_size)},
        {"lr_g", REDGAN_DOUBLE(train.lr_g)},
        {"lr_d", REDGAN_DOUBLE(train.lr_d)},
        {"beta1", REDGAN_DOUBLE(train.beta1)},
        {"beta2", REDGAN_DOUBLE(train.beta2)},
        {"lr_seg", REDGAN_DOUBLE(train.lr_seg)},
        {"seg_beta1", REDGAN_DOUBLE(train.seg_beta1)},
        {"seg_beta2", REDGAN_DOUBLE(train.seg_beta2)},
        {"lambda_fm", REDGAN_DOUBLE(train.weights.lambda_fm)},
        {"lambda_jaccard", REDGAN_DOUBLE(train.weights.lambda_jaccard)},
        {"third_player",
         Key{[](RunConfig& c, const std::string& k, const std::string& v) { c.train.third_player = parse_bool(k, v); },
             [](const RunConfig& c) { return std::string(c.train.third_player ? "true" : "false"); }}},
        {"folds", REDGAN_SIZE(train.folds)},
        {"test_fraction", REDGAN_DOUBLE(train.test_fraction)},
        {"seed",
         Key{[](RunConfig& c, const std::string& k, const std::string& v) {
                 c.train.seed = c.data.seed = parse_u64(k, v);
             },
             [](const RunConfig& c) { return std::to_string(c.train.seed); }}},
    };
    return table;
}

} // namespace

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value)
{
    const auto& t = keys();
    auto it = t.find(key);
    if (it == t.end()) throw ConfigError("unknown key '" + key + "'");
    it->second.set(cfg, key, value);
}

RunConfig parse_run_config(const std::string& text, const std::string& origin)
{
    RunConfig cfg = default_run_config();
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    std::set<std::string> seen;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string where = origin + ":" + std::to_string(lineno);
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(where + ": missing key");
        if (!seen.insert(key).second) throw ConfigError(where + ": key '" + key + "' given twice");
        try {
            set_config_value(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + ": " + e.what());
        }
    }
    cfg.sync();
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_run_config(ss.str(), path);
}

std::string to_text(const RunConfig& cfg)
{
    std::string out;
    for (const auto& [k, key] : keys()) out += k + "=" + key.get(cfg) + "\n";
    return out;
}

std::string fingerprint(const RunConfig& cfg)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : to_text(cfg)) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace redgan

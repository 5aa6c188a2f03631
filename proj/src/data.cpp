#include "redgan/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "redgan/blocks.hpp"

namespace redgan {

namespace fs = std::filesystem;

const char* split_name(SplitTag s) { return s == SplitTag::Train ? "train" : "test"; }

SplitTag split_from_name(const std::string& s)
{
    if (s == "train") return SplitTag::Train;
    if (s == "test") return SplitTag::Test;
    throw FormatError("unknown split tag '" + s + "'");
}

void ShapesMedConfig::validate() const
{
    if (n_records == 0) throw ConfigError("n_records must be positive");
    if (image_size < 16 || (image_size & (image_size - 1)))
        throw ConfigError("image_size must be a power of two >= 16, got " + std::to_string(image_size));
    if (n_classes == 0) throw ConfigError("n_classes must be positive");
    if (n_modalities == 0) throw ConfigError("n_modalities must be positive");
    if (n_labels == 0 || n_labels > 254) throw ConfigError("n_labels must be in [1, 254]");
    if (class_proportions.size() != n_classes)
        throw ConfigError("class_proportions has " + std::to_string(class_proportions.size()) + " entries, expected " +
                          std::to_string(n_classes));
    double total = 0;
    for (double p : class_proportions) {
        if (!(p > 0) || !std::isfinite(p)) throw ConfigError("class_proportions entries must be positive");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw ConfigError("class_proportions must sum to 1, got " + std::to_string(total));
    if (styles.size() != n_classes)
        throw ConfigError("need one style per class: " + std::to_string(styles.size()) + " vs " +
                          std::to_string(n_classes));
    for (const auto& s : styles)
        if (!(s.gain > 0) || s.texture_frequency < 0 || s.noise_sigma < 0)
            throw ConfigError("class style gain must be positive, frequency and noise non-negative");
    if (lesions_min == 0 || lesions_max < lesions_min) throw ConfigError("lesion count range invalid");
    if (!(radius_min > 0) || radius_max < radius_min || radius_max > 0.25)
        throw ConfigError("lesion radius range must satisfy 0 < min <= max <= 0.25");
}

std::vector<std::size_t> class_counts(std::size_t n, const std::vector<double>& proportions)
{
    std::vector<std::size_t> counts(proportions.size());
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < proportions.size(); ++k) {
        // nudge guards against 0.7 * 100 landing just below 70
        counts[k] = static_cast<std::size_t>(std::floor(proportions[k] * static_cast<double>(n) + 1e-9));
        assigned += counts[k];
    }
    if (assigned > n) throw ConfigError("class_proportions allocate more records than requested");
    const auto largest = std::max_element(proportions.begin(), proportions.end()) - proportions.begin();
    counts[static_cast<std::size_t>(largest)] += n - assigned;
    return counts;
}

namespace {

double structure_value(std::size_t m, int label, std::size_t n_labels)
{
    if (label < 0) return -0.9; // outside anatomy
    if (label == 0) return (m % 2) ? -0.1 : 0.0;
    const double l = label;
    if (m % 2 == 0) return 0.3 + 0.6 * l / static_cast<double>(n_labels);
    return (label % 2) ? -0.45 : 0.5;
}

struct Anatomy {
    double cx, cy, rx, ry;
    bool inside(double x, double y) const
    {
        const double dx = (x - cx) / rx, dy = (y - cy) / ry;
        return dx * dx + dy * dy <= 1.0;
    }
};

Anatomy draw_anatomy(Rng& rng, double S)
{
    std::uniform_real_distribution<double> jitter(-0.05, 0.05), radius(0.32, 0.42);
    return {S * (0.5 + jitter(rng)), S * (0.5 + jitter(rng)), S * radius(rng), S * radius(rng)};
}

} // namespace

Tensor<float> render_image(const Tensor<std::uint8_t>& mask, std::size_t n_modalities, std::size_t n_labels,
                           const ClassStyle& style, std::uint64_t seed)
{
    // Recovers the anatomy from the seed so rendering is a pure function of (mask, style, seed).
    const std::size_t S = mask.dim(0);
    Rng rng(seed);
    const Anatomy anat = draw_anatomy(rng, static_cast<double>(S));
    std::uniform_real_distribution<double> angle(0.0, 3.141592653589793), phase(0.0, 6.283185307179586);
    const double theta = angle(rng), ph = phase(rng);
    std::normal_distribution<double> noise(0.0, 1.0);
    Tensor<float> img(Shape{n_modalities, S, S});
    const double k = 6.283185307179586 * style.texture_frequency / static_cast<double>(S);
    for (std::size_t m = 0; m < n_modalities; ++m)
        for (std::size_t y = 0; y < S; ++y)
            for (std::size_t x = 0; x < S; ++x) {
                const int lab = mask[y * S + x];
                const bool in = lab > 0 || anat.inside(x + 0.5, y + 0.5);
                double v = structure_value(m, in ? lab : -1, n_labels);
                if (in) v += 0.15 * std::sin(k * (x * std::cos(theta) + y * std::sin(theta)) + ph + 0.7 * m);
                v = style.gain * v + style.noise_sigma * noise(rng);
                img[(m * S + y) * S + x] = static_cast<float>(std::clamp(v, -1.0, 1.0));
            }
    return img;
}

namespace {

Tensor<std::uint8_t> draw_mask(const ShapesMedConfig& cfg, std::uint64_t seed)
{
    const std::size_t S = cfg.image_size;
    const double Sd = static_cast<double>(S);
    Rng rng(seed);
    const Anatomy anat = draw_anatomy(rng, Sd);
    Tensor<std::uint8_t> mask(Shape{S, S});
    Rng lrng(derive_seed(seed, 0x1e5));
    std::uniform_int_distribution<std::size_t> count(cfg.lesions_min, cfg.lesions_max);
    std::uniform_real_distribution<double> rad(cfg.radius_min * Sd, cfg.radius_max * Sd), unit(-1.0, 1.0);
    const std::size_t n = count(lrng);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = rad(lrng);
        // centre inside the shrunken ellipse so the lesion stays in the anatomy
        double cx, cy;
        do {
            cx = anat.cx + unit(lrng) * std::max(1.0, anat.rx - r);
            cy = anat.cy + unit(lrng) * std::max(1.0, anat.ry - r);
        } while (!Anatomy{anat.cx, anat.cy, std::max(1.0, anat.rx - r), std::max(1.0, anat.ry - r)}.inside(cx, cy));
        for (std::size_t y = 0; y < S; ++y)
            for (std::size_t x = 0; x < S; ++x) {
                const double d = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
                for (std::size_t l = cfg.n_labels; l >= 1; --l) {
                    const double rl = r * static_cast<double>(cfg.n_labels - l + 1) / static_cast<double>(cfg.n_labels);
                    if (d <= rl) {
                        std::uint8_t& px = mask[y * S + x];
                        px = std::max<std::uint8_t>(px, static_cast<std::uint8_t>(l));
                        break;
                    }
                }
            }
    }
    return mask;
}

std::string record_id(std::size_t i)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "r%05zu", i);
    return buf;
}

} // namespace

std::vector<Record> generate_shapesmed(const ShapesMedConfig& cfg)
{
    cfg.validate();
    const auto counts = class_counts(cfg.n_records, cfg.class_proportions);
    std::vector<int> classes;
    for (std::size_t k = 0; k < counts.size(); ++k) classes.insert(classes.end(), counts[k], static_cast<int>(k));
    Rng order(derive_seed(cfg.seed, 0xc1a55));
    std::shuffle(classes.begin(), classes.end(), order);

    std::vector<Record> out(cfg.n_records);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(cfg.n_records); ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const std::uint64_t rs = derive_seed(cfg.seed, idx + 1);
        Record& r = out[idx];
        r.global_class = classes[idx];
        r.id = record_id(idx);
        r.mask = draw_mask(cfg, rs);
        r.image = render_image(r.mask, cfg.n_modalities, cfg.n_labels,
                               cfg.styles[static_cast<std::size_t>(r.global_class)], rs);
    }
    return out;
}

std::vector<Partition> split_protocol(std::size_t n, std::size_t n_repeats, double test_fraction, std::uint64_t seed)
{
    if (!(test_fraction > 0 && test_fraction < 1)) throw DomainError("test_fraction must lie in (0, 1)");
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
    if (n_test == 0 || n_test >= n)
        throw DomainError("cannot split " + std::to_string(n) + " records with test fraction " +
                          std::to_string(test_fraction));
    std::vector<Partition> out;
    for (std::size_t r = 0; r < n_repeats; ++r) {
        std::vector<std::size_t> ids(n);
        std::iota(ids.begin(), ids.end(), 0);
        Rng rng(derive_seed(seed, 0x5b117 + r));
        std::shuffle(ids.begin(), ids.end(), rng);
        Partition p;
        p.test.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
        p.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_test), ids.end());
        std::sort(p.test.begin(), p.test.end());
        std::sort(p.train.begin(), p.train.end());
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<Partition> split_protocol_stratified(const std::vector<int>& classes, std::size_t n_repeats,
                                                 double test_fraction, std::uint64_t seed)
{
    if (!(test_fraction > 0 && test_fraction < 1)) throw DomainError("test_fraction must lie in (0, 1)");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < classes.size(); ++i) by_class[classes[i]].push_back(i);
    std::vector<Partition> out;
    for (std::size_t r = 0; r < n_repeats; ++r) {
        Rng rng(derive_seed(seed, 0x57a7 + r));
        Partition p;
        for (auto& [c, ids] : by_class) {
            std::vector<std::size_t> v = ids;
            std::shuffle(v.begin(), v.end(), rng);
            auto k = static_cast<std::size_t>(std::llround(static_cast<double>(v.size()) * test_fraction));
            if (k == 0 && v.size() >= 2) k = 1;
            if (k >= v.size())
                throw DomainError("class " + std::to_string(c) + " has too few records (" + std::to_string(v.size()) +
                                  ") for a train/test split");
            p.test.insert(p.test.end(), v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k));
            p.train.insert(p.train.end(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
        }
        std::sort(p.test.begin(), p.test.end());
        std::sort(p.train.begin(), p.train.end());
        out.push_back(std::move(p));
    }
    return out;
}

// ---------------------------------------------------------------------------

void save_record(const std::string& path, const Record& r)
{
    if (r.id.empty() || r.id.find_first_of(" \t\n=") != std::string::npos)
        throw FormatError("record id must be non-empty without whitespace or '=': '" + r.id + "'");
    if (r.source.find_first_of(" \t\n=") != std::string::npos) throw FormatError("record source contains whitespace");
    if (r.mask.rank() != 2 || r.image.rank() != 3 || r.image.dim(1) != r.mask.dim(0) || r.image.dim(2) != r.mask.dim(1))
        throw DimensionError("record image " + shape_str(r.image.shape()) + " does not match mask " +
                             shape_str(r.mask.shape()));
    NamedContainer c;
    std::string header = "record id=" + r.id + " class=" + std::to_string(r.global_class) + " split=" +
                         split_name(r.split);
    if (!r.source.empty()) header += " source=" + r.source;
    c.header_lines.push_back(header);
    c.add("image", r.image);
    c.add("mask", r.mask);
    write_container(path, c);
}

Record load_record(const std::string& path)
{
    const NamedContainer c = read_container(path);
    if (c.header_lines.empty()) throw FormatError(path + ": missing record header");
    std::istringstream hs(c.header_lines[0]);
    std::string tok;
    hs >> tok;
    if (tok != "record") throw FormatError(path + ": header does not start with 'record'");
    Record r;
    bool have_id = false, have_class = false, have_split = false;
    while (hs >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw FormatError(path + ": malformed header token '" + tok + "'");
        const std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
        if (k == "id") {
            r.id = v;
            have_id = true;
        } else if (k == "class") {
            try {
                r.global_class = std::stoi(v);
            } catch (const std::exception&) {
                throw FormatError(path + ": bad class '" + v + "'");
            }
            have_class = true;
        } else if (k == "split") {
            r.split = split_from_name(v);
            have_split = true;
        } else if (k == "source") {
            r.source = v;
        } else {
            throw FormatError(path + ": unknown header key '" + k + "'");
        }
    }
    if (!have_id || !have_class || !have_split) throw FormatError(path + ": header lacks id, class or split");
    const NamedEntry* img = c.find("image");
    const NamedEntry* msk = c.find("mask");
    if (!img || !msk) throw FormatError(path + ": record needs 'image' and 'mask' entries");
    if (img->dtype != DType::F32) throw FormatError(path + ": image must be stored as f32");
    if (msk->dtype != DType::U8) throw FormatError(path + ": mask must be stored as u8");
    r.image = c.get_float<float>("image");
    r.mask = c.get_u8("mask");
    if (r.mask.rank() != 2 || r.image.rank() != 3 || r.image.dim(1) != r.mask.dim(0) ||
        r.image.dim(2) != r.mask.dim(1))
        throw FormatError(path + ": image " + shape_str(r.image.shape()) + " does not match mask " +
                          shape_str(r.mask.shape()));
    return r;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write manifest " + path);
    os << "#version=" << kManifestVersion << "\n";
    for (const auto& e : entries) os << e.path << '\t' << e.global_class << '\t' << split_name(e.split) << '\n';
    if (!os) throw IoError("failed writing manifest " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string& path, std::size_t n_classes)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open manifest " + path);
    std::string line;
    if (!std::getline(is, line) || line != "#version=" + std::to_string(kManifestVersion))
        throw FormatError(path + ": expected '#version=" + std::to_string(kManifestVersion) + "' on line 1");
    std::vector<ManifestEntry> out;
    std::set<std::string> seen;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, '\t')) f.push_back(field);
        if (f.size() != 3) throw FormatError(where + ": expected 3 tab-separated fields");
        ManifestEntry e;
        e.path = f[0];
        try {
            std::size_t pos = 0;
            e.global_class = std::stoi(f[1], &pos);
            if (pos != f[1].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw FormatError(where + ": bad class id '" + f[1] + "'");
        }
        if (e.global_class < 0 || (n_classes && static_cast<std::size_t>(e.global_class) >= n_classes))
            throw FormatError(where + ": class id " + f[1] + " out of range");
        try {
            e.split = split_from_name(f[2]);
        } catch (const FormatError&) {
            throw FormatError(where + ": unknown split '" + f[2] + "'");
        }
        if (!seen.insert(e.path).second) throw FormatError(where + ": duplicate path " + e.path);
        out.push_back(std::move(e));
    }
    return out;
}

void save_dataset(const std::string& dir, const std::vector<Record>& records)
{
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "records", ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
    std::vector<ManifestEntry> entries;
    for (const auto& r : records) {
        const std::string rel = "records/" + r.id + ".rgr";
        save_record((fs::path(dir) / rel).string(), r);
        entries.push_back({rel, r.global_class, r.split});
    }
    write_manifest((fs::path(dir) / "manifest.tsv").string(), entries);
}

std::vector<Record> load_dataset(const std::string& dir)
{
    const auto entries = read_manifest((fs::path(dir) / "manifest.tsv").string());
    std::vector<Record> out;
    out.reserve(entries.size());
    for (const auto& e : entries) {
        Record r = load_record((fs::path(dir) / e.path).string());
        if (r.global_class != e.global_class || r.split != e.split)
            throw FormatError(e.path + ": record header disagrees with the manifest");
        out.push_back(std::move(r));
    }
    return out;
}

void write_pgm(const std::string& path, const float* values, std::size_t width, std::size_t height)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    os << "P5\n" << width << ' ' << height << "\n255\n";
    std::vector<unsigned char> px(width * height);
    for (std::size_t i = 0; i < px.size(); ++i) {
        const double v = std::clamp(static_cast<double>(values[i]), -1.0, 1.0);
        px[i] = static_cast<unsigned char>(std::lround((v + 1.0) * 127.5));
    }
    os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
    if (!os) throw IoError("failed writing " + path);
}

void write_pgm_grid(const std::string& path, const std::vector<Tensor<float>>& images, std::size_t channel,
                    std::size_t columns)
{
    if (images.empty()) throw DomainError("write_pgm_grid: no images");
    const std::size_t S = images[0].dim(1), pad = 2;
    columns = std::max<std::size_t>(1, std::min(columns, images.size()));
    const std::size_t rows = (images.size() + columns - 1) / columns;
    const std::size_t W = columns * (S + pad) + pad, H = rows * (S + pad) + pad;
    std::vector<float> canvas(W * H, -1.0f);
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto& im = images[i];
        if (im.rank() != 3 || im.dim(1) != S || im.dim(2) != S || channel >= im.dim(0))
            throw DimensionError("write_pgm_grid: image " + std::to_string(i) + " has shape " + shape_str(im.shape()));
        const std::size_t ox = pad + (i % columns) * (S + pad), oy = pad + (i / columns) * (S + pad);
        for (std::size_t y = 0; y < S; ++y)
            for (std::size_t x = 0; x < S; ++x) canvas[(oy + y) * W + ox + x] = im[(channel * S + y) * S + x];
    }
    write_pgm(path, canvas.data(), W, H);
}

} // namespace redgan

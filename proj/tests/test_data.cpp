#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "redgan/data.hpp"

using namespace redgan;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name)
{
    auto p = fs::temp_directory_path() / ("redgan_test_data_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

ShapesMedConfig small_config(std::size_t n = 40, std::size_t S = 32)
{
    ShapesMedConfig c;
    c.n_records = n;
    c.image_size = S;
    return c;
}

} // namespace

TEST(ClassCounts, FloorAllocation)
{
    EXPECT_EQ(class_counts(100, {0.7, 0.2, 0.1}), (std::vector<std::size_t>{70, 20, 10}));
    EXPECT_EQ(class_counts(300, {0.7, 0.2, 0.1}), (std::vector<std::size_t>{210, 60, 30}));
    EXPECT_EQ(class_counts(10, {1.0 / 3, 1.0 / 3, 1.0 / 3}), (std::vector<std::size_t>{4, 3, 3}));
    EXPECT_EQ(class_counts(7, {0.25, 0.5, 0.25}), (std::vector<std::size_t>{1, 5, 1}));
}

TEST(ShapesMed, DefaultHistogramAndValidMasks)
{
    ShapesMedConfig cfg;
    auto recs = generate_shapesmed(cfg);
    ASSERT_EQ(recs.size(), 100u);
    std::vector<std::size_t> hist(3, 0);
    std::set<std::string> ids;
    for (const auto& r : recs) {
        ++hist.at(static_cast<std::size_t>(r.global_class));
        ids.insert(r.id);
        EXPECT_EQ(r.image.shape(), (Shape{2, 64, 64}));
        EXPECT_EQ(r.mask.shape(), (Shape{64, 64}));
        bool any_lesion = false;
        for (auto v : r.mask.data()) {
            EXPECT_LE(v, 2);
            any_lesion = any_lesion || v > 0;
        }
        EXPECT_TRUE(any_lesion);
        for (float v : r.image.data()) {
            EXPECT_GE(v, -1.0f);
            EXPECT_LE(v, 1.0f);
        }
    }
    EXPECT_EQ(hist, (std::vector<std::size_t>{70, 20, 10}));
    EXPECT_EQ(ids.size(), 100u);
}

TEST(ShapesMed, DeterministicDumps)
{
    auto cfg = small_config(12);
    auto a = temp_dir("det_a"), b = temp_dir("det_b");
    save_dataset(a.string(), generate_shapesmed(cfg));
    save_dataset(b.string(), generate_shapesmed(cfg));
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        auto rel = fs::relative(e.path(), a);
        EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
    }
    cfg.seed = 2;
    EXPECT_NE(generate_shapesmed(cfg)[0].image, generate_shapesmed(small_config(12))[0].image);
}

TEST(ShapesMed, GainScalesForegroundIntensity)
{
    ShapesMedConfig cfg = small_config(100);
    cfg.n_classes = 2;
    cfg.class_proportions = {0.5, 0.5};
    cfg.styles = {{1.0, 3.0, 0.05}, {0.5, 3.0, 0.05}};
    auto recs = generate_shapesmed(cfg);
    double sum[2] = {0, 0};
    std::size_t cnt[2] = {0, 0}, used[2] = {0, 0};
    for (const auto& r : recs) {
        const auto c = static_cast<std::size_t>(r.global_class);
        if (used[c] == 50) continue;
        ++used[c];
        const std::size_t plane = r.mask.size();
        for (std::size_t i = 0; i < plane; ++i)
            if (r.mask[i] > 0) {
                sum[c] += r.image[i];
                ++cnt[c];
            }
    }
    ASSERT_EQ(used[0], 50u);
    ASSERT_EQ(used[1], 50u);
    const double ratio = (sum[0] / cnt[0]) / (sum[1] / cnt[1]);
    EXPECT_NEAR(ratio, 2.0, 0.2);
}

TEST(ShapesMed, MeanIntensityClassifierSeparatesDefaultStyles)
{
    auto recs = generate_shapesmed(ShapesMedConfig{});
    std::vector<double> feat(recs.size());
    std::vector<double> centroid(3, 0.0), count(3, 0.0);
    for (std::size_t i = 0; i < recs.size(); ++i) {
        double s = 0;
        for (float v : recs[i].image.data()) s += v;
        feat[i] = s / static_cast<double>(recs[i].image.size());
        centroid[recs[i].global_class] += feat[i];
        count[recs[i].global_class] += 1;
    }
    for (int c = 0; c < 3; ++c) centroid[c] /= count[c];
    std::size_t correct = 0;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        int best = 0;
        for (int c = 1; c < 3; ++c)
            if (std::abs(feat[i] - centroid[c]) < std::abs(feat[i] - centroid[best])) best = c;
        correct += best == recs[i].global_class;
    }
    EXPECT_GE(static_cast<double>(correct) / recs.size(), 0.8);
}

TEST(ShapesMed, ConfigValidation)
{
    ShapesMedConfig c;
    c.class_proportions = {0.5, 0.2, 0.1};
    EXPECT_THROW(c.validate(), ConfigError);
    try {
        c.validate();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("class_proportions"), std::string::npos);
    }
    c = ShapesMedConfig{};
    c.image_size = 48;
    EXPECT_THROW(c.validate(), ConfigError);
    c = ShapesMedConfig{};
    c.styles.pop_back();
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Split, NinetyTenPartitions)
{
    auto parts = split_protocol(100, 3, 0.1, 5);
    ASSERT_EQ(parts.size(), 3u);
    for (const auto& p : parts) {
        EXPECT_EQ(p.train.size(), 90u);
        EXPECT_EQ(p.test.size(), 10u);
        std::set<std::size_t> all(p.train.begin(), p.train.end());
        for (auto t : p.test) EXPECT_TRUE(all.insert(t).second);
        EXPECT_EQ(all.size(), 100u);
    }
    EXPECT_NE(parts[0].test, parts[1].test);
    auto again = split_protocol(100, 3, 0.1, 5);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(parts[i].test, again[i].test);
    EXPECT_THROW(split_protocol(4, 3, 0.1, 1), DomainError);
    EXPECT_THROW(split_protocol(100, 3, 1.0, 1), DomainError);
}

TEST(Split, StratifiedCoversEveryClass)
{
    std::vector<int> classes;
    for (int i = 0; i < 300; ++i) classes.push_back(i < 210 ? 0 : i < 270 ? 1 : 2);
    auto parts = split_protocol_stratified(classes, 3, 0.1, 9);
    for (const auto& p : parts) {
        EXPECT_EQ(p.test.size(), 30u);
        EXPECT_EQ(p.train.size(), 270u);
        std::vector<int> per(3, 0);
        for (auto t : p.test) ++per[classes[t]];
        EXPECT_EQ(per, (std::vector<int>{21, 6, 3}));
    }
}

TEST(RecordIo, BitwiseRoundTrip)
{
    auto recs = generate_shapesmed(small_config(3));
    recs[1].split = SplitTag::Test;
    recs[2].source = "r00000";
    auto dir = temp_dir("rec");
    for (const auto& r : recs) {
        const auto path = (dir / (r.id + ".rgr")).string();
        save_record(path, r);
        EXPECT_EQ(load_record(path), r);
    }
}

TEST(RecordIo, TruncatedAndCorruptFiles)
{
    auto r = generate_shapesmed(small_config(1))[0];
    auto dir = temp_dir("trunc");
    const auto path = (dir / "a.rgr").string();
    save_record(path, r);
    const std::string bytes = slurp(path);
    {
        std::ofstream os(dir / "cut.rgr", std::ios::binary);
        os << bytes.substr(0, bytes.size() / 2);
    }
    EXPECT_THROW(load_record((dir / "cut.rgr").string()), FormatError);
    std::string bad = bytes;
    const auto pos = bad.find("RGT1");
    ASSERT_NE(pos, std::string::npos);
    bad[pos] = 'Q';
    {
        std::ofstream os(dir / "bad.rgr", std::ios::binary);
        os << bad;
    }
    EXPECT_THROW(load_record((dir / "bad.rgr").string()), FormatError);
    EXPECT_THROW(load_record((dir / "missing.rgr").string()), IoError);
}

TEST(RecordIo, MaskStoredAsU8)
{
    auto r = generate_shapesmed(small_config(1))[0];
    auto dir = temp_dir("u8");
    const auto path = (dir / "a.rgr").string();
    save_record(path, r);
    auto c = read_container(path);
    ASSERT_NE(c.find("mask"), nullptr);
    EXPECT_EQ(c.find("mask")->dtype, DType::U8);
    EXPECT_EQ(c.find("image")->dtype, DType::F32);
}

TEST(Manifest, DatasetRoundTripAndErrors)
{
    auto recs = generate_shapesmed(small_config(6));
    recs[0].split = SplitTag::Test;
    auto dir = temp_dir("manifest");
    save_dataset(dir.string(), recs);
    EXPECT_EQ(load_dataset(dir.string()), recs);
    auto entries = read_manifest((dir / "manifest.tsv").string(), 3);
    ASSERT_EQ(entries.size(), 6u);
    EXPECT_EQ(entries[0].split, SplitTag::Test);

    auto write = [&](const std::string& text) {
        std::ofstream os(dir / "m2.tsv");
        os << text;
    };
    write("#version=2\n");
    EXPECT_THROW(read_manifest((dir / "m2.tsv").string()), FormatError);
    write("#version=1\nrecords/a.rgr\t7\ttrain\n");
    EXPECT_THROW(read_manifest((dir / "m2.tsv").string(), 3), FormatError);
    write("#version=1\nrecords/a.rgr\t0\tvalidation\n");
    EXPECT_THROW(read_manifest((dir / "m2.tsv").string()), FormatError);
    write("#version=1\nrecords/a.rgr\t0\n");
    EXPECT_THROW(read_manifest((dir / "m2.tsv").string()), FormatError);
    EXPECT_THROW(load_dataset((dir / "nothing").string()), IoError);
}

TEST(Pgm, WritesHeaderAndScaledPixels)
{
    auto dir = temp_dir("pgm");
    const float v[4] = {-1.f, 0.f, 1.f, 0.5f};
    write_pgm((dir / "a.pgm").string(), v, 2, 2);
    const std::string b = slurp(dir / "a.pgm");
    ASSERT_EQ(b.substr(0, 2), "P5");
    const auto body = b.substr(b.size() - 4);
    EXPECT_EQ(static_cast<unsigned char>(body[0]), 0u);
    EXPECT_EQ(static_cast<unsigned char>(body[2]), 255u);
    auto recs = generate_shapesmed(small_config(5, 16));
    std::vector<Tensor<float>> imgs;
    for (const auto& r : recs) imgs.push_back(r.image);
    write_pgm_grid((dir / "g.pgm").string(), imgs, 1, 3);
    const std::string g = slurp(dir / "g.pgm");
    EXPECT_NE(g.find("56 38"), std::string::npos);
}

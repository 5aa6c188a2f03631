#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "desk.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string output; // stdout and stderr together
};

Run run(const std::string& args)
{
    const std::string cmd = std::string(REDGAN_CLI_PATH) + " " + args + " 2>&1";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.output.append(buf, n);
    const int st = pclose(p);
    r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

fs::path temp_dir(const std::string& name)
{
    auto p = fs::temp_directory_path() / ("redgan_test_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

std::size_t count_lines(const fs::path& p)
{
    std::ifstream is(p);
    std::size_t n = 0;
    for (std::string line; std::getline(is, line);) ++n;
    return n;
}

std::size_t count_files(const fs::path& dir, const std::string& ext)
{
    std::size_t n = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ext) ++n;
    return n;
}

// Desk dataset and config at S = 32, written once per process.
struct Fixture {
    fs::path dir, cfg, data;
    Fixture()
    {
        dir = temp_dir("fixture");
        cfg = dir / "desk.cfg";
        std::ofstream(cfg) << desk::tiny_text(100);
        data = dir / "data";
        const auto r = run("--config " + cfg.string() + " gen-data --out " + data.string());
        EXPECT_EQ(r.code, 0) << r.output;
    }
};

const Fixture& fixture()
{
    static Fixture f;
    return f;
}

} // namespace

TEST(Cli, GenDataDefaultAndDeterministic)
{
    auto a = temp_dir("gen_a"), b = temp_dir("gen_b");
    auto r = run("gen-data --out " + a.string());
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("100 records"), std::string::npos) << r.output;
    EXPECT_NE(r.output.find("70 20 10"), std::string::npos) << r.output;
    EXPECT_EQ(count_files(a, ".rgr"), 100u);
    ASSERT_EQ(run("gen-data --out " + b.string()).code, 0);
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) EXPECT_EQ(slurp(e.path()), slurp(b / fs::relative(e.path(), a)));
}

TEST(Cli, BadProportionsExitTwo)
{
    auto d = temp_dir("badprop");
    std::ofstream(d / "bad.cfg") << "class_proportions=0.5,0.2,0.1\n";
    auto r = run("--config " + (d / "bad.cfg").string() + " gen-data --out " + (d / "out").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("class_proportions"), std::string::npos) << r.output;
    EXPECT_EQ(run("--threads -1 gen-data --out " + (d / "o").string()).code, 2);
    EXPECT_EQ(run("no-such-command").code, 2);
}

TEST(Cli, MissingInputs)
{
    const auto& f = fixture();
    auto d = temp_dir("missing");
    auto r = run("--config " + f.cfg.string() + " train gan --data " + f.data.string() + " --seg " +
                 (d / "nope.ckpt").string() + " --out " + (d / "g.ckpt").string());
    EXPECT_EQ(r.code, 2) << r.output;
    EXPECT_NE(r.output.find("nope.ckpt"), std::string::npos);
    r = run("--config " + f.cfg.string() + " train seg --data " + (d / "nodata").string() + " --out " +
            (d / "s.ckpt").string());
    EXPECT_EQ(r.code, 4) << r.output;
}

TEST(Cli, TrainSynthAndExperiment)
{
    const auto& f = fixture();
    const std::string g = "--config " + f.cfg.string() + " ";
    auto d = temp_dir("flow");
    auto r = run(g + "train seg --data " + f.data.string() + " --out " + (d / "seg.ckpt").string());
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(count_lines(d / "loss_trace.csv"), 1u + 2u); // header + epochs_seg rows

    fs::create_directories(d / "gan");
    r = run(g + "train gan --data " + f.data.string() + " --seg " + (d / "seg.ckpt").string() + " --out " +
            (d / "gan" / "gan.ckpt").string() + " --steps 3");
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(count_lines(d / "gan" / "loss_trace.csv"), 1u + 3u);

    r = run(g + "synth --checkpoint " + (d / "gan" / "gan.ckpt").string() + " --data " + f.data.string() +
            " --strategy II --grid --out " + (d / "syn").string());
    ASSERT_EQ(r.code, 0) << r.output;
    // 90 train records at 70/20/10 with a 10% test tag: 63/18/9 -> 27 + 72 + 81
    std::size_t expected = 0;
    {
        std::ifstream man(f.data / "manifest.tsv");
        std::vector<std::size_t> cls(3, 0);
        for (std::string line; std::getline(man, line);) {
            if (line.empty() || line[0] == '#') continue;
            const auto t1 = line.find('\t'), t2 = line.find('\t', t1 + 1);
            if (line.substr(t2 + 1) == "train") ++cls[std::stoul(line.substr(t1 + 1, t2 - t1 - 1))];
        }
        const std::size_t n = cls[0] + cls[1] + cls[2];
        for (auto c : cls) expected += n - c;
    }
    EXPECT_EQ(count_files(d / "syn", ".rgr"), expected);
    EXPECT_TRUE(fs::exists(d / "syn" / "grid_m0.pgm"));
    EXPECT_TRUE(fs::exists(d / "syn" / "grid_m1.pgm"));

    r = run(g + "synth --checkpoint " + (d / "gan" / "gan.ckpt").string() + " --data " + f.data.string() +
            " --strategy I --out " + (d / "syn1").string());
    EXPECT_EQ(r.code, 2) << r.output;

    r = run(g + "experiment --data " + f.data.string() + " --strategy I --class 2 --out " + (d / "exp").string());
    ASSERT_EQ(r.code, 0) << r.output;
    const std::string csv = slurp(d / "exp" / "report.csv");
    EXPECT_NE(csv.find("I(2)"), std::string::npos);
    EXPECT_EQ(csv.find("II"), std::string::npos);
    EXPECT_EQ(csv.find("I(1)"), std::string::npos);
    EXPECT_TRUE(fs::exists(d / "exp" / "wilcoxon.csv"));
    EXPECT_TRUE(fs::exists(d / "exp" / "dice.svg"));
}

TEST(Cli, SelfcheckAndInjectedFault)
{
    auto r = run("selfcheck");
    EXPECT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("selfcheck passed"), std::string::npos);
    r = run("selfcheck --inject-fault tanh");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("tanh"), std::string::npos);
    EXPECT_EQ(run("selfcheck --inject-fault nonsense").code, 2);
}

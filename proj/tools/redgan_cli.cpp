// redgan command-line front end.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "redgan/autodiff.hpp"
#include "redgan/config.hpp"
#include "redgan/data.hpp"
#include "redgan/kernels.hpp"
#include "redgan/pipeline.hpp"
#include "redgan/report.hpp"
#include "redgan/selfcheck.hpp"

namespace fs = std::filesystem;
using namespace redgan;

namespace {

struct Globals {
    std::string config;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int threads = 0;
    bool f64 = false;
};

RunConfig load_config(const Globals& g)
{
    RunConfig cfg = g.config.empty() ? default_run_config() : load_run_config(g.config);
    if (g.seed_given) set_config_value(cfg, "seed", std::to_string(g.seed));
    cfg.sync();
    cfg.validate();
    return cfg;
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

void check_records(const RunConfig& cfg, const std::vector<Record>& recs)
{
    for (const auto& r : recs)
        if (r.image_size() != cfg.data.image_size || r.image.dim(0) != cfg.data.n_modalities ||
            static_cast<std::size_t>(r.global_class) >= cfg.data.n_classes)
            throw DimensionError("record " + r.id + " (" + shape_str(r.image.shape()) + ", class " +
                                 std::to_string(r.global_class) + ") does not match the configuration");
}

std::vector<Record> train_records(const std::string& dir)
{
    std::vector<Record> out;
    for (auto& r : load_dataset(dir))
        if (r.split == SplitTag::Train) out.push_back(std::move(r));
    if (out.empty()) throw DomainError(dir + ": no train records");
    return out;
}

std::string sibling(const std::string& path, const std::string& name)
{
    const fs::path p(path);
    return (p.has_parent_path() ? p.parent_path() / name : fs::path(name)).string();
}

// --- commands ---------------------------------------------------------------

int cmd_gen_data(const Globals& g, const std::string& out)
{
    const RunConfig cfg = load_config(g);
    std::vector<Record> recs = generate_shapesmed(cfg.data);
    std::vector<int> classes;
    for (const auto& r : recs) classes.push_back(r.global_class);
    const auto part = split_protocol_stratified(classes, 1, cfg.train.test_fraction, cfg.train.seed).front();
    for (auto i : part.test) recs[i].split = SplitTag::Test;
    save_dataset(out, recs);
    const auto totals = class_totals(recs, cfg.data.n_classes);
    std::cout << "wrote " << recs.size() << " records to " << out << " (class counts";
    for (auto t : totals) std::cout << ' ' << t;
    std::cout << ")\n";
    return 0;
}

template <class T>
int cmd_train_seg(const Globals& g, const std::string& data, const std::string& out, std::string trace)
{
    const RunConfig cfg = load_config(g);
    const auto train = train_records(data);
    check_records(cfg, train);
    auto res = train_segmentor<T>(train, cfg, SegTrainOptions{cfg.train.epochs_seg, cfg.train.seed, log_line});
    save_segmentor(out, res.model);
    if (trace.empty()) trace = sibling(out, "loss_trace.csv");
    write_seg_trace(trace, res.epoch_loss);
    std::cout << "segmentor: " << res.epoch_loss.size() << " epochs, final loss " << res.epoch_loss.back() << "\n";
    return 0;
}

template <class T>
int cmd_train_gan(const Globals& g, const std::string& data, const std::string& seg, const std::string& out,
                  std::string trace, bool no_third, std::size_t steps)
{
    const RunConfig cfg = load_config(g);
    if (!no_third && seg.empty()) throw ConfigError("train gan needs --seg <checkpoint> unless --no-third-player");
    if (!no_third && !fs::exists(seg)) throw ConfigError("frozen segmentor checkpoint not found: " + seg);
    const auto train = train_records(data);
    check_records(cfg, train);
    std::optional<FrozenSegmentor<T>> frozen;
    if (!no_third) {
        frozen.emplace(load_segmentor<T>(seg));
        if (frozen->model().spec().feature_channels() != cfg.discriminator.feat_channels ||
            frozen->model().spec().image_size != cfg.data.image_size)
            throw ConfigError("segmentor checkpoint " + seg + " does not match the configuration");
    }
    auto gan = make_gan<T>(cfg, cfg.train.seed, true);
    const std::size_t n = steps ? steps : gan_step_budget(cfg, train.size());
    const auto log = train_redgan(gan, train, frozen ? &*frozen : nullptr, cfg,
                                  GanTrainOptions{n, cfg.train.seed, !no_third, true, log_line, 100});
    save_gan(out, gan);
    if (trace.empty()) trace = sibling(out, "loss_trace.csv");
    write_gan_trace(trace, log);
    std::cout << "red-gan: " << log.size() << " steps" << (no_third ? " (no third player)" : "") << "\n";
    return 0;
}

template <class T>
int cmd_synth(const Globals& g, const std::string& ckpt, const std::string& data, const std::string& strategy,
              int cls, const std::string& out, bool grid)
{
    if (strategy != "I" && strategy != "II") throw ConfigError("--strategy must be I or II");
    if (strategy == "I" && cls < 0) throw ConfigError("strategy I needs --class");
    (void)load_config(g);
    const auto train = train_records(data);
    if (!fs::exists(ckpt)) throw IoError("generator checkpoint not found: " + ckpt);
    const GanModels<T> gan = load_gan<T>(ckpt);
    const SyntheticBatch batch = strategy == "I" ? synthesize_strategy_I(gan.generator, train, cls)
                                                 : synthesize_strategy_II(gan.generator, train);
    save_dataset(out, batch);
    if (grid && !batch.empty()) {
        std::vector<Tensor<float>> imgs;
        for (std::size_t i = 0; i < batch.size() && i < 64; ++i) imgs.push_back(batch[i].image);
        for (std::size_t m = 0; m < batch[0].image.dim(0); ++m)
            write_pgm_grid((fs::path(out) / ("grid_m" + std::to_string(m) + ".pgm")).string(), imgs, m, 8);
    }
    std::cout << "synthesised " << batch.size() << " records into " << out << "\n";
    return 0;
}

template <class T>
int cmd_experiment(const Globals& g, const std::string& data, const std::string& out, const std::string& strategy,
                   int cls)
{
    const RunConfig cfg = load_config(g);
    const auto recs = load_dataset(data);
    check_records(cfg, recs);
    ExperimentOptions opt;
    opt.log = log_line;
    if (strategy == "I") {
        if (cls < 0) throw ConfigError("strategy I needs --class");
        opt.strategies.push_back({Strategy::I, cls});
    } else if (strategy == "II") {
        opt.strategies.push_back({Strategy::II, -1});
    } else if (strategy == "all") {
        for (std::size_t c = 0; c < cfg.data.n_classes; ++c) opt.strategies.push_back({Strategy::I, static_cast<int>(c)});
        opt.strategies.push_back({Strategy::II, -1});
    } else if (strategy != "baseline") {
        throw ConfigError("--strategy must be baseline, I, II or all");
    }
    const ExperimentReport rep = run_experiment<T>(cfg, recs, opt);
    write_report(out, rep);
    write_dice_svg((fs::path(out) / "dice.svg").string(), rep);
    std::cout << "report written to " << out << "\n";
    if (!rep.failures.empty()) {
        for (const auto& f : rep.failures) std::cerr << "failed: " << f << "\n";
        return 3;
    }
    return 0;
}

int cmd_selfcheck(const std::string& fault_op)
{
    if (!fault_op.empty()) {
        const auto op = op_from_name(fault_op);
        if (!op) throw ConfigError("unknown op for --inject-fault: " + fault_op);
        fault::inject(*op);
    }
    const auto t0 = std::chrono::steady_clock::now();
    const SelfcheckReport rep = run_selfcheck(5, [](const SuiteResult& s) {
        std::printf("%-22s %s  %.2fs\n", s.name.c_str(), s.passed ? "ok  " : "FAIL", s.seconds);
        for (const auto& f : s.failures) std::printf("    %s\n", f.c_str());
        std::fflush(stdout);
    });
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("selfcheck %s in %.2fs\n", rep.passed() ? "passed" : "FAILED", secs);
    return rep.passed() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"redgan: three-player conditional GAN augmentation for segmentation"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "key=value configuration file");
    app.add_option("--seed", g.seed, "master seed (overrides the config)")->each([&](const std::string&) {
        g.seed_given = true;
    });
    app.add_option("--threads", g.threads, "worker threads (1 = deterministic)")->check(CLI::NonNegativeNumber);
    app.add_flag("--f64", g.f64, "64-bit arithmetic");

    std::string out, data, seg, ckpt, trace, strategy, fault;
    int cls = -1;
    bool no_third = false, grid = false;
    std::size_t steps = 0;

    auto* gen = app.add_subcommand("gen-data", "generate the ShapesMed dataset");
    gen->add_option("--out", out, "output directory")->required();

    auto* train = app.add_subcommand("train", "train a segmentor or the Red-GAN");
    train->require_subcommand(1);
    auto* tseg = train->add_subcommand("seg", "train the segmentor");
    tseg->add_option("--data", data, "dataset directory")->required();
    tseg->add_option("--out", out, "checkpoint path")->required();
    tseg->add_option("--trace", trace, "loss trace CSV (default: loss_trace.csv beside the checkpoint)");
    auto* tgan = train->add_subcommand("gan", "train the Red-GAN against a frozen segmentor");
    tgan->add_option("--data", data, "dataset directory")->required();
    tgan->add_option("--seg", seg, "frozen segmentor checkpoint");
    tgan->add_option("--out", out, "checkpoint path")->required();
    tgan->add_option("--trace", trace, "loss trace CSV (default: loss_trace.csv beside the checkpoint)");
    tgan->add_option("--steps", steps, "override the step budget");
    tgan->add_flag("--no-third-player", no_third, "ablation: zero segmentor features");

    auto* syn = app.add_subcommand("synth", "synthesise records with a trained generator");
    syn->add_option("--checkpoint", ckpt, "Red-GAN checkpoint")->required();
    syn->add_option("--data", data, "dataset directory")->required();
    syn->add_option("--strategy", strategy, "I or II")->required();
    syn->add_option("--class", cls, "target class for strategy I");
    syn->add_option("--out", out, "output directory")->required();
    syn->add_flag("--grid", grid, "dump one PGM grid per modality");

    auto* exp = app.add_subcommand("experiment", "run the cross-fold augmentation experiment");
    exp->add_option("--data", data, "dataset directory")->required();
    exp->add_option("--out", out, "report directory")->required();
    exp->add_option("--strategy", strategy, "baseline, I, II or all")->default_val("II");
    exp->add_option("--class", cls, "target class for strategy I");

    auto* sc = app.add_subcommand("selfcheck", "gradient checks and oracle suites");
    sc->add_option("--inject-fault", fault, "perturb the backward rule of an op");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    kernels::set_num_threads(g.threads);

    try {
        if (*gen) return cmd_gen_data(g, out);
        if (*tseg)
            return g.f64 ? cmd_train_seg<double>(g, data, out, trace) : cmd_train_seg<float>(g, data, out, trace);
        if (*tgan)
            return g.f64 ? cmd_train_gan<double>(g, data, seg, out, trace, no_third, steps)
                         : cmd_train_gan<float>(g, data, seg, out, trace, no_third, steps);
        if (*syn)
            return g.f64 ? cmd_synth<double>(g, ckpt, data, strategy, cls, out, grid)
                         : cmd_synth<float>(g, ckpt, data, strategy, cls, out, grid);
        if (*exp)
            return g.f64 ? cmd_experiment<double>(g, data, out, strategy, cls)
                         : cmd_experiment<float>(g, data, out, strategy, cls);
        if (*sc) return cmd_selfcheck(fault);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const GraphError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 4;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    }
    return 2;
}

#include "redgan/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "redgan/stats.hpp"

namespace redgan {

namespace {

void say(const LogFn& log, const std::string& msg)
{
    if (log) log(msg);
}

template <class T>
double mean_of(const std::vector<T>& v)
{
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

constexpr std::size_t kInferenceBatch = 8;

} // namespace

std::vector<Record> select(std::span<const Record> records, std::span<const std::size_t> idx)
{
    std::vector<Record> out;
    out.reserve(idx.size());
    for (auto i : idx) {
        if (i >= records.size()) throw DomainError("record index " + std::to_string(i) + " out of range");
        out.push_back(records[i]);
    }
    return out;
}

template <class T>
Batch<T> make_batch(std::span<const Record> records, std::span<const std::size_t> idx, std::size_t n_labels)
{
    if (idx.empty()) throw DomainError("make_batch: empty index list");
    const Record& r0 = records[idx[0]];
    const std::size_t C = r0.image.dim(0), S = r0.image_size(), plane = S * S;
    Batch<T> b;
    b.images = Tensor<T>(Shape{idx.size(), C, S, S});
    b.labels = Tensor<std::uint8_t>(Shape{idx.size(), S, S});
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const Record& r = records[idx[k]];
        if (r.image.shape() != r0.image.shape())
            throw DimensionError("make_batch: record " + r.id + " has shape " + shape_str(r.image.shape()));
        std::copy(r.image.data().begin(), r.image.data().end(), b.images.ptr() + k * C * plane);
        std::copy(r.mask.data().begin(), r.mask.data().end(), b.labels.ptr() + k * plane);
        b.classes.push_back(r.global_class);
    }
    b.masks = one_hot<T>(b.labels, n_labels);
    return b;
}

// ---------------------------------------------------------------------------

template <class T>
SegTrainResult<T> train_segmentor(std::span<const Record> train, const RunConfig& cfg, const SegTrainOptions& opt)
{
    if (train.empty()) throw DomainError("train_segmentor: empty train set");
    SegTrainResult<T> res{Segmentor<T>(cfg.segmentor, derive_seed(opt.seed, 11)), {}};
    const TrainConfig& tc = cfg.train;
    Adam<T> adam(res.model.store().params(), AdamHyper{tc.lr_seg, tc.seg_beta1, tc.seg_beta2, 1e-8});
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(opt.seed, 12));
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double acc = 0;
        std::size_t n_steps = 0;
        for (std::size_t start = 0; start < order.size(); start += tc.batch_size, ++step) {
            const std::size_t end = std::min(order.size(), start + tc.batch_size);
            const Batch<T> b = make_batch<T>(train, std::span(order).subspan(start, end - start), cfg.data.n_labels);
            try {
                Tape<T> tape;
                TapeScope<T> scope(tape);
                Var<T> loss = jaccard_ce_loss(res.model.logits(Var<T>(b.images)), b.masks, tc.weights.lambda_jaccard);
                tape.backward(loss);
                adam.step();
                adam.zero_grad();
                acc += static_cast<double>(loss.item());
            } catch (const NumericError& e) {
                throw NumericError("segmentor diverged at step " + std::to_string(step) + ": " + e.what());
            }
            ++n_steps;
        }
        res.epoch_loss.push_back(acc / static_cast<double>(n_steps));
        if (opt.log && (epoch + 1) % 10 == 0)
            say(opt.log, "seg epoch " + std::to_string(epoch + 1) + " loss " + std::to_string(res.epoch_loss.back()));
    }
    return res;
}

template <class T>
std::vector<double> evaluate_segmentor(const Segmentor<T>& model, std::span<const Record> records)
{
    NoGradScope<T> ng;
    std::vector<double> out;
    const int L = static_cast<int>(model.spec().n_labels);
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < records.size(); start += kInferenceBatch) {
        idx.resize(std::min(records.size(), start + kInferenceBatch) - start);
        std::iota(idx.begin(), idx.end(), start);
        const Batch<T> b = make_batch<T>(records, idx, model.spec().n_labels);
        const Tensor<std::uint8_t> pred = argmax_labels(model.logits(Var<T>(b.images)).value());
        const std::size_t plane = b.labels.dim(1) * b.labels.dim(2);
        for (std::size_t k = 0; k < idx.size(); ++k)
            out.push_back(dice_mean_foreground(std::span(pred.ptr() + k * plane, plane),
                                               std::span(b.labels.ptr() + k * plane, plane), L));
    }
    return out;
}

// ---------------------------------------------------------------------------

std::size_t gan_step_budget(const RunConfig& cfg, std::size_t n_train)
{
    if (cfg.train.gan_steps > 0) return cfg.train.gan_steps;
    const std::size_t per_epoch = (n_train + cfg.train.batch_size - 1) / cfg.train.batch_size;
    return cfg.train.epochs_gan * std::max<std::size_t>(1, per_epoch);
}

template <class T>
GanModels<T> make_gan(const RunConfig& cfg, std::uint64_t seed, bool class_conditioned)
{
    GeneratorSpec gs = cfg.generator;
    if (!class_conditioned) gs.n_classes = 1;
    return GanModels<T>{Generator<T>(gs, derive_seed(seed, 21)), Discriminator<T>(cfg.discriminator, derive_seed(seed, 22))};
}

namespace {

// Restores discriminator trainability when a generator step unwinds.
template <class T>
struct FreezeGuard {
    ParamStore<T>& store;
    explicit FreezeGuard(ParamStore<T>& s) : store(s) { store.set_requires_grad(false); }
    ~FreezeGuard() { store.set_requires_grad(true); }
};

} // namespace

template <class T>
std::vector<GanStepLog> train_redgan(GanModels<T>& models, std::span<const Record> train,
                                     const FrozenSegmentor<T>* frozen, const RunConfig& cfg,
                                     const GanTrainOptions& opt)
{
    if (train.empty()) throw DomainError("train_redgan: empty train set");
    if (opt.third_player && !frozen) throw GraphError("train_redgan: third player requested without a segmentor");
    Generator<T>& g = models.generator;
    Discriminator<T>& d = models.discriminator;
    const TrainConfig& tc = cfg.train;
    const std::uint64_t frozen_sum = frozen ? frozen->checksum() : 0;
    Adam<T> adam_g(g.store().params(), AdamHyper{tc.lr_g, tc.beta1, tc.beta2, 1e-8});
    Adam<T> adam_d(d.store().params(), AdamHyper{tc.lr_d, tc.beta1, tc.beta2, 1e-8});
    const T lambda_fm = static_cast<T>(tc.weights.lambda_fm);
    const std::size_t feat_ch = d.spec().feat_channels;

    auto seg_feats = [&](const Var<T>& image) {
        if (opt.third_player) return frozen->features(image);
        const Shape& s = image.shape();
        return Var<T>(Tensor<T>(Shape{s[0], feat_ch, s[2], s[3]}));
    };

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(opt.seed, 31));
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0;
    const std::size_t bs = std::min(tc.batch_size, train.size());

    std::vector<GanStepLog> trace;
    trace.reserve(opt.steps);
    std::vector<std::size_t> idx(bs);
    for (std::size_t step = 0; step < opt.steps; ++step) {
        for (auto& i : idx) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            i = order[cursor++];
        }
        const Batch<T> b = make_batch<T>(train, idx, cfg.data.n_labels);
        std::vector<int> ids = b.classes;
        if (!opt.class_conditioned) std::fill(ids.begin(), ids.end(), 0);
        GanStepLog rec;
        rec.step = step;
        try {
            Var<T> mask(b.masks), real(b.images), real_feat;
            {
                NoGradScope<T> ng;
                real_feat = seg_feats(real);
            }
            d.power_iterate();
            g.power_iterate();

            Tape<T> tg;
            Var<T> fake;
            {
                TapeScope<T> scope(tg);
                fake = g.forward(b.masks, ids);
            }
            {
                Tape<T> td;
                TapeScope<T> scope(td);
                Var<T> fake_d = fake.detach(), fake_feat;
                {
                    NoGradScope<T> ng;
                    fake_feat = seg_feats(fake_d);
                }
                const auto out_r = d.forward(mask, real, real_feat);
                const auto out_f = d.forward(mask, fake_d, fake_feat);
                Var<T> ld = hinge_loss_d(out_r.scores, out_f.scores);
                td.backward(ld);
                adam_d.step();
                adam_d.zero_grad();
                rec.d_loss = static_cast<double>(ld.item());
            }
            {
                FreezeGuard<T> freeze(d.store());
                TapeScope<T> scope(tg);
                const auto out_f = d.forward(mask, fake, seg_feats(fake));
                DiscriminatorOutput<T> out_r;
                {
                    NoGradScope<T> ng;
                    out_r = d.forward(mask, real, real_feat);
                }
                Var<T> lg = hinge_loss_g(out_f.scores);
                Var<T> fm = feature_matching(out_r.features, out_f.features);
                Var<T> total = add(lg, scale(fm, lambda_fm));
                tg.backward(total);
                adam_g.step();
                adam_g.zero_grad();
                rec.g_hinge = static_cast<double>(lg.item());
                rec.feature_matching = static_cast<double>(fm.item());
                rec.g_total = static_cast<double>(total.item());
            }
        } catch (const NumericError& e) {
            throw NumericError("gan diverged at step " + std::to_string(step) + ": " + e.what());
        }
        if (frozen && !frozen->grads_absent())
            throw GraphError("frozen segmentor acquired gradients at step " + std::to_string(step));
        trace.push_back(rec);
        if (opt.log && opt.log_every && (step + 1) % opt.log_every == 0) {
            std::ostringstream os;
            os << "gan step " << step + 1 << " d " << rec.d_loss << " g " << rec.g_hinge << " fm "
               << rec.feature_matching;
            say(opt.log, os.str());
        }
    }
    if (frozen && frozen->checksum() != frozen_sum)
        throw GraphError("frozen segmentor parameters changed during the adversarial game");
    return trace;
}

// ---------------------------------------------------------------------------

namespace {

struct SynthJob {
    std::size_t source;
    int condition_id;
    int record_class;
    std::string id;
};

template <class T>
SyntheticBatch run_synthesis(const Generator<T>& g, std::span<const Record> train, const std::vector<SynthJob>& jobs)
{
    NoGradScope<T> ng;
    SyntheticBatch out;
    out.reserve(jobs.size());
    const std::size_t L = g.spec().n_labels;
    std::vector<std::size_t> idx;
    std::vector<int> ids;
    for (std::size_t start = 0; start < jobs.size(); start += kInferenceBatch) {
        const std::size_t end = std::min(jobs.size(), start + kInferenceBatch);
        idx.clear();
        ids.clear();
        for (std::size_t j = start; j < end; ++j) {
            idx.push_back(jobs[j].source);
            ids.push_back(jobs[j].condition_id);
        }
        const Batch<T> b = make_batch<T>(train, idx, L);
        const Tensor<T> img = g.forward(b.masks, ids).value();
        const std::size_t per = img.size() / idx.size();
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const Record& src = train[idx[k]];
            Record r;
            r.image = Tensor<float>(src.image.shape());
            for (std::size_t i = 0; i < per; ++i) r.image[i] = static_cast<float>(img[k * per + i]);
            r.mask = src.mask;
            r.global_class = jobs[start + k].record_class;
            r.id = jobs[start + k].id;
            r.split = SplitTag::Train;
            r.source = src.id;
            out.push_back(std::move(r));
        }
    }
    return out;
}

} // namespace

template <class T>
SyntheticBatch synthesize_strategy_I(const Generator<T>& g, std::span<const Record> train, int c,
                                     bool class_conditioned)
{
    if (c < 0) throw DomainError("strategy I: class " + std::to_string(c) + " is not valid");
    if (class_conditioned && static_cast<std::size_t>(c) >= g.spec().n_classes)
        throw DomainError("strategy I: class " + std::to_string(c) + " outside the generator's " +
                          std::to_string(g.spec().n_classes) + " classes");
    std::vector<SynthJob> jobs;
    for (std::size_t i = 0; i < train.size(); ++i)
        if (train[i].global_class != c)
            jobs.push_back({i, class_conditioned ? c : 0, c, "s" + std::to_string(c) + "-" + train[i].id});
    return run_synthesis(g, train, jobs);
}

template <class T>
SyntheticBatch synthesize_strategy_II(const Generator<T>& g, std::span<const Record> train)
{
    SyntheticBatch out;
    for (std::size_t c = 0; c < g.spec().n_classes; ++c) {
        SyntheticBatch part = synthesize_strategy_I(g, train, static_cast<int>(c));
        std::move(part.begin(), part.end(), std::back_inserter(out));
    }
    return out;
}

template <class T>
SyntheticBatch synthesize_from_masks(const Generator<T>& g, std::span<const Record> train, bool class_conditioned)
{
    std::vector<SynthJob> jobs;
    for (std::size_t i = 0; i < train.size(); ++i)
        jobs.push_back({i, class_conditioned ? train[i].global_class : 0, train[i].global_class, "s-" + train[i].id});
    return run_synthesis(g, train, jobs);
}

std::vector<std::size_t> class_totals(std::span<const Record> records, std::size_t n_classes)
{
    std::vector<std::size_t> out(n_classes);
    for (const auto& r : records) {
        if (r.global_class < 0 || static_cast<std::size_t>(r.global_class) >= n_classes)
            throw DomainError("record " + r.id + " has class " + std::to_string(r.global_class));
        ++out[static_cast<std::size_t>(r.global_class)];
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

KeyValues header_kv(const NamedContainer& c, const std::string& path, const std::string& kind)
{
    KeyValues kv;
    for (const auto& line : c.header_lines) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError(path + ": malformed header line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    if (kv["kind"] != kind) throw FormatError(path + ": expected a " + kind + " checkpoint, found '" + kv["kind"] + "'");
    return kv;
}

void add_kv(NamedContainer& c, const KeyValues& kv)
{
    for (const auto& [k, v] : kv) c.header_lines.push_back(k + "=" + v);
}

} // namespace

template <class T>
void save_segmentor(const std::string& path, const Segmentor<T>& s)
{
    NamedContainer c;
    c.header_lines.push_back("kind=segmentor");
    add_kv(c, to_kv(s.spec()));
    s.store().save(c);
    write_container(path, c);
}

template <class T>
Segmentor<T> load_segmentor(const std::string& path)
{
    const NamedContainer c = read_container(path);
    Segmentor<T> s(segmentor_spec_from_kv(header_kv(c, path, "segmentor")), 0);
    s.store().load(c);
    return s;
}

template <class T>
void save_gan(const std::string& path, const GanModels<T>& m)
{
    NamedContainer c;
    c.header_lines.push_back("kind=redgan");
    add_kv(c, to_kv(m.generator.spec()));
    add_kv(c, to_kv(m.discriminator.spec()));
    m.generator.store().save(c);
    m.discriminator.store().save(c);
    write_container(path, c);
}

template <class T>
GanModels<T> load_gan(const std::string& path)
{
    const NamedContainer c = read_container(path);
    const KeyValues kv = header_kv(c, path, "redgan");
    GanModels<T> m{Generator<T>(generator_spec_from_kv(kv), 0), Discriminator<T>(discriminator_spec_from_kv(kv), 0)};
    m.generator.store().load(c);
    m.discriminator.store().load(c);
    return m;
}

// ---------------------------------------------------------------------------

std::string Strategy::name() const
{
    switch (kind) {
    case Baseline: return "baseline";
    case I: return "I(" + std::to_string(target_class) + ")";
    case II: return "II";
    }
    return "?";
}

const ReportCell* ExperimentReport::cell(const std::string& condition, std::size_t fold, int c) const
{
    for (const auto& x : cells)
        if (x.condition == condition && x.fold == fold && x.global_class == c) return &x;
    return nullptr;
}

std::string split_fingerprint(std::span<const Record> records, const Partition& p)
{
    std::vector<std::string> ids;
    for (auto i : p.test) ids.push_back(records[i].id);
    std::sort(ids.begin(), ids.end());
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& id : ids)
        for (unsigned char ch : id + "\n") {
            h ^= ch;
            h *= 0x100000001b3ull;
        }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

void add_cells(ExperimentReport& rep, const std::string& cond, std::size_t fold, std::span<const Record> test,
               const std::vector<double>& dice, std::map<std::string, std::map<int, std::vector<double>>>& pooled)
{
    for (std::size_t c = 0; c < rep.n_classes; ++c) {
        std::vector<double> v;
        for (std::size_t i = 0; i < test.size(); ++i)
            if (test[i].global_class == static_cast<int>(c)) v.push_back(dice[i]);
        ReportCell cell{cond, fold, static_cast<int>(c), v.size(), 0.0, 0.0, false};
        if (!v.empty()) {
            const Summary s = summarize(v);
            cell.dice_mean = s.mean;
            cell.dice_std = s.std;
        }
        rep.cells.push_back(cell);
        auto& dst = pooled[cond][static_cast<int>(c)];
        dst.insert(dst.end(), v.begin(), v.end());
    }
}

void add_failed(ExperimentReport& rep, const std::string& cond, std::size_t fold)
{
    for (std::size_t c = 0; c < rep.n_classes; ++c)
        if (!rep.cell(cond, fold, static_cast<int>(c)))
            rep.cells.push_back(ReportCell{cond, fold, static_cast<int>(c), 0, 0.0, 0.0, true});
}

} // namespace

template <class T>
ExperimentReport run_experiment(const RunConfig& cfg, std::span<const Record> records, const ExperimentOptions& opt)
{
    cfg.validate();
    ExperimentReport rep;
    rep.fingerprint = fingerprint(cfg);
    rep.n_folds = cfg.train.folds;
    rep.n_classes = cfg.data.n_classes;
    rep.conditions.push_back("baseline");
    std::vector<Strategy> arms;
    for (const auto& s : opt.strategies) {
        if (s.kind == Strategy::Baseline) continue;
        if (s.kind == Strategy::I && (s.target_class < 0 || static_cast<std::size_t>(s.target_class) >= rep.n_classes))
            throw ConfigError("strategy I needs a class in [0, " + std::to_string(rep.n_classes) + ")");
        if (std::find(rep.conditions.begin(), rep.conditions.end(), s.name()) != rep.conditions.end()) continue;
        rep.conditions.push_back(s.name());
        arms.push_back(s);
    }

    std::vector<int> classes;
    for (const auto& r : records) {
        if (r.global_class < 0 || static_cast<std::size_t>(r.global_class) >= rep.n_classes)
            throw DomainError("record " + r.id + " has class " + std::to_string(r.global_class));
        classes.push_back(r.global_class);
    }
    const auto parts = split_protocol_stratified(classes, cfg.train.folds, cfg.train.test_fraction, cfg.train.seed);

    // condition -> class -> per-record dice, appended fold by fold
    std::map<std::string, std::map<int, std::vector<double>>> pooled;
    std::vector<bool> fold_ok(parts.size(), false);
    for (std::size_t f = 0; f < parts.size(); ++f) {
        const auto train = select(records, parts[f].train);
        const auto test = select(records, parts[f].test);
        const std::uint64_t fs = derive_seed(cfg.train.seed, 100 + f);
        std::size_t n_cells = rep.cells.size();
        try {
            say(opt.log, "fold " + std::to_string(f) + ": baseline segmentor");
            auto base = train_segmentor<T>(train, cfg, SegTrainOptions{cfg.train.epochs_seg, derive_seed(fs, 1), opt.log});
            const auto base_dice = evaluate_segmentor(base.model, test);
            if (!arms.empty()) {
                FrozenSegmentor<T> frozen(std::move(base.model));
                auto gan = make_gan<T>(cfg, derive_seed(fs, 2), true);
                say(opt.log, "fold " + std::to_string(f) + ": red-gan");
                train_redgan(gan, train, cfg.train.third_player ? &frozen : nullptr, cfg,
                             GanTrainOptions{gan_step_budget(cfg, train.size()), derive_seed(fs, 3),
                                             cfg.train.third_player, true, opt.log, 500});
                std::vector<std::pair<std::string, std::vector<double>>> arm_dice;
                for (const auto& s : arms) {
                    SyntheticBatch synth = s.kind == Strategy::I
                                               ? synthesize_strategy_I(gan.generator, train, s.target_class)
                                               : synthesize_strategy_II(gan.generator, train);
                    std::vector<Record> aug = train;
                    std::move(synth.begin(), synth.end(), std::back_inserter(aug));
                    say(opt.log, "fold " + std::to_string(f) + ": retrain " + s.name() + " on " +
                                     std::to_string(aug.size()) + " records");
                    auto seg = train_segmentor<T>(aug, cfg, SegTrainOptions{cfg.train.epochs_seg, derive_seed(fs, 4), opt.log});
                    arm_dice.emplace_back(s.name(), evaluate_segmentor(seg.model, test));
                }
                add_cells(rep, "baseline", f, test, base_dice, pooled);
                for (const auto& [name, dice] : arm_dice) add_cells(rep, name, f, test, dice, pooled);
            } else {
                add_cells(rep, "baseline", f, test, base_dice, pooled);
            }
            fold_ok[f] = true;
        } catch (const Error& e) {
            rep.cells.resize(n_cells);
            rep.failures.push_back("fold " + std::to_string(f) + ": " + e.what());
            say(opt.log, rep.failures.back());
            for (const auto& cond : rep.conditions) add_failed(rep, cond, f);
        }
    }

    for (const auto& cond : rep.conditions)
        for (std::size_t c = 0; c < rep.n_classes; ++c) {
            const auto& a = pooled["baseline"][static_cast<int>(c)];
            const auto& b = pooled[cond][static_cast<int>(c)];
            WilcoxonRow row{cond, static_cast<int>(c), 0.0, 1.0};
            if (!a.empty() && a.size() == b.size()) {
                const WilcoxonResult w = wilcoxon_signed_rank(b, a);
                row.w = w.w;
                row.p_two_sided = w.p_two_sided;
            }
            rep.tests.push_back(row);
        }
    std::stable_sort(rep.cells.begin(), rep.cells.end(), [&](const ReportCell& x, const ReportCell& y) {
        const auto ix = std::find(rep.conditions.begin(), rep.conditions.end(), x.condition) - rep.conditions.begin();
        const auto iy = std::find(rep.conditions.begin(), rep.conditions.end(), y.condition) - rep.conditions.begin();
        if (ix != iy) return ix < iy;
        if (x.fold != y.fold) return x.fold < y.fold;
        return x.global_class < y.global_class;
    });
    return rep;
}

template <class T>
DilemmaResult run_dilemma_comparison(const RunConfig& cfg, std::span<const Record> records, int c,
                                     const Partition& split, std::uint64_t seed, LogFn log)
{
    const auto train = select(records, split.train);
    const auto test = select(records, split.test);
    std::vector<Record> train_c, test_c;
    for (const auto& r : train)
        if (r.global_class == c) train_c.push_back(r);
    for (const auto& r : test)
        if (r.global_class == c) test_c.push_back(r);
    if (train_c.size() < cfg.train.batch_size)
        throw DomainError("dilemma: class " + std::to_string(c) + " has " + std::to_string(train_c.size()) +
                          " train records, fewer than the batch size");
    if (test_c.empty()) throw DomainError("dilemma: class " + std::to_string(c) + " has no test records");

    auto augmented_dice = [&](const SyntheticBatch& synth, std::uint64_t s) {
        std::vector<Record> aug = train;
        aug.insert(aug.end(), synth.begin(), synth.end());
        auto seg = train_segmentor<T>(aug, cfg, SegTrainOptions{cfg.train.epochs_seg, s, log});
        const auto d = evaluate_segmentor(seg.model, test_c);
        return mean_of(d);
    };

    DilemmaResult res;
    res.test_fingerprint_a = res.test_fingerprint_b = split_fingerprint(records, split);

    say(log, "dilemma arm A: generator on class " + std::to_string(c) + " only");
    auto gan_a = make_gan<T>(cfg, derive_seed(seed, 41), false);
    train_redgan(gan_a, train_c, static_cast<const FrozenSegmentor<T>*>(nullptr), cfg,
                 GanTrainOptions{gan_step_budget(cfg, train_c.size()), derive_seed(seed, 42), false, false, log, 500});
    res.per_class_dice = augmented_dice(synthesize_strategy_I(gan_a.generator, train, c, false), derive_seed(seed, 43));

    say(log, "dilemma arm B: globally conditioned generator");
    auto base = train_segmentor<T>(train, cfg, SegTrainOptions{cfg.train.epochs_seg, derive_seed(seed, 44), log});
    FrozenSegmentor<T> frozen(std::move(base.model));
    auto gan_b = make_gan<T>(cfg, derive_seed(seed, 45), true);
    train_redgan(gan_b, train, cfg.train.third_player ? &frozen : nullptr, cfg,
                 GanTrainOptions{gan_step_budget(cfg, train.size()), derive_seed(seed, 46), cfg.train.third_player,
                                 true, log, 500});
    res.global_dice = augmented_dice(synthesize_strategy_I(gan_b.generator, train, c), derive_seed(seed, 43));
    return res;
}

template <class T>
ThirdPlayerResult run_third_player_comparison(const RunConfig& cfg, std::span<const Record> records,
                                              const Partition& split, const FrozenSegmentor<T>& frozen,
                                              std::uint64_t seed, LogFn log)
{
    const auto train = select(records, split.train);
    const auto test = select(records, split.test);
    ThirdPlayerResult res;
    for (bool third : {true, false}) {
        say(log, std::string("third-player arm ") + (third ? "on" : "off"));
        auto gan = make_gan<T>(cfg, derive_seed(seed, 51), false);
        train_redgan(gan, train, third ? &frozen : nullptr, cfg,
                     GanTrainOptions{gan_step_budget(cfg, train.size()), derive_seed(seed, 52), third, false, log, 500});
        const SyntheticBatch synth = synthesize_from_masks(gan.generator, train, false);
        auto seg = train_segmentor<T>(synth, cfg, SegTrainOptions{cfg.train.epochs_seg, derive_seed(seed, 53), log});
        const double d = mean_of(evaluate_segmentor(seg.model, test));
        (third ? res.dice_with : res.dice_without) = d;
    }
    return res;
}

#define REDGAN_PIPELINE_INSTANTIATE(T)                                                                          \
    template Batch<T> make_batch<T>(std::span<const Record>, std::span<const std::size_t>, std::size_t);        \
    template SegTrainResult<T> train_segmentor<T>(std::span<const Record>, const RunConfig&,                    \
                                                  const SegTrainOptions&);                                      \
    template std::vector<double> evaluate_segmentor<T>(const Segmentor<T>&, std::span<const Record>);           \
    template GanModels<T> make_gan<T>(const RunConfig&, std::uint64_t, bool);                                   \
    template std::vector<GanStepLog> train_redgan<T>(GanModels<T>&, std::span<const Record>,                    \
                                                     const FrozenSegmentor<T>*, const RunConfig&,               \
                                                     const GanTrainOptions&);                                   \
    template SyntheticBatch synthesize_strategy_I<T>(const Generator<T>&, std::span<const Record>, int, bool);  \
    template SyntheticBatch synthesize_strategy_II<T>(const Generator<T>&, std::span<const Record>);            \
    template SyntheticBatch synthesize_from_masks<T>(const Generator<T>&, std::span<const Record>, bool);       \
    template void save_segmentor<T>(const std::string&, const Segmentor<T>&);                                   \
    template Segmentor<T> load_segmentor<T>(const std::string&);                                                \
    template void save_gan<T>(const std::string&, const GanModels<T>&);                                         \
    template GanModels<T> load_gan<T>(const std::string&);                                                      \
    template ExperimentReport run_experiment<T>(const RunConfig&, std::span<const Record>,                      \
                                                const ExperimentOptions&);                                      \
    template DilemmaResult run_dilemma_comparison<T>(const RunConfig&, std::span<const Record>, int,            \
                                                     const Partition&, std::uint64_t, LogFn);                   \
    template ThirdPlayerResult run_third_player_comparison<T>(const RunConfig&, std::span<const Record>,        \
                                                              const Partition&, const FrozenSegmentor<T>&,      \
                                                              std::uint64_t, LogFn);

REDGAN_PIPELINE_INSTANTIATE(float)
REDGAN_PIPELINE_INSTANTIATE(double)

} // namespace redgan

// eprobust: train energy and backprop models, attack and corrupt them, and
// summarize the resulting tables.

#include "eprobust/attacks.hpp"
#include "eprobust/bench.hpp"
#include "eprobust/blackbox.hpp"
#include "eprobust/corruptions.hpp"
#include "eprobust/uncertainty.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

using namespace eprobust;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

/// Where evaluation images come from: "synth" regenerates the checkpoint's
/// own test split, anything else is a CIFAR directory or a single .bin file.
struct DataArgs {
    std::string data = "synth";
    bool cifar100 = false;
    Index subset = 0;

    void add(CLI::App* app) {
        app->add_option("--data", data, "synth, a CIFAR binary directory, or one .bin file")->capture_default_str();
        app->add_flag("--cifar100", cifar100, "read CIFAR-100 records (fine labels)");
        app->add_option("--subset", subset, "use the first N test images (0: all)")->check(CLI::NonNegativeNumber);
    }

    Dataset load(const Checkpoint& c) const {
        Dataset d;
        if (data == "synth") {
            d = checkpoint_test_data(c);
        } else {
            namespace fs = std::filesystem;
            const auto variant = cifar100 ? CifarVariant::cifar100 : CifarVariant::cifar10;
            const fs::path p(data);
            d = fs::is_directory(p) ? load_cifar_binary((p / (cifar100 ? "test.bin" : "test_batch.bin")).string(), variant)
                                    : load_cifar_binary(data, variant);
        }
        if (d.image_shape() != c.spec.input_shape)
            throw std::invalid_argument("data images are " + to_string(d.image_shape()) + " but the model expects " +
                                        to_string(c.spec.input_shape));
        return subset > 0 && subset < d.size() ? eprobust::subset(d, subset) : d;
    }
};

struct ModelArgs {
    std::string ckpt;
    std::string name;
    int timestep = 0;

    void add(CLI::App* app) {
        app->add_option("--ckpt", ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
        app->add_option("--name", name, "model id written to results (default: ep, bp or adv)");
        app->add_option("--timestep", timestep, "free-phase steps for energy models (default: from checkpoint)")
            ->check(CLI::NonNegativeNumber);
    }

    Checkpoint load() const { return load_checkpoint(ckpt); }
    std::string id(const Checkpoint& c) const { return name.empty() ? to_string(c.kind) : name; }
};

RunRecord clean_record(const std::string& model, double accuracy, Index n, std::uint64_t seed, double wall_ms) {
    return {model, "clean", "", 0.0, 0, accuracy, std::int64_t(n), seed, wall_ms};
}

void print_record(const RunRecord& r) {
    std::printf("%-8s %-12s %-5s strength %-8g severity %d  accuracy %.4f  (n=%lld, %.0f ms)\n", r.model.c_str(),
                r.attack.c_str(), r.norm.c_str(), r.strength, r.severity, r.accuracy, (long long)r.n, r.wall_ms);
}

void write_records(const std::vector<RunRecord>& records, const std::string& out) {
    if (out.empty()) return;
    emit_results(records, out);
    std::printf("wrote %zu rows to %s\n", records.size(), out.c_str());
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
    std::string model, config, data = "synth", out, results;
    bool cifar100 = false;
    int epochs = 0;
};

int run_train(const TrainArgs& a) {
    RunConfig rc = load_config(a.config);
    const ModelKind kind = a.model.empty() ? rc.model.value_or(ModelKind::ep) : parse_model_kind(a.model);
    rc.model = kind;
    if (a.data == "synth") {
        if (!rc.data.synthetic()) rc.data.source = "blobs";
    } else {
        rc.data.source = a.cifar100 || rc.data.source == "cifar100" ? "cifar100" : "cifar10";
        rc.data.path = a.data;
    }
    if (a.epochs > 0) rc.train.epochs = a.epochs;
    rc.train.validate(rc.spec);

    const auto [train, test] = load_data(rc.data, rc.spec);
    std::printf("%s: %lld train / %lld test images of %s, %lld classes\n", to_string(kind).c_str(),
                (long long)train.size(), (long long)test.size(), to_string(train.image_shape()).c_str(),
                (long long)train.classes);

    const auto t0 = Clock::now();
    const auto result = train_model(kind, train, rc.spec, rc.train, &test, [&](const EpochStats& s) {
        std::printf("epoch %3d  loss %.4f  train %.4f", s.epoch, s.mean_loss, s.train_accuracy);
        if (s.val_accuracy) std::printf("  test %.4f", *s.val_accuracy);
        if (kind == ModelKind::ep) std::printf("  free steps <= %d (%.1f%% at cap)", s.max_free_steps, 100 * s.unconverged_fraction);
        std::printf("  %.0f ms\n", s.wall_ms);
        std::fflush(stdout);
    });
    const Checkpoint ckpt = make_checkpoint(kind, rc, result);
    save_checkpoint(ckpt, a.out);
    if (kind == ModelKind::ep) std::printf("free phase converges within %d steps\n", ckpt.timestep);
    std::printf("saved %s\n", a.out.c_str());

    const double acc = evaluate(make_predictor(ckpt), test);
    const auto rec = clean_record(to_string(kind), acc, test.size(), rc.train.seed, ms_since(t0));
    print_record(rec);
    write_records({rec}, a.results);
    return 0;
}

// ---- eval -----------------------------------------------------------------

int run_eval(const ModelArgs& m, const DataArgs& d, const std::string& out) {
    const auto c = m.load();
    const auto data = d.load(c);
    const auto t0 = Clock::now();
    const double acc = evaluate(make_predictor(c, m.timestep), data);
    const auto rec = clean_record(m.id(c), acc, data.size(), c.seed, ms_since(t0));
    print_record(rec);
    write_records({rec}, out);
    return 0;
}

// ---- attack ---------------------------------------------------------------

struct AttackArgs {
    std::string family = "pgd", norm = "l2", out;
    std::vector<double> eps;
    int steps = 20;
    long budget = 5000;
    double cw_constant = 1.0, cw_lr = 0.01;
    std::uint64_t seed = 0;
};

int run_attack_cmd(const ModelArgs& m, const DataArgs& d, const AttackArgs& a) {
    const auto c = m.load();
    const auto data = d.load(c);
    const auto xs = data.image_list();
    const std::span<const int> ys(data.labels);
    const auto model = make_classifier(c, m.timestep);
    const auto query = make_query(c, m.timestep);
    const std::string id = m.id(c);
    const Norm norm = parse_norm(a.norm);
    const bool suite = a.family == "suite";
    const AttackFamily family = suite ? AttackFamily::pgd : parse_attack_family(a.family);
    if (!suite && family == AttackFamily::square && norm != Norm::linf)
        throw std::invalid_argument("square runs in linf; pass --norm linf");
    if (!suite && family == AttackFamily::cw && norm != Norm::l2)
        throw std::invalid_argument("cw is an l2 attack; pass --norm l2");

    std::vector<RunRecord> records;
    const auto t0 = Clock::now();
    const double clean = evaluate(make_predictor(c, m.timestep), data);
    records.push_back(clean_record(id, clean, data.size(), a.seed, ms_since(t0)));
    print_record(records.back());

    const auto run_one = [&](const AttackConfig& cfg) {
        const auto t = Clock::now();
        auto r = cfg.family == AttackFamily::square ? blackbox_square(xs, ys, query, cfg) : run_attack<float>(xs, ys, *model, cfg);
        records.push_back(attack_record({id, cfg.family, cfg.norm, cfg.strength(), cfg.seed}, r, ms_since(t)));
        print_record(records.back());
        return r;
    };

    for (const double e : a.eps) {
        if (!suite) {
            AttackConfig cfg;
            switch (family) {
                case AttackFamily::pgd: cfg = AttackConfig::pgd(norm, e); break;
                // for C&W the list holds trade-off constants, not radii
                case AttackFamily::cw: cfg = AttackConfig::cw(e); cfg.cw_lr = a.cw_lr; break;
                case AttackFamily::square: cfg = AttackConfig::square(e, a.budget); break;
            }
            cfg.steps = a.steps;
            cfg.seed = a.seed;
            run_one(cfg);
            continue;
        }
        // Worst case per image over every family that fits the threat model.
        std::vector<AttackConfig> cfgs{AttackConfig::pgd(norm, e)};
        cfgs[0].steps = a.steps;
        if (norm == Norm::linf) {
            cfgs.push_back(AttackConfig::square(e, a.budget));
        } else {
            auto cw = AttackConfig::cw(a.cw_constant);
            cw.epsilon = e;
            cw.steps = a.steps;
            cw.cw_lr = a.cw_lr;
            cfgs.push_back(cw);
        }
        const auto t = Clock::now();
        std::vector<char> robust(xs.size(), 1);
        for (auto& cfg : cfgs) {
            cfg.seed = a.seed;
            const auto r = run_one(cfg);
            for (std::size_t i = 0; i < xs.size(); ++i)
                if (r.success[i]) robust[i] = 0;
        }
        std::size_t k = 0;
        for (char r : robust) k += r != 0;
        records.push_back({id, "suite", to_string(norm), e, 0, xs.empty() ? 0.0 : double(k) / double(xs.size()),
                           std::int64_t(xs.size()), a.seed, ms_since(t)});
        print_record(records.back());
    }
    write_records(records, a.out);
    return 0;
}

// ---- corrupt --------------------------------------------------------------

int run_corrupt(const ModelArgs& m, const DataArgs& d, const std::vector<std::string>& kind_names,
                const std::vector<int>& severities, std::uint64_t seed, const std::string& out) {
    const auto c = m.load();
    const auto data = d.load(c);
    std::vector<CorruptionKind> kinds;
    for (const auto& k : kind_names) kinds.push_back(parse_corruption_kind(k));
    if (kinds.empty()) kinds = all_corruption_kinds();
    const auto table = SeverityTable::builtin();
    const std::string id = m.id(c);

    const auto t0 = Clock::now();
    const auto grid = corruption_sweep(data, make_predictor(c, m.timestep), kinds, severities, seed);
    const double per_cell = ms_since(t0) / double(grid.cells.size() + 1);
    std::vector<RunRecord> records{clean_record(id, grid.clean_accuracy, data.size(), seed, per_cell)};
    print_record(records.back());
    for (const auto& cell : grid.cells) {
        records.push_back({id, to_string(cell.kind), "", table.value(cell.kind, cell.severity), cell.severity,
                           cell.accuracy, std::int64_t(cell.n), seed, per_cell});
        print_record(records.back());
    }
    write_records(records, out);
    return 0;
}

// ---- uncertainty ----------------------------------------------------------

struct UncertaintyArgs {
    std::vector<double> eps_grid;
    Index samples = 100;
    std::string norm = "l2", out;
    std::uint64_t seed = 0;
    Index bootstrap = 0;
};

int run_uncertainty(const ModelArgs& m, const DataArgs& d, const UncertaintyArgs& a) {
    const auto c = m.load();
    const auto data = d.load(c);
    const auto xs = data.image_list();
    const auto predict = make_predictor(c, m.timestep);
    const auto curve = disagreement_curve<float>(predict, std::span<const Tensor<float>>(xs), parse_norm(a.norm),
                                                 a.eps_grid, a.samples, a.seed);
    std::printf("%-12s %-10s %-8s %-8s %s\n", "epsilon", "disagree", "trials", "rate", "95% interval");
    for (const auto& cell : curve.cells)
        std::printf("%-12g %-10lld %-8lld %-8.4f [%.4f, %.4f]\n", cell.epsilon, (long long)cell.disagreements,
                    (long long)cell.trials, cell.rate, cell.ci.lo, cell.ci.hi);

    std::optional<ExponentFit> fit;
    std::optional<BootstrapResult> boot;
    try {
        fit = fit_exponent(curve);
        std::printf("alpha %.4f  intercept %.4f  over [%g, %g] (%lld cells, rms %.3g)\n", fit->alpha, fit->intercept,
                    fit->fit_lo, fit->fit_hi, (long long)fit->cells_used, fit->residual);
        if (a.bootstrap > 0) {
            boot = bootstrap_exponent(curve, a.bootstrap, a.seed);
            std::printf("alpha 95%% bootstrap interval [%.4f, %.4f] from %lld replicates\n", boot->alpha.lo,
                        boot->alpha.hi, (long long)boot->replicates_used);
        }
    } catch (const UncertaintyError& e) {
        std::printf("no fit: %s\n", e.what());
    }
    if (a.out.empty()) return 0;

    std::ofstream f(a.out, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + a.out);
    if (format_for(a.out) == ResultFormat::json) {
        nlohmann::ordered_json j;
        j["model"] = m.id(c);
        j["norm"] = a.norm;
        j["samples"] = a.samples;
        j["seed"] = a.seed;
        j["n"] = data.size();
        auto& cells = j["curve"] = nlohmann::ordered_json::array();
        for (const auto& cell : curve.cells)
            cells.push_back({{"epsilon", cell.epsilon}, {"disagreements", cell.disagreements}, {"trials", cell.trials},
                             {"rate", cell.rate}, {"ci_lo", cell.ci.lo}, {"ci_hi", cell.ci.hi}});
        if (fit) {
            j["fit"] = {{"alpha", fit->alpha}, {"intercept", fit->intercept}, {"fit_lo", fit->fit_lo},
                        {"fit_hi", fit->fit_hi}, {"cells_used", fit->cells_used}, {"residual", fit->residual}};
            if (boot) j["fit"]["bootstrap"] = {{"lo", boot->alpha.lo}, {"hi", boot->alpha.hi}, {"replicates", boot->replicates_used}};
        } else {
            j["fit"] = nullptr;
        }
        f << j.dump(2) << '\n';
    } else {
        // one row per cell; the fit columns repeat so each row stands alone
        f << "model,norm,epsilon,disagreements,trials,rate,ci_lo,ci_hi,alpha,intercept,fit_lo,fit_hi,seed\n";
        char buf[512];
        for (const auto& cell : curve.cells) {
            std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%lld,%lld,%.17g,%.17g,%.17g,", m.id(c).c_str(), a.norm.c_str(),
                          cell.epsilon, (long long)cell.disagreements, (long long)cell.trials, cell.rate, cell.ci.lo,
                          cell.ci.hi);
            f << buf;
            if (fit) {
                std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,", fit->alpha, fit->intercept, fit->fit_lo, fit->fit_hi);
                f << buf;
            } else {
                f << ",,,,";
            }
            f << a.seed << '\n';
        }
    }
    std::printf("wrote %s\n", a.out.c_str());
    return 0;
}

// ---- report ---------------------------------------------------------------

int run_report(const std::vector<std::string>& inputs, bool mean_only) {
    std::vector<RunRecord> all;
    for (const auto& path : inputs) {
        auto part = read_results(path);
        all.insert(all.end(), part.begin(), part.end());
    }
    std::map<std::string, std::vector<RunRecord>> by_model;
    for (const auto& r : all) by_model[r.model].push_back(r);
    if (by_model.empty()) throw std::invalid_argument("no result rows in the inputs");

    for (const auto& [model, rows] : by_model) {
        if (!mean_only)
            for (const auto& r : rows) print_record(r);
        std::vector<RunRecord> cells;
        for (const auto& r : rows)
            if (is_attack_row(r)) cells.push_back(r);
        if (cells.empty()) {
            std::printf("mean_robustness %s n/a (no attack rows)\n", model.c_str());
            continue;
        }
        std::printf("mean_robustness %s %.17g (%zu cells)\n", model.c_str(), mean_robustness(cells), cells.size());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Equilibrium-propagation models and their robustness"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "train a model from a config file and save a checkpoint");
    train->add_option("--model", ta.model, "ep, bp or adv (default: the config's model)")
        ->check(CLI::IsMember({"ep", "bp", "adv"}));
    train->add_option("--config", ta.config, "key = value config file")->required()->check(CLI::ExistingFile);
    train->add_option("--data", ta.data, "synth or a CIFAR binary directory")->capture_default_str();
    train->add_flag("--cifar100", ta.cifar100, "the directory holds CIFAR-100");
    train->add_option("--epochs", ta.epochs, "override the config's epoch count")->check(CLI::PositiveNumber);
    train->add_option("--out", ta.out, "checkpoint path")->required();
    train->add_option("--results", ta.results, "also write the final clean accuracy as a result row");

    ModelArgs em;
    DataArgs ed;
    std::string eval_out;
    auto* eval = app.add_subcommand("eval", "clean accuracy of a checkpoint");
    em.add(eval);
    ed.add(eval);
    eval->add_option("--out", eval_out, "result file (.csv or .json)");

    ModelArgs am;
    DataArgs ad;
    AttackArgs aa;
    auto* attack = app.add_subcommand("attack", "robust accuracy under PGD, C&W, Square or all of them");
    am.add(attack);
    ad.add(attack);
    attack->add_option("--family", aa.family, "pgd, cw, square or suite")
        ->check(CLI::IsMember({"pgd", "cw", "square", "suite"}))
        ->capture_default_str();
    attack->add_option("--norm", aa.norm, "l2 or linf")->check(CLI::IsMember({"l2", "linf"}))->capture_default_str();
    attack->add_option("--eps", aa.eps, "radii (for cw: trade-off constants)")->required()->delimiter(',');
    attack->add_option("--steps", aa.steps, "PGD or C&W iterations")->check(CLI::PositiveNumber)->capture_default_str();
    attack->add_option("--budget", aa.budget, "Square query budget")->check(CLI::PositiveNumber)->capture_default_str();
    attack->add_option("--cw-c", aa.cw_constant, "C&W constant inside the suite")->capture_default_str();
    attack->add_option("--cw-lr", aa.cw_lr, "C&W Adam step")->capture_default_str();
    attack->add_option("--seed", aa.seed, "attack randomness")->capture_default_str();
    attack->add_option("--out", aa.out, "result file (.csv or .json)");

    ModelArgs cm;
    DataArgs cd;
    std::vector<std::string> kinds;
    std::vector<int> severities{1, 2, 3, 4, 5};
    std::uint64_t corrupt_seed = 0;
    std::string corrupt_out;
    auto* corrupt = app.add_subcommand("corrupt", "accuracy under synthetic natural corruptions");
    cm.add(corrupt);
    cd.add(corrupt);
    corrupt->add_option("--kinds", kinds, "corruption kinds (default: all)")->delimiter(',');
    corrupt->add_option("--severities", severities, "severity levels 1-5")->delimiter(',')->check(CLI::Range(1, 5));
    corrupt->add_option("--seed", corrupt_seed, "noise seed")->capture_default_str();
    corrupt->add_option("--out", corrupt_out, "result file (.csv or .json)");

    ModelArgs um;
    DataArgs ud;
    UncertaintyArgs ua;
    auto* unc = app.add_subcommand("uncertainty", "disagreement curve and uncertainty exponent");
    um.add(unc);
    ud.add(unc);
    unc->add_option("--eps-grid", ua.eps_grid, "increasing radii")->required()->delimiter(',');
    unc->add_option("--samples", ua.samples, "draws per image and radius")->check(CLI::PositiveNumber)->capture_default_str();
    unc->add_option("--norm", ua.norm, "l2 or linf")->check(CLI::IsMember({"l2", "linf"}))->capture_default_str();
    unc->add_option("--bootstrap", ua.bootstrap, "bootstrap replicates for an interval on alpha");
    unc->add_option("--seed", ua.seed, "sampling seed")->capture_default_str();
    unc->add_option("--out", ua.out, "curve and fit (.csv or .json)");

    std::vector<std::string> inputs;
    bool mean_only = false;
    auto* report = app.add_subcommand("report", "print result rows and the mean robustness per model");
    report->add_option("--in", inputs, "result files")->required()->check(CLI::ExistingFile);
    report->add_flag("--mean-robustness", mean_only, "print only the mean robustness lines");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*train) return run_train(ta);
        if (*eval) return run_eval(em, ed, eval_out);
        if (*attack) return run_attack_cmd(am, ad, aa);
        if (*corrupt) return run_corrupt(cm, cd, kinds, severities, corrupt_seed, corrupt_out);
        if (*unc) return run_uncertainty(um, ud, ua);
        if (*report) return run_report(inputs, mean_only);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

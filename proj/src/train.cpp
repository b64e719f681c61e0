#include "eprobust/train.hpp"

#include "eprobust/attacks.hpp"
#include "eprobust/ep_update.hpp"

#include <chrono>
#include <numeric>

namespace eprobust {

std::string to_string(UpdateRule r) { return r == UpdateRule::symmetric ? "symmetric" : "one_sided"; }

UpdateRule parse_update_rule(const std::string& s) {
    if (s == "symmetric") return UpdateRule::symmetric;
    if (s == "one_sided") return UpdateRule::one_sided;
    throw std::invalid_argument("unknown update rule '" + s + "' (expected symmetric or one_sided)");
}

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::ep: return "ep";
        case ModelKind::bp: return "bp";
        case ModelKind::adv: return "adv";
    }
    return "?";
}

ModelKind parse_model_kind(const std::string& s) {
    if (s == "ep") return ModelKind::ep;
    if (s == "bp") return ModelKind::bp;
    if (s == "adv") return ModelKind::adv;
    throw std::invalid_argument("unknown model kind '" + s + "' (expected ep, bp or adv)");
}

void TrainConfig::validate(const ModelSpec& spec) const {
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (Index(learning_rates.size()) != spec.num_layers() + 1)
        throw std::invalid_argument("TrainConfig: expected " + std::to_string(spec.num_layers() + 1) +
                                    " learning rates (one per layer plus the readout), got " +
                                    std::to_string(learning_rates.size()));
    for (double lr : learning_rates)
        if (!(lr >= 0)) throw std::invalid_argument("TrainConfig: learning rates must be >= 0");
    if (!(beta > 0)) throw std::invalid_argument("TrainConfig: beta must be > 0");
    if (!(momentum >= 0 && momentum < 1)) throw std::invalid_argument("TrainConfig: momentum must be in [0,1)");
    if (adversarial && (!(adversarial->epsilon >= 0) || adversarial->steps < 1))
        throw std::invalid_argument("TrainConfig: adversarial epsilon must be >= 0 and steps >= 1");
}

namespace {

std::uint64_t stream_seed(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), stream};
    std::uint32_t w[2];
    seq.generate(w, w + 2);
    return (std::uint64_t(w[0]) << 32) | w[1];
}

// Examples are summed in fixed groups, then groups in order, so the
// result does not depend on the number of threads.
constexpr std::size_t kGroup = 8;

struct ExampleOutcome {
    double loss = 0;
    bool correct = false;
    int free_steps = 0;
    bool converged = true;
};

/// Per-example direction estimate: approximates -dL/dtheta.
using Estimator = std::function<Params<double>(const Tensor<float>& xn, int y, const Params<float>& params,
                                               ExampleOutcome& outcome)>;

Params<double> ep_estimator(const Tensor<float>& xn, int y, const Params<float>& params, const ModelSpec& spec,
                            const TrainConfig& cfg, ExampleOutcome& o) {
    EpTrace<float> trace;
    GradEstimate<float> g = cfg.update_rule == UpdateRule::symmetric
                                ? ep_update_symmetric(xn, y, params, spec, cfg.beta, &trace)
                                : ep_update_one_sided(xn, y, params, spec, cfg.beta, &trace);
    readout_delta(trace.free_state, y, params, g);
    o.loss = double(cross_entropy(trace.logits, y));
    o.correct = argmax(trace.logits) == y;
    o.free_steps = trace.free_steps;
    o.converged = trace.converged;
    return g.cast<double>();
}

Params<double> bp_estimator(const Tensor<float>& xn, int y, const Params<float>& params, const ModelSpec& spec,
                            ExampleOutcome& o) {
    const auto tr = feedforward(xn, params, spec);
    Params<float> grad = zero_params<float>(spec);
    feedforward_backward(xn, tr, cross_entropy_grad(tr.logits, y), params, spec, &grad);
    o.loss = double(cross_entropy(tr.logits, y));
    o.correct = argmax(tr.logits) == y;
    Params<double> d = grad.cast<double>();
    for (auto& [name, t] : d.named()) t->values() = -t->values();
    return d;
}

void accumulate(Params<double>& acc, const Params<double>& add) {
    auto a = acc.named();
    const auto b = add.named();
    for (std::size_t k = 0; k < a.size(); ++k) a[k].second->values() += b[k].second->values();
}

TrainResult run_training(ModelKind kind, const Dataset& train, const ModelSpec& spec, const TrainConfig& cfg,
                         const Dataset* validation, const EpochCallback& on_epoch, TrainInit init) {
    spec.validate();
    cfg.validate(spec);
    train.validate();
    if (train.size() == 0) throw std::invalid_argument("training set is empty");
    if (train.image_shape() != spec.input_shape)
        throw ShapeError("train", "image shape", to_string(train.image_shape()) + " vs " + to_string(spec.input_shape));
    if (train.classes > spec.readout_dim)
        throw std::invalid_argument("dataset has " + std::to_string(train.classes) + " classes but the readout has " +
                                    std::to_string(spec.readout_dim));
    if (kind == ModelKind::adv && !cfg.adversarial)
        throw std::invalid_argument("adversarial training needs adv_epsilon in the config");

    TrainResult res;
    res.normalization = compute_normalization(train);
    res.params = init.params ? *init.params : init_params<float>(spec, cfg.seed, cfg.init_gain);
    res.params.check(spec);
    Params<double> velocity = zero_params<double>(spec);

    std::mt19937_64 shuffle_rng(stream_seed(cfg.seed, 1)), augment_rng(stream_seed(cfg.seed, 2)),
        adv_rng(stream_seed(cfg.seed, 3));
    std::vector<Index> order(std::size_t(train.size()));
    const Index N = spec.num_layers();

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), Index(0));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        EpochStats stats;
        stats.epoch = epoch;
        Index seen = 0, correct = 0, unconverged = 0;
        double loss_sum = 0;

        for (Index start = 0, batch = 0; start < train.size(); start += cfg.batch_size, ++batch) {
            const Index B = std::min(cfg.batch_size, train.size() - start);
            std::vector<Tensor<float>> xs;
            std::vector<int> ys;
            for (Index i = 0; i < B; ++i) {
                xs.push_back(train.image(order[std::size_t(start + i)]));
                ys.push_back(train.labels[std::size_t(order[std::size_t(start + i)])]);
            }
            if (cfg.augment.any()) xs = augment(xs, cfg.augment, augment_rng());
            if (kind == ModelKind::adv) {
                AttackConfig ac = AttackConfig::pgd(cfg.adversarial->norm, cfg.adversarial->epsilon);
                ac.steps = cfg.adversarial->steps;
                ac.seed = adv_rng();
                const FeedForwardClassifier<float> current(res.params, spec, res.normalization);
                xs = pgd_attack<float>(xs, ys, current, ac).adversarial;
            }
            for (auto& x : xs) x = res.normalization.apply(x);

            std::vector<ExampleOutcome> outcomes(static_cast<std::size_t>(B));
            const std::size_t groups = (std::size_t(B) + kGroup - 1) / kGroup;
            std::vector<Params<double>> sums(groups);
            parallel_for(groups, [&](std::size_t gi) {
                Params<double> acc = zero_params<double>(spec);
                for (std::size_t i = gi * kGroup; i < std::min<std::size_t>(std::size_t(B), (gi + 1) * kGroup); ++i) {
                    auto& o = outcomes[i];
                    accumulate(acc, kind == ModelKind::ep ? ep_estimator(xs[i], ys[i], res.params, spec, cfg, o)
                                                          : bp_estimator(xs[i], ys[i], res.params, spec, o));
                }
                sums[gi] = std::move(acc);
            });
            Params<double> dir = zero_params<double>(spec);
            for (const auto& s : sums) accumulate(dir, s);

            auto th = res.params.named();
            auto vel = velocity.named();
            const auto dn = dir.named();
            for (std::size_t k = 0; k < th.size(); ++k) {
                const Index layer = std::min<Index>(Index(k / 2), N);
                const double lr = cfg.learning_rates[std::size_t(layer)];
                auto& v = vel[k].second->values();
                v = cfg.momentum * v - dn[k].second->values() / double(B);
                th[k].second->values() -= (lr * v).cast<float>();
                if (!th[k].second->all_finite()) throw TrainingDiverged(epoch, batch, th[k].first);
            }

            for (const auto& o : outcomes) {
                loss_sum += o.loss;
                correct += o.correct;
                unconverged += !o.converged;
                stats.max_free_steps = std::max(stats.max_free_steps, o.free_steps);
            }
            seen += B;
        }
        stats.train_accuracy = double(correct) / double(seen);
        stats.mean_loss = loss_sum / double(seen);
        stats.unconverged_fraction = double(unconverged) / double(seen);
        if (validation && validation->size() > 0) {
            const Params<float>& p = res.params;
            const Normalization& nz = res.normalization;
            stats.val_accuracy = kind == ModelKind::ep
                ? evaluate([&](const Tensor<float>& x) { return argmax(readout(free_phase(nz.apply(x), p, spec).state, p)); },
                           *validation)
                : evaluate([&](const Tensor<float>& x) { return argmax(feedforward(nz.apply(x), p, spec).logits); },
                           *validation);
        }
        stats.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        res.history.push_back(stats);
        if (on_epoch) on_epoch(stats);
    }
    if (kind == ModelKind::ep) res.t_converged = converged_step(res.params, spec, train, res.normalization);
    return res;
}

}  // namespace

TrainResult train_ep(const Dataset& train, const ModelSpec& spec, const TrainConfig& cfg, const Dataset* validation,
                     const EpochCallback& on_epoch, TrainInit init) {
    return run_training(ModelKind::ep, train, spec, cfg, validation, on_epoch, init);
}

TrainResult train_bp(const Dataset& train, const ModelSpec& spec, const TrainConfig& cfg, const Dataset* validation,
                     const EpochCallback& on_epoch, TrainInit init) {
    return run_training(ModelKind::bp, train, spec, cfg, validation, on_epoch, init);
}

TrainResult train_adv(const Dataset& train, const ModelSpec& spec, const TrainConfig& cfg, const Dataset* validation,
                      const EpochCallback& on_epoch, TrainInit init) {
    return run_training(ModelKind::adv, train, spec, cfg, validation, on_epoch, init);
}

TrainResult train_model(ModelKind kind, const Dataset& train, const ModelSpec& spec, const TrainConfig& cfg,
                        const Dataset* validation, const EpochCallback& on_epoch) {
    return run_training(kind, train, spec, cfg, validation, on_epoch, {});
}

int converged_step(const Params<float>& params, const ModelSpec& spec, const Dataset& data, const Normalization& norm) {
    std::vector<int> steps(std::size_t(data.size()), 0);
    parallel_for(steps.size(), [&](std::size_t i) {
        const auto r = free_phase(norm.apply(data.image(Index(i))), params, spec);
        steps[i] = r.converged ? r.steps : spec.t_free;
    });
    return steps.empty() ? 0 : *std::max_element(steps.begin(), steps.end());
}

}  // namespace eprobust

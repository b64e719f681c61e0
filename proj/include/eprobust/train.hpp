#pragma once

#include "eprobust/attack_config.hpp"
#include "eprobust/dataset.hpp"
#include "eprobust/params.hpp"

#include <functional>
#include <optional>

namespace eprobust {

enum class UpdateRule { one_sided, symmetric };
enum class ModelKind { ep, bp, adv };

std::string to_string(UpdateRule r);
UpdateRule parse_update_rule(const std::string& s);
std::string to_string(ModelKind k);
ModelKind parse_model_kind(const std::string& s);

/// Inner PGD used to build each adversarial minibatch.
struct AdversarialTraining {
    Norm norm = Norm::l2;
    double epsilon = 0.0;
    int steps = 10;
};

struct TrainConfig {
    int epochs = 20;
    Index batch_size = 32;
    /// One rate per energy layer (weight and bias share it), then the readout.
    std::vector<double> learning_rates;
    double beta = 0.5;
    double momentum = 0.9;
    UpdateRule update_rule = UpdateRule::symmetric;
    std::uint64_t seed = 0;
    double init_gain = 1.0;
    std::optional<AdversarialTraining> adversarial;
    AugmentFlags augment;

    void validate(const ModelSpec& spec) const;
};

struct EpochStats {
    int epoch = 0;
    /// Accuracy of the predictions made while training on each batch.
    double train_accuracy = 0.0;
    double mean_loss = 0.0;
    std::optional<double> val_accuracy;
    /// EP only: slowest free phase of the epoch and the share that hit t_free.
    int max_free_steps = 0;
    double unconverged_fraction = 0.0;
    double wall_ms = 0.0;
};

struct TrainResult {
    Params<float> params;
    Normalization normalization;
    std::vector<EpochStats> history;
    /// EP only: slowest free-phase convergence over the training set.
    int t_converged = 0;
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(int epoch, Index batch, const std::string& tensor)
        : std::runtime_error("non-finite parameter '" + tensor + "' after epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch)),
          epoch_(epoch), batch_(batch) {}
    int epoch() const { return epoch_; }
    Index batch() const { return batch_; }

private:
    int epoch_;
    Index batch_;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Optional starting point; defaults to init_params(spec, cfg.seed, cfg.init_gain).
struct TrainInit {
    const Params<float>* params = nullptr;
};

TrainResult train_ep(const Dataset& train, const ModelSpec& spec, const TrainConfig& cfg,
                     const Dataset* validation = nullptr, const EpochCallback& on_epoch = {}, TrainInit init = {});
TrainResult train_bp(const Dataset& train, const ModelSpec& spec, const TrainConfig& cfg,
                     const Dataset* validation = nullptr, const EpochCallback& on_epoch = {}, TrainInit init = {});
/// BP training on PGD examples crafted against the current model.
TrainResult train_adv(const Dataset& train, const ModelSpec& spec, const TrainConfig& cfg,
                      const Dataset* validation = nullptr, const EpochCallback& on_epoch = {}, TrainInit init = {});
TrainResult train_model(ModelKind kind, const Dataset& train, const ModelSpec& spec, const TrainConfig& cfg,
                        const Dataset* validation = nullptr, const EpochCallback& on_epoch = {});

/// Largest free-phase step count needed to converge over `data` (t_free if
/// any example does not converge).
int converged_step(const Params<float>& params, const ModelSpec& spec, const Dataset& data,
                   const Normalization& norm);

}  // namespace eprobust

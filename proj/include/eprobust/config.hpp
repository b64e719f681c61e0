#pragma once

// Plain `key = value` run configuration. Lists are whitespace or comma
// separated; `conv` and `fc` lines append a layer each. Unknown keys are
// errors. Keys:
//
//   model           ep | bp | adv
//   data_source     blobs | stripes | cifar10 | cifar100
//   data_path       directory or file for the CIFAR sources
//   data_train      synthetic training examples
//   data_test       synthetic test examples
//   data_noise      synthetic pixel noise
//   data_jitter     synthetic class jitter
//   data_seed       synthetic generator seed
//   input_shape     C H W
//   conv            in_channels out_channels kernel padding
//   fc              in_dim out_dim
//   classes         readout size
//   t_free t_nudge fp_tol
//   beta            nudge strength (dynamics and update rule)
//   epochs batch_size momentum seed init_gain
//   learning_rates  one per energy layer, then the readout
//   update_rule     symmetric | one_sided
//   adv_norm adv_epsilon adv_steps
//   augment_hflip augment_crop augment_pad

#include "eprobust/train.hpp"

#include <optional>
#include <string>

namespace eprobust {

class ConfigError : public std::invalid_argument {
public:
    ConfigError(const std::string& what, int line)
        : std::invalid_argument(line > 0 ? "config line " + std::to_string(line) + ": " + what : what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

struct DataConfig {
    std::string source = "blobs";
    std::string path;
    Index train = 512;
    Index test = 256;
    double noise = 0.25;
    double jitter = 2.0;
    std::uint64_t seed = 1;

    bool synthetic() const { return source == "blobs" || source == "stripes"; }

    friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct RunConfig {
    std::optional<ModelKind> model;
    DataConfig data;
    ModelSpec spec;
    TrainConfig train;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
/// Every key, in the order parse_config accepts them; parses back to an
/// equal RunConfig.
std::string to_text(const RunConfig& cfg);

/// Train and test splits described by cfg.data. Synthetic splits use
/// independent streams of data_seed.
std::pair<Dataset, Dataset> load_data(const DataConfig& data, const ModelSpec& spec);

bool operator==(const TrainConfig& a, const TrainConfig& b);
bool operator==(const RunConfig& a, const RunConfig& b);

}  // namespace eprobust

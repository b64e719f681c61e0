#pragma once

// Glue between checkpoints, models and result rows, shared by the CLI and
// the acceptance run.

#include "eprobust/checkpoint.hpp"
#include "eprobust/classifier.hpp"
#include "eprobust/results.hpp"
#include "eprobust/square.hpp"

#include <memory>

namespace eprobust {

/// Energy models read out after `timestep` steps (0: the checkpoint's own).
std::unique_ptr<DifferentiableClassifier<float>> make_classifier(const Checkpoint& c, int timestep = 0);
/// Forward-only view for black-box attacks.
QueryModel<float> make_query(const Checkpoint& c, int timestep = 0);
Predictor make_predictor(const Checkpoint& c, int timestep = 0);

Checkpoint make_checkpoint(ModelKind kind, const RunConfig& cfg, const TrainResult& result);

/// Test split described by the checkpoint's own configuration.
Dataset checkpoint_test_data(const Checkpoint& c);

struct AttackRow {
    std::string model;
    AttackFamily family;
    Norm norm;
    double strength;
    std::uint64_t seed;
};

template <typename Scalar>
RunRecord attack_record(const AttackRow& row, const AttackResult<Scalar>& r, double wall_ms) {
    return {row.model, to_string(row.family), to_string(row.norm), row.strength, 0, r.robust_accuracy(),
            std::int64_t(r.size()), row.seed, wall_ms};
}

}  // namespace eprobust

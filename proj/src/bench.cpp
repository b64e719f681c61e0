#include "eprobust/bench.hpp"

#include "eprobust/query.hpp"

namespace eprobust {

std::unique_ptr<DifferentiableClassifier<float>> make_classifier(const Checkpoint& c, int timestep) {
    if (c.kind == ModelKind::ep)
        return std::make_unique<EnergyClassifier<float>>(c.params, c.spec, timestep > 0 ? timestep : c.effective_timestep(),
                                                         c.normalization);
    return std::make_unique<FeedForwardClassifier<float>>(c.params, c.spec, c.normalization);
}

QueryModel<float> make_query(const Checkpoint& c, int timestep) {
    if (c.kind == ModelKind::ep)
        return energy_query<float>(c.params, c.spec, timestep > 0 ? timestep : c.effective_timestep(), c.normalization);
    return feedforward_query<float>(c.params, c.spec, c.normalization);
}

Predictor make_predictor(const Checkpoint& c, int timestep) {
    auto q = make_query(c, timestep);
    return [q](const Tensor<float>& x) { return argmax(q(x)); };
}

Checkpoint make_checkpoint(ModelKind kind, const RunConfig& cfg, const TrainResult& result) {
    Checkpoint c;
    c.kind = kind;
    c.spec = cfg.spec;
    c.params = result.params;
    c.normalization = result.normalization;
    c.timestep = kind == ModelKind::ep ? result.t_converged : 0;
    RunConfig snapshot = cfg;
    snapshot.model = kind;
    c.config = to_text(snapshot);
    c.seed = cfg.train.seed;
    return c;
}

Dataset checkpoint_test_data(const Checkpoint& c) {
    const RunConfig rc = c.run_config();
    return load_data(rc.data, c.spec).second;
}

}  // namespace eprobust

#pragma once

// Severity-indexed image corruptions in the style of CIFAR-10-C. Severity
// parameters live in data/corruption_severities.txt, compiled in.

#include "eprobust/dataset.hpp"

#include <map>

namespace eprobust {

enum class CorruptionKind { gaussian_noise, shot_noise, impulse_noise, gaussian_blur, contrast, brightness, pixelate };

std::string to_string(CorruptionKind k);
CorruptionKind parse_corruption_kind(const std::string& s);
const std::vector<CorruptionKind>& all_corruption_kinds();
/// Kinds whose distortion is random pixel noise.
bool is_noise_family(CorruptionKind k);

class CorruptionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct CorruptionSpec {
    CorruptionKind kind = CorruptionKind::gaussian_noise;
    int severity = 1;
    std::uint64_t seed = 0;
};

/// Parameters per (kind, severity).
class SeverityTable {
public:
    /// Parses `kind.severity = value [value ...]` lines; `#` starts a comment.
    static SeverityTable parse(const std::string& text);
    static const SeverityTable& builtin();

    const std::vector<double>& at(CorruptionKind kind, int severity) const;
    double value(CorruptionKind kind, int severity) const { return at(kind, severity).front(); }

private:
    std::map<std::pair<CorruptionKind, int>, std::vector<double>> entries_;
};

Tensor<float> gaussian_noise(const Tensor<float>& x, double sigma, std::mt19937_64& rng);
Tensor<float> shot_noise(const Tensor<float>& x, double lambda, std::mt19937_64& rng);
Tensor<float> impulse_noise(const Tensor<float>& x, double amount, std::mt19937_64& rng);
Tensor<float> gaussian_blur(const Tensor<float>& x, double sigma);
Tensor<float> contrast(const Tensor<float>& x, double factor);
Tensor<float> brightness(const Tensor<float>& x, double delta);
Tensor<float> pixelate(const Tensor<float>& x, double factor);

/// Applies spec.kind at spec.severity from `table`; output clipped to [0,1].
Tensor<float> corrupt(const Tensor<float>& x, const CorruptionSpec& spec,
                      const SeverityTable& table = SeverityTable::builtin());

struct CorruptionCell {
    CorruptionKind kind;
    int severity;
    double accuracy;
    Index n;
};

struct CorruptionGrid {
    double clean_accuracy = 0.0;
    std::vector<CorruptionCell> cells;
};

/// Accuracy on corrupted copies of every image, per (kind, severity). Image
/// i uses seed example_seed(seed, i) so noise differs across images.
CorruptionGrid corruption_sweep(const Dataset& d, const Predictor& predict, const std::vector<CorruptionKind>& kinds,
                                const std::vector<int>& severities, std::uint64_t seed);

}  // namespace eprobust

#pragma once

// One row per evaluated cell. CSV is canonical, JSON mirrors the same
// fields. `attack` is an attack family, "suite" (worst case over the
// families run together), a corruption kind or "clean"; corruption rows
// carry severity >= 1, everything else severity 0.

#include <cstdint>
#include <string>
#include <vector>

namespace eprobust {

struct RunRecord {
    std::string model;
    std::string attack;
    std::string norm;
    double strength = 0.0;
    int severity = 0;
    double accuracy = 0.0;
    std::int64_t n = 0;
    std::uint64_t seed = 0;
    double wall_ms = 0.0;

    /// Throws std::invalid_argument unless accuracy is in [0,1] and n > 0.
    void validate() const;

    friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

inline const std::vector<std::string>& result_columns() {
    static const std::vector<std::string> c{"model", "attack", "norm", "strength", "severity",
                                            "accuracy", "n", "seed", "wall_ms"};
    return c;
}

std::string to_csv(const std::vector<RunRecord>& records);
std::vector<RunRecord> parse_csv(const std::string& text);
std::string to_json(const std::vector<RunRecord>& records);
std::vector<RunRecord> parse_json(const std::string& text);

enum class ResultFormat { csv, json };

/// Format from the extension (.json, else CSV).
ResultFormat format_for(const std::string& path);
void emit_results(const std::vector<RunRecord>& records, const std::string& path, ResultFormat format);
void emit_results(const std::vector<RunRecord>& records, const std::string& path);
std::vector<RunRecord> read_results(const std::string& path);

/// Per-family adversarial rows: not clean, suite or corruption.
bool is_attack_row(const RunRecord& r);

/// Unweighted mean accuracy over attack rows; throws std::invalid_argument
/// when there are none.
double mean_robustness(const std::vector<RunRecord>& records);

}  // namespace eprobust

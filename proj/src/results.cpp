#include "eprobust/results.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace eprobust {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

/// RFC 4180 rows; quoted fields may hold commas, quotes and newlines.
std::vector<std::vector<std::string>> split_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    std::size_t i = 0;
    const auto end_row = [&] {
        row.push_back(std::move(field));
        field.clear();
        rows.push_back(std::move(row));
        row.clear();
        any = false;
    };
    while (i < text.size()) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            if (!field.empty()) throw std::invalid_argument("CSV: quote inside unquoted field in row " + std::to_string(rows.size() + 1));
            quoted = any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            end_row();
        } else {
            field += c;
            any = true;
        }
        ++i;
    }
    if (quoted) throw std::invalid_argument("CSV: unterminated quoted field");
    if (any || !field.empty() || !row.empty()) end_row();
    return rows;
}

double to_double(const std::string& s, const char* col, std::size_t row) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw std::invalid_argument(std::string("CSV row ") + std::to_string(row) + ": bad " + col + " '" + s + "'");
}

}  // namespace

void RunRecord::validate() const {
    if (!(accuracy >= 0.0 && accuracy <= 1.0))
        throw std::invalid_argument("RunRecord: accuracy " + fmt(accuracy) + " outside [0,1]");
    if (n <= 0) throw std::invalid_argument("RunRecord: example count must be positive");
}

std::string to_csv(const std::vector<RunRecord>& records) {
    std::string out;
    for (std::size_t k = 0; k < result_columns().size(); ++k) out += (k ? "," : "") + result_columns()[k];
    out += "\n";
    for (const auto& r : records) {
        out += quote(r.model) + "," + quote(r.attack) + "," + quote(r.norm) + "," + fmt(r.strength) + "," +
               std::to_string(r.severity) + "," + fmt(r.accuracy) + "," + std::to_string(r.n) + "," +
               std::to_string(r.seed) + "," + fmt(r.wall_ms) + "\n";
    }
    return out;
}

std::vector<RunRecord> parse_csv(const std::string& text) {
    const auto rows = split_csv(text);
    if (rows.empty() || rows[0] != result_columns())
        throw std::invalid_argument("CSV: header must be model,attack,norm,strength,severity,accuracy,n,seed,wall_ms");
    std::vector<RunRecord> out;
    for (std::size_t k = 1; k < rows.size(); ++k) {
        const auto& f = rows[k];
        if (f.size() != result_columns().size())
            throw std::invalid_argument("CSV row " + std::to_string(k) + ": expected 9 fields, got " + std::to_string(f.size()));
        RunRecord r;
        r.model = f[0];
        r.attack = f[1];
        r.norm = f[2];
        r.strength = to_double(f[3], "strength", k);
        r.severity = int(to_double(f[4], "severity", k));
        r.accuracy = to_double(f[5], "accuracy", k);
        r.n = std::int64_t(to_double(f[6], "n", k));
        try {
            r.seed = std::stoull(f[7]);
        } catch (const std::exception&) {
            throw std::invalid_argument("CSV row " + std::to_string(k) + ": bad seed '" + f[7] + "'");
        }
        r.wall_ms = to_double(f[8], "wall_ms", k);
        out.push_back(std::move(r));
    }
    return out;
}

std::string to_json(const std::vector<RunRecord>& records) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : records)
        arr.push_back({{"model", r.model},       {"attack", r.attack},     {"norm", r.norm},
                       {"strength", r.strength}, {"severity", r.severity}, {"accuracy", r.accuracy},
                       {"n", r.n},               {"seed", r.seed},         {"wall_ms", r.wall_ms}});
    return arr.dump(2) + "\n";
}

std::vector<RunRecord> parse_json(const std::string& text) {
    const auto arr = nlohmann::json::parse(text);
    std::vector<RunRecord> out;
    for (const auto& j : arr)
        out.push_back({j.at("model").get<std::string>(), j.at("attack").get<std::string>(),
                       j.at("norm").get<std::string>(), j.at("strength").get<double>(), j.at("severity").get<int>(),
                       j.at("accuracy").get<double>(), j.at("n").get<std::int64_t>(),
                       j.at("seed").get<std::uint64_t>(), j.at("wall_ms").get<double>()});
    return out;
}

ResultFormat format_for(const std::string& path) {
    return path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0 ? ResultFormat::json : ResultFormat::csv;
}

void emit_results(const std::vector<RunRecord>& records, const std::string& path, ResultFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write results to '" + path + "'");
    out << (format == ResultFormat::json ? to_json(records) : to_csv(records));
    if (!out) throw std::runtime_error("failed writing results to '" + path + "'");
}

void emit_results(const std::vector<RunRecord>& records, const std::string& path) {
    emit_results(records, path, format_for(path));
}

std::vector<RunRecord> read_results(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open results '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return format_for(path) == ResultFormat::json ? parse_json(ss.str()) : parse_csv(ss.str());
}

bool is_attack_row(const RunRecord& r) { return r.attack != "clean" && r.attack != "suite" && r.severity == 0; }

double mean_robustness(const std::vector<RunRecord>& records) {
    double sum = 0;
    std::size_t count = 0;
    for (const auto& r : records)
        if (is_attack_row(r)) {
            sum += r.accuracy;
            ++count;
        }
    if (count == 0) throw std::invalid_argument("mean_robustness: no attack rows (clean, suite and corruption rows are excluded)");
    return sum / double(count);
}

}  // namespace eprobust

#include "eprobust/corruptions.hpp"

#include "eprobust/parallel.hpp"
#include "eprobust/seed.hpp"
#include "corruption_table.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace eprobust {

namespace {

const std::vector<std::pair<CorruptionKind, const char*>>& names() {
    static const std::vector<std::pair<CorruptionKind, const char*>> n = {
        {CorruptionKind::gaussian_noise, "gaussian_noise"}, {CorruptionKind::shot_noise, "shot_noise"},
        {CorruptionKind::impulse_noise, "impulse_noise"},   {CorruptionKind::gaussian_blur, "gaussian_blur"},
        {CorruptionKind::contrast, "contrast"},             {CorruptionKind::brightness, "brightness"},
        {CorruptionKind::pixelate, "pixelate"},
    };
    return n;
}

void check_image(const Tensor<float>& x, const char* who) {
    if (x.rank() != 3) throw ShapeError(who, "rank", 3, x.rank());
}

Tensor<float> clipped(Tensor<float> x) {
    x.values() = x.values().cwiseMax(0.f).cwiseMin(1.f);
    return x;
}

/// Area-weighted resampling along one axis: output cell j covers input
/// interval [j*n/m, (j+1)*n/m).
MatrixX<double> box_matrix(Index n, Index m) {
    MatrixX<double> r = MatrixX<double>::Zero(m, n);
    const double scale = double(n) / double(m);
    for (Index j = 0; j < m; ++j) {
        const double lo = j * scale, hi = (j + 1) * scale;
        for (Index i = Index(std::floor(lo)); i < n && i < hi; ++i) {
            const double overlap = std::min(hi, double(i + 1)) - std::max(lo, double(i));
            if (overlap > 0) r(j, i) = overlap / scale;
        }
    }
    return r;
}

}  // namespace

std::string to_string(CorruptionKind k) {
    for (const auto& [kind, name] : names())
        if (kind == k) return name;
    return "unknown";
}

CorruptionKind parse_corruption_kind(const std::string& s) {
    for (const auto& [kind, name] : names())
        if (s == name) return kind;
    std::string known;
    for (const auto& [kind, name] : names()) known += std::string(known.empty() ? "" : ", ") + name;
    throw CorruptionError("unknown corruption '" + s + "' (known: " + known + ")");
}

const std::vector<CorruptionKind>& all_corruption_kinds() {
    static const std::vector<CorruptionKind> all = [] {
        std::vector<CorruptionKind> v;
        for (const auto& [kind, name] : names()) v.push_back(kind);
        return v;
    }();
    return all;
}

bool is_noise_family(CorruptionKind k) {
    return k == CorruptionKind::gaussian_noise || k == CorruptionKind::shot_noise || k == CorruptionKind::impulse_noise;
}

SeverityTable SeverityTable::parse(const std::string& text) {
    SeverityTable t;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto where = "severity table line " + std::to_string(lineno) + ": ";
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw CorruptionError(where + "expected 'kind.severity = value'");
        std::string key = line.substr(0, eq);
        key.erase(std::remove_if(key.begin(), key.end(), [](char c) { return c == ' ' || c == '\t'; }), key.end());
        const auto dot = key.rfind('.');
        if (dot == std::string::npos) throw CorruptionError(where + "key '" + key + "' has no severity");
        const CorruptionKind kind = parse_corruption_kind(key.substr(0, dot));
        int severity = 0;
        try {
            std::size_t used = 0;
            severity = std::stoi(key.substr(dot + 1), &used);
            if (used != key.size() - dot - 1) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw CorruptionError(where + "bad severity '" + key.substr(dot + 1) + "'");
        }
        if (severity < 1 || severity > 5) throw CorruptionError(where + "severity must be in 1..5");
        std::istringstream vs(line.substr(eq + 1));
        std::vector<double> values;
        for (double v; vs >> v;) values.push_back(v);
        if (values.empty() || !vs.eof()) throw CorruptionError(where + "expected numeric values");
        if (!t.entries_.emplace(std::pair{kind, severity}, std::move(values)).second)
            throw CorruptionError(where + "duplicate entry " + key);
    }
    return t;
}

const SeverityTable& SeverityTable::builtin() {
    static const SeverityTable t = parse(embedded::corruption_severities);
    return t;
}

const std::vector<double>& SeverityTable::at(CorruptionKind kind, int severity) const {
    auto it = entries_.find({kind, severity});
    if (it == entries_.end())
        throw CorruptionError("no parameters for " + to_string(kind) + " at severity " + std::to_string(severity));
    return it->second;
}

Tensor<float> gaussian_noise(const Tensor<float>& x, double sigma, std::mt19937_64& rng) {
    check_image(x, "gaussian_noise");
    std::normal_distribution<double> n(0.0, sigma);
    Tensor<float> y = x;
    for (Index i = 0; i < y.size(); ++i) y[i] = float(y[i] + n(rng));
    return clipped(std::move(y));
}

Tensor<float> shot_noise(const Tensor<float>& x, double lambda, std::mt19937_64& rng) {
    check_image(x, "shot_noise");
    if (!(lambda > 0)) throw CorruptionError("shot_noise: lambda must be positive");
    Tensor<float> y = x;
    for (Index i = 0; i < y.size(); ++i) {
        const double mean = std::max(0.0, double(x[i])) * lambda;
        y[i] = mean > 0 ? float(std::poisson_distribution<long>(mean)(rng) / lambda) : 0.f;
    }
    return clipped(std::move(y));
}

Tensor<float> impulse_noise(const Tensor<float>& x, double amount, std::mt19937_64& rng) {
    check_image(x, "impulse_noise");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor<float> y = x;
    for (Index i = 0; i < y.size(); ++i) {
        const double hit = u(rng), salt = u(rng);
        if (hit < amount) y[i] = salt < 0.5 ? 1.f : 0.f;
    }
    return y;
}

Tensor<float> gaussian_blur(const Tensor<float>& x, double sigma) {
    check_image(x, "gaussian_blur");
    if (sigma <= 0) return x;
    const Index radius = Index(4.0 * sigma + 0.5);
    std::vector<double> k(std::size_t(2 * radius + 1));
    double total = 0;
    for (Index d = -radius; d <= radius; ++d) total += k[std::size_t(d + radius)] = std::exp(-0.5 * d * d / (sigma * sigma));
    for (auto& v : k) v /= total;

    const Index C = x.dim(0), H = x.dim(1), W = x.dim(2);
    Tensor<float> tmp(x.shape()), y(x.shape());
    // separable passes, replicating edge pixels
    for (Index c = 0; c < C; ++c)
        for (Index i = 0; i < H; ++i)
            for (Index j = 0; j < W; ++j) {
                double acc = 0;
                for (Index d = -radius; d <= radius; ++d)
                    acc += k[std::size_t(d + radius)] * x(c, i, std::clamp<Index>(j + d, 0, W - 1));
                tmp(c, i, j) = float(acc);
            }
    for (Index c = 0; c < C; ++c)
        for (Index i = 0; i < H; ++i)
            for (Index j = 0; j < W; ++j) {
                double acc = 0;
                for (Index d = -radius; d <= radius; ++d)
                    acc += k[std::size_t(d + radius)] * tmp(c, std::clamp<Index>(i + d, 0, H - 1), j);
                y(c, i, j) = float(acc);
            }
    return clipped(std::move(y));
}

Tensor<float> contrast(const Tensor<float>& x, double factor) {
    check_image(x, "contrast");
    if (factor == 1.0) return x;
    const Index C = x.dim(0), plane = x.dim(1) * x.dim(2);
    Tensor<float> y = x;
    for (Index c = 0; c < C; ++c) {
        auto seg = y.values().segment(c * plane, plane);
        const double mean = seg.cast<double>().mean();
        for (Index i = 0; i < plane; ++i) seg[i] = float((seg[i] - mean) * factor + mean);
    }
    return clipped(std::move(y));
}

Tensor<float> brightness(const Tensor<float>& x, double delta) {
    check_image(x, "brightness");
    Tensor<float> y = x;
    if (x.dim(0) != 3) {
        y.values().array() += float(delta);
        return clipped(std::move(y));
    }
    // Shift V in HSV. With hue and saturation fixed each RGB channel is
    // proportional to V, so the new pixel is a rescale (or gray if V was 0).
    const Index plane = x.dim(1) * x.dim(2);
    for (Index i = 0; i < plane; ++i) {
        const double v = std::max({double(x[i]), double(x[plane + i]), double(x[2 * plane + i])});
        const double nv = std::clamp(v + delta, 0.0, 1.0);
        for (Index c = 0; c < 3; ++c) y[c * plane + i] = v > 0 ? float(x[c * plane + i] * (nv / v)) : float(nv);
    }
    return clipped(std::move(y));
}

Tensor<float> pixelate(const Tensor<float>& x, double factor) {
    check_image(x, "pixelate");
    const Index C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const Index h = std::max<Index>(1, Index(H * factor)), w = std::max<Index>(1, Index(W * factor));
    if (h == H && w == W) return x;
    const MatrixX<double> down_r = box_matrix(H, h), down_c = box_matrix(W, w);
    const MatrixX<double> up_r = box_matrix(h, H), up_c = box_matrix(w, W);
    Tensor<float> y(x.shape());
    for (Index c = 0; c < C; ++c) {
        const MatrixX<double> img = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                                        x.data() + c * H * W, H, W)
                                        .cast<double>();
        const MatrixX<double> out = up_r * (down_r * img * down_c.transpose()) * up_c.transpose();
        for (Index i = 0; i < H; ++i)
            for (Index j = 0; j < W; ++j) y(c, i, j) = float(out(i, j));
    }
    return clipped(std::move(y));
}

Tensor<float> corrupt(const Tensor<float>& x, const CorruptionSpec& spec, const SeverityTable& table) {
    const double v = table.value(spec.kind, spec.severity);
    std::mt19937_64 rng(spec.seed);
    switch (spec.kind) {
        case CorruptionKind::gaussian_noise: return gaussian_noise(x, v, rng);
        case CorruptionKind::shot_noise: return shot_noise(x, v, rng);
        case CorruptionKind::impulse_noise: return impulse_noise(x, v, rng);
        case CorruptionKind::gaussian_blur: return gaussian_blur(x, v);
        case CorruptionKind::contrast: return contrast(x, v);
        case CorruptionKind::brightness: return brightness(x, v);
        case CorruptionKind::pixelate: return pixelate(x, v);
    }
    throw CorruptionError("corrupt: unhandled kind");
}

CorruptionGrid corruption_sweep(const Dataset& d, const Predictor& predict, const std::vector<CorruptionKind>& kinds,
                                const std::vector<int>& severities, std::uint64_t seed) {
    CorruptionGrid grid;
    grid.clean_accuracy = evaluate(predict, d);
    const auto& table = SeverityTable::builtin();
    for (CorruptionKind kind : kinds)
        for (int sev : severities) {
            table.at(kind, sev);
            std::vector<char> hit(std::size_t(d.size()), 0);
            parallel_for(hit.size(), [&](std::size_t i) {
                const auto xc = corrupt(d.image(Index(i)), {kind, sev, example_seed(seed, i)}, table);
                hit[i] = predict(xc) == d.labels[i];
            });
            Index correct = 0;
            for (char h : hit) correct += h;
            grid.cells.push_back({kind, sev, d.size() ? double(correct) / double(d.size()) : 0.0, d.size()});
        }
    return grid;
}

}  // namespace eprobust

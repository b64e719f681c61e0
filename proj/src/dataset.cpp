#include "eprobust/dataset.hpp"

#include "eprobust/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

namespace eprobust {

Shape Dataset::image_shape() const {
    if (images.rank() != 4) return {};
    return {images.dim(1), images.dim(2), images.dim(3)};
}

Tensor<float> Dataset::image(Index i) const {
    if (i < 0 || i >= size()) throw std::out_of_range("Dataset::image: index " + std::to_string(i));
    const Shape s = image_shape();
    const Index n = numel(s);
    return Tensor<float>(s, images.values().segment(i * n, n));
}

std::vector<Tensor<float>> Dataset::image_list() const {
    std::vector<Tensor<float>> out;
    out.reserve(std::size_t(size()));
    for (Index i = 0; i < size(); ++i) out.push_back(image(i));
    return out;
}

void Dataset::validate() const {
    if (images.rank() != 4 || images.dim(0) != size())
        throw std::invalid_argument("Dataset: images must be [N,C,H,W] with N = " + std::to_string(size()));
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0 || labels[i] >= classes)
            throw std::invalid_argument("Dataset: label " + std::to_string(labels[i]) + " of example " +
                                        std::to_string(i) + " outside [0, " + std::to_string(classes) + ")");
    if (images.size() && (images.values().minCoeff() < 0.f || images.values().maxCoeff() > 1.f))
        throw std::invalid_argument("Dataset: pixels outside [0,1]");
}

Dataset make_dataset(std::span<const Tensor<float>> images, std::vector<int> labels, Index classes,
                     std::string split) {
    if (images.size() != labels.size()) throw ShapeError("make_dataset", "examples", Index(images.size()), Index(labels.size()));
    Dataset d;
    d.classes = classes;
    d.split = std::move(split);
    d.labels = std::move(labels);
    if (images.empty()) {
        d.images = Tensor<float>({0, 0, 0, 0});
        return d;
    }
    const Shape s = images[0].shape();
    const Index n = numel(s);
    d.images = Tensor<float>({Index(images.size()), s[0], s[1], s[2]});
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].shape() != s) throw ShapeError("make_dataset", "image shape", to_string(images[i].shape()) + " vs " + to_string(s));
        d.images.values().segment(Index(i) * n, n) = images[i].values();
    }
    d.validate();
    return d;
}

Dataset parse_cifar_binary(std::span<const std::uint8_t> bytes, CifarVariant variant) {
    const std::size_t label_bytes = variant == CifarVariant::cifar100 ? 2 : 1;
    const std::size_t pixels = 3 * 32 * 32, record = label_bytes + pixels;
    const Index classes = variant == CifarVariant::cifar100 ? 100 : 10;
    const std::size_t n = bytes.size() / record;
    if (bytes.size() % record != 0)
        throw ParseError("truncated record (file size " + std::to_string(bytes.size()) + " is not a multiple of " +
                             std::to_string(record) + ")",
                         n * record);
    Dataset d;
    d.classes = classes;
    d.images = Tensor<float>({Index(n), 3, 32, 32});
    d.labels.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t base = r * record;
        const std::size_t label_at = base + label_bytes - 1;
        const int label = bytes[label_at];
        if (label >= classes)
            throw ParseError("label " + std::to_string(label) + " out of range [0, " + std::to_string(classes) + ")",
                             label_at);
        d.labels[r] = label;
        for (std::size_t p = 0; p < pixels; ++p)
            d.images[Index(r * pixels + p)] = float(bytes[base + label_bytes + p]) / 255.f;
    }
    return d;
}

Dataset load_cifar_binary(const std::string& path, CifarVariant variant) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Dataset d = parse_cifar_binary(bytes, variant);
    d.split = path;
    return d;
}

SynthKind parse_synth_kind(const std::string& s) {
    if (s == "blobs") return SynthKind::blobs;
    if (s == "stripes") return SynthKind::stripes;
    throw std::invalid_argument("unknown synthetic dataset '" + s + "' (expected blobs or stripes)");
}

std::string to_string(SynthKind k) { return k == SynthKind::blobs ? "blobs" : "stripes"; }

Dataset synth_dataset(SynthKind kind, Index n, const Shape& image_shape, Index classes, std::uint64_t seed,
                      SynthOptions opts) {
    if (n <= 0) throw std::invalid_argument("synth_dataset: n must be > 0");
    if (classes < 2) throw std::invalid_argument("synth_dataset: need at least 2 classes");
    if (image_shape.size() != 3) throw ShapeError("synth_dataset", "image rank", 3, Index(image_shape.size()));
    const Index C = image_shape[0], H = image_shape[1], W = image_shape[2];
    std::mt19937_64 rng(seed);

    std::vector<int> labels(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) labels[std::size_t(i)] = int(i % classes);
    std::shuffle(labels.begin(), labels.end(), rng);

    std::uniform_real_distribution<double> unit(-1.0, 1.0), phase(0.0, 2 * std::numbers::pi);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double cy = double(H - 1) / 2, cx = double(W - 1) / 2;
    const double radius = 0.28 * double(std::min(H, W)), sigma = 0.18 * double(std::min(H, W));

    Dataset d;
    d.classes = classes;
    d.split = to_string(kind);
    d.labels = labels;
    d.images = Tensor<float>({n, C, H, W});
    const Index plane = H * W;
    for (Index e = 0; e < n; ++e) {
        const int k = labels[std::size_t(e)];
        Eigen::ArrayXd img(plane);
        if (kind == SynthKind::blobs) {
            const double a = std::numbers::pi / 4 + 2 * std::numbers::pi * k / double(classes);
            const double py = cy + radius * std::sin(a) + opts.jitter * unit(rng);
            const double px = cx + radius * std::cos(a) + opts.jitter * unit(rng);
            for (Index i = 0; i < H; ++i)
                for (Index j = 0; j < W; ++j) {
                    const double r2 = (double(i) - py) * (double(i) - py) + (double(j) - px) * (double(j) - px);
                    img[i * W + j] = std::exp(-r2 / (2 * sigma * sigma));
                }
        } else {
            const double gap = std::numbers::pi / double(classes);
            const double a = gap * k + opts.jitter * gap * 0.5 * unit(rng);
            const double f = 2 * std::numbers::pi / 4.0, ph = phase(rng);
            for (Index i = 0; i < H; ++i)
                for (Index j = 0; j < W; ++j)
                    img[i * W + j] = 0.5 + 0.5 * std::sin(f * (double(j) * std::cos(a) + double(i) * std::sin(a)) + ph);
        }
        for (Index c = 0; c < C; ++c)
            for (Index p = 0; p < plane; ++p) {
                const double v = img[p] + (opts.noise > 0 ? opts.noise * gauss(rng) : 0.0);
                d.images[(e * C + c) * plane + p] = float(std::clamp(v, 0.0, 1.0));
            }
    }
    return d;
}

Dataset subset(const Dataset& d, Index n) {
    if (n < 0 || n >= d.size()) return d;
    Dataset s = d;
    const Index per = numel(d.image_shape());
    const Shape is = d.image_shape();
    s.images = Tensor<float>({n, is[0], is[1], is[2]}, d.images.values().head(n * per));
    s.labels.resize(std::size_t(n));
    return s;
}

AugmentDraw draw_augment(const AugmentFlags& flags, std::mt19937_64& rng) {
    AugmentDraw a;
    if (flags.hflip) a.flip = std::bernoulli_distribution(0.5)(rng);
    if (flags.crop) {
        std::uniform_int_distribution<Index> off(0, 2 * flags.pad);
        a.dy = off(rng);
        a.dx = off(rng);
    } else {
        a.dy = a.dx = flags.pad;
    }
    return a;
}

Tensor<float> apply_augment(const Tensor<float>& x, const AugmentDraw& draw, const AugmentFlags& flags) {
    if (!flags.any()) return x;
    const Index C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const Index pad = flags.crop ? flags.pad : 0;
    const Index dy = flags.crop ? draw.dy : 0, dx = flags.crop ? draw.dx : 0;
    Tensor<float> y(x.shape());
    for (Index c = 0; c < C; ++c)
        for (Index i = 0; i < H; ++i)
            for (Index j = 0; j < W; ++j) {
                // output (i, j) reads padded (i + dy, j + dx)
                const Index si = i + dy - pad, sj = j + dx - pad;
                if (si < 0 || si >= H || sj < 0 || sj >= W) continue;
                y(c, i, draw.flip ? W - 1 - j : j) = x(c, si, sj);
            }
    return y;
}

std::vector<Tensor<float>> augment(std::span<const Tensor<float>> batch, const AugmentFlags& flags,
                                   std::uint64_t seed) {
    std::vector<Tensor<float>> out(batch.begin(), batch.end());
    if (!flags.any()) return out;
    std::mt19937_64 rng(seed);
    for (auto& x : out) x = apply_augment(x, draw_augment(flags, rng), flags);
    return out;
}

Normalization compute_normalization(const Dataset& d) {
    Normalization norm;
    const Shape s = d.image_shape();
    if (s.empty() || d.size() == 0) return norm;
    const Index C = s[0], plane = s[1] * s[2];
    for (Index c = 0; c < C; ++c) {
        double sum = 0, sq = 0;
        for (Index e = 0; e < d.size(); ++e) {
            const auto seg = d.images.values().segment((e * C + c) * plane, plane).cast<double>();
            sum += seg.sum();
            sq += seg.squaredNorm();
        }
        const double count = double(d.size() * plane), mean = sum / count;
        const double var = std::max(0.0, sq / count - mean * mean);
        // rounded to float so a checkpoint stores them exactly
        norm.mean.push_back(double(float(mean)));
        norm.stddev.push_back(var > 1e-12 ? double(float(std::sqrt(var))) : 1.0);
    }
    return norm;
}

double evaluate(const Predictor& predict, const Dataset& d, Index batch_size) {
    if (d.size() == 0) return 0.0;
    batch_size = std::max<Index>(1, batch_size);
    std::vector<char> hit(std::size_t(d.size()), 0);
    const std::size_t batches = std::size_t((d.size() + batch_size - 1) / batch_size);
    parallel_for(batches, [&](std::size_t b) {
        const Index lo = Index(b) * batch_size, hi = std::min(d.size(), lo + batch_size);
        for (Index i = lo; i < hi; ++i) hit[std::size_t(i)] = predict(d.image(i)) == d.labels[std::size_t(i)];
    });
    Index correct = 0;
    for (char h : hit) correct += h;
    return double(correct) / double(d.size());
}

}  // namespace eprobust

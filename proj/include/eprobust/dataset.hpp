#pragma once

#include "eprobust/normalization.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace eprobust {

/// Labelled images in [0,1], stored as one [N, C, H, W] tensor.
struct Dataset {
    Tensor<float> images;
    std::vector<int> labels;
    Index classes = 0;
    std::string split;
    /// Per-channel statistics applied at model input; empty until computed.
    Normalization normalization;

    Index size() const { return Index(labels.size()); }
    Shape image_shape() const;
    Tensor<float> image(Index i) const;
    std::vector<Tensor<float>> image_list() const;
    /// Throws std::invalid_argument on out-of-range labels or pixels.
    void validate() const;
};

Dataset make_dataset(std::span<const Tensor<float>> images, std::vector<int> labels, Index classes,
                     std::string split = {});

/// Malformed binary input; offset() is the byte where parsing failed.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
    std::uint64_t offset() const { return offset_; }

private:
    std::uint64_t offset_;
};

enum class CifarVariant { cifar10, cifar100 };

/// Records are a label byte (two for CIFAR-100: coarse then fine; fine is
/// used) followed by 3072 pixel bytes as R, G, B planes of 32x32.
Dataset parse_cifar_binary(std::span<const std::uint8_t> bytes, CifarVariant variant = CifarVariant::cifar10);
Dataset load_cifar_binary(const std::string& path, CifarVariant variant = CifarVariant::cifar10);

enum class SynthKind { blobs, stripes };

SynthKind parse_synth_kind(const std::string& s);
std::string to_string(SynthKind k);

struct SynthOptions {
    /// Standard deviation of additive Gaussian pixel noise.
    double noise = 0.0;
    /// blobs: max center offset in pixels; stripes: orientation jitter as a
    /// fraction of the gap between class orientations.
    double jitter = 0.0;
};

/// Class-conditional images. Blobs: a Gaussian bump whose center sits on a
/// circle at an angle fixed by the class. Stripes: a sinusoidal grating whose
/// orientation is fixed by the class and whose phase is random. Labels are
/// i % classes, shuffled, so class counts differ by at most one.
Dataset synth_dataset(SynthKind kind, Index n, const Shape& image_shape, Index classes, std::uint64_t seed,
                      SynthOptions opts = {});

Dataset subset(const Dataset& d, Index n);

struct AugmentFlags {
    bool hflip = false;
    bool crop = false;
    Index pad = 4;

    bool any() const { return hflip || crop; }
};

struct AugmentDraw {
    bool flip = false;
    Index dy = 0;
    Index dx = 0;
};

AugmentDraw draw_augment(const AugmentFlags& flags, std::mt19937_64& rng);
Tensor<float> apply_augment(const Tensor<float>& x, const AugmentDraw& draw, const AugmentFlags& flags);
/// Horizontal flip with probability 0.5, then zero-pad and crop back.
std::vector<Tensor<float>> augment(std::span<const Tensor<float>> batch, const AugmentFlags& flags, std::uint64_t seed);

/// Per-channel mean and (population) standard deviation over every pixel.
Normalization compute_normalization(const Dataset& d);

using Predictor = std::function<int(const Tensor<float>&)>;

/// Top-1 accuracy. Examples are scored independently, so the batch size
/// only sets the work granularity.
double evaluate(const Predictor& predict, const Dataset& d, Index batch_size = 64);

}  // namespace eprobust

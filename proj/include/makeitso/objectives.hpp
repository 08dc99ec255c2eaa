#pragma once

// Reconstruction and perceptual losses, their weighted combination, and the
// gradient-free evaluation metrics reported by the harness.

#include "makeitso/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace makeitso {

struct LossWeights {
    double recon = 1.0;
    double perceptual = 1.0;

    // Throws ConfigError unless both weights are finite, non-negative and not both zero.
    void validate() const;
    bool operator==(const LossWeights&) const = default;
};

// Frozen multi-scale convolutional feature pyramid. The default instance is a
// stack of stride-2 3x3 convolutions with seeded random weights; features are
// unit-normalized across channels at every spatial location before distances
// are taken.
template <typename T>
class FeatureExtractor {
public:
    static FeatureExtractor random_pyramid(int resolution, std::uint64_t seed = 7,
                                           std::vector<int> channels = {8, 16, 32});

    const std::string& id() const { return id_; }
    std::uint64_t seed() const { return seed_; }
    int resolution() const { return resolution_; }
    int stages() const { return static_cast<int>(channels_.size()); }
    const std::vector<T>& weights() const { return weights_; }

    struct Tape {
        int batch = 0;
        std::vector<std::vector<T>> inputs;      // input of each stage, CBHW
        std::vector<std::vector<T>> outputs;     // activated output of each stage
        std::vector<std::vector<T>> normalized;  // unit-normalized features
        std::vector<std::vector<T>> norms;       // [batch * positions] per stage
    };

    // Runs the pyramid on a batch and returns normalized features per stage.
    void forward(std::span<const Image<T>> images, Tape& tape) const;

    // Backpropagates gradients w.r.t. the normalized features of every stage
    // back to the input images.
    std::vector<Image<T>> backward(const Tape& tape, const std::vector<std::vector<T>>& grad_normalized) const;

    int stage_resolution(int k) const { return resolution_ >> (k + 1); }
    int stage_channels(int k) const { return channels_[k]; }

private:
    std::string id_;
    std::uint64_t seed_ = 0;
    int resolution_ = 0;
    std::vector<int> channels_;
    std::vector<std::size_t> offsets_;
    std::vector<T> weights_;
};

// Mean squared error over all pixels. When grad_a is non-null it receives dL/da.
template <typename T>
double recon_loss(const Image<T>& a, const Image<T>& b, Image<T>* grad_a = nullptr);

template <typename T>
double perceptual_loss(const FeatureExtractor<T>& extractor, const Image<T>& a, const Image<T>& b,
                       Image<T>* grad_a = nullptr);

// Per-pair perceptual losses for a batch; one extractor pass for all a's and
// one for all b's.
template <typename T>
std::vector<double> perceptual_loss_batch(const FeatureExtractor<T>& extractor, std::span<const Image<T>> a,
                                          std::span<const Image<T>> b, std::vector<Image<T>>* grad_a = nullptr);

struct LossValue {
    double total = 0;
    double recon = 0;
    double perceptual = 0;
};

// weights.recon * recon_loss + weights.perceptual * perceptual_loss, with the
// gradient w.r.t. `generated` written to grad when non-null.
template <typename T>
LossValue total_inversion_loss(const LossWeights& weights, const FeatureExtractor<T>& extractor,
                               const Image<T>& generated, const Image<T>& target, Image<T>* grad = nullptr);

// Evaluation metrics: both images are clamped to [-1, 1] first.
template <typename T>
double eval_mse(const Image<T>& a, const Image<T>& b);

template <typename T>
double eval_perceptual(const FeatureExtractor<T>& extractor, const Image<T>& a, const Image<T>& b);

}  // namespace makeitso

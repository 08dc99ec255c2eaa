#pragma once

// Style-based generator: mapping network Z -> W, broadcast W -> W+, and a
// style-modulated convolutional synthesis network W+ -> image.
//
// All parameters live in one flat array per snapshot. Mapping arrays come
// first, so the synthesis group is the contiguous tail [mapping_size(), size()).
// Every array is addressable by a stable dotted path ("mapping.fc0.weight",
// "synthesis.b16.conv1.affine.weight", ...).

#include "makeitso/types.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace makeitso {

struct ArchConfig {
    int z_dim = 64;
    int w_dim = 64;
    int mapping_hidden_layers = 2;
    int mapping_width = 64;
    int resolution = 32;
    int const_channels = 64;
    // Channel count of a block at resolution r is clamp(channel_base / r, 1, channel_max).
    int channel_base = 256;
    int channel_max = 64;

    // The default 32x32 toy generator.
    static ArchConfig toy() { return {}; }
    // 8x8 generator used for finite-difference checks.
    static ArchConfig micro() { return {8, 8, 2, 8, 8, 8, 32, 8}; }

    int channels_at(int res) const;
    int num_styles() const;
    // Throws ConfigError when the configuration cannot be built.
    void validate() const;

    std::string to_json() const;
    static ArchConfig from_json(std::string_view text);

    bool operator==(const ArchConfig&) const = default;
};

struct ParamEntry {
    std::string name;
    std::vector<int> shape;
    std::size_t offset = 0;
    std::size_t count = 0;
};

// Immutable layer table for one ArchConfig. Shared between snapshots.
class Architecture {
public:
    struct Dense {
        std::size_t weight = 0, bias = 0;
        int in = 0, out = 0;
    };
    struct StyleConv {
        std::size_t affine_weight = 0, affine_bias = 0, weight = 0, bias = 0;
        int in_channels = 0, out_channels = 0, resolution = 0, slot = 0;
        bool upsample = false;
    };

    static std::shared_ptr<const Architecture> build(const ArchConfig& config);

    const ArchConfig& config() const { return config_; }
    const std::string& hash() const { return hash_; }
    const std::vector<ParamEntry>& entries() const { return entries_; }
    const ParamEntry& entry(std::string_view name) const;
    const ParamEntry* find(std::string_view name) const;

    std::size_t size() const { return total_; }
    std::size_t mapping_size() const { return mapping_end_; }
    std::size_t synthesis_size() const { return total_ - mapping_end_; }

    int z_dim() const { return config_.z_dim; }
    int w_dim() const { return config_.w_dim; }
    int num_styles() const { return static_cast<int>(convs_.size()); }
    int resolution() const { return config_.resolution; }

    const std::vector<Dense>& mapping_layers() const { return mapping_; }
    const std::vector<StyleConv>& style_convs() const { return convs_; }
    std::size_t const_offset() const { return const_; }
    const Dense& to_rgb() const { return to_rgb_; }

private:
    Architecture() = default;
    std::size_t add(std::string name, std::vector<int> shape);

    ArchConfig config_;
    std::string hash_;
    std::vector<ParamEntry> entries_;
    std::size_t total_ = 0;
    std::size_t mapping_end_ = 0;
    std::vector<Dense> mapping_;
    std::vector<StyleConv> convs_;
    std::size_t const_ = 0;
    Dense to_rgb_;
};

// A full parameter snapshot. Copying makes a deep, independent clone; the
// architecture table is shared and immutable.
template <typename T>
struct GeneratorParams {
    std::shared_ptr<const Architecture> arch;
    std::vector<T> values;

    const std::string& hash() const { return arch->hash(); }
    std::span<T> array(std::string_view name);
    std::span<const T> array(std::string_view name) const;
    std::span<T> mapping() { return {values.data(), arch->mapping_size()}; }
    std::span<const T> mapping() const { return {values.data(), arch->mapping_size()}; }
    std::span<T> synthesis() { return {values.data() + arch->mapping_size(), arch->synthesis_size()}; }
    std::span<const T> synthesis() const { return {values.data() + arch->mapping_size(), arch->synthesis_size()}; }

    template <typename U>
    GeneratorParams<U> cast() const {
        return {arch, std::vector<U>(values.begin(), values.end())};
    }
};

template <typename T>
GeneratorParams<T> init_toy_generator(std::uint64_t seed, const ArchConfig& config = ArchConfig::toy());

template <typename T>
GeneratorParams<T> clone_params(const GeneratorParams<T>& params) {
    return params;
}

// RMS difference over all synthesis arrays. Throws IncompatibleArchitecture
// on hash mismatch.
template <typename T>
double param_distance(const GeneratorParams<T>& a, const GeneratorParams<T>& b);

void require_same_architecture(const std::string& a, const std::string& b);

// ---------------------------------------------------------------- forward

template <typename T>
StyleVector<T> map_z_to_w(const GeneratorParams<T>& params, const NoiseVector<T>& z);

template <typename T>
StyleStack<T> broadcast_w(const StyleVector<T>& w, int layers);

template <typename T>
Image<T> synthesize(const GeneratorParams<T>& params, const StyleStack<T>& styles);

template <typename T>
Image<T> generate(const GeneratorParams<T>& params, const NoiseVector<T>& z);

// ------------------------------------------------------- differentiable API

// Activations recorded by a forward pass, consumed by the matching backward.
template <typename T>
struct MappingTape {
    std::vector<T> z;
    T norm = 0;
    std::vector<std::vector<T>> inputs;  // input to each dense layer
    std::vector<std::vector<T>> pre;     // pre-activation of each dense layer
};

template <typename T>
struct SynthesisTape {
    struct ConvRecord {
        std::vector<T> input;   // after optional upsample, CBHW
        std::vector<T> style;   // [batch, in_channels]
        std::vector<T> conv;    // raw conv of modulated input, CBHW
        std::vector<T> demod;   // [batch, out_channels]
        std::vector<T> output;  // after activation, CBHW
    };
    int batch = 0;
    std::vector<ConvRecord> convs;
    std::vector<T> rgb;  // tanh output, [3, batch, H, W]
    std::vector<StyleStack<T>> styles;
};

template <typename T>
StyleVector<T> map_forward(const GeneratorParams<T>& params, const NoiseVector<T>& z, MappingTape<T>* tape);

// Returns dL/dz. When grad_params is non-empty it must span the full
// parameter vector; mapping gradients are accumulated into it.
template <typename T>
NoiseVector<T> map_backward(const GeneratorParams<T>& params, const MappingTape<T>& tape,
                            std::span<const T> grad_w, std::span<T> grad_params = {});

template <typename T>
std::vector<Image<T>> synthesize_batch(const GeneratorParams<T>& params, std::span<const StyleStack<T>> styles,
                                       SynthesisTape<T>* tape = nullptr);

// Backpropagates per-image gradients. Synthesis parameter gradients are
// accumulated into grad_params (full-length span, or empty to skip them);
// style gradients are written to grad_styles when it is non-null.
template <typename T>
void synthesize_backward(const GeneratorParams<T>& params, const SynthesisTape<T>& tape,
                         std::span<const Image<T>> grad_images, std::span<T> grad_params,
                         std::vector<StyleStack<T>>* grad_styles);

}  // namespace makeitso

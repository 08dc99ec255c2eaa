#pragma once

// The optimizable latent variable, in one of the three input spaces.

#include "makeitso/generator.hpp"

#include <string>
#include <string_view>

namespace makeitso {

enum class LatentSpace { Z, W, WPlus };

std::string to_string(LatentSpace space);
// Accepts "Z", "W", "W_PLUS" (case-insensitive, "W+" too). Throws ConfigError.
LatentSpace parse_latent_space(std::string_view text);

template <typename T>
struct Latent {
    LatentSpace space = LatentSpace::Z;
    std::vector<T> values;  // z_dim, w_dim, or L * w_dim entries

    bool operator==(const Latent&) const = default;
};

// Maps the latent to the style stack fed to synthesis. For Z the mapping
// network runs and its activations are recorded in `tape`.
template <typename T>
StyleStack<T> latent_to_styles(const GeneratorParams<T>& params, const Latent<T>& latent, MappingTape<T>* tape);

// Converts a style-stack gradient to a gradient on the latent's values.
// Mapping-parameter gradients are accumulated into grad_params when non-empty.
template <typename T>
std::vector<T> latent_backward(const GeneratorParams<T>& params, const Latent<T>& latent, const MappingTape<T>& tape,
                               const StyleStack<T>& grad_styles, std::span<T> grad_params = {});

template <typename T>
Image<T> render_latent(const GeneratorParams<T>& params, const Latent<T>& latent) {
    return synthesize(params, latent_to_styles<T>(params, latent, nullptr));
}

}  // namespace makeitso

#include "makeitso/latent.hpp"

#include <algorithm>
#include <cctype>

namespace makeitso {

std::string to_string(LatentSpace space) {
    switch (space) {
        case LatentSpace::Z: return "Z";
        case LatentSpace::W: return "W";
        case LatentSpace::WPlus: return "W_PLUS";
    }
    return "?";
}

LatentSpace parse_latent_space(std::string_view text) {
    std::string s(text);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
    if (s == "Z") return LatentSpace::Z;
    if (s == "W") return LatentSpace::W;
    if (s == "W_PLUS" || s == "W+" || s == "WPLUS") return LatentSpace::WPlus;
    throw ConfigError("unknown latent space '" + std::string(text) + "' (expected Z, W or W_PLUS)");
}

template <typename T>
StyleStack<T> latent_to_styles(const GeneratorParams<T>& params, const Latent<T>& latent, MappingTape<T>* tape) {
    const auto& arch = *params.arch;
    const int L = arch.num_styles();
    switch (latent.space) {
        case LatentSpace::Z: return broadcast_w(map_forward<T>(params, NoiseVector<T>{latent.values}, tape), L);
        case LatentSpace::W:
            require(static_cast<int>(latent.values.size()) == arch.w_dim(), "W latent has wrong length");
            return broadcast_w(StyleVector<T>{latent.values}, L);
        case LatentSpace::WPlus: {
            require(latent.values.size() == static_cast<std::size_t>(L) * arch.w_dim(), "W+ latent has wrong length");
            StyleStack<T> s(L, arch.w_dim());
            s.data() = latent.values;
            return s;
        }
    }
    throw ContractViolation("invalid latent space");
}

template <typename T>
std::vector<T> latent_backward(const GeneratorParams<T>& params, const Latent<T>& latent, const MappingTape<T>& tape,
                               const StyleStack<T>& grad_styles, std::span<T> grad_params) {
    if (latent.space == LatentSpace::WPlus) return grad_styles.data();
    const int wd = grad_styles.w_dim();
    std::vector<T> gw(wd, T(0));
    for (int l = 0; l < grad_styles.layers(); ++l) {
        auto row = grad_styles.layer(l);
        for (int j = 0; j < wd; ++j) gw[j] += row[j];
    }
    if (latent.space == LatentSpace::W) return gw;
    return map_backward<T>(params, tape, gw, grad_params).values;
}

template StyleStack<float> latent_to_styles<float>(const GeneratorParams<float>&, const Latent<float>&,
                                                   MappingTape<float>*);
template StyleStack<double> latent_to_styles<double>(const GeneratorParams<double>&, const Latent<double>&,
                                                     MappingTape<double>*);
template std::vector<float> latent_backward<float>(const GeneratorParams<float>&, const Latent<float>&,
                                                   const MappingTape<float>&, const StyleStack<float>&,
                                                   std::span<float>);
template std::vector<double> latent_backward<double>(const GeneratorParams<double>&, const Latent<double>&,
                                                     const MappingTape<double>&, const StyleStack<double>&,
                                                     std::span<double>);

}  // namespace makeitso

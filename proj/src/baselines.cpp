#include "makeitso/baselines.hpp"

#include "makeitso/optim.hpp"

#include <cmath>

namespace makeitso {

void BaselineConfig::validate() const {
    if (iters < 1) throw ConfigError("iters must be >= 1");
    if (pivot_iters < 1) throw ConfigError("pivot_iters must be >= 1");
    if (tune_iters < 0) throw ConfigError("tune_iters must be >= 0");
    if (!std::isfinite(lr) || lr <= 0) throw ConfigError("lr must be finite and positive");
    if (!std::isfinite(lr_g) || lr_g < 0) throw ConfigError("lr_g must be finite and non-negative");
    if (mean_samples < 1) throw ConfigError("mean_samples must be >= 1");
    weights.validate();
}

BaselineConfig BaselineConfig::pti_budget(int total_steps) {
    if (total_steps < 2) throw ConfigError("pivotal tuning needs at least 2 steps");
    BaselineConfig c;
    c.pivot_iters = std::max(1, static_cast<int>(std::lround(total_steps * 0.45)));
    c.tune_iters = total_steps - c.pivot_iters;
    return c;
}

template <typename T>
StyleVector<T> mean_w(const GeneratorParams<T>& params, int samples, std::uint64_t seed) {
    require(samples >= 1, "mean_w: samples must be >= 1");
    Rng rng(seed);
    const int wd = params.arch->w_dim();
    std::vector<double> acc(wd, 0.0);
    for (int i = 0; i < samples; ++i) {
        const auto w = map_z_to_w(params, NoiseVector<T>{rng.normal_vector<T>(params.arch->z_dim())});
        for (int j = 0; j < wd; ++j) acc[j] += w.values[j];
    }
    StyleVector<T> out{std::vector<T>(wd)};
    for (int j = 0; j < wd; ++j) out.values[j] = static_cast<T>(acc[j] / samples);
    return out;
}

namespace {

template <typename T>
Latent<T> initial_latent(const GeneratorParams<T>& params, const BaselineConfig& config, LatentSpace space) {
    const auto& arch = *params.arch;
    const std::size_t len = space == LatentSpace::Z   ? arch.z_dim()
                            : space == LatentSpace::W ? arch.w_dim()
                                                      : static_cast<std::size_t>(arch.num_styles()) * arch.w_dim();
    Latent<T> latent{space, {}};
    if (config.init_values) {
        require(config.init_values->size() == len, "baseline: init_values length does not match the latent space");
        latent.values.assign(config.init_values->begin(), config.init_values->end());
        return latent;
    }
    Rng rng(config.seed);
    if (space == LatentSpace::Z) {
        latent.values = rng.normal_vector<T>(len);
        return latent;
    }
    const StyleVector<T> w = config.init == LatentInit::Mean
                                 ? mean_w(params, config.mean_samples, config.seed)
                                 : map_z_to_w(params, NoiseVector<T>{rng.normal_vector<T>(arch.z_dim())});
    latent.values = space == LatentSpace::W ? w.values : broadcast_w(w, arch.num_styles()).data();
    return latent;
}

template <typename T>
LatentOptResult<T> optimize_from(const GeneratorParams<T>& params, const Image<T>& target, Latent<T> latent,
                                 int iters, double lr, const LossWeights& weights,
                                 const FeatureExtractor<T>& extractor) {
    LatentOptResult<T> out;
    Adam<T> adam(latent.values.size(), lr);
    Latent<T> best = latent;
    double best_loss = INFINITY;
    for (int iter = 0; iter < iters; ++iter) {
        MappingTape<T> mtape;
        const StyleStack<T> styles = latent_to_styles<T>(params, latent, &mtape);
        SynthesisTape<T> stape;
        const auto render = synthesize_batch<T>(params, std::span<const StyleStack<T>>(&styles, 1), &stape);
        Image<T> gimg;
        const LossValue lv = total_inversion_loss(weights, extractor, render.front(), target, &gimg);
        out.trace.push_back({iter, lv.recon, lv.perceptual, 0.0});
        if (!std::isfinite(lv.total))
            throw NonFiniteLoss("non-finite latent loss at iteration " + std::to_string(iter), out.trace);
        if (lv.total < best_loss) {
            best_loss = lv.total;
            best = latent;
        }
        out.best_trace.push_back(best_loss);

        std::vector<StyleStack<T>> gstyles;
        synthesize_backward<T>(params, stape, std::span<const Image<T>>(&gimg, 1), std::span<T>(), &gstyles);
        const auto glatent = latent_backward<T>(params, latent, mtape, gstyles.front());
        adam.step(latent.values, glatent);
    }
    // The final step's result is never scored inside the loop; check it too.
    const double last = total_inversion_loss(weights, extractor, render_latent(params, latent), target).total;
    if (last < best_loss) best = latent;
    out.latent = std::move(best);
    out.final_mse = eval_mse(render_latent(params, out.latent), target);
    return out;
}

}  // namespace

template <typename T>
LatentOptResult<T> optimize_latent(const GeneratorParams<T>& params, const Image<T>& target,
                                   const BaselineConfig& config, const FeatureExtractor<T>& extractor) {
    config.validate();
    require(target.height == params.arch->resolution() && target.width == params.arch->resolution(),
            "optimize_latent: target resolution does not match the generator");
    return optimize_from(params, target, initial_latent(params, config, config.space), config.iters, config.lr,
                         config.weights, extractor);
}

template <typename T>
PivotalResult<T> pivotal_tune(const GeneratorParams<T>& params, const Image<T>& target, const BaselineConfig& config,
                              const FeatureExtractor<T>& extractor) {
    config.validate();
    require(target.height == params.arch->resolution() && target.width == params.arch->resolution(),
            "pivotal_tune: target resolution does not match the generator");
    const auto& arch = *params.arch;

    auto phase1 = optimize_from(params, target, initial_latent(params, config, LatentSpace::W), config.pivot_iters,
                                config.lr, config.weights, extractor);
    PivotalResult<T> out;
    out.pivot = StyleVector<T>{phase1.latent.values};
    out.trace = std::move(phase1.trace);
    out.tuned = params;

    const StyleStack<T> styles = broadcast_w(out.pivot, arch.num_styles());
    Adam<T> adam(arch.synthesis_size(), config.lr_g);
    std::vector<T> grad(arch.size());
    const int offset = config.pivot_iters;
    for (int iter = 0; iter < config.tune_iters; ++iter) {
        SynthesisTape<T> stape;
        const auto render = synthesize_batch<T>(out.tuned, std::span<const StyleStack<T>>(&styles, 1), &stape);
        Image<T> gimg;
        const LossValue lv = total_inversion_loss(config.weights, extractor, render.front(), target, &gimg);
        out.trace.push_back({offset + iter, lv.recon, lv.perceptual, 0.0});
        if (!std::isfinite(lv.total))
            throw NonFiniteLoss("non-finite tuning loss at iteration " + std::to_string(offset + iter), out.trace);
        std::fill(grad.begin(), grad.end(), T(0));
        synthesize_backward<T>(out.tuned, stape, std::span<const Image<T>>(&gimg, 1), grad, nullptr);
        adam.step(out.tuned.synthesis(), std::span<const T>(grad).subspan(arch.mapping_size()));
    }
    const Image<T> recon = synthesize(out.tuned, styles);
    out.final_mse = eval_mse(recon, target);
    out.final_perceptual = eval_perceptual(extractor, recon, target);
    return out;
}

#define MAKEITSO_INSTANTIATE_BASELINES(T)                                                                        \
    template StyleVector<T> mean_w<T>(const GeneratorParams<T>&, int, std::uint64_t);                            \
    template LatentOptResult<T> optimize_latent<T>(const GeneratorParams<T>&, const Image<T>&,                  \
                                                   const BaselineConfig&, const FeatureExtractor<T>&);           \
    template PivotalResult<T> pivotal_tune<T>(const GeneratorParams<T>&, const Image<T>&, const BaselineConfig&, \
                                              const FeatureExtractor<T>&);

MAKEITSO_INSTANTIATE_BASELINES(float)
MAKEITSO_INSTANTIATE_BASELINES(double)

}  // namespace makeitso

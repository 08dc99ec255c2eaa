#include "makeitso/inversion.hpp"

#include "makeitso/optim.hpp"

#include <chrono>
#include <cmath>

namespace makeitso {

InversionConfig InversionConfig::preset(int iters) {
    if (iters < 1) throw ConfigError("iteration budget must be >= 1");
    InversionConfig c;
    c.total_iters = iters;
    if (iters == 500)
        c.ema_interval = 100;
    else if (iters == 1000)
        c.ema_interval = 200;
    else
        c.ema_interval = std::max(1, iters / 5);
    return c;
}

void InversionConfig::validate() const {
    if (total_iters < 1) throw ConfigError("total_iters must be >= 1");
    // An interval beyond total_iters is allowed: it switches the blend off.
    if (ema_interval < 1) throw ConfigError("ema_interval must be >= 1");
    if (!(ema_beta >= 0 && ema_beta <= 1)) throw ConfigError("ema_beta must lie in [0, 1]");
    if (replay_n < 1) throw ConfigError("replay_n must be >= 1");
    if (!std::isfinite(lr_z) || !std::isfinite(lr_g) || lr_z < 0 || lr_g < 0)
        throw ConfigError("learning rates must be finite and non-negative");
    if (!std::isfinite(replay_weight) || replay_weight < 0) throw ConfigError("replay_weight must be >= 0");
    if (!(random_anchor_norm > 0)) throw ConfigError("random_anchor_norm must be positive");
    weights.validate();
}

std::vector<int> InversionConfig::ema_schedule() const {
    std::vector<int> out;
    for (int k = ema_interval; k < total_iters; k += ema_interval) out.push_back(k);
    return out;
}

template <typename T>
GeneratorParams<T> ema_blend(const GeneratorParams<T>& anchored, const GeneratorParams<T>& tuned, double beta) {
    require_same_architecture(anchored.hash(), tuned.hash());
    require(beta >= 0 && beta <= 1, "ema_blend: beta must lie in [0, 1]");
    GeneratorParams<T> out = anchored;
    const double keep = 1.0 - beta;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = static_cast<T>(beta * static_cast<double>(anchored.values[i]) +
                                       keep * static_cast<double>(tuned.values[i]));
    return out;
}

template <typename T>
ReplayBatch<T> sample_replay_batch(const GeneratorParams<T>& anchored, const EditBank<T>& bank, int n, Rng& rng,
                                   double random_norm) {
    require(n >= 1, "sample_replay_batch: n must be >= 1");
    const auto& arch = *anchored.arch;
    ReplayBatch<T> batch;
    for (int i = 0; i < n; ++i) {
        NoiseVector<T> z{rng.normal_vector<T>(arch.z_dim())};
        batch.w_plus_s.push_back(broadcast_w(map_z_to_w(anchored, z), arch.num_styles()));
        batch.z_s.push_back(std::move(z));
    }
    for (int i = 0; i < n; ++i) {
        if (bank.empty())
            batch.anchors.push_back(
                random_direction<T>(rng, arch.num_styles(), arch.w_dim(), random_norm, "random-anchor"));
        else
            batch.anchors.push_back(bank.directions()[rng.index(bank.size())]);
    }
    return batch;
}

template <typename T>
std::vector<StyleStack<T>> replay_styles(const ReplayBatch<T>& batch, ReplayTerms terms) {
    std::vector<StyleStack<T>> out;
    if (terms.support)
        for (const auto& s : batch.w_plus_s) out.push_back(s);
    if (terms.anchor)
        for (std::size_t i = 0; i < batch.size(); ++i)
            out.push_back(apply_edit(batch.w_plus_s[i], batch.anchors[i], batch.anchors[i].default_strength));
    return out;
}

template <typename T>
ReplayLossValue replay_loss_against(const GeneratorParams<T>& tuned, std::span<const StyleStack<T>> styles,
                                    std::span<const Image<T>> references, std::size_t support_count, int n,
                                    const FeatureExtractor<T>& extractor, std::span<T> grad_params,
                                    std::vector<StyleStack<T>>* grad_styles) {
    require(styles.size() == references.size(), "replay_loss: style/reference count mismatch");
    require(n >= 1, "replay_loss: n must be >= 1");
    ReplayLossValue v;
    if (styles.empty()) return v;
    const bool want_grad = !grad_params.empty() || grad_styles;

    SynthesisTape<T> tape;
    const auto renders = synthesize_batch<T>(tuned, styles, want_grad ? &tape : nullptr);
    std::vector<Image<T>> perc_grads;
    const auto perc = perceptual_loss_batch<T>(extractor, renders, references, want_grad ? &perc_grads : nullptr);

    const double inv_n = 1.0 / n;
    std::vector<Image<T>> grads;
    for (std::size_t i = 0; i < renders.size(); ++i) {
        Image<T> gr;
        const double r = recon_loss(renders[i], references[i], want_grad ? &gr : nullptr);
        if (i < support_count) {
            v.support_recon += inv_n * r;
            v.support_perceptual += inv_n * perc[i];
        } else {
            v.anchor_recon += inv_n * r;
            v.anchor_perceptual += inv_n * perc[i];
        }
        if (want_grad) {
            const T s = static_cast<T>(inv_n);
            for (std::size_t k = 0; k < gr.size(); ++k) gr.pixels[k] = s * (gr.pixels[k] + perc_grads[i].pixels[k]);
            grads.push_back(std::move(gr));
        }
    }
    v.total = v.support_recon + v.support_perceptual + v.anchor_recon + v.anchor_perceptual;
    if (want_grad) synthesize_backward<T>(tuned, tape, grads, grad_params, grad_styles);
    return v;
}

template <typename T>
ReplayLossValue replay_loss(const GeneratorPair<T>& pair, const ReplayBatch<T>& batch,
                            const FeatureExtractor<T>& extractor, std::span<T> grad_params, ReplayTerms terms) {
    require_same_architecture(pair.anchored.hash(), pair.tuned.hash());
    const auto styles = replay_styles(batch, terms);
    if (styles.empty()) return {};
    const auto references = synthesize_batch<T>(pair.anchored, styles, nullptr);
    const std::size_t support_count = terms.support ? batch.size() : 0;
    return replay_loss_against<T>(pair.tuned, styles, references, support_count, static_cast<int>(batch.size()),
                                  extractor, grad_params, nullptr);
}

template <typename T>
InversionResult<T> make_it_so(const GeneratorPair<T>& start, const Image<T>& target, const EditBank<T>& bank,
                              const InversionConfig& config, const FeatureExtractor<T>& extractor,
                              const ProgressFn& progress) {
    config.validate();
    require_same_architecture(start.anchored.hash(), start.tuned.hash());
    const GeneratorParams<T>& anchored_init = start.anchored;
    const auto& arch = *anchored_init.arch;
    require(target.height == arch.resolution() && target.width == arch.resolution(),
            "make_it_so: target is " + std::to_string(target.height) + "x" + std::to_string(target.width) +
                ", generator renders " + std::to_string(arch.resolution()));
    require(all_finite<T>(target.pixels), "make_it_so: target has non-finite pixels");
    if (!bank.empty()) {
        require_same_architecture(bank.arch_hash(), anchored_init.hash());
        require(bank.directions().front().offsets.layers() == arch.num_styles() &&
                    bank.directions().front().offsets.w_dim() == arch.w_dim(),
                "make_it_so: edit bank shape does not match the generator");
    }

    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(config.seed);
    InversionResult<T> result;
    result.config = config;

    GeneratorPair<T> pair = start;
    const NoiseVector<T> z0{rng.normal_vector<T>(arch.z_dim())};
    Latent<T> latent{config.latent_space, {}};
    switch (config.latent_space) {
        case LatentSpace::Z: latent.values = z0.values; break;
        case LatentSpace::W: latent.values = map_z_to_w(anchored_init, z0).values; break;
        case LatentSpace::WPlus:
            latent.values = broadcast_w(map_z_to_w(anchored_init, z0), arch.num_styles()).data();
            break;
    }

    // Parameter group for the generator: synthesis only, or everything when
    // the mapping network is tuned as well.
    const std::size_t g_begin = config.tune_mapping ? 0 : arch.mapping_size();
    const std::size_t g_size = arch.size() - g_begin;
    Adam<T> adam_latent(latent.values.size(), config.lr_z);
    Adam<T> adam_gen(g_size, config.lr_g);
    Adam<T> adam_replay(arch.synthesis_size(), config.lr_g);

    const ReplayTerms terms{config.support_terms, config.anchor_terms};
    const bool replay_on = config.replay_enabled();
    const auto schedule = config.ema_schedule();
    auto next_ema = schedule.begin();

    result.initial_mse = eval_mse(render_latent(pair.tuned, latent), target);

    std::vector<T> grad(arch.size());
    std::vector<T> replay_grad(arch.size());
    for (int iter = 0; iter < config.total_iters; ++iter) {
        if (next_ema != schedule.end() && *next_ema == iter) {
            pair.anchored = ema_blend(pair.anchored, pair.tuned, config.ema_beta);
            result.ema_iterations.push_back(iter);
            ++next_ema;
        }

        const ReplayBatch<T> batch =
            sample_replay_batch(pair.anchored, bank, config.replay_n, rng, config.random_anchor_norm);

        // (c) target step on the latent and the tuned generator.
        MappingTape<T> mtape;
        const StyleStack<T> styles = latent_to_styles<T>(pair.tuned, latent, &mtape);
        SynthesisTape<T> stape;
        const auto render = synthesize_batch<T>(pair.tuned, std::span<const StyleStack<T>>(&styles, 1), &stape);
        Image<T> gimg;
        const LossValue lv = total_inversion_loss(config.weights, extractor, render.front(), target, &gimg);

        TraceRow row{iter, lv.recon, lv.perceptual, 0.0};
        if (!std::isfinite(lv.total)) {
            result.trace.push_back(row);
            throw NonFiniteLoss("non-finite inversion loss at iteration " + std::to_string(iter), result.trace);
        }

        std::fill(grad.begin(), grad.end(), T(0));
        std::vector<StyleStack<T>> gstyles;
        synthesize_backward<T>(pair.tuned, stape, std::span<const Image<T>>(&gimg, 1), grad, &gstyles);
        const std::vector<T> glatent = latent_backward<T>(pair.tuned, latent, mtape, gstyles.front(),
                                                          config.tune_mapping ? std::span<T>(grad) : std::span<T>());

        ReplayLossValue rv;
        if (config.summed_step && replay_on) {
            std::fill(replay_grad.begin(), replay_grad.end(), T(0));
            rv = replay_loss<T>(pair, batch, extractor, replay_grad, terms);
            const T w = static_cast<T>(config.replay_weight);
            for (std::size_t i = arch.mapping_size(); i < grad.size(); ++i) grad[i] += w * replay_grad[i];
        }
        adam_latent.step(latent.values, glatent);
        adam_gen.step(std::span<T>(pair.tuned.values).subspan(g_begin), std::span<const T>(grad).subspan(g_begin));

        // (d) replay step on the tuned synthesis network only.
        if (!config.summed_step && replay_on) {
            std::fill(replay_grad.begin(), replay_grad.end(), T(0));
            rv = replay_loss<T>(pair, batch, extractor, replay_grad, terms);
            if (config.replay_weight != 1.0) {
                const T w = static_cast<T>(config.replay_weight);
                for (auto& g : replay_grad) g *= w;
            }
            adam_replay.step(pair.tuned.synthesis(),
                             std::span<const T>(replay_grad).subspan(arch.mapping_size()));
        }
        row.replay = config.replay_weight * rv.total;
        if (!std::isfinite(row.replay)) {
            result.trace.push_back(row);
            throw NonFiniteLoss("non-finite replay loss at iteration " + std::to_string(iter), result.trace);
        }
        result.trace.push_back(row);
        if (progress) progress(iter + 1, config.total_iters);
        if (config.early_stop_mse > 0 && lv.recon < config.early_stop_mse) break;
    }

    result.latent = std::move(latent);
    result.tuned = std::move(pair.tuned);
    result.anchored_final = std::move(pair.anchored);
    const Image<T> recon = reconstruct(result);
    result.final_mse = eval_mse(recon, target);
    result.final_perceptual = eval_perceptual(extractor, recon, target);
    result.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

template <typename T>
InversionResult<T> make_it_so(const GeneratorParams<T>& anchored_init, const Image<T>& target,
                              const EditBank<T>& bank, const InversionConfig& config,
                              const FeatureExtractor<T>& extractor, const ProgressFn& progress) {
    return make_it_so<T>(GeneratorPair<T>{anchored_init, anchored_init}, target, bank, config, extractor, progress);
}

template <typename T>
InversionResult<T> make_it_so(const GeneratorParams<T>& anchored_init, const Image<T>& target,
                              const EditBank<T>& bank, const InversionConfig& config) {
    const auto extractor = FeatureExtractor<T>::random_pyramid(anchored_init.arch->resolution());
    return make_it_so<T>(anchored_init, target, bank, config, extractor, {});
}

#define MAKEITSO_INSTANTIATE_INVERSION(T)                                                                           \
    template GeneratorParams<T> ema_blend<T>(const GeneratorParams<T>&, const GeneratorParams<T>&, double);         \
    template ReplayBatch<T> sample_replay_batch<T>(const GeneratorParams<T>&, const EditBank<T>&, int, Rng&,        \
                                                   double);                                                         \
    template std::vector<StyleStack<T>> replay_styles<T>(const ReplayBatch<T>&, ReplayTerms);                       \
    template ReplayLossValue replay_loss_against<T>(const GeneratorParams<T>&, std::span<const StyleStack<T>>,      \
                                                    std::span<const Image<T>>, std::size_t, int,                    \
                                                    const FeatureExtractor<T>&, std::span<T>,                       \
                                                    std::vector<StyleStack<T>>*);                                   \
    template ReplayLossValue replay_loss<T>(const GeneratorPair<T>&, const ReplayBatch<T>&,                         \
                                            const FeatureExtractor<T>&, std::span<T>, ReplayTerms);                 \
    template InversionResult<T> make_it_so<T>(const GeneratorParams<T>&, const Image<T>&, const EditBank<T>&,       \
                                              const InversionConfig&, const FeatureExtractor<T>&, const ProgressFn&); \
    template InversionResult<T> make_it_so<T>(const GeneratorParams<T>&, const Image<T>&, const EditBank<T>&,       \
                                              const InversionConfig&);                                              \
    template InversionResult<T> make_it_so<T>(const GeneratorPair<T>&, const Image<T>&, const EditBank<T>&,         \
                                              const InversionConfig&, const FeatureExtractor<T>&, const ProgressFn&);

MAKEITSO_INSTANTIATE_INVERSION(float)
MAKEITSO_INSTANTIATE_INVERSION(double)

}  // namespace makeitso

#pragma once

// Joint latent + generator optimization with experience replay against an
// EMA-anchored reference model.
//
// Each iteration:
//   (a) at positive multiples of ema_interval (below total_iters), blend the
//       anchored model toward the tuned one: anchored = b*anchored + (1-b)*tuned
//   (b) draw support latents from the anchored model and anchor edits from the bank
//   (c) one Adam step on the latent and the tuned synthesis network against the target
//   (d) one Adam step on the tuned synthesis network against the replay loss
// The tuned mapping network is never updated unless tune_mapping is set.

#include "makeitso/editing.hpp"
#include "makeitso/latent.hpp"
#include "makeitso/objectives.hpp"

#include <functional>
#include <stdexcept>
#include <vector>

namespace makeitso {

struct InversionConfig {
    int total_iters = 500;
    int ema_interval = 100;
    double ema_beta = 0.9999;
    int replay_n = 4;
    double lr_z = 5e-2;
    double lr_g = 3e-3;
    LossWeights weights;
    std::uint64_t seed = 0;
    bool tune_mapping = false;

    // Global multiplier on the replay objective; 0 disables step (d).
    double replay_weight = 1.0;
    bool support_terms = true;
    bool anchor_terms = true;
    // Minimize target + replay losses in one combined step instead of (c) then (d).
    bool summed_step = false;
    LatentSpace latent_space = LatentSpace::Z;
    // Stop once eval_mse drops below this value; 0 disables.
    double early_stop_mse = 0.0;
    // Per-layer norm of random anchors used when the bank is empty.
    double random_anchor_norm = 1.0;

    bool replay_enabled() const { return replay_weight > 0 && (support_terms || anchor_terms); }

    // 500 iterations / EMA every 100, 1000 / every 200; other budgets get
    // interval = iters / 5 so four blends still happen.
    static InversionConfig preset(int iters);
    void validate() const;
    // Iterations at which the anchored model is blended.
    std::vector<int> ema_schedule() const;
};

template <typename T>
struct GeneratorPair {
    GeneratorParams<T> anchored;
    GeneratorParams<T> tuned;
};

template <typename T>
struct ReplayBatch {
    std::vector<NoiseVector<T>> z_s;
    std::vector<StyleStack<T>> w_plus_s;
    std::vector<EditDirection<T>> anchors;

    std::size_t size() const { return z_s.size(); }
};

struct TraceRow {
    int iter = 0;
    double recon = 0;
    double perceptual = 0;
    double replay = 0;
};

template <typename T>
struct InversionResult {
    Latent<T> latent;  // z* for Z-space runs
    GeneratorParams<T> tuned;
    GeneratorParams<T> anchored_final;
    std::vector<TraceRow> trace;
    std::vector<int> ema_iterations;
    double initial_mse = 0;
    double final_mse = 0;
    double final_perceptual = 0;
    double wall_time_s = 0;
    InversionConfig config;

    NoiseVector<T> z_star() const { return {latent.values}; }
};

// Thrown when a loss becomes NaN/Inf; carries the trace up to the failure.
class NonFiniteLoss : public std::runtime_error {
public:
    NonFiniteLoss(const std::string& what, std::vector<TraceRow> trace)
        : std::runtime_error(what), trace_(std::move(trace)) {}
    const std::vector<TraceRow>& trace() const { return trace_; }

private:
    std::vector<TraceRow> trace_;
};

template <typename T>
GeneratorParams<T> ema_blend(const GeneratorParams<T>& anchored, const GeneratorParams<T>& tuned, double beta);

// Empty bank: anchors are random directions with per-layer norm `random_norm`.
template <typename T>
ReplayBatch<T> sample_replay_batch(const GeneratorParams<T>& anchored, const EditBank<T>& bank, int n, Rng& rng,
                                   double random_norm = 1.0);

struct ReplayLossValue {
    double total = 0;
    double support_recon = 0, support_perceptual = 0;
    double anchor_recon = 0, anchor_perceptual = 0;
};

struct ReplayTerms {
    bool support = true;
    bool anchor = true;
};

// (1/N) sum over the batch of recon + perceptual between tuned and anchored
// renders of the support styles and of the anchor-edited support styles.
// Anchored renders are constants. When grad_params is non-empty (full
// parameter length) the tuned synthesis gradient is accumulated into it.
template <typename T>
ReplayLossValue replay_loss(const GeneratorPair<T>& pair, const ReplayBatch<T>& batch,
                            const FeatureExtractor<T>& extractor, std::span<T> grad_params = {},
                            ReplayTerms terms = {});

// Same loss against precomputed reference renders; exposes the gradient with
// respect to the tuned model's input styles as well.
// Pairs [0, support_count) are support terms, the rest anchor terms.
template <typename T>
ReplayLossValue replay_loss_against(const GeneratorParams<T>& tuned, std::span<const StyleStack<T>> styles,
                                    std::span<const Image<T>> references, std::size_t support_count, int n,
                                    const FeatureExtractor<T>& extractor, std::span<T> grad_params,
                                    std::vector<StyleStack<T>>* grad_styles);

// Support and anchor-edited style stacks of a batch, in render order
// (all support stacks, then all anchor stacks).
template <typename T>
std::vector<StyleStack<T>> replay_styles(const ReplayBatch<T>& batch, ReplayTerms terms);

using ProgressFn = std::function<void(int done, int total)>;

template <typename T>
InversionResult<T> make_it_so(const GeneratorParams<T>& anchored_init, const Image<T>& target,
                              const EditBank<T>& bank, const InversionConfig& config,
                              const FeatureExtractor<T>& extractor, const ProgressFn& progress = {});

// Starts from an explicit (anchored, tuned) pair instead of two copies of one
// model, e.g. to resume a run. The mapping-frozen invariant then refers to start.tuned.
template <typename T>
InversionResult<T> make_it_so(const GeneratorPair<T>& start, const Image<T>& target, const EditBank<T>& bank,
                              const InversionConfig& config, const FeatureExtractor<T>& extractor,
                              const ProgressFn& progress = {});

// Convenience overload with the default extractor for the generator's resolution.
template <typename T>
InversionResult<T> make_it_so(const GeneratorParams<T>& anchored_init, const Image<T>& target,
                              const EditBank<T>& bank, const InversionConfig& config);

template <typename T>
GeneratorParams<T> final_anchored_sync(const InversionResult<T>& result) {
    return result.anchored_final;
}

template <typename T>
Image<T> reconstruct(const InversionResult<T>& result) {
    return render_latent(result.tuned, result.latent);
}

}  // namespace makeitso

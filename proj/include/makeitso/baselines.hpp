#pragma once

// Frozen-generator latent optimization in Z, W or W+, and the two-phase
// pivotal-tuning baseline (optimize a W pivot, then fine-tune synthesis around it).

#include "makeitso/inversion.hpp"

#include <optional>

namespace makeitso {

enum class LatentInit { Mean, Random };

struct BaselineConfig {
    LatentSpace space = LatentSpace::W;
    int iters = 500;
    double lr = 5e-2;
    int pivot_iters = 900;
    int tune_iters = 1100;
    double lr_g = 3e-3;
    LossWeights weights;
    std::uint64_t seed = 0;
    // W / W+ start from the mean of `mean_samples` mapped draws by default.
    // Z always starts from a standard normal draw.
    LatentInit init = LatentInit::Mean;
    int mean_samples = 10000;
    // Explicit starting point; overrides `init` when set. Length must match the space.
    std::optional<std::vector<double>> init_values;

    void validate() const;
    // Pivot/tune split of a total step budget in the 900:1100 ratio.
    static BaselineConfig pti_budget(int total_steps);
};

template <typename T>
struct LatentOptResult {
    Latent<T> latent;                // best latent seen
    std::vector<TraceRow> trace;     // loss at every step
    std::vector<double> best_trace;  // running minimum of the total loss
    double final_mse = 0;
};

template <typename T>
struct PivotalResult {
    StyleVector<T> pivot;
    GeneratorParams<T> tuned;
    std::vector<TraceRow> trace;  // pivot steps, then tuning steps
    double final_mse = 0;
    double final_perceptual = 0;

    Latent<T> latent() const { return {LatentSpace::W, pivot.values}; }
};

// Mean of `samples` mapped standard-normal draws (seeded).
template <typename T>
StyleVector<T> mean_w(const GeneratorParams<T>& params, int samples, std::uint64_t seed);

template <typename T>
LatentOptResult<T> optimize_latent(const GeneratorParams<T>& params, const Image<T>& target,
                                   const BaselineConfig& config, const FeatureExtractor<T>& extractor);

template <typename T>
PivotalResult<T> pivotal_tune(const GeneratorParams<T>& params, const Image<T>& target, const BaselineConfig& config,
                              const FeatureExtractor<T>& extractor);

}  // namespace makeitso

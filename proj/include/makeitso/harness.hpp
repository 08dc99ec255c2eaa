#pragma once

// Seeded benchmark protocols: inversion quality, edit deviation, leave-one-out
// ablations and latent-space choice. Every method is a config of the engine
// or a baseline; nothing is special-cased per protocol.

#include "makeitso/baselines.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace makeitso {

enum class TargetKind { InRange, Shifted, Checkerboard };
std::string to_string(TargetKind kind);
TargetKind parse_target_kind(std::string_view text);

struct BenchmarkSpec {
    int n_inversion_targets = 10;
    int n_edit_samples = 32;
    int n_directions = 8;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::vector<std::string> methods{"make_it_so", "pti"};
    int iters = 500;  // gradient-step budget per inversion
    // InRange targets come from the generator itself; Shifted ones from a copy
    // whose synthesis weights are perturbed by `shift_sigma` (relative), so the
    // generator under test cannot reproduce them exactly.
    TargetKind targets = TargetKind::Shifted;
    double shift_sigma = 0.3;
    double bank_norm = 1.0;
    std::uint64_t generator_seed = 1;
    std::uint64_t bank_seed = 11;
    // Worker threads over independent cells; 0 means OpenMP's default.
    int threads = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static BenchmarkSpec from_json(const nlohmann::json& j);

    // Named toy presets: "tab1-toy", "tab2-toy", "fig8-toy".
    static BenchmarkSpec preset(std::string_view name);
};

// What a method id means. Engine methods carry an InversionConfig built from
// flags only; baselines carry their kind.
struct MethodInfo {
    std::string id;
    std::string label;
    enum class Kind { MakeItSo, PivotalTune, FrozenLatent, Identity } kind;
    std::optional<InversionConfig> config;  // MakeItSo
    std::optional<LatentSpace> space;       // FrozenLatent
    int iters = 0;                          // gradient-step budget for baselines
};

std::vector<std::string> known_methods();
// Throws ConfigError for an unknown id.
MethodInfo resolve_method(std::string_view id, int iters);

struct SeedCell {
    std::uint64_t seed = 0;
    std::optional<double> inversion_mse, inversion_perceptual;
    std::optional<double> edit_mse, edit_perceptual;
    int failed_targets = 0;
    bool operator==(const SeedCell&) const = default;
};

struct ReportRow {
    std::string method;
    std::vector<SeedCell> per_seed;
    std::optional<double> inversion_mse, inversion_perceptual;
    std::optional<double> edit_mse, edit_perceptual;
    bool operator==(const ReportRow&) const = default;
};

struct Report {
    std::string protocol;
    nlohmann::json spec;
    std::vector<ReportRow> rows;

    const ReportRow* row(std::string_view method) const;
    // Recomputes every row mean from its per-seed values.
    void finalize();
    bool operator==(const Report&) const = default;
};

struct EditDeviation {
    double mse = 0;
    double perceptual = 0;
};

// Mean distance between `original` and `updated` renders over m seeded latents,
// each unedited and under every bank direction at its default strength.
EditDeviation edit_deviation(const GeneratorParams<float>& original, const GeneratorParams<float>& updated,
                             const EditBank<float>& bank, int m, std::uint64_t seed,
                             const FeatureExtractor<float>& extractor);

GeneratorParams<float> shifted_generator(const GeneratorParams<float>& params, double sigma, std::uint64_t seed);

// Checkerboard (cells of resolution/4) plus a per-channel linear ramp; values in [-0.9, 0.9].
Image<float> checkerboard_target(int resolution);

// Target `index` of a benchmark seed.
Image<float> benchmark_target(const BenchmarkSpec& spec, const GeneratorParams<float>& generator,
                              std::uint64_t seed, int index);

struct MethodOutput {
    Image<float> reconstruction;
    GeneratorParams<float> updated;
    int ema_updates = 0;
};

MethodOutput run_method(const MethodInfo& method, const GeneratorParams<float>& generator, const Image<float>& target,
                        const EditBank<float>& bank, std::uint64_t run_seed, const FeatureExtractor<float>& extractor);

using CellProgress = std::function<void(int done, int total)>;

// Runs every (method, seed, target) cell. `inversion` / `edit` select which columns are filled.
Report run_benchmark(const std::string& protocol, const BenchmarkSpec& spec, const GeneratorParams<float>& generator,
                     const EditBank<float>& bank, bool inversion, bool edit, const CellProgress& progress = {});

Report run_inversion_quality(const BenchmarkSpec& spec, const GeneratorParams<float>& generator,
                             const EditBank<float>& bank, const CellProgress& progress = {});
Report run_edit_quality(const BenchmarkSpec& spec, const GeneratorParams<float>& generator,
                        const EditBank<float>& bank, const CellProgress& progress = {});
// Rows: full, w/o support, w/o anchor, w/o EMA, w/o extended iterations, pti.
Report run_leave_one_out(BenchmarkSpec spec, const GeneratorParams<float>& generator, const EditBank<float>& bank,
                         const CellProgress& progress = {});
// Make It So in Z / W / W+, plus frozen-generator inversion in each space.
Report run_latent_space_ablation(BenchmarkSpec spec, const GeneratorParams<float>& generator,
                                 const EditBank<float>& bank, const CellProgress& progress = {});

enum class ReportFormat { Json, Csv, Markdown };
ReportFormat parse_report_format(std::string_view text);

std::string report_to_json(const Report& report);
Report report_from_json(const std::string& text);
std::string report_to_csv(const Report& report);
std::string report_to_markdown(const Report& report);
void emit_report(const Report& report, const std::filesystem::path& path, ReportFormat format);

}  // namespace makeitso

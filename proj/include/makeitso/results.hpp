#pragma once

// On-disk layout of one inversion run:
//   manifest.json       config, seeds, extractor, EMA iterations, metrics, file names
//   z.json              optimized latent {space, values}
//   tuned.misockpt      fine-tuned generator
//   anchored.misockpt   final anchored generator
//   loss.csv            iter,recon,perceptual,replay
//   target.png, reconstruction.png

#include "makeitso/checkpoint.hpp"
#include "makeitso/inversion.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace makeitso {

inline constexpr int kManifestVersion = 1;

nlohmann::json config_to_json(const InversionConfig& config);
// Missing keys keep their defaults; wrong types raise FormatError naming the key.
InversionConfig config_from_json(const nlohmann::json& j);

// Starts from the preset for "iters" (default 500) and applies every other
// key on top. Validates the result.
InversionConfig config_with_overrides(const nlohmann::json& overrides);

// Doubles are written in shortest round-trip form, so values reload bit-exactly.
std::string latent_to_json(const Latent<float>& latent);
Latent<float> latent_from_json(const std::string& text);

std::string trace_to_csv(const std::vector<TraceRow>& trace);

struct RunInputs {
    std::string checkpoint;  // path of the starting generator, as given
    std::string bank;        // empty when none
    std::string target;      // source image path or a description
    int target_height = 0;   // original dimensions before resizing
    int target_width = 0;
};

// Writes every artifact into `dir` (created if needed) and returns the manifest.
nlohmann::json save_result(const InversionResult<float>& result, const Image<float>& target,
                           const FeatureExtractor<float>& extractor, const RunInputs& inputs,
                           const std::filesystem::path& dir);

struct StoredResult {
    nlohmann::json manifest;
    Latent<float> latent;
    GeneratorParams<float> tuned;
    std::optional<GeneratorParams<float>> anchored;  // loaded lazily by callers that need it
    std::filesystem::path dir;
};

// Loads the manifest, latent and tuned checkpoint. Throws FormatError when the
// directory is incomplete.
StoredResult load_result(const std::filesystem::path& dir, bool with_anchored = false);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace makeitso

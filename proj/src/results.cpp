#include "makeitso/results.hpp"

#include "makeitso/image_io.hpp"

#include <fstream>
#include <sstream>

namespace makeitso {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string(), path.filename().string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

json config_to_json(const InversionConfig& c) {
    return {{"total_iters", c.total_iters},
            {"ema_interval", c.ema_interval},
            {"ema_beta", c.ema_beta},
            {"replay_n", c.replay_n},
            {"lr_z", c.lr_z},
            {"lr_g", c.lr_g},
            {"lambda_recon", c.weights.recon},
            {"lambda_lpips", c.weights.perceptual},
            {"seed", c.seed},
            {"tune_mapping", c.tune_mapping},
            {"replay_weight", c.replay_weight},
            {"support_terms", c.support_terms},
            {"anchor_terms", c.anchor_terms},
            {"summed_step", c.summed_step},
            {"latent_space", to_string(c.latent_space)},
            {"early_stop_mse", c.early_stop_mse},
            {"random_anchor_norm", c.random_anchor_norm}};
}

InversionConfig config_from_json(const json& j) {
    if (!j.is_object()) throw FormatError("expected an object", "config");
    InversionConfig c;
    auto num = [&](const char* key, auto& dst) {
        if (!j.contains(key)) return;
        if (!j[key].is_number()) throw FormatError("expected number", std::string("config.") + key);
        using D = std::decay_t<decltype(dst)>;
        if constexpr (std::is_integral_v<D>)
            if (!j[key].is_number_integer()) throw FormatError("expected integer", std::string("config.") + key);
        dst = j[key].get<std::decay_t<decltype(dst)>>();
    };
    auto flag = [&](const char* key, bool& dst) {
        if (!j.contains(key)) return;
        if (!j[key].is_boolean()) throw FormatError("expected boolean", std::string("config.") + key);
        dst = j[key].get<bool>();
    };
    num("total_iters", c.total_iters);
    num("ema_interval", c.ema_interval);
    num("ema_beta", c.ema_beta);
    num("replay_n", c.replay_n);
    num("lr_z", c.lr_z);
    num("lr_g", c.lr_g);
    num("lambda_recon", c.weights.recon);
    num("lambda_lpips", c.weights.perceptual);
    num("seed", c.seed);
    flag("tune_mapping", c.tune_mapping);
    num("replay_weight", c.replay_weight);
    flag("support_terms", c.support_terms);
    flag("anchor_terms", c.anchor_terms);
    flag("summed_step", c.summed_step);
    if (j.contains("latent_space")) {
        if (!j["latent_space"].is_string()) throw FormatError("expected string", "config.latent_space");
        try {
            c.latent_space = parse_latent_space(j["latent_space"].get<std::string>());
        } catch (const ConfigError& e) {
            throw FormatError(e.what(), "config.latent_space");
        }
    }
    num("early_stop_mse", c.early_stop_mse);
    num("random_anchor_norm", c.random_anchor_norm);
    return c;
}

InversionConfig config_with_overrides(const json& overrides) {
    if (!overrides.is_null() && !overrides.is_object()) throw FormatError("expected an object", "config");
    int iters = 500;
    if (overrides.contains("iters")) {
        if (!overrides["iters"].is_number_integer()) throw FormatError("expected integer", "config.iters");
        iters = overrides["iters"].get<int>();
    }
    json merged = config_to_json(InversionConfig::preset(iters));
    if (overrides.is_object())
        for (const auto& [key, value] : overrides.items())
            if (key != "iters") {
                if (!merged.contains(key)) throw FormatError("unknown config key", "config." + key);
                merged[key] = value;
            }
    InversionConfig c = config_from_json(merged);
    c.validate();
    return c;
}

std::string latent_to_json(const Latent<float>& latent) {
    json values = json::array();
    for (float v : latent.values) values.push_back(v);
    return json{{"space", to_string(latent.space)}, {"values", std::move(values)}}.dump() + "\n";
}

Latent<float> latent_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("latent file is not valid JSON: ") + e.what(), "$");
    }
    if (!j.is_object() || !j.contains("values") || !j["values"].is_array()) throw FormatError("missing array", "values");
    Latent<float> out;
    if (j.contains("space")) {
        if (!j["space"].is_string()) throw FormatError("expected string", "space");
        try {
            out.space = parse_latent_space(j["space"].get<std::string>());
        } catch (const ConfigError& e) {
            throw FormatError(e.what(), "space");
        }
    }
    for (std::size_t i = 0; i < j["values"].size(); ++i) {
        const auto& v = j["values"][i];
        if (!v.is_number()) throw FormatError("expected number", "values[" + std::to_string(i) + "]");
        out.values.push_back(v.get<float>());
    }
    return out;
}

std::string trace_to_csv(const std::vector<TraceRow>& trace) {
    std::ostringstream out;
    out.precision(17);
    out << "iter,recon,perceptual,replay\n";
    for (const auto& r : trace) out << r.iter << ',' << r.recon << ',' << r.perceptual << ',' << r.replay << '\n';
    return out.str();
}

json save_result(const InversionResult<float>& result, const Image<float>& target,
                 const FeatureExtractor<float>& extractor, const RunInputs& inputs,
                 const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_file(dir / "z.json", latent_to_json(result.latent));
    save_checkpoint(result.tuned, dir / "tuned.misockpt");
    save_checkpoint(result.anchored_final, dir / "anchored.misockpt");
    write_file(dir / "loss.csv", trace_to_csv(result.trace));
    write_png(target, dir / "target.png");
    write_png(reconstruct(result), dir / "reconstruction.png");

    json manifest = {
        {"manifest_version", kManifestVersion},
        {"config", config_to_json(result.config)},
        {"seed", result.config.seed},
        {"arch_hash", result.tuned.hash()},
        {"arch_config", json::parse(result.tuned.arch->config().to_json())},
        {"extractor", {{"id", extractor.id()}, {"seed", extractor.seed()}, {"resolution", extractor.resolution()}}},
        {"ema_iterations", result.ema_iterations},
        {"ema_updates", result.ema_iterations.size()},
        {"iterations_run", result.trace.size()},
        {"metrics",
         {{"initial_mse", result.initial_mse},
          {"final_mse", result.final_mse},
          {"final_perceptual", result.final_perceptual},
          {"wall_time_s", result.wall_time_s}}},
        {"inputs",
         {{"checkpoint", inputs.checkpoint},
          {"bank", inputs.bank},
          {"target", inputs.target},
          {"target_original_height", inputs.target_height},
          {"target_original_width", inputs.target_width}}},
        {"files",
         {{"latent", "z.json"},
          {"tuned_checkpoint", "tuned.misockpt"},
          {"anchored_checkpoint", "anchored.misockpt"},
          {"loss_csv", "loss.csv"},
          {"target_png", "target.png"},
          {"reconstruction_png", "reconstruction.png"}}}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    return manifest;
}

StoredResult load_result(const std::filesystem::path& dir, bool with_anchored) {
    StoredResult out;
    out.dir = dir;
    if (!std::filesystem::is_directory(dir)) throw FormatError("result directory not found: " + dir.string(), "result");
    try {
        out.manifest = json::parse(read_file(dir / "manifest.json"));
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest is not valid JSON: ") + e.what(), "manifest.json");
    }
    out.latent = latent_from_json(read_file(dir / "z.json"));
    out.tuned = load_checkpoint(dir / "tuned.misockpt");
    if (with_anchored) out.anchored = load_checkpoint(dir / "anchored.misockpt", out.tuned.hash());
    return out;
}

}  // namespace makeitso

#include "makeitso/harness.hpp"

#include <omp.h>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace makeitso {

using nlohmann::json;

namespace {

// SplitMix64 finalizer; derives independent sub-seeds from a benchmark seed.
std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e019ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

enum Stream : std::uint64_t { kTargetLatent = 1, kShift = 2, kRun = 3, kEditSamples = 4 };

}  // namespace

std::string to_string(TargetKind kind) {
    switch (kind) {
        case TargetKind::InRange: return "in_range";
        case TargetKind::Shifted: return "shifted";
        case TargetKind::Checkerboard: return "checkerboard";
    }
    return "?";
}

TargetKind parse_target_kind(std::string_view text) {
    if (text == "in_range") return TargetKind::InRange;
    if (text == "shifted") return TargetKind::Shifted;
    if (text == "checkerboard") return TargetKind::Checkerboard;
    throw ConfigError("unknown target kind '" + std::string(text) + "' (expected in_range, shifted or checkerboard)");
}

// ------------------------------------------------------------------ spec

void BenchmarkSpec::validate() const {
    if (n_inversion_targets < 1) throw ConfigError("n_inversion_targets must be >= 1");
    if (n_edit_samples < 1) throw ConfigError("n_edit_samples must be >= 1");
    if (n_directions < 1) throw ConfigError("n_directions must be >= 1");
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    if (methods.empty()) throw ConfigError("at least one method is required");
    if (iters < 2) throw ConfigError("iters must be >= 2");
    if (!(shift_sigma >= 0) || !(bank_norm > 0)) throw ConfigError("shift_sigma must be >= 0 and bank_norm > 0");
    for (const auto& m : methods) resolve_method(m, iters);
}

json BenchmarkSpec::to_json() const {
    return {{"n_inversion_targets", n_inversion_targets},
            {"n_edit_samples", n_edit_samples},
            {"n_directions", n_directions},
            {"seeds", seeds},
            {"methods", methods},
            {"iters", iters},
            {"targets", makeitso::to_string(targets)},
            {"shift_sigma", shift_sigma},
            {"bank_norm", bank_norm},
            {"generator_seed", generator_seed},
            {"bank_seed", bank_seed}};
}

BenchmarkSpec BenchmarkSpec::from_json(const json& j) {
    if (!j.is_object()) throw FormatError("expected an object", "spec");
    BenchmarkSpec s;
    try {
        s.n_inversion_targets = j.value("n_inversion_targets", s.n_inversion_targets);
        s.n_edit_samples = j.value("n_edit_samples", s.n_edit_samples);
        s.n_directions = j.value("n_directions", s.n_directions);
        s.seeds = j.value("seeds", s.seeds);
        s.methods = j.value("methods", s.methods);
        s.iters = j.value("iters", s.iters);
        s.targets = parse_target_kind(j.value("targets", makeitso::to_string(s.targets)));
        s.shift_sigma = j.value("shift_sigma", s.shift_sigma);
        s.bank_norm = j.value("bank_norm", s.bank_norm);
        s.generator_seed = j.value("generator_seed", s.generator_seed);
        s.bank_seed = j.value("bank_seed", s.bank_seed);
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad benchmark spec: ") + e.what(), "spec");
    }
    return s;
}

BenchmarkSpec BenchmarkSpec::preset(std::string_view name) {
    BenchmarkSpec s;
    if (name == "tab1-toy") {
        s.methods = {"make_it_so", "pti", "latent_z", "latent_w", "latent_wplus"};
    } else if (name == "tab2-toy") {
        // The full method runs the extended budget; "w/o extended" halves it.
        s.iters = 1000;
        s.methods = {"make_it_so", "wo_support", "wo_anchor", "wo_ema", "wo_extended", "pti"};
    } else if (name == "fig8-toy") {
        s.methods = {"make_it_so", "make_it_so_w", "make_it_so_wplus", "latent_z", "latent_w", "latent_wplus"};
    } else {
        throw ConfigError("unknown preset '" + std::string(name) + "' (expected tab1-toy, tab2-toy or fig8-toy)");
    }
    return s;
}

// --------------------------------------------------------------- methods

std::vector<std::string> known_methods() {
    return {"make_it_so",       "wo_support", "wo_anchor", "wo_ema",   "wo_extended",  "wo_replay", "summed_step",
            "make_it_so_w",     "make_it_so_wplus",        "pti",      "latent_z",     "latent_w",  "latent_wplus",
            "identity"};
}

MethodInfo resolve_method(std::string_view id, int iters) {
    MethodInfo m;
    m.id = std::string(id);
    m.iters = iters;
    m.kind = MethodInfo::Kind::MakeItSo;
    InversionConfig c = InversionConfig::preset(iters);
    if (id == "make_it_so") {
        m.label = "Make It So (full)";
    } else if (id == "wo_support") {
        m.label = "w/o support loss";
        c.support_terms = false;
    } else if (id == "wo_anchor") {
        m.label = "w/o anchor loss";
        c.anchor_terms = false;
    } else if (id == "wo_ema") {
        m.label = "w/o EMA";
        c.ema_interval = iters + 1;
    } else if (id == "wo_extended") {
        m.label = "w/o extended iterations";
        c = InversionConfig::preset(std::max(1, iters / 2));
    } else if (id == "wo_replay") {
        m.label = "w/o replay";
        c.replay_weight = 0.0;
    } else if (id == "summed_step") {
        m.label = "summed single step";
        c.summed_step = true;
    } else if (id == "make_it_so_w") {
        m.label = "Make It So (W)";
        c.latent_space = LatentSpace::W;
    } else if (id == "make_it_so_wplus") {
        m.label = "Make It So (W+)";
        c.latent_space = LatentSpace::WPlus;
    } else if (id == "pti") {
        m.label = "pivotal tuning";
        m.kind = MethodInfo::Kind::PivotalTune;
    } else if (id == "latent_z" || id == "latent_w" || id == "latent_wplus") {
        m.kind = MethodInfo::Kind::FrozenLatent;
        m.space = id == "latent_z" ? LatentSpace::Z : id == "latent_w" ? LatentSpace::W : LatentSpace::WPlus;
        m.label = "frozen latent (" + to_string(*m.space) + ")";
    } else if (id == "identity") {
        m.label = "identity";
        m.kind = MethodInfo::Kind::Identity;
    } else {
        throw ConfigError("unknown method '" + std::string(id) + "'");
    }
    if (m.kind == MethodInfo::Kind::MakeItSo) m.config = c;
    return m;
}

// ------------------------------------------------------------- targets

GeneratorParams<float> shifted_generator(const GeneratorParams<float>& params, double sigma, std::uint64_t seed) {
    GeneratorParams<float> out = params;
    Rng rng(seed);
    for (std::size_t i = params.arch->mapping_size(); i < out.values.size(); ++i)
        out.values[i] += static_cast<float>(sigma * std::fabs(params.values[i]) * rng.normal());
    return out;
}

Image<float> checkerboard_target(int resolution) {
    require(resolution >= 4, "checkerboard_target: resolution must be >= 4");
    const int cell = resolution / 4;
    Image<float> img(resolution, resolution);
    const double span = resolution - 1;
    for (int y = 0; y < resolution; ++y)
        for (int x = 0; x < resolution; ++x) {
            const double check = ((x / cell + y / cell) % 2 == 0) ? 0.5 : -0.5;
            const double u = x / span * 2 - 1, v = y / span * 2 - 1;
            img.at(0, y, x) = static_cast<float>(check + 0.4 * u);
            img.at(1, y, x) = static_cast<float>(check + 0.4 * v);
            img.at(2, y, x) = static_cast<float>(check - 0.2 * (u + v));
        }
    return img;
}

Image<float> benchmark_target(const BenchmarkSpec& spec, const GeneratorParams<float>& generator, std::uint64_t seed,
                              int index) {
    if (spec.targets == TargetKind::Checkerboard) return checkerboard_target(generator.arch->resolution());
    Rng rng(mix(mix(seed, kTargetLatent), static_cast<std::uint64_t>(index)));
    const NoiseVector<float> z{rng.normal_vector<float>(generator.arch->z_dim())};
    if (spec.targets == TargetKind::InRange) return generate(generator, z);
    return generate(shifted_generator(generator, spec.shift_sigma, mix(seed, kShift)), z);
}

// ------------------------------------------------------- edit deviation

namespace {

struct EditProbe {
    std::vector<std::vector<StyleStack<float>>> original_styles;  // per latent: unedited + one per direction
    std::vector<Image<float>> original_images;                    // flattened in the same order
};

EditProbe make_probe(const GeneratorParams<float>& original, const EditBank<float>& bank, int m, std::uint64_t seed) {
    require(m >= 1, "edit_deviation: need at least one latent");
    EditProbe p;
    Rng rng(seed);
    const int L = original.arch->num_styles();
    for (int i = 0; i < m; ++i) {
        const NoiseVector<float> z{rng.normal_vector<float>(original.arch->z_dim())};
        std::vector<StyleStack<float>> row{broadcast_w(map_z_to_w(original, z), L)};
        for (const auto& d : bank.directions()) row.push_back(apply_edit(row.front(), d, d.default_strength));
        p.original_styles.push_back(std::move(row));
    }
    for (const auto& row : p.original_styles)
        for (auto& img : synthesize_batch<float>(original, row)) p.original_images.push_back(std::move(img));
    return p;
}

void clamp_image(Image<float>& img) {
    for (auto& v : img.pixels) v = std::clamp(v, -1.0f, 1.0f);
}

EditDeviation probe_deviation(const EditProbe& probe, const GeneratorParams<float>& original,
                              const GeneratorParams<float>& updated, const EditBank<float>& bank, int m,
                              std::uint64_t seed, const FeatureExtractor<float>& extractor) {
    require_same_architecture(original.hash(), updated.hash());
    // The updated model maps z with its own mapping network; that equals the
    // original's unless the mapping was tuned.
    const bool same_mapping =
        std::equal(original.mapping().begin(), original.mapping().end(), updated.mapping().begin());
    Rng rng(seed);
    const int L = updated.arch->num_styles();
    double mse = 0, perc = 0;
    std::size_t k = 0;
    for (int i = 0; i < m; ++i) {
        const NoiseVector<float> z{rng.normal_vector<float>(updated.arch->z_dim())};
        std::vector<StyleStack<float>> row;
        if (same_mapping) {
            row = probe.original_styles[i];
        } else {
            row.push_back(broadcast_w(map_z_to_w(updated, z), L));
            for (const auto& d : bank.directions()) row.push_back(apply_edit(row.front(), d, d.default_strength));
        }
        auto rendered = synthesize_batch<float>(updated, row);
        std::vector<Image<float>> originals(probe.original_images.begin() + k,
                                            probe.original_images.begin() + k + rendered.size());
        for (std::size_t j = 0; j < rendered.size(); ++j) {
            mse += eval_mse(originals[j], rendered[j]);
            clamp_image(rendered[j]);
            clamp_image(originals[j]);
        }
        for (double v : perceptual_loss_batch<float>(extractor, rendered, originals)) perc += v;
        k += rendered.size();
    }
    return {mse / k, perc / k};
}

}  // namespace

EditDeviation edit_deviation(const GeneratorParams<float>& original, const GeneratorParams<float>& updated,
                             const EditBank<float>& bank, int m, std::uint64_t seed,
                             const FeatureExtractor<float>& extractor) {
    const EditProbe probe = make_probe(original, bank, m, seed);
    return probe_deviation(probe, original, updated, bank, m, seed, extractor);
}

// ------------------------------------------------------------ running

MethodOutput run_method(const MethodInfo& method, const GeneratorParams<float>& generator, const Image<float>& target,
                        const EditBank<float>& bank, std::uint64_t run_seed, const FeatureExtractor<float>& extractor) {
    switch (method.kind) {
        case MethodInfo::Kind::MakeItSo: {
            InversionConfig c = *method.config;
            c.seed = run_seed;
            auto r = make_it_so<float>(generator, target, bank, c, extractor);
            return {reconstruct(r), std::move(r.tuned), static_cast<int>(r.ema_iterations.size())};
        }
        case MethodInfo::Kind::PivotalTune: {
            BaselineConfig c = BaselineConfig::pti_budget(method.iters);
            c.seed = run_seed;
            auto r = pivotal_tune<float>(generator, target, c, extractor);
            Image<float> recon = synthesize(r.tuned, broadcast_w(r.pivot, generator.arch->num_styles()));
            return {std::move(recon), std::move(r.tuned), 0};
        }
        case MethodInfo::Kind::FrozenLatent: {
            BaselineConfig c;
            c.space = *method.space;
            c.iters = method.iters;
            c.seed = run_seed;
            auto r = optimize_latent<float>(generator, target, c, extractor);
            return {render_latent(generator, r.latent), generator, 0};
        }
        case MethodInfo::Kind::Identity: {
            // Leaves the generator alone; reconstructs with the mean style.
            const auto w = mean_w(generator, 1000, run_seed);
            return {synthesize(generator, broadcast_w(w, generator.arch->num_styles())), generator, 0};
        }
    }
    throw ContractViolation("unhandled method kind");
}

Report run_benchmark(const std::string& protocol, const BenchmarkSpec& spec, const GeneratorParams<float>& generator,
                     const EditBank<float>& bank, bool inversion, bool edit, const CellProgress& progress) {
    spec.validate();
    const auto extractor = FeatureExtractor<float>::random_pyramid(generator.arch->resolution());
    std::vector<MethodInfo> methods;
    for (const auto& id : spec.methods) methods.push_back(resolve_method(id, spec.iters));

    const int S = static_cast<int>(spec.seeds.size());
    const int T = spec.n_inversion_targets;
    const int M = static_cast<int>(methods.size());

    std::vector<EditProbe> probes(edit ? S : 0);
    for (int s = 0; s < static_cast<int>(probes.size()); ++s)
        probes[s] = make_probe(generator, bank, spec.n_edit_samples, mix(spec.seeds[s], kEditSamples));

    struct Cell {
        bool ok = false;
        double inv_mse = 0, inv_perc = 0, edit_mse = 0, edit_perc = 0;
    };
    const int total = S * T * M;
    std::vector<Cell> cells(total);
    int done = 0;

    if (spec.threads > 0) omp_set_num_threads(spec.threads);
#pragma omp parallel for schedule(dynamic, 1)
    for (int idx = 0; idx < total; ++idx) {
        const int s = idx / (T * M), t = (idx / M) % T, mi = idx % M;
        const std::uint64_t seed = spec.seeds[s];
        Cell& cell = cells[idx];
        try {
            const Image<float> target = benchmark_target(spec, generator, seed, t);
            const MethodOutput out = run_method(methods[mi], generator, target, bank,
                                                mix(mix(seed, kRun), static_cast<std::uint64_t>(t)), extractor);
            if (inversion) {
                cell.inv_mse = eval_mse(out.reconstruction, target);
                cell.inv_perc = eval_perceptual(extractor, out.reconstruction, target);
            }
            if (edit) {
                const auto dev = probe_deviation(probes[s], generator, out.updated, bank, spec.n_edit_samples,
                                                 mix(seed, kEditSamples), extractor);
                cell.edit_mse = dev.mse;
                cell.edit_perc = dev.perceptual;
            }
            cell.ok = std::isfinite(cell.inv_mse) && std::isfinite(cell.edit_mse);
        } catch (const std::exception&) {
            cell.ok = false;
        }
#pragma omp critical(makeitso_progress)
        {
            ++done;
            if (progress) progress(done, total);
        }
    }

    Report report;
    report.protocol = protocol;
    report.spec = spec.to_json();
    for (int mi = 0; mi < M; ++mi) {
        ReportRow row;
        row.method = methods[mi].id;
        for (int s = 0; s < S; ++s) {
            SeedCell sc;
            sc.seed = spec.seeds[s];
            double a = 0, b = 0, c = 0, d = 0;
            int n = 0;
            for (int t = 0; t < T; ++t) {
                const Cell& cell = cells[(s * T + t) * M + mi];
                if (!cell.ok) {
                    ++sc.failed_targets;
                    continue;
                }
                a += cell.inv_mse;
                b += cell.inv_perc;
                c += cell.edit_mse;
                d += cell.edit_perc;
                ++n;
            }
            if (n > 0) {
                if (inversion) {
                    sc.inversion_mse = a / n;
                    sc.inversion_perceptual = b / n;
                }
                if (edit) {
                    sc.edit_mse = c / n;
                    sc.edit_perceptual = d / n;
                }
            }
            row.per_seed.push_back(sc);
        }
        report.rows.push_back(std::move(row));
    }
    report.finalize();
    return report;
}

Report run_inversion_quality(const BenchmarkSpec& spec, const GeneratorParams<float>& generator,
                             const EditBank<float>& bank, const CellProgress& progress) {
    return run_benchmark("inversion_quality", spec, generator, bank, true, false, progress);
}

Report run_edit_quality(const BenchmarkSpec& spec, const GeneratorParams<float>& generator,
                        const EditBank<float>& bank, const CellProgress& progress) {
    return run_benchmark("edit_quality", spec, generator, bank, true, true, progress);
}

Report run_leave_one_out(BenchmarkSpec spec, const GeneratorParams<float>& generator, const EditBank<float>& bank,
                         const CellProgress& progress) {
    spec.methods = {"make_it_so", "wo_support", "wo_anchor", "wo_ema", "wo_extended", "pti"};
    return run_benchmark("leave_one_out", spec, generator, bank, true, true, progress);
}

Report run_latent_space_ablation(BenchmarkSpec spec, const GeneratorParams<float>& generator,
                                 const EditBank<float>& bank, const CellProgress& progress) {
    spec.methods = {"make_it_so", "make_it_so_w", "make_it_so_wplus", "latent_z", "latent_w", "latent_wplus"};
    return run_benchmark("latent_space", spec, generator, bank, true, true, progress);
}

// --------------------------------------------------------------- report

const ReportRow* Report::row(std::string_view method) const {
    for (const auto& r : rows)
        if (r.method == method) return &r;
    return nullptr;
}

void Report::finalize() {
    auto mean = [](const std::vector<SeedCell>& cells, std::optional<double> SeedCell::*field) {
        double acc = 0;
        int n = 0;
        for (const auto& c : cells)
            if (c.*field) {
                acc += *(c.*field);
                ++n;
            }
        return n ? std::optional<double>(acc / n) : std::nullopt;
    };
    for (auto& r : rows) {
        r.inversion_mse = mean(r.per_seed, &SeedCell::inversion_mse);
        r.inversion_perceptual = mean(r.per_seed, &SeedCell::inversion_perceptual);
        r.edit_mse = mean(r.per_seed, &SeedCell::edit_mse);
        r.edit_perceptual = mean(r.per_seed, &SeedCell::edit_perceptual);
    }
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j, const char* key, const std::string& path) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    if (!j[key].is_number()) throw FormatError("expected number or null", path + "." + key);
    return j[key].get<double>();
}

std::string fmt(const std::optional<double>& v) {
    if (!v) return "n/a";
    std::ostringstream s;
    s << std::setprecision(4) << std::scientific << *v;
    return s.str();
}

}  // namespace

std::string report_to_json(const Report& report) {
    json rows = json::array();
    for (const auto& r : report.rows) {
        json seeds = json::array();
        for (const auto& c : r.per_seed)
            seeds.push_back({{"seed", c.seed},
                             {"inversion_mse", opt(c.inversion_mse)},
                             {"inversion_perceptual", opt(c.inversion_perceptual)},
                             {"edit_mse", opt(c.edit_mse)},
                             {"edit_perceptual", opt(c.edit_perceptual)},
                             {"failed_targets", c.failed_targets}});
        rows.push_back({{"method", r.method},
                        {"inversion_mse", opt(r.inversion_mse)},
                        {"inversion_perceptual", opt(r.inversion_perceptual)},
                        {"edit_mse", opt(r.edit_mse)},
                        {"edit_perceptual", opt(r.edit_perceptual)},
                        {"per_seed", std::move(seeds)}});
    }
    return json{{"schema_version", 1}, {"protocol", report.protocol}, {"spec", report.spec}, {"rows", std::move(rows)}}
               .dump(2) +
           "\n";
}

Report report_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("report is not valid JSON: ") + e.what(), "$");
    }
    if (!j.is_object() || j.value("schema_version", 0) != 1) throw FormatError("unsupported schema", "schema_version");
    if (!j.contains("rows") || !j["rows"].is_array()) throw FormatError("missing array", "rows");
    Report report;
    report.protocol = j.value("protocol", std::string());
    report.spec = j.value("spec", json::object());
    for (std::size_t i = 0; i < j["rows"].size(); ++i) {
        const auto& jr = j["rows"][i];
        const std::string path = "rows[" + std::to_string(i) + "]";
        if (!jr.is_object() || !jr.contains("method") || !jr["method"].is_string())
            throw FormatError("missing method", path + ".method");
        ReportRow r;
        r.method = jr["method"].get<std::string>();
        r.inversion_mse = opt_from(jr, "inversion_mse", path);
        r.inversion_perceptual = opt_from(jr, "inversion_perceptual", path);
        r.edit_mse = opt_from(jr, "edit_mse", path);
        r.edit_perceptual = opt_from(jr, "edit_perceptual", path);
        if (!jr.contains("per_seed") || !jr["per_seed"].is_array()) throw FormatError("missing array", path + ".per_seed");
        for (std::size_t k = 0; k < jr["per_seed"].size(); ++k) {
            const auto& jc = jr["per_seed"][k];
            const std::string cpath = path + ".per_seed[" + std::to_string(k) + "]";
            if (!jc.is_object() || !jc.contains("seed") || !jc["seed"].is_number_unsigned())
                throw FormatError("missing seed", cpath + ".seed");
            SeedCell c;
            c.seed = jc["seed"].get<std::uint64_t>();
            c.inversion_mse = opt_from(jc, "inversion_mse", cpath);
            c.inversion_perceptual = opt_from(jc, "inversion_perceptual", cpath);
            c.edit_mse = opt_from(jc, "edit_mse", cpath);
            c.edit_perceptual = opt_from(jc, "edit_perceptual", cpath);
            c.failed_targets = jc.value("failed_targets", 0);
            r.per_seed.push_back(c);
        }
        report.rows.push_back(std::move(r));
    }
    return report;
}

std::string report_to_csv(const Report& report) {
    std::ostringstream out;
    out.precision(17);
    out << "protocol,method,seed,inversion_mse,inversion_perceptual,edit_mse,edit_perceptual,failed_targets\n";
    auto cell = [&](const std::optional<double>& v) {
        if (v) out << *v;
    };
    for (const auto& r : report.rows)
        for (const auto& c : r.per_seed) {
            out << report.protocol << ',' << r.method << ',' << c.seed << ',';
            cell(c.inversion_mse);
            out << ',';
            cell(c.inversion_perceptual);
            out << ',';
            cell(c.edit_mse);
            out << ',';
            cell(c.edit_perceptual);
            out << ',' << c.failed_targets << '\n';
        }
    return out.str();
}

std::string report_to_markdown(const Report& report) {
    std::ostringstream out;
    out << "| Method | Inversion MSE | Inversion perceptual | Edit MSE | Edit perceptual |\n";
    out << "|---|---|---|---|---|\n";
    for (const auto& r : report.rows) {
        std::string label = r.method;
        try {
            label = resolve_method(r.method, 2).label;
        } catch (const ConfigError&) {
        }
        out << "| " << label << " | " << fmt(r.inversion_mse) << " | " << fmt(r.inversion_perceptual) << " | "
            << fmt(r.edit_mse) << " | " << fmt(r.edit_perceptual) << " |\n";
    }
    return out.str();
}

ReportFormat parse_report_format(std::string_view text) {
    if (text == "json") return ReportFormat::Json;
    if (text == "csv") return ReportFormat::Csv;
    if (text == "markdown" || text == "md") return ReportFormat::Markdown;
    throw ConfigError("unknown report format '" + std::string(text) + "' (expected json, csv or markdown)");
}

void emit_report(const Report& report, const std::filesystem::path& path, ReportFormat format) {
    std::string text;
    switch (format) {
        case ReportFormat::Json: text = report_to_json(report); break;
        case ReportFormat::Csv: text = report_to_csv(report); break;
        case ReportFormat::Markdown: text = report_to_markdown(report); break;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report to " + path.string());
    out << text;
    if (!out) throw std::runtime_error("failed writing report to " + path.string());
}

}  // namespace makeitso

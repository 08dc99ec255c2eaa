// makeitso: command-line front end for inversion, editing, benchmarks and the HTTP service.
//
// Exit codes: 0 success, 2 bad arguments or unusable inputs, 3 runtime failure.
// Errors are also printed to stderr as one JSON object.

#include "makeitso/harness.hpp"
#include "makeitso/service.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <regex>

using namespace makeitso;
using nlohmann::json;

namespace {

constexpr int kExitBadArgs = 2;
constexpr int kExitRuntime = 3;

// Errors detected while validating inputs; mapped to exit code 2.
struct BadArgs : std::runtime_error {
    BadArgs(const std::string& what, std::string flag) : std::runtime_error(what), flag(std::move(flag)) {}
    std::string flag;
};

int fail(int code, const std::string& message, const std::string& flag = {}) {
    json e = {{"code", code == kExitBadArgs ? "bad_arguments" : "runtime_failure"}, {"message", message}};
    if (!flag.empty()) e["flag"] = flag;
    std::cerr << json{{"error", e}}.dump() << std::endl;
    return code;
}

const std::string kToyPrefix = "toy:";

// "--checkpoint toy:<seed>" builds the default toy generator in memory.
GeneratorParams<float> load_generator(const std::string& spec) {
    if (spec.rfind(kToyPrefix, 0) == 0) {
        try {
            return init_toy_generator<float>(std::stoull(spec.substr(kToyPrefix.size())));
        } catch (const std::logic_error&) {
            throw BadArgs("bad toy generator seed in '" + spec + "'", "--checkpoint");
        }
    }
    try {
        return load_checkpoint(spec);
    } catch (const FormatError& e) {
        throw BadArgs(e.what(), "--checkpoint");
    }
}

EditBank<float> load_bank_arg(const std::string& path, const GeneratorParams<float>& g) {
    if (path.empty()) return EditBank<float>(g.hash());
    try {
        return load_bank<float>(path, g.arch.get());
    } catch (const FormatError& e) {
        throw BadArgs(std::string(e.what()) + (e.field().empty() ? "" : " [" + e.field() + "]"), "--bank");
    }
}

void progress_line(int done, int total) {
    if (done == total || done % 50 == 0) std::cerr << "\r" << done << "/" << total << std::flush;
    if (done == total) std::cerr << "\n";
}

struct InvertArgs {
    std::string checkpoint = "toy:1", target, bank, out, latent_space;
    int iters = 500;
    std::optional<double> beta, lr_z, lr_g, replay_weight;
    std::optional<int> ema_interval, replay_n;
    std::uint64_t seed = 0;
    bool quiet = false;
};

int cmd_invert(const InvertArgs& a) {
    const auto g = load_generator(a.checkpoint);
    const auto bank = load_bank_arg(a.bank, g);
    json overrides = {{"iters", a.iters}, {"seed", a.seed}};
    if (a.beta) overrides["ema_beta"] = *a.beta;
    if (a.ema_interval) overrides["ema_interval"] = *a.ema_interval;
    if (a.replay_n) overrides["replay_n"] = *a.replay_n;
    if (a.lr_z) overrides["lr_z"] = *a.lr_z;
    if (a.lr_g) overrides["lr_g"] = *a.lr_g;
    if (a.replay_weight) overrides["replay_weight"] = *a.replay_weight;
    if (!a.latent_space.empty()) overrides["latent_space"] = a.latent_space;
    InvertInputs in{g, bank, {}, {}, {}};
    try {
        in.config = config_with_overrides(overrides);
    } catch (const std::exception& e) {
        throw BadArgs(e.what(), "");
    }
    RgbImage rgb;
    try {
        rgb = read_image(a.target);
    } catch (const FormatError& e) {
        throw BadArgs(e.what(), "--target");
    }
    in.target = ingest_target(rgb, g.arch->resolution());
    in.description = {a.checkpoint, a.bank, a.target, rgb.height, rgb.width};
    const json manifest = invert_to_dir(in, a.out, a.quiet ? ProgressFn{} : ProgressFn(progress_line));
    std::cout << json{{"out", a.out},
                      {"final_mse", manifest["metrics"]["final_mse"]},
                      {"ema_iterations", manifest["ema_iterations"]}}
                     .dump()
              << std::endl;
    return 0;
}

struct EditArgs {
    std::string result, direction, out, bank;
    double strength = 1.0;
    bool sweep = false;
};

int cmd_edit(const EditArgs& a) {
    StoredResult stored;
    try {
        stored = load_result(a.result);
    } catch (const FormatError& e) {
        throw BadArgs(e.what(), "--result");
    }
    if (!std::isfinite(a.strength)) throw BadArgs("strength must be finite", "--strength");
    const EditDirection<float>* dir = nullptr;
    EditBank<float> bank;
    if (!a.direction.empty()) {
        std::string bank_path = a.bank;
        if (bank_path.empty()) bank_path = stored.manifest.value("inputs", json::object()).value("bank", "");
        if (bank_path.empty()) throw BadArgs("result has no edit bank; pass --bank", "--bank");
        bank = load_bank_arg(bank_path, stored.tuned);
        dir = bank.find(a.direction);
        if (!dir) {
            std::string names;
            for (const auto& n : bank.names()) names += (names.empty() ? "" : ", ") + n;
            throw BadArgs("unknown direction '" + a.direction + "' (available: " + names + ")", "--direction");
        }
    }
    write_png(render_edit(stored, dir, a.strength), a.out);
    json written = json::array({a.out});
    if (a.sweep && dir) {
        // Preview pair at -strength and +strength next to the main output.
        const std::filesystem::path out(a.out);
        const auto stem = (out.parent_path() / out.stem()).string();
        write_png(render_edit(stored, dir, -a.strength), stem + "_minus.png");
        write_png(render_edit(stored, dir, a.strength), stem + "_plus.png");
        written.push_back(stem + "_minus.png");
        written.push_back(stem + "_plus.png");
    }
    std::cout << json{{"written", written}}.dump() << std::endl;
    return 0;
}

struct BenchArgs {
    std::string preset, out = "report", checkpoint = "toy:1", bank, formats = "json,csv,markdown", targets;
    std::vector<std::string> methods;
    std::vector<std::uint64_t> seeds;
    std::optional<int> n_targets, iters, edit_samples, directions;
    int threads = 0;
    bool quiet = false;
};

int cmd_bench(const BenchArgs& a, bool ablate) {
    BenchmarkSpec spec;
    std::string protocol = ablate ? "leave_one_out" : "edit_quality";
    try {
        if (!a.preset.empty()) {
            spec = BenchmarkSpec::preset(a.preset);
            if (a.preset == "tab2-toy") protocol = "leave_one_out";
            else if (a.preset == "fig8-toy") protocol = "latent_space";
            else protocol = "edit_quality";
        }
    } catch (const ConfigError& e) {
        throw BadArgs(e.what(), "--preset");
    }
    if (!a.methods.empty()) spec.methods = a.methods;
    if (!a.seeds.empty()) spec.seeds = a.seeds;
    if (a.n_targets) spec.n_inversion_targets = *a.n_targets;
    if (a.iters) spec.iters = *a.iters;
    if (a.edit_samples) spec.n_edit_samples = *a.edit_samples;
    if (a.directions) spec.n_directions = *a.directions;
    spec.threads = a.threads;
    try {
        if (!a.targets.empty()) spec.targets = parse_target_kind(a.targets);
        spec.validate();
    } catch (const ConfigError& e) {
        throw BadArgs(e.what(), "");
    }
    std::vector<ReportFormat> formats;
    std::stringstream fs(a.formats);
    for (std::string f; std::getline(fs, f, ',');) {
        try {
            formats.push_back(parse_report_format(f));
        } catch (const ConfigError& e) {
            throw BadArgs(e.what(), "--format");
        }
    }

    const auto g = load_generator(a.checkpoint);
    EditBank<float> bank = a.bank.empty() ? make_random_bank<float>(*g.arch, spec.n_directions, spec.bank_seed, spec.bank_norm)
                                          : load_bank_arg(a.bank, g);
    const CellProgress progress = a.quiet ? CellProgress{} : CellProgress(progress_line);
    Report report;
    if (protocol == "leave_one_out" && a.methods.empty()) report = run_leave_one_out(spec, g, bank, progress);
    else if (protocol == "latent_space" && a.methods.empty()) report = run_latent_space_ablation(spec, g, bank, progress);
    else report = run_benchmark(protocol, spec, g, bank, true, true, progress);

    json written = json::array();
    for (auto f : formats) {
        const std::string ext = f == ReportFormat::Json ? ".json" : f == ReportFormat::Csv ? ".csv" : ".md";
        emit_report(report, a.out + ext, f);
        written.push_back(a.out + ext);
    }
    std::cout << json{{"written", written}}.dump() << std::endl;
    return 0;
}

struct ServeArgs {
    std::string host = "127.0.0.1", data_root, checkpoint = "toy:1";
    std::vector<std::string> banks;
    int port = 8080;
    std::size_t queue_depth = 16;
};

httplib::Server* g_server = nullptr;

int cmd_serve(const ServeArgs& a) {
    std::string root = a.data_root;
    if (root.empty())
        if (const char* env = std::getenv("MAKEITSO_DATA_ROOT")) root = env;
    if (root.empty()) root = "makeitso-data";
    JobService::Options opts;
    opts.data_root = root;
    opts.generator = load_generator(a.checkpoint);
    opts.checkpoint_label = a.checkpoint;
    opts.queue_depth = a.queue_depth;
    for (const auto& path : a.banks) {
        NamedBank nb{std::filesystem::path(path).stem().string(), path, load_bank_arg(path, opts.generator)};
        opts.banks.push_back(std::move(nb));
    }
    JobService service(std::move(opts));
    httplib::Server server;
    install_routes(server, service);
    g_server = &server;
    std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (g_server) g_server->stop();
    });
    int port = a.port;
    if (port == 0) port = server.bind_to_any_port(a.host);
    else if (!server.bind_to_port(a.host, port)) return fail(kExitRuntime, "cannot bind " + a.host + ":" + std::to_string(port));
    std::cout << json{{"listening", a.host + ":" + std::to_string(port)}, {"data_root", root}}.dump() << std::endl;
    server.listen_after_bind();
    return 0;
}

int cmd_init_toy(std::uint64_t seed, const std::string& arch, const std::string& out) {
    ArchConfig config;
    if (arch == "toy") config = ArchConfig::toy();
    else if (arch == "micro") config = ArchConfig::micro();
    else throw BadArgs("unknown architecture '" + arch + "' (expected toy or micro)", "--arch");
    save_checkpoint(init_toy_generator<float>(seed, config), out);
    std::cout << json{{"written", out}}.dump() << std::endl;
    return 0;
}

int cmd_make_bank(const std::string& checkpoint, int count, double norm, std::uint64_t seed, const std::string& out) {
    const auto g = load_generator(checkpoint);
    if (count < 1) throw BadArgs("count must be >= 1", "--count");
    if (!(norm > 0)) throw BadArgs("norm must be positive", "--norm");
    save_bank(make_random_bank<float>(*g.arch, count, seed, norm), out);
    std::cout << json{{"written", out}}.dump() << std::endl;
    return 0;
}

int cmd_render(const std::string& checkpoint, std::uint64_t z_seed, const std::string& pattern, const std::string& out) {
    const auto g = load_generator(checkpoint);
    Image<float> img;
    if (pattern == "checkerboard") {
        img = checkerboard_target(g.arch->resolution());
    } else if (pattern.empty()) {
        Rng rng(z_seed);
        img = generate(g, NoiseVector<float>{rng.normal_vector<float>(g.arch->z_dim())});
    } else {
        throw BadArgs("unknown pattern '" + pattern + "'", "--pattern");
    }
    write_png(img, out);
    std::cout << json{{"written", out}}.dump() << std::endl;
    return 0;
}

std::string flag_in(const std::string& message) {
    std::smatch m;
    static const std::regex re("(--[A-Za-z][A-Za-z0-9-]*)");
    return std::regex_search(message, m, re) ? m[1].str() : std::string();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Make It So: GAN inversion with a fine-tuned generator, experience replay and EMA anchoring"};
    app.require_subcommand(1);

    InvertArgs inv;
    auto* invert = app.add_subcommand("invert", "Invert a target image");
    invert->add_option("--checkpoint", inv.checkpoint, "Generator checkpoint (.misockpt) or toy:<seed>");
    invert->add_option("--target", inv.target, "Target image (PNG or JPEG)")->required();
    invert->add_option("--bank", inv.bank, "Edit-bank JSON used for anchor edits");
    invert->add_option("--iters", inv.iters, "Iteration budget; 500 and 1000 are the named presets");
    invert->add_option("--beta", inv.beta, "EMA decay");
    invert->add_option("--ema-interval", inv.ema_interval, "Iterations between EMA blends");
    invert->add_option("--replay-n", inv.replay_n, "Support images per iteration");
    invert->add_option("--lr-z", inv.lr_z, "Latent learning rate");
    invert->add_option("--lr-g", inv.lr_g, "Generator learning rate");
    invert->add_option("--replay-weight", inv.replay_weight, "Multiplier on the replay loss (0 disables it)");
    invert->add_option("--latent-space", inv.latent_space, "Z, W or W_PLUS");
    invert->add_option("--seed", inv.seed, "Run seed");
    invert->add_option("--out", inv.out, "Result directory")->required();
    invert->add_flag("--quiet", inv.quiet, "No progress output");

    EditArgs ed;
    auto* edit = app.add_subcommand("edit", "Render an edit of an inverted result");
    edit->add_option("--result", ed.result, "Result directory written by invert")->required();
    edit->add_option("--direction", ed.direction, "Direction name; omit to render the reconstruction");
    edit->add_option("--strength", ed.strength, "Edit strength");
    edit->add_option("--bank", ed.bank, "Edit bank (defaults to the one used for the inversion)");
    edit->add_option("--out", ed.out, "Output PNG")->required();
    edit->add_flag("--sweep", ed.sweep, "Also write -strength / +strength previews");

    BenchArgs ev, ab;
    auto add_bench = [](CLI::App* sub, BenchArgs& b) {
        sub->add_option("--preset", b.preset, "tab1-toy, tab2-toy or fig8-toy");
        sub->add_option("--out", b.out, "Output path prefix (extension added per format)");
        sub->add_option("--format", b.formats, "Comma-separated: json,csv,markdown");
        sub->add_option("--checkpoint", b.checkpoint, "Generator checkpoint or toy:<seed>");
        sub->add_option("--bank", b.bank, "Edit bank (default: seeded random bank)");
        sub->add_option("--methods", b.methods, "Method ids")->delimiter(',');
        sub->add_option("--seeds", b.seeds, "Benchmark seeds")->delimiter(',');
        sub->add_option("--targets-per-seed", b.n_targets, "Inversion targets per seed");
        sub->add_option("--target-kind", b.targets, "in_range, shifted or checkerboard");
        sub->add_option("--iters", b.iters, "Gradient-step budget per inversion");
        sub->add_option("--edit-samples", b.edit_samples, "Latents per edit-deviation estimate");
        sub->add_option("--directions", b.directions, "Directions in the generated bank");
        sub->add_option("--threads", b.threads, "Parallel cells (0: OpenMP default)");
        sub->add_flag("--quiet", b.quiet, "No progress output");
    };
    auto* evaluate = app.add_subcommand("evaluate", "Inversion and edit-quality benchmark");
    add_bench(evaluate, ev);
    auto* ablate = app.add_subcommand("ablate", "Leave-one-out or latent-space ablation");
    add_bench(ablate, ab);
    ab.preset = "tab2-toy";

    ServeArgs sv;
    auto* serve = app.add_subcommand("serve", "Run the HTTP API");
    serve->add_option("--host", sv.host, "Bind address");
    serve->add_option("--port", sv.port, "Port (0 picks a free one)");
    serve->add_option("--data-root", sv.data_root, "Job storage (default $MAKEITSO_DATA_ROOT)");
    serve->add_option("--checkpoint", sv.checkpoint, "Generator checkpoint or toy:<seed>");
    serve->add_option("--bank", sv.banks, "Edit bank file; repeatable, named by file stem");
    serve->add_option("--queue-depth", sv.queue_depth, "Maximum queued jobs");

    std::uint64_t toy_seed = 1;
    std::string toy_arch = "toy", toy_out;
    auto* init_toy = app.add_subcommand("init-toy", "Write a seeded toy generator checkpoint");
    init_toy->add_option("--seed", toy_seed, "Generator seed");
    init_toy->add_option("--arch", toy_arch, "toy or micro");
    init_toy->add_option("--out", toy_out, "Output .misockpt")->required();

    std::string mb_ckpt = "toy:1", mb_out;
    int mb_count = 8;
    double mb_norm = 1.0;
    std::uint64_t mb_seed = 11;
    auto* make_bank = app.add_subcommand("make-bank", "Write a bank of random edit directions");
    make_bank->add_option("--checkpoint", mb_ckpt, "Generator checkpoint or toy:<seed>");
    make_bank->add_option("--count", mb_count, "Number of directions");
    make_bank->add_option("--norm", mb_norm, "Per-layer L2 norm");
    make_bank->add_option("--seed", mb_seed, "Seed");
    make_bank->add_option("--out", mb_out, "Output JSON")->required();

    std::string rd_ckpt = "toy:1", rd_out, rd_pattern;
    std::uint64_t rd_seed = 0;
    auto* render = app.add_subcommand("render", "Render a sample (or a synthetic pattern) to PNG");
    render->add_option("--checkpoint", rd_ckpt, "Generator checkpoint or toy:<seed>");
    render->add_option("--z-seed", rd_seed, "Seed of the standard-normal z");
    render->add_option("--pattern", rd_pattern, "checkerboard: the out-of-range test pattern");
    render->add_option("--out", rd_out, "Output PNG")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail(kExitBadArgs, e.what(), flag_in(e.what()));
    }

    try {
        if (invert->parsed()) return cmd_invert(inv);
        if (edit->parsed()) return cmd_edit(ed);
        if (evaluate->parsed()) return cmd_bench(ev, false);
        if (ablate->parsed()) return cmd_bench(ab, true);
        if (serve->parsed()) return cmd_serve(sv);
        if (init_toy->parsed()) return cmd_init_toy(toy_seed, toy_arch, toy_out);
        if (make_bank->parsed()) return cmd_make_bank(mb_ckpt, mb_count, mb_norm, mb_seed, mb_out);
        if (render->parsed()) return cmd_render(rd_ckpt, rd_seed, rd_pattern, rd_out);
    } catch (const BadArgs& e) {
        return fail(kExitBadArgs, e.what(), e.flag);
    } catch (const ConfigError& e) {
        return fail(kExitBadArgs, e.what());
    } catch (const IncompatibleArchitecture& e) {
        return fail(kExitBadArgs, e.what());
    } catch (const std::exception& e) {
        return fail(kExitRuntime, e.what());
    }
    return fail(kExitBadArgs, "no subcommand");
}

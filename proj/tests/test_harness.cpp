#include "makeitso/harness.hpp"
#include "makeitso/results.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace makeitso;

namespace {

struct MicroBench {
    GeneratorParams<float> g = init_toy_generator<float>(2, ArchConfig::micro());
    EditBank<float> bank = make_random_bank<float>(*g.arch, 3, 5, 1.0);
    FeatureExtractor<float> ex = FeatureExtractor<float>::random_pyramid(8);

    BenchmarkSpec spec() const {
        BenchmarkSpec s;
        s.n_inversion_targets = 2;
        s.n_edit_samples = 3;
        s.n_directions = 3;
        s.seeds = {0, 1};
        s.methods = {"identity", "latent_w", "make_it_so", "pti"};
        s.iters = 10;
        return s;
    }
};

std::filesystem::path temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "makeitso_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::size_t count_lines(const std::string& text) { return std::count(text.begin(), text.end(), '\n'); }

}  // namespace

TEST_CASE("every ablation row is reachable through config flags") {
    const int iters = 500;
    const auto base = InversionConfig::preset(iters);
    for (const auto& id : known_methods()) CHECK_NOTHROW(resolve_method(id, iters));
    CHECK_THROWS_AS(resolve_method("bogus", iters), ConfigError);

    const auto full = resolve_method("make_it_so", iters);
    REQUIRE(full.config);
    CHECK(config_to_json(*full.config) == config_to_json(base));

    const auto ws = *resolve_method("wo_support", iters).config;
    CHECK(!ws.support_terms);
    CHECK(ws.anchor_terms);
    CHECK(ws.replay_enabled());

    const auto wa = *resolve_method("wo_anchor", iters).config;
    CHECK(wa.support_terms);
    CHECK(!wa.anchor_terms);

    const auto we = *resolve_method("wo_ema", iters).config;
    CHECK(we.ema_interval > we.total_iters);
    CHECK(we.ema_schedule().empty());

    const auto wx = *resolve_method("wo_extended", 1000).config;
    CHECK(wx.total_iters == 500);
    CHECK(wx.ema_schedule() == std::vector<int>{100, 200, 300, 400});

    const auto wr = *resolve_method("wo_replay", iters).config;
    CHECK(wr.replay_weight == 0.0);
    CHECK(!wr.replay_enabled());

    CHECK(resolve_method("summed_step", iters).config->summed_step);
    CHECK(resolve_method("make_it_so_w", iters).config->latent_space == LatentSpace::W);
    CHECK(resolve_method("make_it_so_wplus", iters).config->latent_space == LatentSpace::WPlus);

    CHECK(resolve_method("pti", iters).kind == MethodInfo::Kind::PivotalTune);
    CHECK(!resolve_method("pti", iters).config);
    CHECK(resolve_method("latent_wplus", iters).space == LatentSpace::WPlus);
    CHECK(resolve_method("identity", iters).kind == MethodInfo::Kind::Identity);
}

TEST_CASE("presets") {
    const auto tab2 = BenchmarkSpec::preset("tab2-toy");
    CHECK(tab2.methods ==
          std::vector<std::string>{"make_it_so", "wo_support", "wo_anchor", "wo_ema", "wo_extended", "pti"});
    CHECK(tab2.iters == 1000);
    CHECK(tab2.n_inversion_targets == 10);
    CHECK(tab2.n_directions == 8);
    CHECK(tab2.seeds.size() == 5);
    const auto fig8 = BenchmarkSpec::preset("fig8-toy");
    CHECK(fig8.methods.size() == 6);
    CHECK(BenchmarkSpec::preset("tab1-toy").methods.front() == "make_it_so");
    CHECK_THROWS_AS(BenchmarkSpec::preset("tab9"), ConfigError);
}

TEST_CASE("benchmark spec validation and json") {
    BenchmarkSpec s;
    CHECK_NOTHROW(s.validate());
    auto bad = s;
    bad.n_inversion_targets = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = s;
    bad.methods.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = s;
    bad.seeds.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = s;
    bad.methods = {"make_it_so", "nope"};
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    s.seeds = {3, 9};
    s.targets = TargetKind::Checkerboard;
    s.iters = 77;
    const auto back = BenchmarkSpec::from_json(s.to_json());
    CHECK(back.to_json() == s.to_json());
    CHECK_THROWS_AS(BenchmarkSpec::from_json(nlohmann::json::array()), FormatError);
    CHECK_THROWS_AS(BenchmarkSpec::from_json({{"iters", "many"}}), FormatError);
    CHECK_THROWS_AS(parse_target_kind("mixed"), ConfigError);
}

TEST_CASE("targets") {
    const MicroBench m;
    auto spec = m.spec();
    const auto cb = checkerboard_target(32);
    float lo = 1, hi = -1;
    for (float v : cb.pixels) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo >= -0.9f - 1e-6f);
    CHECK(hi <= 0.9f + 1e-6f);
    CHECK_THROWS_AS(checkerboard_target(2), ContractViolation);

    CHECK(benchmark_target(spec, m.g, 0, 0) == benchmark_target(spec, m.g, 0, 0));
    CHECK(!(benchmark_target(spec, m.g, 0, 0) == benchmark_target(spec, m.g, 0, 1)));
    CHECK(!(benchmark_target(spec, m.g, 0, 0) == benchmark_target(spec, m.g, 1, 0)));
    auto in_range = spec;
    in_range.targets = TargetKind::InRange;
    CHECK(!(benchmark_target(spec, m.g, 0, 0) == benchmark_target(in_range, m.g, 0, 0)));
    auto zero_shift = spec;
    zero_shift.shift_sigma = 0;
    CHECK(benchmark_target(zero_shift, m.g, 0, 0) == benchmark_target(in_range, m.g, 0, 0));

    // The shift touches synthesis only.
    const auto shifted = shifted_generator(m.g, 0.3, 4);
    CHECK(std::equal(shifted.mapping().begin(), shifted.mapping().end(), m.g.mapping().begin()));
    CHECK(!std::equal(shifted.synthesis().begin(), shifted.synthesis().end(), m.g.synthesis().begin()));
}

TEST_CASE("edit deviation") {
    const MicroBench m;
    const auto zero = edit_deviation(m.g, m.g, m.bank, 4, 9, m.ex);
    CHECK(zero.mse == 0.0);
    CHECK(zero.perceptual == 0.0);

    auto other = shifted_generator(m.g, 0.1, 3);
    const auto d = edit_deviation(m.g, other, m.bank, 4, 9, m.ex);
    CHECK(d.mse > 0);
    CHECK(d.perceptual > 0);
    const auto again = edit_deviation(m.g, other, m.bank, 4, 9, m.ex);
    CHECK(again.mse == d.mse);

    // Unedited pair plus one pair per direction, averaged over latents.
    Rng rng(9);
    double mse = 0;
    for (int i = 0; i < 4; ++i) {
        const NoiseVector<float> z{rng.normal_vector<float>(m.g.arch->z_dim())};
        mse += eval_mse(generate(m.g, z), generate(other, z));
        for (const auto& dir : m.bank.directions())
            mse += eval_mse(edited_generate(m.g, z, dir, dir.default_strength),
                            edited_generate(other, z, dir, dir.default_strength));
    }
    CHECK(d.mse == doctest::Approx(mse / (4 * (1 + m.bank.size()))).epsilon(1e-4));

    const auto toy = init_toy_generator<float>(1);
    CHECK_THROWS_AS(edit_deviation(m.g, toy, m.bank, 2, 1, m.ex), IncompatibleArchitecture);
}

TEST_CASE("method outputs") {
    const MicroBench m;
    const auto target = benchmark_target(m.spec(), m.g, 0, 0);

    const auto id = run_method(resolve_method("identity", 10), m.g, target, m.bank, 1, m.ex);
    CHECK(id.updated.values == m.g.values);

    const auto lat = run_method(resolve_method("latent_w", 10), m.g, target, m.bank, 1, m.ex);
    CHECK(lat.updated.values == m.g.values);

    const auto full = run_method(resolve_method("make_it_so", 10), m.g, target, m.bank, 1, m.ex);
    CHECK(full.ema_updates == 4);
    CHECK(std::equal(full.updated.mapping().begin(), full.updated.mapping().end(), m.g.mapping().begin()));

    const auto pti = run_method(resolve_method("pti", 10), m.g, target, m.bank, 1, m.ex);
    CHECK(std::equal(pti.updated.mapping().begin(), pti.updated.mapping().end(), m.g.mapping().begin()));
    CHECK(!(pti.updated.values == m.g.values));

    // w/o EMA never touches the anchored model.
    auto c = *resolve_method("wo_ema", 10).config;
    const auto r = make_it_so<float>(m.g, target, m.bank, c, m.ex);
    CHECK(r.ema_iterations.empty());
    CHECK(r.anchored_final.values == m.g.values);
}

TEST_CASE("benchmark report bookkeeping") {
    const MicroBench m;
    const auto spec = m.spec();
    int last = 0, calls = 0;
    const auto report = run_edit_quality(spec, m.g, m.bank, [&](int done, int total) {
        CHECK(done > last);
        CHECK(total == 16);
        last = done;
        ++calls;
    });
    CHECK(calls == 16);
    REQUIRE(report.rows.size() == spec.methods.size());
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const auto& row = report.rows[i];
        CHECK(row.method == spec.methods[i]);
        REQUIRE(row.per_seed.size() == 2);
        double acc = 0;
        for (const auto& c : row.per_seed) {
            CHECK(c.failed_targets == 0);
            REQUIRE(c.edit_mse);
            acc += *c.edit_mse;
        }
        CHECK(*row.edit_mse == doctest::Approx(acc / 2).epsilon(1e-15));
    }
    // Identity and frozen-latent methods leave the generator as is.
    CHECK(*report.row("identity")->edit_mse == 0.0);
    CHECK(*report.row("identity")->edit_perceptual == 0.0);
    CHECK(*report.row("latent_w")->edit_mse == 0.0);
    CHECK(*report.row("make_it_so")->edit_mse > 0.0);
    CHECK(report.row("nope") == nullptr);

    SUBCASE("deterministic") {
        const auto again = run_edit_quality(spec, m.g, m.bank);
        CHECK(report_to_json(again) == report_to_json(report));
    }

    SUBCASE("thread count does not change results") {
        auto one = spec;
        one.threads = 1;
        // spec.threads is not part of the report.
        CHECK(report_to_json(run_edit_quality(one, m.g, m.bank)) == report_to_json(report));
    }

    SUBCASE("json round trip is lossless") {
        const auto text = report_to_json(report);
        const auto back = report_from_json(text);
        CHECK(back == report);
        CHECK(report_to_json(back) == text);
    }

    SUBCASE("csv has one row per method and seed") {
        const auto csv = report_to_csv(report);
        CHECK(count_lines(csv) == 1 + spec.methods.size() * spec.seeds.size());
        // Values are written with full precision.
        std::istringstream in(csv);
        std::string header, line;
        std::getline(in, header);
        std::getline(in, line);
        std::vector<std::string> cols;
        std::stringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
        REQUIRE(cols.size() == 8);
        CHECK(cols[1] == "identity");
        CHECK(std::stod(cols[3]) == *report.rows[0].per_seed[0].inversion_mse);
    }

    SUBCASE("markdown has one row per method") {
        const auto md = report_to_markdown(report);
        CHECK(count_lines(md) == 2 + spec.methods.size());
        CHECK(md.find("| identity |") != std::string::npos);
        CHECK(md.find("| Make It So (full) |") != std::string::npos);
        CHECK(md.find("| pivotal tuning |") != std::string::npos);
    }

    SUBCASE("emit") {
        const auto path = temp_path("report.json");
        emit_report(report, path, ReportFormat::Json);
        std::ifstream f(path);
        std::stringstream s;
        s << f.rdbuf();
        CHECK(report_from_json(s.str()) == report);
        CHECK_THROWS(emit_report(report, temp_path("missing-dir") / "x" / "r.json", ReportFormat::Csv));
        CHECK(parse_report_format("md") == ReportFormat::Markdown);
        CHECK_THROWS_AS(parse_report_format("xml"), ConfigError);
    }
}

TEST_CASE("protocol wrappers fix their method sets") {
    const MicroBench m;
    auto spec = m.spec();
    spec.seeds = {0};
    spec.n_inversion_targets = 1;
    spec.n_edit_samples = 1;
    spec.iters = 4;
    const auto loo = run_leave_one_out(spec, m.g, m.bank);
    CHECK(loo.protocol == "leave_one_out");
    REQUIRE(loo.rows.size() == 6);
    CHECK(loo.rows[3].method == "wo_ema");
    const auto ls = run_latent_space_ablation(spec, m.g, m.bank);
    CHECK(ls.protocol == "latent_space");
    CHECK(ls.rows.size() == 6);
    for (const auto& r : ls.rows) CHECK(r.inversion_mse);
    const auto inv = run_inversion_quality(spec, m.g, m.bank);
    CHECK(inv.rows[0].inversion_mse);
    CHECK(!inv.rows[0].edit_mse);
}

TEST_CASE("failed cells are recorded, not thrown") {
    const MicroBench m;
    auto spec = m.spec();
    spec.seeds = {0};
    spec.n_inversion_targets = 2;
    // A bank for another architecture makes every edit probe fail.
    const auto toy = init_toy_generator<float>(1);
    const auto wrong = make_random_bank<float>(*toy.arch, 2, 1, 1.0);
    spec.methods = {"make_it_so"};
    spec.iters = 4;
    const auto r = run_inversion_quality(spec, m.g, wrong);
    REQUIRE(r.rows.size() == 1);
    CHECK(r.rows[0].per_seed[0].failed_targets == 2);
    CHECK(!r.rows[0].inversion_mse);
    CHECK(report_from_json(report_to_json(r)) == r);
}

TEST_CASE("report parsing errors name the field") {
    auto field_of = [](const std::string& text) {
        try {
            report_from_json(text);
        } catch (const FormatError& e) {
            return e.field();
        }
        return std::string("<none>");
    };
    CHECK(field_of("{") == "$");
    CHECK(field_of(R"({"schema_version": 2, "rows": []})") == "schema_version");
    CHECK(field_of(R"({"schema_version": 1})") == "rows");
    CHECK(field_of(R"({"schema_version": 1, "rows": [{}]})") == "rows[0].method");
    CHECK(field_of(R"({"schema_version": 1, "rows": [{"method": "x"}]})") == "rows[0].per_seed");
    CHECK(field_of(R"({"schema_version": 1, "rows": [{"method": "x", "edit_mse": "a", "per_seed": []}]})") ==
          "rows[0].edit_mse");
    CHECK(field_of(R"({"schema_version": 1, "rows": [{"method": "x", "per_seed": [{"seed": -1}]}]})") ==
          "rows[0].per_seed[0].seed");
}

#pragma once

// Central finite-difference checks in double precision on the micro generator.
// Shared by the unit tests and the acceptance binary.

#include "makeitso/inversion.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace gradcheck {

using namespace makeitso;

// Denominators below this are treated as this; keeps coordinates whose true
// gradient is ~0 from reporting rounding noise as relative error.
inline constexpr double kAbsFloor = 1e-8;

struct Stats {
    int coordinates = 0;
    int failures = 0;
    double worst = 0;
    std::string worst_label;

    void add(double analytic, double numeric, double tol, const std::string& label) {
        const double denom = std::max({std::abs(analytic), std::abs(numeric), kAbsFloor});
        const double rel = std::abs(analytic - numeric) / denom;
        ++coordinates;
        if (rel > tol) ++failures;
        if (rel > worst) {
            worst = rel;
            worst_label = label;
        }
    }
    void merge(const Stats& o) {
        coordinates += o.coordinates;
        failures += o.failures;
        if (o.worst > worst) {
            worst = o.worst;
            worst_label = o.worst_label;
        }
    }
};

inline double central(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2 * h);
}

// The fixture every check runs on: micro generator, a tuned copy with
// perturbed synthesis weights, a target, a bank and a replay batch.
struct Fixture {
    GeneratorParams<double> anchored, tuned;
    FeatureExtractor<double> extractor;
    EditBank<double> bank;
    Image<double> target;
    NoiseVector<double> z;
    ReplayBatch<double> batch;
    LossWeights weights{1.0, 1.0};

    explicit Fixture(std::uint64_t seed = 3)
        : anchored(init_toy_generator<double>(seed, ArchConfig::micro())),
          tuned(anchored),
          extractor(FeatureExtractor<double>::random_pyramid(8)),
          bank(make_random_bank<double>(*anchored.arch, 3, seed + 10, 1.0)) {
        Rng rng(seed + 20);
        for (auto& v : tuned.synthesis()) v += 0.05 * rng.normal();
        z.values = rng.normal_vector<double>(anchored.arch->z_dim());
        target = generate(anchored, NoiseVector<double>{rng.normal_vector<double>(anchored.arch->z_dim())});
        batch = sample_replay_batch(anchored, bank, 2, rng);
    }

    int layers() const { return anchored.arch->num_styles(); }
};

// Total inversion loss of the tuned model as a function of its styles.
inline double inversion_loss_at(const Fixture& fx, const GeneratorParams<double>& params,
                                const StyleStack<double>& styles) {
    return total_inversion_loss(fx.weights, fx.extractor, synthesize(params, styles), fx.target).total;
}

struct InversionGrads {
    std::vector<double> z;
    std::vector<StyleStack<double>> styles;
    std::vector<double> params;
};

inline InversionGrads inversion_grads(const Fixture& fx, const NoiseVector<double>& z) {
    const Latent<double> latent{LatentSpace::Z, z.values};
    MappingTape<double> mtape;
    const auto styles = latent_to_styles<double>(fx.tuned, latent, &mtape);
    SynthesisTape<double> stape;
    const auto render = synthesize_batch<double>(fx.tuned, std::span<const StyleStack<double>>(&styles, 1), &stape);
    Image<double> g;
    total_inversion_loss(fx.weights, fx.extractor, render.front(), fx.target, &g);
    InversionGrads out;
    out.params.assign(fx.tuned.values.size(), 0.0);
    synthesize_backward<double>(fx.tuned, stape, std::span<const Image<double>>(&g, 1), out.params, &out.styles);
    out.z = latent_backward<double>(fx.tuned, latent, mtape, out.styles.front(), out.params);
    return out;
}

// Replay loss of `tuned` against the anchored model on the fixture batch,
// with the support styles derived from z_s through the (shared, frozen)
// mapping network. Anchored renders are constants.
inline double replay_at(const Fixture& fx, const GeneratorParams<double>& tuned,
                        const std::vector<NoiseVector<double>>& zs) {
    ReplayBatch<double> b = fx.batch;
    for (std::size_t i = 0; i < zs.size(); ++i) {
        b.z_s[i] = zs[i];
        b.w_plus_s[i] = broadcast_w(map_z_to_w(fx.anchored, zs[i]), fx.layers());
    }
    const auto styles = replay_styles(b, {});
    // References stay those of the fixture batch so that only the tuned side moves.
    const auto refs = synthesize_batch<double>(fx.anchored, replay_styles(fx.batch, {}), nullptr);
    return replay_loss_against<double>(tuned, styles, refs, b.size(), static_cast<int>(b.size()), fx.extractor, {},
                                       nullptr)
        .total;
}

struct ReplayGrads {
    std::vector<std::vector<double>> z;
    std::vector<StyleStack<double>> styles;  // per rendered pair
    std::vector<double> params;
};

inline ReplayGrads replay_grads(const Fixture& fx) {
    const auto styles = replay_styles(fx.batch, {});
    const auto refs = synthesize_batch<double>(fx.anchored, styles, nullptr);
    ReplayGrads out;
    out.params.assign(fx.tuned.values.size(), 0.0);
    const std::size_t n = fx.batch.size();
    replay_loss_against<double>(fx.tuned, styles, refs, n, static_cast<int>(n), fx.extractor, out.params,
                                &out.styles);
    for (std::size_t i = 0; i < n; ++i) {
        // Support and edited stacks both move with w_s = map(z_s).
        StyleStack<double> g = out.styles[i];
        for (std::size_t k = 0; k < g.data().size(); ++k) g.data()[k] += out.styles[n + i].data()[k];
        MappingTape<double> tape;
        map_forward<double>(fx.anchored, fx.batch.z_s[i], &tape);
        std::vector<double> gw(fx.anchored.arch->w_dim(), 0.0);
        for (int l = 0; l < g.layers(); ++l)
            for (int j = 0; j < g.w_dim(); ++j) gw[j] += g.layer(l)[j];
        out.z.push_back(map_backward<double>(fx.anchored, tape, gw).values);
    }
    return out;
}

// Arrays sampled for parameter checks.
inline const std::vector<std::string>& checked_arrays() {
    static const std::vector<std::string> names{"synthesis.const", "synthesis.b4.conv0.affine.weight",
                                                "synthesis.b8.conv1.weight", "synthesis.torgb.weight",
                                                "synthesis.b8.conv0.bias"};
    return names;
}

// Indices spread evenly through an array.
inline std::vector<std::size_t> sample_indices(std::size_t count, int k) {
    std::vector<std::size_t> out;
    for (int i = 0; i < k && static_cast<std::size_t>(i) < count; ++i)
        out.push_back(static_cast<std::size_t>((static_cast<double>(i) + 0.5) * count / k));
    return out;
}

struct Report {
    Stats inversion, replay;
};

// Checks both losses w.r.t. z, every style layer and `per_array` entries of
// each checked synthesis array.
inline Report run_all(const Fixture& fx, double h, double tol, int per_array) {
    Report rep;
    const int L = fx.layers();

    // ---- inversion loss
    const auto ig = inversion_grads(fx, fx.z);
    for (std::size_t i = 0; i < fx.z.size(); ++i) {
        const double num = central(
            [&](double v) {
                NoiseVector<double> z = fx.z;
                z.values[i] = v;
                return inversion_loss_at(fx, fx.tuned, broadcast_w(map_z_to_w(fx.tuned, z), L));
            },
            fx.z.values[i], h);
        rep.inversion.add(ig.z[i], num, tol, "inversion z[" + std::to_string(i) + "]");
    }
    const auto base_styles = broadcast_w(map_z_to_w(fx.tuned, fx.z), L);
    for (int l = 0; l < L; ++l)
        for (int j = 0; j < base_styles.w_dim(); ++j) {
            const double num = central(
                [&](double v) {
                    auto s = base_styles;
                    s.layer(l)[j] = v;
                    return inversion_loss_at(fx, fx.tuned, s);
                },
                base_styles.layer(l)[j], h);
            rep.inversion.add(ig.styles.front().layer(l)[j], num, tol,
                              "inversion style[" + std::to_string(l) + "][" + std::to_string(j) + "]");
        }
    for (const auto& name : checked_arrays()) {
        const auto& e = fx.tuned.arch->entry(name);
        for (std::size_t k : sample_indices(e.count, per_array)) {
            const std::size_t idx = e.offset + k;
            const double num = central(
                [&](double v) {
                    auto p = fx.tuned;
                    p.values[idx] = v;
                    return inversion_loss_at(fx, p, base_styles);
                },
                fx.tuned.values[idx], h);
            rep.inversion.add(ig.params[idx], num, tol, "inversion " + name + "[" + std::to_string(k) + "]");
        }
    }

    // ---- replay loss
    const auto rg = replay_grads(fx);
    const std::size_t n = fx.batch.size();
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t i = 0; i < fx.batch.z_s[s].size(); ++i) {
            const double num = central(
                [&](double v) {
                    auto zs = fx.batch.z_s;
                    zs[s].values[i] = v;
                    return replay_at(fx, fx.tuned, zs);
                },
                fx.batch.z_s[s].values[i], h);
            rep.replay.add(rg.z[s][i], num, tol, "replay z_s[" + std::to_string(s) + "][" + std::to_string(i) + "]");
        }
    // Style layers of the first support stack.
    const auto styles = replay_styles(fx.batch, {});
    const auto refs = synthesize_batch<double>(fx.anchored, styles, nullptr);
    auto replay_with_styles = [&](const std::vector<StyleStack<double>>& st, const GeneratorParams<double>& p) {
        return replay_loss_against<double>(p, st, refs, n, static_cast<int>(n), fx.extractor, {}, nullptr).total;
    };
    for (int l = 0; l < L; ++l)
        for (int j = 0; j < styles.front().w_dim(); ++j) {
            const double num = central(
                [&](double v) {
                    auto st = styles;
                    st.front().layer(l)[j] = v;
                    return replay_with_styles(st, fx.tuned);
                },
                styles.front().layer(l)[j], h);
            rep.replay.add(rg.styles.front().layer(l)[j], num, tol,
                           "replay style[" + std::to_string(l) + "][" + std::to_string(j) + "]");
        }
    for (const auto& name : checked_arrays()) {
        const auto& e = fx.tuned.arch->entry(name);
        for (std::size_t k : sample_indices(e.count, per_array)) {
            const std::size_t idx = e.offset + k;
            const double num = central(
                [&](double v) {
                    auto p = fx.tuned;
                    p.values[idx] = v;
                    return replay_with_styles(styles, p);
                },
                fx.tuned.values[idx], h);
            rep.replay.add(rg.params[idx], num, tol, "replay " + name + "[" + std::to_string(k) + "]");
        }
    }
    return rep;
}

}  // namespace gradcheck

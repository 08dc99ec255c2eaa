#include "makeitso/objectives.hpp"
#include "makeitso/rng.hpp"

#include <doctest.h>

using namespace makeitso;

namespace {

Image<double> random_image(Rng& rng, int res, double scale = 0.5) {
    Image<double> img(res, res);
    for (auto& v : img.pixels) v = scale * rng.normal();
    return img;
}

}  // namespace

TEST_CASE("loss weights validation") {
    CHECK_NOTHROW(LossWeights{1, 0}.validate());
    CHECK_NOTHROW(LossWeights{0, 1}.validate());
    CHECK_THROWS_AS((LossWeights{0, 0}.validate()), ConfigError);
    CHECK_THROWS_AS((LossWeights{-1, 1}.validate()), ConfigError);
    CHECK_THROWS_AS((LossWeights{std::nan(""), 1}.validate()), ConfigError);
}

TEST_CASE("recon loss examples") {
    Rng rng(1);
    const auto a = random_image(rng, 8);
    CHECK(recon_loss(a, a) == 0.0);
    auto b = a;
    for (auto& v : b.pixels) v += 0.5;
    CHECK(recon_loss(a, b) == doctest::Approx(0.25).epsilon(1e-15));
    const auto c = random_image(rng, 8);
    double naive = 0;
    for (std::size_t i = 0; i < a.size(); ++i) naive += (a.pixels[i] - c.pixels[i]) * (a.pixels[i] - c.pixels[i]);
    naive /= static_cast<double>(a.size());
    CHECK(std::abs(recon_loss(a, c) - naive) <= 1e-12);
    CHECK_THROWS_AS(recon_loss(a, Image<double>(4, 4)), ContractViolation);
}

TEST_CASE("perceptual loss examples") {
    const auto ex = FeatureExtractor<double>::random_pyramid(16);
    Rng rng(2);
    const auto a = random_image(rng, 16), b = random_image(rng, 16);
    CHECK(perceptual_loss(ex, a, a) == 0.0);
    CHECK(perceptual_loss(ex, a, b) > 0.0);
    CHECK(perceptual_loss(ex, a, b) == perceptual_loss(ex, b, a));
    CHECK_THROWS_AS(perceptual_loss(ex, Image<double>(8, 8), Image<double>(8, 8)), ContractViolation);
    CHECK_THROWS_AS(FeatureExtractor<double>::random_pyramid(4), ContractViolation);
}

TEST_CASE("total loss is linear in the weights") {
    const auto ex = FeatureExtractor<double>::random_pyramid(16);
    Rng rng(3);
    const auto a = random_image(rng, 16), b = random_image(rng, 16);
    const double r = recon_loss(a, b), p = perceptual_loss(ex, a, b);
    CHECK(total_inversion_loss(LossWeights{1, 0}, ex, a, b).total == r);
    CHECK(total_inversion_loss(LossWeights{0, 1}, ex, a, b).total == p);
    CHECK(std::abs(total_inversion_loss(LossWeights{2, 3}, ex, a, b).total - (2 * r + 3 * p)) <= 1e-12);
    for (int i = 0; i < 10; ++i) {
        const LossWeights w{rng.uniform() * 5, rng.uniform() * 5};
        CHECK(std::abs(total_inversion_loss(w, ex, a, b).total - (w.recon * r + w.perceptual * p)) <= 1e-12);
    }
    // Gradients combine the same way.
    Image<double> g, gr, gp;
    total_inversion_loss(LossWeights{2, 3}, ex, a, b, &g);
    recon_loss(a, b, &gr);
    perceptual_loss(ex, a, b, &gp);
    for (std::size_t i = 0; i < g.size(); ++i) REQUIRE(std::abs(g.pixels[i] - (2 * gr.pixels[i] + 3 * gp.pixels[i])) < 1e-14);
}

TEST_CASE("eval metrics") {
    const auto ex = FeatureExtractor<double>::random_pyramid(16);
    Rng rng(4);
    const auto a = random_image(rng, 16, 0.3), b = random_image(rng, 16, 0.3);
    CHECK(eval_mse(a, a) == 0.0);
    // Inside [-1, 1] clamping is a no-op, so the metric equals the loss.
    auto inside = a, inside_b = b;
    for (auto& v : inside.pixels) v = std::clamp(v, -1.0, 1.0);
    for (auto& v : inside_b.pixels) v = std::clamp(v, -1.0, 1.0);
    CHECK(eval_mse(inside, inside_b) == recon_loss(inside, inside_b));
    CHECK(eval_perceptual(ex, inside, inside_b) == perceptual_loss(ex, inside, inside_b));
    auto e1 = inside, e2 = inside;
    for (auto& v : e1.pixels) v += 0.01;
    for (auto& v : e2.pixels) v += 0.02;
    CHECK(eval_mse(inside, e1) < eval_mse(inside, e2));
    // Out-of-range values are clamped first.
    Image<double> big(16, 16, 3.0), one(16, 16, 1.0);
    CHECK(eval_mse(big, one) == 0.0);
}

TEST_CASE("losses are invariant to chunking") {
    const auto ex = FeatureExtractor<double>::random_pyramid(16);
    Rng rng(5);
    std::vector<Image<double>> a, b;
    for (int i = 0; i < 4; ++i) {
        a.push_back(random_image(rng, 16));
        b.push_back(random_image(rng, 16));
    }
    const auto whole = perceptual_loss_batch<double>(ex, a, b);
    const auto first = perceptual_loss_batch<double>(ex, std::span(a).first(2), std::span(b).first(2));
    const auto second = perceptual_loss_batch<double>(ex, std::span(a).last(2), std::span(b).last(2));
    for (int i = 0; i < 2; ++i) {
        CHECK(std::abs(whole[i] - first[i]) <= 1e-10);
        CHECK(std::abs(whole[2 + i] - second[i]) <= 1e-10);
        CHECK(std::abs(whole[i] - perceptual_loss(ex, a[i], b[i])) <= 1e-10);
    }
    // Recon over the whole image vs. the weighted mean of its two halves.
    const auto& x = a[0];
    const auto& y = b[0];
    const std::size_t half = x.size() / 2;
    double s1 = 0, s2 = 0;
    for (std::size_t i = 0; i < half; ++i) s1 += (x.pixels[i] - y.pixels[i]) * (x.pixels[i] - y.pixels[i]);
    for (std::size_t i = half; i < x.size(); ++i) s2 += (x.pixels[i] - y.pixels[i]) * (x.pixels[i] - y.pixels[i]);
    const double chunked = 0.5 * (s1 / half) + 0.5 * (s2 / (x.size() - half));
    CHECK(std::abs(recon_loss(x, y) - chunked) <= 1e-10);
}

TEST_CASE("extractor is deterministic and seeded") {
    const auto a = FeatureExtractor<float>::random_pyramid(32);
    const auto b = FeatureExtractor<float>::random_pyramid(32);
    const auto c = FeatureExtractor<float>::random_pyramid(32, 8);
    CHECK(a.weights() == b.weights());
    CHECK(a.weights() != c.weights());
    CHECK(a.stages() == 3);
    CHECK(a.stage_resolution(0) == 16);
}

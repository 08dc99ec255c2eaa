#include "makeitso/objectives.hpp"

#include "makeitso/kernels.hpp"
#include "makeitso/rng.hpp"

#include <cmath>

namespace makeitso {

namespace {

constexpr double kSlope = 0.2;
constexpr double kNormEps = 1e-10;

template <typename T>
Image<T> clamped(const Image<T>& in) {
    Image<T> out = in;
    for (auto& v : out.pixels) v = std::clamp(v, T(-1), T(1));
    return out;
}

}  // namespace

void LossWeights::validate() const {
    if (!std::isfinite(recon) || !std::isfinite(perceptual)) throw ConfigError("loss weights must be finite");
    if (recon < 0 || perceptual < 0) throw ConfigError("loss weights must be non-negative");
    if (recon == 0 && perceptual == 0) throw ConfigError("loss weights must not both be zero");
}

template <typename T>
FeatureExtractor<T> FeatureExtractor<T>::random_pyramid(int resolution, std::uint64_t seed, std::vector<int> channels) {
    require(!channels.empty(), "feature extractor needs at least one stage");
    require((resolution >> channels.size()) >= 1, "feature extractor has too many stages for resolution " +
                                                       std::to_string(resolution));
    FeatureExtractor e;
    e.id_ = "random-pyramid-v1";
    e.seed_ = seed;
    e.resolution_ = resolution;
    e.channels_ = std::move(channels);
    Rng rng(seed);
    int in = 3;
    for (int out : e.channels_) {
        e.offsets_.push_back(e.weights_.size());
        const double scale = 1.0 / std::sqrt(static_cast<double>(in * 9));
        for (int i = 0; i < out * in * 9; ++i) e.weights_.push_back(static_cast<T>(rng.normal() * scale));
        in = out;
    }
    return e;
}

template <typename T>
void FeatureExtractor<T>::forward(std::span<const Image<T>> images, Tape& tape) const {
    const int B = static_cast<int>(images.size());
    for (const auto& img : images)
        require(img.height == resolution_ && img.width == resolution_,
                "perceptual: image is " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                    ", extractor expects " + std::to_string(resolution_));
    tape.batch = B;
    tape.inputs.clear();
    tape.outputs.clear();
    tape.normalized.clear();
    tape.norms.clear();

    const std::size_t plane0 = static_cast<std::size_t>(resolution_) * resolution_;
    std::vector<T> x(3 * B * plane0);
    for (int c = 0; c < 3; ++c)
        for (int b = 0; b < B; ++b)
            std::copy(images[b].pixels.begin() + c * plane0, images[b].pixels.begin() + (c + 1) * plane0,
                      x.begin() + (static_cast<std::size_t>(c) * B + b) * plane0);

    int in = 3, res = resolution_;
    for (int k = 0; k < stages(); ++k) {
        kernels::ConvShape s{in, channels_[k], B, res, res, 3, 2, 1};
        std::vector<T> y(s.output_size());
        kernels::conv2d_forward<T>(s, x, std::span<const T>(weights_.data() + offsets_[k], s.weight_size()), y);
        for (auto& v : y) v = v > T(0) ? v : static_cast<T>(kSlope) * v;

        const int C = channels_[k];
        const std::size_t positions = static_cast<std::size_t>(B) * s.out_height() * s.out_width();
        std::vector<T> norms(positions);
        std::vector<T> nf(y.size());
        for (std::size_t p = 0; p < positions; ++p) {
            T acc = 0;
            for (int c = 0; c < C; ++c) acc += y[c * positions + p] * y[c * positions + p];
            const T n = std::sqrt(acc + static_cast<T>(kNormEps));
            norms[p] = n;
            for (int c = 0; c < C; ++c) nf[c * positions + p] = y[c * positions + p] / n;
        }
        tape.inputs.push_back(std::move(x));
        x = y;
        tape.outputs.push_back(std::move(y));
        tape.normalized.push_back(std::move(nf));
        tape.norms.push_back(std::move(norms));
        in = C;
        res = s.out_height();
    }
}

template <typename T>
std::vector<Image<T>> FeatureExtractor<T>::backward(const Tape& tape,
                                                    const std::vector<std::vector<T>>& grad_normalized) const {
    const int B = tape.batch;
    std::vector<T> g_next;  // gradient flowing into stage k's output from stage k+1
    for (int k = stages() - 1; k >= 0; --k) {
        const int C = channels_[k];
        const int in = k == 0 ? 3 : channels_[k - 1];
        const int res_in = resolution_ >> k;
        kernels::ConvShape s{in, C, B, res_in, res_in, 3, 2, 1};
        const std::size_t positions = static_cast<std::size_t>(B) * s.out_height() * s.out_width();
        const auto& f = tape.normalized[k];
        const auto& gf = grad_normalized[k];
        const auto& y = tape.outputs[k];

        // Normalization: g_y = (g_f - f * <f, g_f>) / n, plus the downstream gradient.
        std::vector<T> gy(y.size());
        for (std::size_t p = 0; p < positions; ++p) {
            T dot = 0;
            for (int c = 0; c < C; ++c) dot += f[c * positions + p] * gf[c * positions + p];
            const T n = tape.norms[k][p];
            for (int c = 0; c < C; ++c) {
                const std::size_t i = c * positions + p;
                gy[i] = (gf[i] - f[i] * dot) / n;
            }
        }
        if (!g_next.empty())
            for (std::size_t i = 0; i < gy.size(); ++i) gy[i] += g_next[i];
        for (std::size_t i = 0; i < gy.size(); ++i)
            if (y[i] <= T(0)) gy[i] *= static_cast<T>(kSlope);

        std::vector<T> gx(s.input_size());
        kernels::conv2d_backward_input<T>(s, gy, std::span<const T>(weights_.data() + offsets_[k], s.weight_size()),
                                          gx);
        g_next = std::move(gx);
    }

    const std::size_t plane0 = static_cast<std::size_t>(resolution_) * resolution_;
    std::vector<Image<T>> out(B, Image<T>(resolution_, resolution_));
    for (int c = 0; c < 3; ++c)
        for (int b = 0; b < B; ++b)
            std::copy(g_next.begin() + (static_cast<std::size_t>(c) * B + b) * plane0,
                      g_next.begin() + (static_cast<std::size_t>(c) * B + b + 1) * plane0,
                      out[b].pixels.begin() + c * plane0);
    return out;
}

template <typename T>
double recon_loss(const Image<T>& a, const Image<T>& b, Image<T>* grad_a) {
    require(a.same_shape(b), "recon_loss: image shapes differ");
    const std::size_t n = a.size();
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
        acc += d * d;
    }
    if (grad_a) {
        *grad_a = Image<T>(a.height, a.width);
        const T scale = static_cast<T>(2.0 / static_cast<double>(n));
        for (std::size_t i = 0; i < n; ++i) grad_a->pixels[i] = scale * (a.pixels[i] - b.pixels[i]);
    }
    return acc / static_cast<double>(n);
}

template <typename T>
std::vector<double> perceptual_loss_batch(const FeatureExtractor<T>& extractor, std::span<const Image<T>> a,
                                          std::span<const Image<T>> b, std::vector<Image<T>>* grad_a) {
    require(a.size() == b.size(), "perceptual_loss: batch size mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) require(a[i].same_shape(b[i]), "perceptual_loss: image shapes differ");
    const int B = static_cast<int>(a.size());
    typename FeatureExtractor<T>::Tape ta, tb;
    extractor.forward(a, ta);
    extractor.forward(b, tb);

    const int S = extractor.stages();
    std::vector<double> losses(B, 0.0);
    std::vector<std::vector<T>> grads(S);
    for (int k = 0; k < S; ++k) {
        const int C = extractor.stage_channels(k);
        const std::size_t per_image = static_cast<std::size_t>(extractor.stage_resolution(k)) *
                                      extractor.stage_resolution(k);
        const std::size_t positions = per_image * B;
        const auto& fa = ta.normalized[k];
        const auto& fb = tb.normalized[k];
        const double scale = 1.0 / (static_cast<double>(S) * C * per_image);
        if (grad_a) grads[k].assign(fa.size(), T(0));
        for (int c = 0; c < C; ++c)
            for (int bi = 0; bi < B; ++bi)
                for (std::size_t p = 0; p < per_image; ++p) {
                    const std::size_t i = c * positions + bi * per_image + p;
                    const double d = static_cast<double>(fa[i]) - static_cast<double>(fb[i]);
                    losses[bi] += scale * d * d;
                    if (grad_a) grads[k][i] = static_cast<T>(2.0 * scale * d);
                }
    }
    if (grad_a) *grad_a = extractor.backward(ta, grads);
    return losses;
}

template <typename T>
double perceptual_loss(const FeatureExtractor<T>& extractor, const Image<T>& a, const Image<T>& b, Image<T>* grad_a) {
    std::vector<Image<T>> grads;
    const auto losses = perceptual_loss_batch<T>(extractor, std::span<const Image<T>>(&a, 1),
                                                 std::span<const Image<T>>(&b, 1), grad_a ? &grads : nullptr);
    if (grad_a) *grad_a = std::move(grads.front());
    return losses.front();
}

template <typename T>
LossValue total_inversion_loss(const LossWeights& weights, const FeatureExtractor<T>& extractor,
                               const Image<T>& generated, const Image<T>& target, Image<T>* grad) {
    weights.validate();
    LossValue v;
    Image<T> gr, gp;
    v.recon = recon_loss(generated, target, grad ? &gr : nullptr);
    v.perceptual = perceptual_loss(extractor, generated, target, grad ? &gp : nullptr);
    v.total = weights.recon * v.recon + weights.perceptual * v.perceptual;
    if (grad) {
        *grad = Image<T>(generated.height, generated.width);
        const T wr = static_cast<T>(weights.recon), wp = static_cast<T>(weights.perceptual);
        for (std::size_t i = 0; i < grad->size(); ++i) grad->pixels[i] = wr * gr.pixels[i] + wp * gp.pixels[i];
    }
    return v;
}

template <typename T>
double eval_mse(const Image<T>& a, const Image<T>& b) {
    return recon_loss(clamped(a), clamped(b));
}

template <typename T>
double eval_perceptual(const FeatureExtractor<T>& extractor, const Image<T>& a, const Image<T>& b) {
    return perceptual_loss(extractor, clamped(a), clamped(b));
}

#define MAKEITSO_INSTANTIATE_OBJECTIVES(T)                                                                        \
    template class FeatureExtractor<T>;                                                                           \
    template double recon_loss<T>(const Image<T>&, const Image<T>&, Image<T>*);                                   \
    template double perceptual_loss<T>(const FeatureExtractor<T>&, const Image<T>&, const Image<T>&, Image<T>*);  \
    template std::vector<double> perceptual_loss_batch<T>(const FeatureExtractor<T>&, std::span<const Image<T>>, \
                                                          std::span<const Image<T>>, std::vector<Image<T>>*);     \
    template LossValue total_inversion_loss<T>(const LossWeights&, const FeatureExtractor<T>&, const Image<T>&,  \
                                               const Image<T>&, Image<T>*);                                       \
    template double eval_mse<T>(const Image<T>&, const Image<T>&);                                                \
    template double eval_perceptual<T>(const FeatureExtractor<T>&, const Image<T>&, const Image<T>&);

MAKEITSO_INSTANTIATE_OBJECTIVES(float)
MAKEITSO_INSTANTIATE_OBJECTIVES(double)

}  // namespace makeitso

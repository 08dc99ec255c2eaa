#include "makeitso/generator.hpp"

#include "makeitso/kernels.hpp"
#include "makeitso/rng.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace makeitso {

namespace {

constexpr double kSlope = 0.2;
constexpr double kActGain = 1.4142135623730951;  // sqrt(2)
constexpr double kDemodEps = 1e-8;
constexpr double kPixelNormEps = 1e-8;

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using CMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using MMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using CVec = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using MVec = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;

bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

template <typename T>
T lrelu(T v) {
    return v > T(0) ? v : static_cast<T>(kSlope) * v;
}

}  // namespace

// ------------------------------------------------------------------ config

int ArchConfig::channels_at(int res) const {
    return std::clamp(channel_base / res, 1, channel_max);
}

int ArchConfig::num_styles() const {
    int blocks = 0;
    for (int r = 4; r <= resolution; r *= 2) ++blocks;
    return 2 * blocks;
}

void ArchConfig::validate() const {
    if (!is_pow2(resolution) || resolution < 4)
        throw ConfigError("resolution must be a power of two >= 4, got " + std::to_string(resolution));
    if (z_dim < 1 || w_dim < 1) throw ConfigError("z_dim and w_dim must be positive");
    if (mapping_hidden_layers < 0 || mapping_width < 1) throw ConfigError("invalid mapping network shape");
    if (const_channels < 1 || channel_base < 1 || channel_max < 1) throw ConfigError("channel counts must be positive");
}

std::string ArchConfig::to_json() const {
    nlohmann::json j = {{"z_dim", z_dim},
                        {"w_dim", w_dim},
                        {"mapping_hidden_layers", mapping_hidden_layers},
                        {"mapping_width", mapping_width},
                        {"resolution", resolution},
                        {"const_channels", const_channels},
                        {"channel_base", channel_base},
                        {"channel_max", channel_max}};
    return j.dump();
}

ArchConfig ArchConfig::from_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("architecture config is not valid JSON: ") + e.what(), "config");
    }
    ArchConfig c;
    auto field = [&](const char* key, int& dst) {
        if (!j.contains(key)) return;
        if (!j[key].is_number_integer()) throw FormatError("expected integer", std::string("config.") + key);
        dst = j[key].get<int>();
    };
    field("z_dim", c.z_dim);
    field("w_dim", c.w_dim);
    field("mapping_hidden_layers", c.mapping_hidden_layers);
    field("mapping_width", c.mapping_width);
    field("resolution", c.resolution);
    field("const_channels", c.const_channels);
    field("channel_base", c.channel_base);
    field("channel_max", c.channel_max);
    return c;
}

// ------------------------------------------------------------ architecture

std::size_t Architecture::add(std::string name, std::vector<int> shape) {
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    entries_.push_back({std::move(name), std::move(shape), total_, count});
    const std::size_t offset = total_;
    total_ += count;
    return offset;
}

std::shared_ptr<const Architecture> Architecture::build(const ArchConfig& config) {
    config.validate();
    std::shared_ptr<Architecture> a(new Architecture());
    a->config_ = config;

    int in = config.z_dim;
    for (int k = 0; k <= config.mapping_hidden_layers; ++k) {
        const int out = k == config.mapping_hidden_layers ? config.w_dim : config.mapping_width;
        const std::string base = "mapping.fc" + std::to_string(k);
        Dense d;
        d.in = in;
        d.out = out;
        d.weight = a->add(base + ".weight", {out, in});
        d.bias = a->add(base + ".bias", {out});
        a->mapping_.push_back(d);
        in = out;
    }
    a->mapping_end_ = a->total_;

    a->const_ = a->add("synthesis.const", {config.const_channels, 4, 4});
    int channels = config.const_channels;
    int slot = 0;
    for (int res = 4; res <= config.resolution; res *= 2) {
        const int out = config.channels_at(res);
        for (int j = 0; j < 2; ++j) {
            const std::string base = "synthesis.b" + std::to_string(res) + ".conv" + std::to_string(j);
            StyleConv c;
            c.in_channels = channels;
            c.out_channels = out;
            c.resolution = res;
            c.slot = slot++;
            c.upsample = (j == 0 && res > 4);
            c.affine_weight = a->add(base + ".affine.weight", {channels, config.w_dim});
            c.affine_bias = a->add(base + ".affine.bias", {channels});
            c.weight = a->add(base + ".weight", {out, channels, 3, 3});
            c.bias = a->add(base + ".bias", {out});
            a->convs_.push_back(c);
            channels = out;
        }
    }
    a->to_rgb_.in = channels;
    a->to_rgb_.out = 3;
    a->to_rgb_.weight = a->add("synthesis.torgb.weight", {3, channels});
    a->to_rgb_.bias = a->add("synthesis.torgb.bias", {3});

    std::ostringstream canon;
    canon << config.to_json();
    for (const auto& e : a->entries_) {
        canon << '|' << e.name;
        for (int d : e.shape) canon << ',' << d;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canon.str())));
    a->hash_ = buf;
    return a;
}

const ParamEntry* Architecture::find(std::string_view name) const {
    for (const auto& e : entries_)
        if (e.name == name) return &e;
    return nullptr;
}

const ParamEntry& Architecture::entry(std::string_view name) const {
    const ParamEntry* e = find(name);
    if (!e) throw ContractViolation("unknown parameter array '" + std::string(name) + "'");
    return *e;
}

template <typename T>
std::span<T> GeneratorParams<T>::array(std::string_view name) {
    const auto& e = arch->entry(name);
    return {values.data() + e.offset, e.count};
}

template <typename T>
std::span<const T> GeneratorParams<T>::array(std::string_view name) const {
    const auto& e = arch->entry(name);
    return {values.data() + e.offset, e.count};
}

void require_same_architecture(const std::string& a, const std::string& b) {
    if (a != b) throw IncompatibleArchitecture("architecture hash mismatch: " + a + " vs " + b);
}

template <typename T>
GeneratorParams<T> init_toy_generator(std::uint64_t seed, const ArchConfig& config) {
    GeneratorParams<T> p;
    p.arch = Architecture::build(config);
    p.values.assign(p.arch->size(), T(0));
    Rng rng(seed);
    for (const auto& e : p.arch->entries()) {
        T* v = p.values.data() + e.offset;
        const bool is_bias = e.name.ends_with(".bias");
        const bool is_affine_bias = e.name.ends_with(".affine.bias");
        for (std::size_t i = 0; i < e.count; ++i) {
            // Draw for every entry so the stream layout does not depend on which
            // arrays are biases.
            const double n = rng.normal();
            v[i] = is_affine_bias ? T(1) : is_bias ? T(0) : static_cast<T>(n);
        }
    }
    return p;
}

template <typename T>
double param_distance(const GeneratorParams<T>& a, const GeneratorParams<T>& b) {
    require_same_architecture(a.hash(), b.hash());
    const auto sa = a.synthesis();
    const auto sb = b.synthesis();
    double acc = 0;
    for (std::size_t i = 0; i < sa.size(); ++i) {
        const double d = static_cast<double>(sa[i]) - static_cast<double>(sb[i]);
        acc += d * d;
    }
    return sa.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(sa.size()));
}

// ----------------------------------------------------------------- mapping

template <typename T>
StyleVector<T> map_forward(const GeneratorParams<T>& params, const NoiseVector<T>& z, MappingTape<T>* tape) {
    const auto& arch = *params.arch;
    require(static_cast<int>(z.size()) == arch.z_dim(),
            "map_z_to_w: z has length " + std::to_string(z.size()) + ", generator expects " +
                std::to_string(arch.z_dim()));
    require(all_finite<T>(z.values), "map_z_to_w: z has non-finite entries");

    const std::size_t n = z.size();
    T ms = 0;
    for (T v : z.values) ms += v * v;
    ms /= static_cast<T>(n);
    const T norm = std::sqrt(ms + static_cast<T>(kPixelNormEps));
    std::vector<T> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = z.values[i] / norm;

    if (tape) {
        tape->z = z.values;
        tape->norm = norm;
        tape->inputs.clear();
        tape->pre.clear();
    }
    const auto& layers = arch.mapping_layers();
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const auto& d = layers[k];
        const T gain = T(1) / std::sqrt(static_cast<T>(d.in));
        CMap<T> W(params.values.data() + d.weight, d.out, d.in);
        CVec<T> b(params.values.data() + d.bias, d.out);
        std::vector<T> pre(d.out);
        MVec<T>(pre.data(), d.out).noalias() = gain * (W * CVec<T>(x.data(), d.in)) + b;
        if (tape) {
            tape->inputs.push_back(x);
            tape->pre.push_back(pre);
        }
        const bool last = k + 1 == layers.size();
        x = std::move(pre);
        if (!last)
            for (auto& v : x) v = lrelu(v);
    }
    return {std::move(x)};
}

template <typename T>
NoiseVector<T> map_backward(const GeneratorParams<T>& params, const MappingTape<T>& tape, std::span<const T> grad_w,
                            std::span<T> grad_params) {
    const auto& layers = params.arch->mapping_layers();
    std::vector<T> g(grad_w.begin(), grad_w.end());
    for (std::size_t k = layers.size(); k-- > 0;) {
        const auto& d = layers[k];
        if (k + 1 != layers.size()) {
            const auto& pre = tape.pre[k];
            for (int i = 0; i < d.out; ++i)
                if (pre[i] <= T(0)) g[i] *= static_cast<T>(kSlope);
        }
        const T gain = T(1) / std::sqrt(static_cast<T>(d.in));
        CMap<T> W(params.values.data() + d.weight, d.out, d.in);
        CVec<T> gv(g.data(), d.out);
        if (!grad_params.empty()) {
            MMap<T> gW(grad_params.data() + d.weight, d.out, d.in);
            gW.noalias() += gain * gv * CVec<T>(tape.inputs[k].data(), d.in).transpose();
            MVec<T>(grad_params.data() + d.bias, d.out) += gv;
        }
        std::vector<T> gin(d.in);
        MVec<T>(gin.data(), d.in).noalias() = gain * (W.transpose() * gv);
        g = std::move(gin);
    }
    // Pixel norm: x = z / r, r = sqrt(mean(z^2) + eps).
    const std::size_t n = tape.z.size();
    const T r = tape.norm;
    T dot = 0;
    for (std::size_t i = 0; i < n; ++i) dot += g[i] * tape.z[i];
    NoiseVector<T> gz{std::vector<T>(n)};
    const T coef = dot / (static_cast<T>(n) * r * r * r);
    for (std::size_t i = 0; i < n; ++i) gz.values[i] = g[i] / r - tape.z[i] * coef;
    return gz;
}

template <typename T>
StyleVector<T> map_z_to_w(const GeneratorParams<T>& params, const NoiseVector<T>& z) {
    return map_forward<T>(params, z, nullptr);
}

template <typename T>
StyleStack<T> broadcast_w(const StyleVector<T>& w, int layers) {
    require(layers >= 1, "broadcast_w: layer count must be >= 1");
    StyleStack<T> s(layers, static_cast<int>(w.size()));
    for (int i = 0; i < layers; ++i) std::copy(w.values.begin(), w.values.end(), s.layer(i).begin());
    return s;
}

// --------------------------------------------------------------- synthesis

template <typename T>
std::vector<Image<T>> synthesize_batch(const GeneratorParams<T>& params, std::span<const StyleStack<T>> styles,
                                       SynthesisTape<T>* tape) {
    const auto& arch = *params.arch;
    const int B = static_cast<int>(styles.size());
    require(B >= 1, "synthesize: empty batch");
    for (const auto& s : styles) {
        require(s.layers() == arch.num_styles(), "synthesize: style stack has " + std::to_string(s.layers()) +
                                                     " layers, generator expects " +
                                                     std::to_string(arch.num_styles()));
        require(s.w_dim() == arch.w_dim(), "synthesize: style width mismatch");
    }
    const T* P = params.values.data();
    const int wd = arch.w_dim();
    const T affine_gain = T(1) / std::sqrt(static_cast<T>(wd));
    const T act_gain = static_cast<T>(kActGain);
    const T slope = static_cast<T>(kSlope);

    if (tape) {
        tape->batch = B;
        tape->convs.assign(arch.style_convs().size(), {});
        tape->styles.assign(styles.begin(), styles.end());
    }

    // Constant input broadcast across the batch.
    int C = arch.config().const_channels;
    int res = 4;
    std::vector<T> x(static_cast<std::size_t>(C) * B * 16);
    for (int c = 0; c < C; ++c)
        for (int b = 0; b < B; ++b)
            std::copy(P + arch.const_offset() + c * 16, P + arch.const_offset() + (c + 1) * 16,
                      x.begin() + (static_cast<std::size_t>(c) * B + b) * 16);

    RowMatrix<T> wl(B, wd);
    for (const auto& L : arch.style_convs()) {
        if (L.upsample) {
            std::vector<T> up(x.size() * 4);
            kernels::upsample2x_forward<T>(C * B, res, res, x, up);
            x = std::move(up);
            res *= 2;
        }
        const int Cin = L.in_channels, O = L.out_channels;
        const std::size_t plane = static_cast<std::size_t>(res) * res;

        for (int b = 0; b < B; ++b) {
            auto layer = styles[b].layer(L.slot);
            std::copy(layer.begin(), layer.end(), wl.row(b).data());
        }
        // style[b, i] = gain * A[i, :] . w_b + bias[i]
        RowMatrix<T> s = affine_gain * (wl * CMap<T>(P + L.affine_weight, Cin, wd).transpose());
        s.rowwise() += CVec<T>(P + L.affine_bias, Cin).transpose();

        std::vector<T> xs(x.size());
        for (int c = 0; c < Cin; ++c)
            for (int b = 0; b < B; ++b) {
                const T sc = s(b, c);
                const std::size_t off = (static_cast<std::size_t>(c) * B + b) * plane;
                for (std::size_t p = 0; p < plane; ++p) xs[off + p] = x[off + p] * sc;
            }

        kernels::ConvShape shape{Cin, O, B, res, res, 3, 1, 1};
        std::vector<T> u(shape.output_size());
        kernels::conv2d_forward<T>(shape, xs, std::span<const T>(P + L.weight, shape.weight_size()), u);

        // demod[b, o] = (sum_i Q[o, i] s[b, i]^2 + eps)^(-1/2), Q = sum_k W^2
        RowMatrix<T> Q(O, Cin);
        for (int o = 0; o < O; ++o)
            for (int i = 0; i < Cin; ++i) {
                const T* w = P + L.weight + (static_cast<std::size_t>(o) * Cin + i) * 9;
                T acc = 0;
                for (int k = 0; k < 9; ++k) acc += w[k] * w[k];
                Q(o, i) = acc;
            }
        RowMatrix<T> d = (s.array().square().matrix() * Q.transpose()).array() + static_cast<T>(kDemodEps);
        d = d.array().rsqrt();

        std::vector<T> y(u.size());
        for (int o = 0; o < O; ++o) {
            const T bias = P[L.bias + o];
            for (int b = 0; b < B; ++b) {
                const T dm = d(b, o);
                const std::size_t off = (static_cast<std::size_t>(o) * B + b) * plane;
                for (std::size_t p = 0; p < plane; ++p) {
                    const T v = dm * u[off + p] + bias;
                    y[off + p] = act_gain * (v > T(0) ? v : slope * v);
                }
            }
        }
        if (tape) {
            auto& rec = tape->convs[L.slot];
            rec.input = std::move(x);
            rec.style.assign(s.data(), s.data() + s.size());
            rec.conv = std::move(u);
            rec.demod.assign(d.data(), d.data() + d.size());
            rec.output = y;
        }
        x = std::move(y);
        C = O;
    }

    const auto& rgb = arch.to_rgb();
    const int N = B * res * res;
    const T rgb_gain = T(1) / std::sqrt(static_cast<T>(rgb.in));
    RowMatrix<T> out = rgb_gain * (CMap<T>(P + rgb.weight, 3, rgb.in) * CMap<T>(x.data(), rgb.in, N));
    for (int c = 0; c < 3; ++c) {
        const T bias = P[rgb.bias + c];
        for (int n = 0; n < N; ++n) out(c, n) = std::tanh(out(c, n) + bias);
    }

    std::vector<Image<T>> images(B, Image<T>(res, res));
    const std::size_t plane = static_cast<std::size_t>(res) * res;
    for (int c = 0; c < 3; ++c)
        for (int b = 0; b < B; ++b)
            std::copy(out.data() + (static_cast<std::size_t>(c) * B + b) * plane,
                      out.data() + (static_cast<std::size_t>(c) * B + b + 1) * plane,
                      images[b].pixels.begin() + c * plane);
    if (tape) tape->rgb.assign(out.data(), out.data() + out.size());
    return images;
}

template <typename T>
void synthesize_backward(const GeneratorParams<T>& params, const SynthesisTape<T>& tape,
                         std::span<const Image<T>> grad_images, std::span<T> grad_params,
                         std::vector<StyleStack<T>>* grad_styles) {
    const auto& arch = *params.arch;
    const int B = tape.batch;
    require(static_cast<int>(grad_images.size()) == B, "synthesize_backward: gradient batch mismatch");
    const bool want_params = !grad_params.empty();
    require(!want_params || grad_params.size() == params.values.size(),
            "synthesize_backward: grad_params must span the full parameter vector");
    const T* P = params.values.data();
    T* G = grad_params.data();
    const int wd = arch.w_dim();
    const T affine_gain = T(1) / std::sqrt(static_cast<T>(wd));
    const T act_gain = static_cast<T>(kActGain);
    const T slope = static_cast<T>(kSlope);
    const int res_out = arch.resolution();
    const std::size_t plane_out = static_cast<std::size_t>(res_out) * res_out;
    const int N = B * static_cast<int>(plane_out);

    if (grad_styles) {
        grad_styles->assign(B, StyleStack<T>(arch.num_styles(), wd));
    }

    // toRGB
    const auto& rgb = arch.to_rgb();
    const T rgb_gain = T(1) / std::sqrt(static_cast<T>(rgb.in));
    RowMatrix<T> gr(3, N);
    for (int c = 0; c < 3; ++c)
        for (int b = 0; b < B; ++b) {
            require(grad_images[b].height == res_out && grad_images[b].width == res_out,
                    "synthesize_backward: gradient image shape mismatch");
            for (std::size_t p = 0; p < plane_out; ++p) {
                const std::size_t idx = (static_cast<std::size_t>(c) * B + b) * plane_out + p;
                const T o = tape.rgb[idx];
                gr(c, static_cast<Eigen::Index>(b * plane_out + p)) =
                    grad_images[b].pixels[c * plane_out + p] * (T(1) - o * o);
            }
        }
    const auto& last = tape.convs.back();
    CMap<T> xlast(last.output.data(), rgb.in, N);
    if (want_params) {
        MMap<T>(G + rgb.weight, 3, rgb.in).noalias() += rgb_gain * (gr * xlast.transpose());
        // Plain loops: Eigen's partial reductions into an unaligned Map round
        // differently depending on the destination address.
        for (int c = 0; c < 3; ++c) {
            T acc = 0;
            for (int n = 0; n < N; ++n) acc += gr(c, n);
            G[rgb.bias + c] += acc;
        }
    }
    std::vector<T> gx(static_cast<std::size_t>(rgb.in) * N);
    MMap<T>(gx.data(), rgb.in, N).noalias() = rgb_gain * (CMap<T>(P + rgb.weight, 3, rgb.in).transpose() * gr);

    const auto& convs = arch.style_convs();
    for (std::size_t li = convs.size(); li-- > 0;) {
        const auto& L = convs[li];
        const auto& rec = tape.convs[li];
        const int Cin = L.in_channels, O = L.out_channels, res = L.resolution;
        const std::size_t plane = static_cast<std::size_t>(res) * res;
        CMap<T> s(rec.style.data(), B, Cin);
        CMap<T> d(rec.demod.data(), B, O);

        // Activation, bias and demodulation scale.
        std::vector<T> gu(rec.conv.size());
        RowMatrix<T> gd(B, O);
        for (int o = 0; o < O; ++o) {
            T gbias = 0;
            for (int b = 0; b < B; ++b) {
                const std::size_t off = (static_cast<std::size_t>(o) * B + b) * plane;
                const T dm = d(b, o);
                T acc = 0;
                for (std::size_t p = 0; p < plane; ++p) {
                    const T gv = gx[off + p] * (rec.output[off + p] > T(0) ? act_gain : act_gain * slope);
                    gbias += gv;
                    acc += gv * rec.conv[off + p];
                    gu[off + p] = gv * dm;
                }
                gd(b, o) = acc;
            }
            if (want_params) G[L.bias + o] += gbias;
        }

        kernels::ConvShape shape{Cin, O, B, res, res, 3, 1, 1};
        std::vector<T> xs(rec.input.size());
        for (int c = 0; c < Cin; ++c)
            for (int b = 0; b < B; ++b) {
                const T sc = s(b, c);
                const std::size_t off = (static_cast<std::size_t>(c) * B + b) * plane;
                for (std::size_t p = 0; p < plane; ++p) xs[off + p] = rec.input[off + p] * sc;
            }
        if (want_params)
            kernels::conv2d_backward_weight<T>(shape, xs, gu, std::span<T>(G + L.weight, shape.weight_size()));
        std::vector<T> gxs(rec.input.size());
        kernels::conv2d_backward_input<T>(shape, gu, std::span<const T>(P + L.weight, shape.weight_size()), gxs);

        // Through the input modulation: xs = s * x.
        RowMatrix<T> gs(B, Cin);
        std::vector<T> gin(rec.input.size());
        for (int c = 0; c < Cin; ++c)
            for (int b = 0; b < B; ++b) {
                const T sc = s(b, c);
                const std::size_t off = (static_cast<std::size_t>(c) * B + b) * plane;
                T acc = 0;
                for (std::size_t p = 0; p < plane; ++p) {
                    acc += gxs[off + p] * rec.input[off + p];
                    gin[off + p] = gxs[off + p] * sc;
                }
                gs(b, c) = acc;
            }

        // Through demodulation: d = (S)^(-1/2), S[b,o] = sum_i Q[o,i] s[b,i]^2 + eps.
        RowMatrix<T> Q(O, Cin);
        for (int o = 0; o < O; ++o)
            for (int i = 0; i < Cin; ++i) {
                const T* w = P + L.weight + (static_cast<std::size_t>(o) * Cin + i) * 9;
                T acc = 0;
                for (int k = 0; k < 9; ++k) acc += w[k] * w[k];
                Q(o, i) = acc;
            }
        RowMatrix<T> gS = (gd.array() * d.array().cube() * T(-0.5)).matrix();
        gs.array() += T(2) * s.array() * (gS * Q).array();
        if (want_params) {
            RowMatrix<T> M = gS.transpose() * s.array().square().matrix();  // [O, Cin]
            for (int o = 0; o < O; ++o)
                for (int i = 0; i < Cin; ++i) {
                    const std::size_t off = L.weight + (static_cast<std::size_t>(o) * Cin + i) * 9;
                    const T m2 = T(2) * M(o, i);
                    for (int k = 0; k < 9; ++k) G[off + k] += m2 * P[off + k];
                }
        }

        // Affine: s = gain * w A^T + bias.
        RowMatrix<T> wl(B, wd);
        for (int b = 0; b < B; ++b) {
            auto layer = tape.styles[b].layer(L.slot);
            std::copy(layer.begin(), layer.end(), wl.row(b).data());
        }
        if (want_params) {
            MMap<T>(G + L.affine_weight, Cin, wd).noalias() += affine_gain * (gs.transpose() * wl);
            for (int i = 0; i < Cin; ++i) {
                T acc = 0;
                for (int b = 0; b < B; ++b) acc += gs(b, i);
                G[L.affine_bias + i] += acc;
            }
        }
        if (grad_styles) {
            RowMatrix<T> gw = affine_gain * (gs * CMap<T>(P + L.affine_weight, Cin, wd));
            for (int b = 0; b < B; ++b) {
                auto dst = (*grad_styles)[b].layer(L.slot);
                for (int j = 0; j < wd; ++j) dst[j] = gw(b, j);
            }
        }

        if (L.upsample) {
            std::vector<T> down(gin.size() / 4);
            kernels::upsample2x_backward<T>(Cin * B, res / 2, res / 2, gin, down);
            gx = std::move(down);
        } else {
            gx = std::move(gin);
        }
    }

    if (want_params) {
        const int C0 = arch.config().const_channels;
        for (int c = 0; c < C0; ++c)
            for (int b = 0; b < B; ++b)
                for (int p = 0; p < 16; ++p)
                    G[arch.const_offset() + c * 16 + p] += gx[(static_cast<std::size_t>(c) * B + b) * 16 + p];
    }
}

template <typename T>
Image<T> synthesize(const GeneratorParams<T>& params, const StyleStack<T>& styles) {
    return synthesize_batch<T>(params, std::span<const StyleStack<T>>(&styles, 1), nullptr).front();
}

template <typename T>
Image<T> generate(const GeneratorParams<T>& params, const NoiseVector<T>& z) {
    return synthesize(params, broadcast_w(map_z_to_w(params, z), params.arch->num_styles()));
}

#define MAKEITSO_INSTANTIATE_GENERATOR(T)                                                                      \
    template struct GeneratorParams<T>;                                                                        \
    template GeneratorParams<T> init_toy_generator<T>(std::uint64_t, const ArchConfig&);                       \
    template double param_distance<T>(const GeneratorParams<T>&, const GeneratorParams<T>&);                   \
    template StyleVector<T> map_z_to_w<T>(const GeneratorParams<T>&, const NoiseVector<T>&);                   \
    template StyleStack<T> broadcast_w<T>(const StyleVector<T>&, int);                                         \
    template Image<T> synthesize<T>(const GeneratorParams<T>&, const StyleStack<T>&);                          \
    template Image<T> generate<T>(const GeneratorParams<T>&, const NoiseVector<T>&);                           \
    template StyleVector<T> map_forward<T>(const GeneratorParams<T>&, const NoiseVector<T>&, MappingTape<T>*); \
    template NoiseVector<T> map_backward<T>(const GeneratorParams<T>&, const MappingTape<T>&,                  \
                                            std::span<const T>, std::span<T>);                                 \
    template std::vector<Image<T>> synthesize_batch<T>(const GeneratorParams<T>&,                              \
                                                       std::span<const StyleStack<T>>, SynthesisTape<T>*);     \
    template void synthesize_backward<T>(const GeneratorParams<T>&, const SynthesisTape<T>&,                   \
                                         std::span<const Image<T>>, std::span<T>,                              \
                                         std::vector<StyleStack<T>>*);

MAKEITSO_INSTANTIATE_GENERATOR(float)
MAKEITSO_INSTANTIATE_GENERATOR(double)

}  // namespace makeitso

#include "makeitso/kernels.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cstring>
#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace makeitso::kernels {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapConst = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using MapMut = Eigen::Map<RowMatrix<T>>;

template <typename T>
std::vector<T>& workspace(std::size_t n) {
    thread_local std::vector<T> buffer;
    if (buffer.size() < n) buffer.resize(n);
    return buffer;
}

// Output columns [lo, hi) whose input column ox*stride - pad + k is in range.
struct ValidRange {
    int lo, hi;
};

ValidRange valid_range(int k, int stride, int pad, int in, int out) {
    int lo = 0;
    while (lo < out && lo * stride - pad + k < 0) ++lo;
    int hi = out;
    while (hi > lo && (hi - 1) * stride - pad + k >= in) --hi;
    return {lo, hi};
}

// Stride 1 with an output as wide as the input: the valid rows of one tap
// form a single shifted run of the plane. Entries of that run that wrap
// around a row edge land exactly on the out-of-range columns.
struct Run {
    std::ptrdiff_t offset;  // plane index of the run's first element
    std::ptrdiff_t begin, end;  // clipped to the plane
};

Run contiguous_run(const ConvShape& s, int ky, int kx, const ValidRange& yr) {
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(yr.lo - s.pad + ky) * s.width - s.pad + kx;
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(yr.hi - yr.lo) * s.width;
    const std::ptrdiff_t plane = static_cast<std::ptrdiff_t>(s.height) * s.width;
    return {off, std::max<std::ptrdiff_t>(0, -off), std::min(n, plane - off)};
}

template <typename T>
void zero_edge_columns(T* out, int rows_lo, int rows_hi, int wo, const ValidRange& xr) {
    for (int oy = rows_lo; oy < rows_hi; ++oy) {
        T* row = out + static_cast<std::ptrdiff_t>(oy) * wo;
        for (int ox = 0; ox < xr.lo; ++ox) row[ox] = T(0);
        for (int ox = xr.hi; ox < wo; ++ox) row[ox] = T(0);
    }
}

// col is [C*K*K, B*Ho*Wo].
template <typename T>
void im2col(const ConvShape& s, const T* input, T* col) {
    const int ho = s.out_height(), wo = s.out_width();
    const int kk = s.kernel * s.kernel;
    const int rows = s.in_channels * kk;
    const std::ptrdiff_t ncols = static_cast<std::ptrdiff_t>(s.batch) * ho * wo;
    const bool contiguous = s.stride == 1 && wo == s.width;
#pragma omp parallel for schedule(static) if (rows * ncols > 32768)
    for (int r = 0; r < rows; ++r) {
        const int c = r / kk, ky = (r % kk) / s.kernel, kx = r % s.kernel;
        const ValidRange xr = valid_range(kx, s.stride, s.pad, s.width, wo);
        const ValidRange yr = valid_range(ky, s.stride, s.pad, s.height, ho);
        T* dst = col + r * ncols;
        for (int b = 0; b < s.batch; ++b) {
            const T* plane = input + (static_cast<std::size_t>(c) * s.batch + b) * s.height * s.width;
            T* out = dst + static_cast<std::ptrdiff_t>(b) * ho * wo;
            for (int i = 0; i < yr.lo * wo; ++i) out[i] = T(0);
            for (int i = yr.hi * wo; i < ho * wo; ++i) out[i] = T(0);
            if (contiguous) {
                const Run run = contiguous_run(s, ky, kx, yr);
                T* body = out + static_cast<std::ptrdiff_t>(yr.lo) * wo;
                if (run.end > run.begin)
                    std::memcpy(body + run.begin, plane + run.offset + run.begin,
                                static_cast<std::size_t>(run.end - run.begin) * sizeof(T));
                zero_edge_columns(out, yr.lo, yr.hi, wo, xr);
                continue;
            }
            for (int oy = yr.lo; oy < yr.hi; ++oy) {
                const T* src = plane + (oy * s.stride - s.pad + ky) * s.width - s.pad + kx;
                T* row = out + oy * wo;
                for (int ox = 0; ox < xr.lo; ++ox) row[ox] = T(0);
                for (int ox = xr.hi; ox < wo; ++ox) row[ox] = T(0);
                for (int ox = xr.lo; ox < xr.hi; ++ox) row[ox] = src[ox * s.stride];
            }
        }
    }
}

// Scatter-add of col back into an input-shaped buffer. Each channel is owned
// by one thread, which walks its K*K rows in a fixed order. The contiguous
// path zeroes the out-of-range columns of col first, so col is scratch.
template <typename T>
void col2im(const ConvShape& s, T* col, T* grad_input) {
    const int ho = s.out_height(), wo = s.out_width();
    const int kk = s.kernel * s.kernel;
    const std::ptrdiff_t ncols = static_cast<std::ptrdiff_t>(s.batch) * ho * wo;
    const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
    const bool contiguous = s.stride == 1 && wo == s.width;
#pragma omp parallel for schedule(static) if (s.in_channels * kk * ncols > 32768)
    for (int c = 0; c < s.in_channels; ++c) {
        T* gin = grad_input + static_cast<std::size_t>(c) * s.batch * plane;
        std::fill(gin, gin + s.batch * plane, T(0));
        for (int k = 0; k < kk; ++k) {
            const int ky = k / s.kernel, kx = k % s.kernel;
            const ValidRange xr = valid_range(kx, s.stride, s.pad, s.width, wo);
            const ValidRange yr = valid_range(ky, s.stride, s.pad, s.height, ho);
            T* src = col + (static_cast<std::ptrdiff_t>(c) * kk + k) * ncols;
            for (int b = 0; b < s.batch; ++b) {
                T* gplane = gin + b * plane;
                if (contiguous) {
                    T* block = src + static_cast<std::ptrdiff_t>(b) * ho * wo;
                    zero_edge_columns(block, yr.lo, yr.hi, wo, xr);
                    const Run run = contiguous_run(s, ky, kx, yr);
                    const T* body = block + static_cast<std::ptrdiff_t>(yr.lo) * wo;
                    for (std::ptrdiff_t i = run.begin; i < run.end; ++i) gplane[run.offset + i] += body[i];
                    continue;
                }
                for (int oy = yr.lo; oy < yr.hi; ++oy) {
                    const T* row = src + (static_cast<std::ptrdiff_t>(b) * ho + oy) * wo;
                    T* dst = gplane + (oy * s.stride - s.pad + ky) * s.width - s.pad + kx;
                    for (int ox = xr.lo; ox < xr.hi; ++ox) dst[ox * s.stride] += row[ox];
                }
            }
        }
    }
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvShape& s, std::span<const T> input, std::span<const T> weight,
                    std::span<T> output) {
    const int rows = s.in_channels * s.kernel * s.kernel;
    const std::ptrdiff_t ncols = static_cast<std::ptrdiff_t>(s.batch) * s.out_height() * s.out_width();
    auto& col = workspace<T>(static_cast<std::size_t>(rows) * ncols);
    im2col(s, input.data(), col.data());
    MapConst<T> w(weight.data(), s.out_channels, rows);
    MapConst<T> c(col.data(), rows, ncols);
    MapMut<T> out(output.data(), s.out_channels, ncols);
    out.noalias() = w * c;
}

template <typename T>
void conv2d_backward_input(const ConvShape& s, std::span<const T> grad_output,
                           std::span<const T> weight, std::span<T> grad_input) {
    const int rows = s.in_channels * s.kernel * s.kernel;
    const std::ptrdiff_t ncols = static_cast<std::ptrdiff_t>(s.batch) * s.out_height() * s.out_width();
    auto& col = workspace<T>(static_cast<std::size_t>(rows) * ncols);
    MapConst<T> w(weight.data(), s.out_channels, rows);
    MapConst<T> g(grad_output.data(), s.out_channels, ncols);
    MapMut<T> c(col.data(), rows, ncols);
    c.noalias() = w.transpose() * g;
    col2im(s, col.data(), grad_input.data());
}

template <typename T>
void conv2d_backward_weight(const ConvShape& s, std::span<const T> input,
                            std::span<const T> grad_output, std::span<T> grad_weight) {
    const int rows = s.in_channels * s.kernel * s.kernel;
    const std::ptrdiff_t ncols = static_cast<std::ptrdiff_t>(s.batch) * s.out_height() * s.out_width();
    auto& col = workspace<T>(static_cast<std::size_t>(rows) * ncols);
    im2col(s, input.data(), col.data());
    MapConst<T> c(col.data(), rows, ncols);
    MapConst<T> g(grad_output.data(), s.out_channels, ncols);
    MapMut<T> gw(grad_weight.data(), s.out_channels, rows);
    gw.noalias() += g * c.transpose();
}

template <typename T>
void upsample2x_forward(int planes, int height, int width, std::span<const T> input,
                        std::span<T> output) {
    const int w2 = 2 * width;
#pragma omp parallel for schedule(static) if (planes * height * width > 65536)
    for (int p = 0; p < planes; ++p) {
        const T* src = input.data() + static_cast<std::size_t>(p) * height * width;
        T* dst = output.data() + static_cast<std::size_t>(p) * 4 * height * width;
        for (int y = 0; y < height; ++y) {
            T* row = dst + 2 * y * w2;
            for (int x = 0; x < width; ++x) row[2 * x] = row[2 * x + 1] = src[y * width + x];
            std::copy(row, row + w2, row + w2);
        }
    }
}

template <typename T>
void upsample2x_backward(int planes, int height, int width, std::span<const T> grad_output,
                         std::span<T> grad_input) {
    const int w2 = 2 * width;
#pragma omp parallel for schedule(static) if (planes * height * width > 65536)
    for (int p = 0; p < planes; ++p) {
        const T* src = grad_output.data() + static_cast<std::size_t>(p) * 4 * height * width;
        T* dst = grad_input.data() + static_cast<std::size_t>(p) * height * width;
        for (int y = 0; y < height; ++y) {
            const T* r0 = src + 2 * y * w2;
            const T* r1 = r0 + w2;
            for (int x = 0; x < width; ++x)
                dst[y * width + x] = (r0[2 * x] + r0[2 * x + 1]) + (r1[2 * x] + r1[2 * x + 1]);
        }
    }
}

namespace reference {

template <typename T>
void conv2d_forward(const ConvShape& s, std::span<const T> input, std::span<const T> weight,
                    std::span<T> output) {
    const int ho = s.out_height(), wo = s.out_width();
    for (int o = 0; o < s.out_channels; ++o)
        for (int b = 0; b < s.batch; ++b)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    T acc = 0;
                    for (int c = 0; c < s.in_channels; ++c)
                        for (int ky = 0; ky < s.kernel; ++ky)
                            for (int kx = 0; kx < s.kernel; ++kx) {
                                const int iy = oy * s.stride - s.pad + ky;
                                const int ix = ox * s.stride - s.pad + kx;
                                if (iy < 0 || iy >= s.height || ix < 0 || ix >= s.width) continue;
                                acc += weight[((o * s.in_channels + c) * s.kernel + ky) * s.kernel + kx] *
                                       input[((c * s.batch + b) * s.height + iy) * s.width + ix];
                            }
                    output[((o * s.batch + b) * ho + oy) * wo + ox] = acc;
                }
}

template <typename T>
void conv2d_backward_input(const ConvShape& s, std::span<const T> grad_output,
                           std::span<const T> weight, std::span<T> grad_input) {
    const int ho = s.out_height(), wo = s.out_width();
    std::fill(grad_input.begin(), grad_input.end(), T(0));
    for (int o = 0; o < s.out_channels; ++o)
        for (int b = 0; b < s.batch; ++b)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    const T g = grad_output[((o * s.batch + b) * ho + oy) * wo + ox];
                    for (int c = 0; c < s.in_channels; ++c)
                        for (int ky = 0; ky < s.kernel; ++ky)
                            for (int kx = 0; kx < s.kernel; ++kx) {
                                const int iy = oy * s.stride - s.pad + ky;
                                const int ix = ox * s.stride - s.pad + kx;
                                if (iy < 0 || iy >= s.height || ix < 0 || ix >= s.width) continue;
                                grad_input[((c * s.batch + b) * s.height + iy) * s.width + ix] +=
                                    g * weight[((o * s.in_channels + c) * s.kernel + ky) * s.kernel + kx];
                            }
                }
}

template <typename T>
void conv2d_backward_weight(const ConvShape& s, std::span<const T> input,
                            std::span<const T> grad_output, std::span<T> grad_weight) {
    const int ho = s.out_height(), wo = s.out_width();
    for (int o = 0; o < s.out_channels; ++o)
        for (int b = 0; b < s.batch; ++b)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    const T g = grad_output[((o * s.batch + b) * ho + oy) * wo + ox];
                    for (int c = 0; c < s.in_channels; ++c)
                        for (int ky = 0; ky < s.kernel; ++ky)
                            for (int kx = 0; kx < s.kernel; ++kx) {
                                const int iy = oy * s.stride - s.pad + ky;
                                const int ix = ox * s.stride - s.pad + kx;
                                if (iy < 0 || iy >= s.height || ix < 0 || ix >= s.width) continue;
                                grad_weight[((o * s.in_channels + c) * s.kernel + ky) * s.kernel + kx] +=
                                    g * input[((c * s.batch + b) * s.height + iy) * s.width + ix];
                            }
                }
}

template <typename T>
void upsample2x_forward(int planes, int height, int width, std::span<const T> input,
                        std::span<T> output) {
    for (int p = 0; p < planes; ++p)
        for (int y = 0; y < 2 * height; ++y)
            for (int x = 0; x < 2 * width; ++x)
                output[(static_cast<std::size_t>(p) * 2 * height + y) * 2 * width + x] =
                    input[(static_cast<std::size_t>(p) * height + y / 2) * width + x / 2];
}

template <typename T>
void upsample2x_backward(int planes, int height, int width, std::span<const T> grad_output,
                         std::span<T> grad_input) {
    std::fill(grad_input.begin(), grad_input.end(), T(0));
    for (int p = 0; p < planes; ++p)
        for (int y = 0; y < 2 * height; ++y)
            for (int x = 0; x < 2 * width; ++x)
                grad_input[(static_cast<std::size_t>(p) * height + y / 2) * width + x / 2] +=
                    grad_output[(static_cast<std::size_t>(p) * 2 * height + y) * 2 * width + x];
}

}  // namespace reference

int max_threads() {
#if defined(_OPENMP)
    return omp_get_max_threads();
#else
    return 1;
#endif
}

#define MAKEITSO_INSTANTIATE_KERNELS(NS, T)                                                         \
    template void NS::conv2d_forward<T>(const ConvShape&, std::span<const T>, std::span<const T>, \
                                        std::span<T>);                                            \
    template void NS::conv2d_backward_input<T>(const ConvShape&, std::span<const T>,              \
                                               std::span<const T>, std::span<T>);                 \
    template void NS::conv2d_backward_weight<T>(const ConvShape&, std::span<const T>,             \
                                                std::span<const T>, std::span<T>);                \
    template void NS::upsample2x_forward<T>(int, int, int, std::span<const T>, std::span<T>);     \
    template void NS::upsample2x_backward<T>(int, int, int, std::span<const T>, std::span<T>);

MAKEITSO_INSTANTIATE_KERNELS(kernels, float)
MAKEITSO_INSTANTIATE_KERNELS(kernels, double)
MAKEITSO_INSTANTIATE_KERNELS(kernels::reference, float)
MAKEITSO_INSTANTIATE_KERNELS(kernels::reference, double)

}  // namespace makeitso::kernels

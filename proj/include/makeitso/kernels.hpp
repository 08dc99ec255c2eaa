#pragma once

// Dense kernels shared by the generator and the feature extractor.
//
// Activations use a channel-major "CBHW" layout: element (c, b, y, x) lives at
// ((c * batch + b) * height + y) * width + x. Keeping the batch inside the
// channel plane lets a whole batch go through one GEMM per convolution.
//
// Every kernel has two implementations: the default one (im2col + GEMM,
// OpenMP over independent rows) and a serial direct-loop version in
// `kernels::reference` used as a test oracle and benchmark baseline. Neither
// performs a cross-thread reduction, so results do not depend on the thread
// count.

#include <cstddef>
#include <span>

namespace makeitso::kernels {

struct ConvShape {
    int in_channels = 0;
    int out_channels = 0;
    int batch = 1;
    int height = 0;
    int width = 0;
    int kernel = 3;
    int stride = 1;
    int pad = 1;

    int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
    int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
    std::size_t input_size() const {
        return static_cast<std::size_t>(in_channels) * batch * height * width;
    }
    std::size_t output_size() const {
        return static_cast<std::size_t>(out_channels) * batch * out_height() * out_width();
    }
    std::size_t weight_size() const {
        return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
    }
};

// output = conv(input, weight); weight is [out, in, k, k]. No bias.
template <typename T>
void conv2d_forward(const ConvShape& s, std::span<const T> input, std::span<const T> weight,
                    std::span<T> output);

// grad_input = d(sum(grad_output * output)) / d(input). Overwrites grad_input.
template <typename T>
void conv2d_backward_input(const ConvShape& s, std::span<const T> grad_output,
                           std::span<const T> weight, std::span<T> grad_input);

// grad_weight += d(sum(grad_output * output)) / d(weight).
template <typename T>
void conv2d_backward_weight(const ConvShape& s, std::span<const T> input,
                            std::span<const T> grad_output, std::span<T> grad_weight);

// Nearest-neighbour 2x upsampling over `planes` planes of h x w.
template <typename T>
void upsample2x_forward(int planes, int height, int width, std::span<const T> input,
                        std::span<T> output);

// Overwrites grad_input with the 2x2 block sums of grad_output.
template <typename T>
void upsample2x_backward(int planes, int height, int width, std::span<const T> grad_output,
                         std::span<T> grad_input);

namespace reference {

template <typename T>
void conv2d_forward(const ConvShape& s, std::span<const T> input, std::span<const T> weight,
                    std::span<T> output);
template <typename T>
void conv2d_backward_input(const ConvShape& s, std::span<const T> grad_output,
                           std::span<const T> weight, std::span<T> grad_input);
template <typename T>
void conv2d_backward_weight(const ConvShape& s, std::span<const T> input,
                            std::span<const T> grad_output, std::span<T> grad_weight);
template <typename T>
void upsample2x_forward(int planes, int height, int width, std::span<const T> input,
                        std::span<T> output);
template <typename T>
void upsample2x_backward(int planes, int height, int width, std::span<const T> grad_output,
                         std::span<T> grad_input);

}  // namespace reference

// Number of OpenMP threads kernels will use (1 without OpenMP).
int max_threads();

}  // namespace makeitso::kernels

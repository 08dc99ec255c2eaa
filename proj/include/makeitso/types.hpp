#pragma once

#include "makeitso/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace makeitso {

// A point in the generator's standard-normal input space.
template <typename T>
struct NoiseVector {
    std::vector<T> values;

    std::size_t size() const { return values.size(); }
    bool operator==(const NoiseVector&) const = default;
};

// A single style code produced by the mapping network.
template <typename T>
struct StyleVector {
    std::vector<T> values;

    std::size_t size() const { return values.size(); }
    bool operator==(const StyleVector&) const = default;
};

// One style vector per style slot, stored row-major as [layers, w_dim].
template <typename T>
class StyleStack {
public:
    StyleStack() = default;
    StyleStack(int layers, int w_dim) : layers_(layers), w_dim_(w_dim), data_(static_cast<std::size_t>(layers) * w_dim) {
        require(layers >= 0 && w_dim >= 0, "StyleStack: negative dimension");
    }

    int layers() const { return layers_; }
    int w_dim() const { return w_dim_; }

    std::span<T> layer(int i) { return {data_.data() + static_cast<std::size_t>(i) * w_dim_, static_cast<std::size_t>(w_dim_)}; }
    std::span<const T> layer(int i) const {
        return {data_.data() + static_cast<std::size_t>(i) * w_dim_, static_cast<std::size_t>(w_dim_)};
    }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    bool same_shape(const StyleStack& other) const { return layers_ == other.layers_ && w_dim_ == other.w_dim_; }
    bool operator==(const StyleStack&) const = default;

private:
    int layers_ = 0;
    int w_dim_ = 0;
    std::vector<T> data_;
};

// RGB image, planar (3, height, width), nominal range [-1, 1].
template <typename T>
struct Image {
    int height = 0;
    int width = 0;
    std::vector<T> pixels;

    Image() = default;
    Image(int h, int w, T fill = T(0)) : height(h), width(w), pixels(static_cast<std::size_t>(3) * h * w, fill) {}

    std::size_t size() const { return pixels.size(); }
    T& at(int c, int y, int x) { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    T at(int c, int y, int x) const { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    bool same_shape(const Image& other) const { return height == other.height && width == other.width; }
    bool operator==(const Image&) const = default;
};

template <typename T>
bool all_finite(std::span<const T> values) {
    return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

template <typename To, typename From>
std::vector<To> convert(const std::vector<From>& in) {
    return std::vector<To>(in.begin(), in.end());
}

template <typename To, typename From>
Image<To> convert(const Image<From>& in) {
    Image<To> out;
    out.height = in.height;
    out.width = in.width;
    out.pixels = convert<To>(in.pixels);
    return out;
}

template <typename To, typename From>
NoiseVector<To> convert(const NoiseVector<From>& in) {
    return {convert<To>(in.values)};
}

}  // namespace makeitso

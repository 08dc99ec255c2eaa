#pragma once

// PNG/JPEG ingestion and PNG output. Pixels map [-1, 1] <-> [0, 255].

#include "makeitso/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace makeitso {

// 8-bit interleaved RGB.
struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;  // height * width * 3
};

// Detects PNG or JPEG from the leading bytes. Throws FormatError otherwise.
RgbImage decode_image(const std::string& bytes);
RgbImage read_image(const std::filesystem::path& path);

// Scales the shorter side to `resolution` with bilinear filtering, then
// center-crops the longer side. Result is in [-1, 1].
Image<float> to_generator_input(const RgbImage& image, int resolution);

// to_generator_input followed by an 8-bit round trip, so the result is exactly
// what target.png stores. Idempotent: ingesting the stored PNG gives the same image.
Image<float> ingest_target(const RgbImage& image, int resolution);

// v in [-1, 1] -> round-half-even((v + 1) / 2 * 255), clamped to [0, 255].
std::uint8_t quantize_pixel(double v);
RgbImage quantize(const Image<float>& image);

std::string encode_png(const Image<float>& image);
void write_png(const Image<float>& image, const std::filesystem::path& path);

}  // namespace makeitso

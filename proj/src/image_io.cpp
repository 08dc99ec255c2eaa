#include "makeitso/image_io.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <sstream>

namespace makeitso {

namespace {

struct ReadCursor {
    const std::string* bytes;
    std::size_t pos;
};

void png_read_cb(png_structp png, png_bytep out, png_size_t n) {
    auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cur->pos + n > cur->bytes->size()) png_error(png, "truncated PNG data");
    std::memcpy(out, cur->bytes->data() + cur->pos, n);
    cur->pos += n;
}

void png_write_cb(png_structp png, png_bytep in, png_size_t n) {
    static_cast<std::string*>(png_get_io_ptr(png))->append(reinterpret_cast<const char*>(in), n);
}

void png_flush_cb(png_structp) {}

// Returns an empty string on success, else libpng's message. Kept free of C++
// objects with destructors because libpng unwinds with longjmp.
const char* decode_png_raw(const std::string& bytes, RgbImage& out, std::vector<png_bytep>& rows) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) return "cannot create PNG reader";
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        return "cannot create PNG info";
    }
    ReadCursor cur{&bytes, 0};
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        return "corrupt PNG data";
    }
    png_set_read_fn(png, &cur, png_read_cb);
    png_read_info(png, info);
    const png_uint_32 w = png_get_image_width(png, info), h = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info), depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    if (w == 0 || h == 0 || w > 16384 || h > 16384) {
        png_destroy_read_struct(&png, &info, nullptr);
        return "PNG dimensions out of range";
    }
    out.width = static_cast<int>(w);
    out.height = static_cast<int>(h);
    out.data.resize(static_cast<std::size_t>(w) * h * 3);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = out.data.data() + static_cast<std::size_t>(y) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return nullptr;
}

RgbImage decode_png(const std::string& bytes) {
    RgbImage out;
    std::vector<png_bytep> rows;
    if (const char* err = decode_png_raw(bytes, out, rows)) throw FormatError(err, "image");
    return out;
}

struct JpegError {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    std::longjmp(reinterpret_cast<JpegError*>(cinfo->err)->jump, 1);
}

const char* decode_jpeg_raw(const std::string& bytes, RgbImage& out) {
    jpeg_decompress_struct cinfo;
    JpegError err;
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        return "corrupt JPEG data";
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    if (cinfo.output_components != 3) {
        jpeg_destroy_decompress(&cinfo);
        return "unsupported JPEG colour layout";
    }
    out.width = static_cast<int>(cinfo.output_width);
    out.height = static_cast<int>(cinfo.output_height);
    out.data.resize(static_cast<std::size_t>(out.width) * out.height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = out.data.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return nullptr;
}

RgbImage decode_jpeg(const std::string& bytes) {
    RgbImage out;
    if (const char* err = decode_jpeg_raw(bytes, out)) throw FormatError(err, "image");
    return out;
}

}  // namespace

RgbImage decode_image(const std::string& bytes) {
    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), png_sig, 8) == 0) return decode_png(bytes);
    if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xff &&
        static_cast<unsigned char>(bytes[1]) == 0xd8 && static_cast<unsigned char>(bytes[2]) == 0xff)
        return decode_jpeg(bytes);
    throw FormatError("unsupported image type (expected PNG or JPEG)", "image");
}

RgbImage read_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open image " + path.string(), "image");
    std::stringstream ss;
    ss << in.rdbuf();
    return decode_image(ss.str());
}

Image<float> to_generator_input(const RgbImage& image, int resolution) {
    require(resolution > 0, "to_generator_input: resolution must be positive");
    require(image.height > 0 && image.width > 0 &&
                image.data.size() == static_cast<std::size_t>(image.height) * image.width * 3,
            "to_generator_input: malformed image");
    const double scale = static_cast<double>(resolution) / std::min(image.height, image.width);
    const double scaled_h = image.height * scale, scaled_w = image.width * scale;
    const double off_y = (scaled_h - resolution) / 2, off_x = (scaled_w - resolution) / 2;
    Image<float> out(resolution, resolution);
    for (int y = 0; y < resolution; ++y) {
        // Pixel centers in source coordinates.
        const double sy = std::clamp((y + off_y + 0.5) / scale - 0.5, 0.0, image.height - 1.0);
        const int y0 = static_cast<int>(sy), y1 = std::min(y0 + 1, image.height - 1);
        const double fy = sy - y0;
        for (int x = 0; x < resolution; ++x) {
            const double sx = std::clamp((x + off_x + 0.5) / scale - 0.5, 0.0, image.width - 1.0);
            const int x0 = static_cast<int>(sx), x1 = std::min(x0 + 1, image.width - 1);
            const double fx = sx - x0;
            for (int c = 0; c < 3; ++c) {
                auto px = [&](int yy, int xx) {
                    return static_cast<double>(image.data[(static_cast<std::size_t>(yy) * image.width + xx) * 3 + c]);
                };
                const double v = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x1)) +
                                 fy * ((1 - fx) * px(y1, x0) + fx * px(y1, x1));
                out.at(c, y, x) = static_cast<float>(v / 127.5 - 1.0);
            }
        }
    }
    return out;
}

Image<float> ingest_target(const RgbImage& image, int resolution) {
    return to_generator_input(quantize(to_generator_input(image, resolution)), resolution);
}

std::uint8_t quantize_pixel(double v) {
    if (!(v > -1.0)) return 0;  // also catches NaN
    if (v >= 1.0) return 255;
    // nearbyint uses the current rounding mode, round-to-nearest-even by default.
    return static_cast<std::uint8_t>(std::nearbyint((v + 1.0) / 2.0 * 255.0));
}

RgbImage quantize(const Image<float>& image) {
    RgbImage out{image.height, image.width, std::vector<std::uint8_t>(image.size())};
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c)
                out.data[(static_cast<std::size_t>(y) * image.width + x) * 3 + c] = quantize_pixel(image.at(c, y, x));
    return out;
}

namespace {

const char* encode_png_raw(const RgbImage& rgb, std::string& out, std::vector<png_bytep>& rows) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) return "cannot create PNG writer";
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        return "cannot create PNG info";
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return "PNG encoding failed";
    }
    png_set_write_fn(png, &out, png_write_cb, png_flush_cb);
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, rgb.width, rgb.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    rows.resize(rgb.height);
    for (int y = 0; y < rgb.height; ++y)
        rows[y] = const_cast<png_bytep>(rgb.data.data() + static_cast<std::size_t>(y) * rgb.width * 3);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return nullptr;
}

}  // namespace

std::string encode_png(const Image<float>& image) {
    const RgbImage rgb = quantize(image);
    std::string out;
    std::vector<png_bytep> rows;
    if (const char* err = encode_png_raw(rgb, out, rows)) throw std::runtime_error(err);
    return out;
}

void write_png(const Image<float>& image, const std::filesystem::path& path) {
    const std::string bytes = encode_png(image);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace makeitso

#include "makeitso/checkpoint.hpp"
#include "makeitso/image_io.hpp"
#include "makeitso/results.hpp"

#include <doctest.h>

#include <cstdio>
#include <jpeglib.h>

using namespace makeitso;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / "makeitso_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Baseline JPEG of an RGB buffer, written with libjpeg directly.
std::string encode_jpeg(const RgbImage& img, int quality) {
    jpeg_compress_struct cinfo;
    jpeg_error_mgr jerr;
    cinfo.err = jpeg_std_error(&jerr);
    jpeg_create_compress(&cinfo);
    unsigned char* buf = nullptr;
    unsigned long size = 0;
    jpeg_mem_dest(&cinfo, &buf, &size);
    cinfo.image_width = static_cast<JDIMENSION>(img.width);
    cinfo.image_height = static_cast<JDIMENSION>(img.height);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = const_cast<JSAMPROW>(img.data.data() + cinfo.next_scanline * img.width * 3);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    std::string out(reinterpret_cast<char*>(buf), size);
    jpeg_destroy_compress(&cinfo);
    std::free(buf);
    return out;
}

RgbImage gradient_rgb(int h, int w) {
    RgbImage img{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w * 3)};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            auto* p = &img.data[(static_cast<std::size_t>(y) * w + x) * 3];
            p[0] = static_cast<std::uint8_t>(255 * x / (w - 1));
            p[1] = static_cast<std::uint8_t>(255 * y / (h - 1));
            p[2] = 128;
        }
    return img;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
    auto p = init_toy_generator<float>(3);
    p.values[5] = -0.0f;
    p.values[6] = 1e-40f;  // subnormal
    const auto bytes = encode_checkpoint(p);
    const auto q = decode_checkpoint(bytes, p.hash());
    CHECK(q.hash() == p.hash());
    CHECK(std::memcmp(q.values.data(), p.values.data(), p.values.size() * sizeof(float)) == 0);
    CHECK(param_distance(p, q) == 0.0);
    const auto path = temp_dir("ckpt") / "g.misockpt";
    save_checkpoint(p, path);
    CHECK(load_checkpoint(path).values == p.values);
    CHECK(encode_checkpoint(load_checkpoint(path)) == bytes);
    // Micro architecture round-trips its config too.
    const auto m = init_toy_generator<float>(1, ArchConfig::micro());
    CHECK(decode_checkpoint(encode_checkpoint(m)).arch->config() == ArchConfig::micro());
}

TEST_CASE("checkpoint corruption is reported") {
    const auto p = init_toy_generator<float>(1, ArchConfig::micro());
    const std::string good = encode_checkpoint(p);
    auto field_of = [](const std::string& bytes) -> std::string {
        try {
            decode_checkpoint(bytes);
        } catch (const FormatError& e) {
            return e.field();
        }
        return "<no error>";
    };
    std::string bad = good;
    bad[0] = 'X';
    CHECK(field_of(bad) == "magic");
    CHECK(field_of(good.substr(0, 5)) == "magic");
    bad = good;
    bad[8] = 9;
    CHECK(field_of(bad) == "format_version");
    CHECK(field_of(good.substr(0, good.size() - 4)) == "payload");
    CHECK(field_of(good + "xxxx") == "payload");
    bad = good;
    bad[20] = '#';
    CHECK(field_of(bad) == "header");
    // A NaN in the payload.
    bad = good;
    const float nan = std::nanf("");
    std::memcpy(bad.data() + bad.size() - 4, &nan, 4);
    CHECK(field_of(bad) == "payload");
    // Hash mismatch with the expected architecture.
    CHECK_THROWS_AS(decode_checkpoint(good, init_toy_generator<float>(1).hash()), IncompatibleArchitecture);
    CHECK_THROWS_AS(load_checkpoint(temp_dir("ckpt2") / "missing.misockpt"), FormatError);
}

TEST_CASE("pixel quantization") {
    CHECK(quantize_pixel(-1.0) == 0);
    CHECK(quantize_pixel(1.0) == 255);
    CHECK(quantize_pixel(0.0) == 128);  // 127.5 rounds half to even
    CHECK(quantize_pixel(-5.0) == 0);
    CHECK(quantize_pixel(5.0) == 255);
    CHECK(quantize_pixel(2.0 / 255.0 - 1.0) == 1);
}

TEST_CASE("png round trip and target ingestion") {
    Image<float> img(32, 32);
    Rng rng(1);
    for (auto& v : img.pixels) v = static_cast<float>(std::clamp(0.5 * rng.normal(), -1.0, 1.0));
    const std::string png = encode_png(img);
    const auto rgb = decode_image(png);
    CHECK(rgb.height == 32);
    CHECK(rgb.width == 32);
    CHECK(rgb.data == quantize(img).data);
    // Same bytes for the same image.
    CHECK(encode_png(img) == png);

    const auto t = ingest_target(rgb, 32);
    const auto again = ingest_target(decode_image(encode_png(t)), 32);
    CHECK(again == t);
}

TEST_CASE("resize and crop") {
    const auto rgb = gradient_rgb(48, 64);
    const auto img = to_generator_input(rgb, 32);
    CHECK(img.height == 32);
    CHECK(img.width == 32);
    for (float v : img.pixels) REQUIRE((v >= -1.f && v <= 1.f));
    // Red increases left to right, green top to bottom; blue is constant.
    CHECK(img.at(0, 16, 31) > img.at(0, 16, 0));
    CHECK(img.at(1, 31, 16) > img.at(1, 0, 16));
    CHECK(img.at(2, 3, 3) == doctest::Approx(128.0 / 255.0 * 2 - 1).epsilon(1e-6));
    // Same size in: pixels map straight through.
    const auto same = to_generator_input(gradient_rgb(32, 32), 32);
    CHECK(same.at(0, 0, 0) == -1.f);
    CHECK(same.at(0, 0, 31) == 1.f);
}

TEST_CASE("jpeg decoding") {
    const auto rgb = gradient_rgb(40, 40);
    const std::string jpg = encode_jpeg(rgb, 95);
    const auto dec = decode_image(jpg);
    CHECK(dec.height == 40);
    CHECK(dec.width == 40);
    int worst = 0;
    for (std::size_t i = 0; i < dec.data.size(); ++i) worst = std::max(worst, std::abs(dec.data[i] - rgb.data[i]));
    CHECK(worst <= 12);
    const auto path = temp_dir("jpeg") / "in.jpg";
    write_file(path, jpg);
    CHECK(read_image(path).data == dec.data);

    CHECK_THROWS_AS(decode_image("GIF89a......"), FormatError);
    CHECK_THROWS_AS(decode_image(""), FormatError);
    CHECK_THROWS_AS(decode_image(jpg.substr(0, 40)), FormatError);
    CHECK_THROWS_AS(decode_image(encode_png(Image<float>(4, 4)).substr(0, 30)), FormatError);
}

TEST_CASE("config json") {
    InversionConfig c = InversionConfig::preset(1000);
    c.seed = 17;
    c.lr_z = 0.1 + 0.2;  // not exactly representable as a short decimal
    c.latent_space = LatentSpace::WPlus;
    c.anchor_terms = false;
    const auto back = config_from_json(nlohmann::json::parse(config_to_json(c).dump()));
    CHECK(config_to_json(back) == config_to_json(c));
    CHECK(back.lr_z == c.lr_z);

    const auto o = config_with_overrides(nlohmann::json{{"iters", 1000}, {"seed", 3}});
    CHECK(o.total_iters == 1000);
    CHECK(o.ema_interval == 200);
    CHECK(o.seed == 3u);
    CHECK(config_with_overrides(nullptr).total_iters == 500);
    auto field_of = [](const nlohmann::json& j) -> std::string {
        try {
            config_with_overrides(j);
        } catch (const FormatError& e) {
            return e.field();
        }
        return "<no error>";
    };
    CHECK(field_of({{"bogus", 1}}) == "config.bogus");
    CHECK(field_of({{"lr_z", "fast"}}) == "config.lr_z");
    CHECK(field_of({{"replay_n", 2.5}}) == "config.replay_n");
    CHECK(field_of({{"latent_space", "Q"}}) == "config.latent_space");
    CHECK(field_of(nlohmann::json::array()) == "config");
    CHECK_THROWS_AS(config_with_overrides({{"replay_n", 0}}), ConfigError);
}

TEST_CASE("latent json is lossless") {
    Latent<float> l{LatentSpace::Z, {0.1f, -1e-30f, 3.4028235e38f, 1.0f / 3.0f, -0.0f}};
    const auto back = latent_from_json(latent_to_json(l));
    CHECK(back.space == LatentSpace::Z);
    REQUIRE(back.values.size() == l.values.size());
    CHECK(std::memcmp(back.values.data(), l.values.data(), l.values.size() * sizeof(float)) == 0);
    CHECK_THROWS_AS(latent_from_json("{\"space\": \"Z\"}"), FormatError);
    CHECK_THROWS_AS(latent_from_json("{\"values\": [\"a\"]}"), FormatError);
}

TEST_CASE("trace csv") {
    const std::vector<TraceRow> t{{0, 0.5, 0.25, 0.125}, {1, 0.1, 0.2, 0.3}};
    const auto csv = trace_to_csv(t);
    CHECK(csv.starts_with("iter,recon,perceptual,replay\n0,0.5,0.25,0.125\n1,"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("result directory round trip") {
    const auto g = init_toy_generator<float>(1, ArchConfig::micro());
    const auto ex = FeatureExtractor<float>::random_pyramid(8);
    const auto bank = make_random_bank<float>(*g.arch, 2, 1, 1.0);
    const auto target = generate(g, NoiseVector<float>{Rng(3).normal_vector<float>(8)});
    auto cfg = InversionConfig::preset(10);
    const auto r = make_it_so<float>(g, target, bank, cfg, ex);
    const auto dir = temp_dir("result");
    const auto manifest = save_result(r, target, ex, {"toy:1", "", "synthetic", 8, 8}, dir);
    CHECK(manifest["ema_updates"] == 4);
    CHECK(manifest["ema_iterations"] == nlohmann::json::array({2, 4, 6, 8}));
    CHECK(manifest["arch_hash"] == g.hash());
    for (const char* f : {"z.json", "tuned.misockpt", "anchored.misockpt", "loss.csv", "target.png",
                          "reconstruction.png", "manifest.json"})
        CHECK(fs::exists(dir / f));
    const auto stored = load_result(dir, true);
    CHECK(stored.latent == r.latent);
    CHECK(stored.tuned.values == r.tuned.values);
    REQUIRE(stored.anchored.has_value());
    CHECK(stored.anchored->values == r.anchored_final.values);
    CHECK(stored.manifest == manifest);
    CHECK(read_file(dir / "reconstruction.png") == encode_png(reconstruct(r)));
    CHECK_THROWS_AS(load_result(dir / "nope"), FormatError);
    fs::remove(dir / "z.json");
    CHECK_THROWS_AS(load_result(dir), FormatError);
}

#include "makeitso/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace makeitso {

namespace {

constexpr char kMagic[8] = {'M', 'I', 'S', 'O', 'C', 'K', 'P', 'T'};

template <typename U>
void put(std::string& out, U v) {
    char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out.append(buf, sizeof(U));
}

template <typename U>
U get(const std::string& in, std::size_t pos) {
    U v;
    std::memcpy(&v, in.data() + pos, sizeof(U));
    return v;
}

}  // namespace

std::string encode_checkpoint(const GeneratorParams<float>& params) {
    const auto& arch = *params.arch;
    require(params.values.size() == arch.size(), "checkpoint: parameter vector does not match its architecture");
    nlohmann::json arrays = nlohmann::json::array();
    for (const auto& e : arch.entries())
        arrays.push_back({{"name", e.name}, {"shape", e.shape}, {"byte_offset", e.offset * 4}, {"count", e.count}});
    const nlohmann::json header = {{"format_version", kCheckpointVersion},
                                   {"arch_hash", arch.hash()},
                                   {"config", nlohmann::json::parse(arch.config().to_json())},
                                   {"arrays", std::move(arrays)},
                                   {"payload_bytes", arch.size() * 4}};
    const std::string h = header.dump();
    std::string out(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, h.size());
    out += h;
    const std::size_t start = out.size();
    out.resize(start + params.values.size() * 4);
    std::memcpy(out.data() + start, params.values.data(), params.values.size() * 4);
    return out;
}

GeneratorParams<float> decode_checkpoint(const std::string& bytes, const std::string& expected_hash) {
    constexpr std::size_t prefix = sizeof kMagic + 4 + 8;
    if (bytes.size() < prefix || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
        throw FormatError("not a .misockpt file (bad magic)", "magic");
    const auto version = get<std::uint32_t>(bytes, 8);
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version), "format_version");
    const auto hlen = get<std::uint64_t>(bytes, 12);
    if (hlen > bytes.size() - prefix) throw FormatError("header length exceeds file size", "header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(prefix, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("header is not valid JSON: ") + e.what(), "header");
    }
    if (!header.is_object() || !header.contains("config") || !header["config"].is_object())
        throw FormatError("missing architecture config", "config");
    if (!header.contains("arch_hash") || !header["arch_hash"].is_string())
        throw FormatError("missing architecture hash", "arch_hash");

    ArchConfig config = ArchConfig::from_json(header["config"].dump());
    std::shared_ptr<const Architecture> arch;
    try {
        arch = Architecture::build(config);
    } catch (const ConfigError& e) {
        throw FormatError(std::string("invalid architecture config: ") + e.what(), "config");
    }
    const std::string stored = header["arch_hash"].get<std::string>();
    if (stored != arch->hash())
        throw FormatError("stored hash " + stored + " does not match its config (" + arch->hash() + ")", "arch_hash");
    if (!expected_hash.empty()) require_same_architecture(expected_hash, stored);

    const auto& arrays = header.value("arrays", nlohmann::json::array());
    if (!arrays.is_array() || arrays.size() != arch->entries().size())
        throw FormatError("array manifest does not match the architecture", "arrays");
    for (std::size_t k = 0; k < arrays.size(); ++k) {
        const auto& e = arch->entries()[k];
        const auto& a = arrays[k];
        const std::string path = "arrays[" + std::to_string(k) + "]";
        if (!a.is_object() || a.value("name", std::string()) != e.name) throw FormatError("unexpected array", path);
        if (a.value("byte_offset", std::size_t(0)) != e.offset * 4 || a.value("count", std::size_t(0)) != e.count)
            throw FormatError("array layout differs from the architecture", path);
    }

    const std::size_t payload = arch->size() * 4;
    if (bytes.size() - prefix - hlen != payload)
        throw FormatError("payload is " + std::to_string(bytes.size() - prefix - hlen) + " bytes, expected " +
                              std::to_string(payload),
                          "payload");
    GeneratorParams<float> params{arch, std::vector<float>(arch->size())};
    std::memcpy(params.values.data(), bytes.data() + prefix + hlen, payload);
    if (!all_finite<float>(params.values)) throw FormatError("payload contains non-finite values", "payload");
    return params;
}

void save_checkpoint(const GeneratorParams<float>& params, const std::filesystem::path& path) {
    const std::string bytes = encode_checkpoint(params);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

GeneratorParams<float> load_checkpoint(const std::filesystem::path& path, const std::string& expected_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return decode_checkpoint(ss.str(), expected_hash);
}

}  // namespace makeitso

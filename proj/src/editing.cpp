#include "makeitso/editing.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace makeitso {

using nlohmann::json;

template <typename T>
void EditBank<T>::add(EditDirection<T> direction) {
    require(!direction.name.empty(), "edit direction needs a name");
    require(find(direction.name) == nullptr, "duplicate edit direction '" + direction.name + "'");
    if (!directions_.empty())
        require(direction.offsets.same_shape(directions_.front().offsets),
                "edit direction '" + direction.name + "' has a different shape from the rest of the bank");
    require(all_finite<T>(direction.offsets.data()), "edit direction '" + direction.name + "' is not finite");
    directions_.push_back(std::move(direction));
}

template <typename T>
const EditDirection<T>* EditBank<T>::find(std::string_view name) const {
    for (const auto& d : directions_)
        if (d.name == name) return &d;
    return nullptr;
}

template <typename T>
std::vector<std::string> EditBank<T>::names() const {
    std::vector<std::string> out;
    for (const auto& d : directions_) out.push_back(d.name);
    return out;
}

template <typename T>
StyleStack<T> apply_edit(const StyleStack<T>& styles, const EditDirection<T>& dir, double strength) {
    require(styles.same_shape(dir.offsets), "apply_edit: direction '" + dir.name + "' shape does not match styles");
    StyleStack<T> out = styles;
    const T a = static_cast<T>(strength);
    auto& v = out.data();
    const auto& o = dir.offsets.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += a * o[i];
    return out;
}

template <typename T>
Image<T> edited_generate(const GeneratorParams<T>& params, const NoiseVector<T>& z, const EditDirection<T>& dir,
                         double strength) {
    const auto styles = broadcast_w(map_z_to_w(params, z), params.arch->num_styles());
    return synthesize(params, apply_edit(styles, dir, strength));
}

template <typename T>
EditDirection<T> random_direction(Rng& rng, int layers, int w_dim, double norm, std::string name) {
    require(norm > 0 && std::isfinite(norm), "random_direction: norm must be positive");
    EditDirection<T> d;
    d.name = std::move(name);
    d.offsets = StyleStack<T>(layers, w_dim);
    for (int l = 0; l < layers; ++l) {
        std::vector<double> g(w_dim);
        double sq = 0;
        for (auto& v : g) {
            v = rng.normal();
            sq += v * v;
        }
        const double scale = norm / std::sqrt(sq);
        auto row = d.offsets.layer(l);
        for (int j = 0; j < w_dim; ++j) row[j] = static_cast<T>(g[j] * scale);
    }
    return d;
}

template <typename T>
EditBank<T> make_random_bank(const Architecture& arch, int count, std::uint64_t seed, double norm) {
    EditBank<T> bank(arch.hash());
    Rng rng(seed);
    for (int k = 0; k < count; ++k)
        bank.add(random_direction<T>(rng, arch.num_styles(), arch.w_dim(), norm, "dir" + std::to_string(k)));
    return bank;
}

template <typename T>
std::string bank_to_json(const EditBank<T>& bank) {
    json dirs = json::array();
    for (const auto& d : bank.directions()) {
        json offsets = json::array();
        for (int l = 0; l < d.offsets.layers(); ++l) {
            json row = json::array();
            for (T v : d.offsets.layer(l)) row.push_back(static_cast<double>(v));
            offsets.push_back(std::move(row));
        }
        json jd = {{"name", d.name},
                   {"default_strength", d.default_strength},
                   {"strength_range", {d.strength_range[0], d.strength_range[1]}},
                   {"offsets", std::move(offsets)}};
        if (d.channel_mask) jd["channel_mask"] = *d.channel_mask;
        dirs.push_back(std::move(jd));
    }
    json j = {{"schema_version", 1}, {"arch_hash", bank.arch_hash()}, {"directions", std::move(dirs)}};
    return j.dump(1);
}

template <typename T>
EditBank<T> bank_from_json(const std::string& text, const Architecture* arch) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("not valid JSON: ") + e.what(), "$");
    }
    if (!j.is_object()) throw FormatError("expected an object", "$");
    if (!j.contains("arch_hash") || !j["arch_hash"].is_string()) throw FormatError("missing string", "arch_hash");
    if (!j.contains("directions") || !j["directions"].is_array()) throw FormatError("missing array", "directions");
    const std::string hash = j["arch_hash"].get<std::string>();
    if (arch && hash != arch->hash())
        throw FormatError("bank was built for architecture " + hash + ", generator is " + arch->hash(), "arch_hash");

    EditBank<T> bank(hash);
    int layers = arch ? arch->num_styles() : -1;
    int w_dim = arch ? arch->w_dim() : -1;
    const auto& dirs = j["directions"];
    for (std::size_t k = 0; k < dirs.size(); ++k) {
        const std::string path = "directions[" + std::to_string(k) + "]";
        const auto& jd = dirs[k];
        if (!jd.is_object()) throw FormatError("expected an object", path);
        if (!jd.contains("name") || !jd["name"].is_string()) throw FormatError("missing string", path + ".name");
        EditDirection<T> d;
        d.name = jd["name"].get<std::string>();
        if (bank.find(d.name)) throw FormatError("duplicate direction name '" + d.name + "'", path + ".name");
        if (jd.contains("default_strength")) {
            if (!jd["default_strength"].is_number()) throw FormatError("expected number", path + ".default_strength");
            d.default_strength = jd["default_strength"].get<double>();
        }
        if (jd.contains("strength_range")) {
            const auto& r = jd["strength_range"];
            if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number() ||
                r[0].get<double>() > r[1].get<double>())
                throw FormatError("expected [lo, hi] with lo <= hi", path + ".strength_range");
            d.strength_range = {r[0].get<double>(), r[1].get<double>()};
        }
        if (!jd.contains("offsets") || !jd["offsets"].is_array()) throw FormatError("missing array", path + ".offsets");
        const auto& off = jd["offsets"];
        if (layers < 0) layers = static_cast<int>(off.size());
        if (static_cast<int>(off.size()) != layers)
            throw FormatError("expected " + std::to_string(layers) + " layers, got " + std::to_string(off.size()),
                              path + ".offsets");
        for (int l = 0; l < layers; ++l) {
            const std::string lpath = path + ".offsets[" + std::to_string(l) + "]";
            const auto& row = off[l];
            if (!row.is_array()) throw FormatError("expected array", lpath);
            if (w_dim < 0) w_dim = static_cast<int>(row.size());
            if (static_cast<int>(row.size()) != w_dim)
                throw FormatError("expected " + std::to_string(w_dim) + " values, got " + std::to_string(row.size()),
                                  lpath);
        }
        d.offsets = StyleStack<T>(layers, w_dim);
        for (int l = 0; l < layers; ++l) {
            auto dst = d.offsets.layer(l);
            for (int i = 0; i < w_dim; ++i) {
                const auto& v = off[l][i];
                if (!v.is_number()) throw FormatError("expected number", path + ".offsets[" + std::to_string(l) + "][" +
                                                                             std::to_string(i) + "]");
                dst[i] = static_cast<T>(v.get<double>());
                if (!std::isfinite(dst[i])) throw FormatError("non-finite value", path + ".offsets");
            }
        }
        if (jd.contains("channel_mask") && !jd["channel_mask"].is_null()) {
            try {
                d.channel_mask = jd["channel_mask"].get<std::vector<std::vector<int>>>();
            } catch (const json::exception&) {
                throw FormatError("expected array of integer arrays", path + ".channel_mask");
            }
        }
        bank.add(std::move(d));
    }
    return bank;
}

template <typename T>
void save_bank(const EditBank<T>& bank, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write edit bank to " + path.string());
    out << bank_to_json(bank) << '\n';
    if (!out) throw std::runtime_error("failed writing edit bank to " + path.string());
}

template <typename T>
EditBank<T> load_bank(const std::filesystem::path& path, const Architecture* arch) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open edit bank " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return bank_from_json<T>(ss.str(), arch);
}

#define MAKEITSO_INSTANTIATE_EDITING(T)                                                                            \
    template class EditBank<T>;                                                                                    \
    template StyleStack<T> apply_edit<T>(const StyleStack<T>&, const EditDirection<T>&, double);                   \
    template Image<T> edited_generate<T>(const GeneratorParams<T>&, const NoiseVector<T>&, const EditDirection<T>&, \
                                         double);                                                                  \
    template EditDirection<T> random_direction<T>(Rng&, int, int, double, std::string);                            \
    template EditBank<T> make_random_bank<T>(const Architecture&, int, std::uint64_t, double);                     \
    template void save_bank<T>(const EditBank<T>&, const std::filesystem::path&);                                  \
    template EditBank<T> load_bank<T>(const std::filesystem::path&, const Architecture*);                          \
    template std::string bank_to_json<T>(const EditBank<T>&);                                                      \
    template EditBank<T> bank_from_json<T>(const std::string&, const Architecture*);

MAKEITSO_INSTANTIATE_EDITING(float)
MAKEITSO_INSTANTIATE_EDITING(double)

}  // namespace makeitso

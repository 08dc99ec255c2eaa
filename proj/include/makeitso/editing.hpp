#pragma once

// Additive W+ edit directions and the banks that hold them.

#include "makeitso/generator.hpp"
#include "makeitso/rng.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace makeitso {

template <typename T>
struct EditDirection {
    std::string name;
    StyleStack<T> offsets;
    double default_strength = 1.0;
    std::array<double, 2> strength_range{-3.0, 3.0};
    // Reserved for per-channel edits; carried through save/load untouched.
    std::optional<std::vector<std::vector<int>>> channel_mask;

    bool operator==(const EditDirection&) const = default;
};

template <typename T>
class EditBank {
public:
    EditBank() = default;
    explicit EditBank(std::string arch_hash) : arch_hash_(std::move(arch_hash)) {}

    const std::string& arch_hash() const { return arch_hash_; }
    const std::vector<EditDirection<T>>& directions() const { return directions_; }
    bool empty() const { return directions_.empty(); }
    std::size_t size() const { return directions_.size(); }

    // Throws ContractViolation on a duplicate name or a shape that differs from
    // the directions already in the bank.
    void add(EditDirection<T> direction);
    const EditDirection<T>* find(std::string_view name) const;
    std::vector<std::string> names() const;

    bool operator==(const EditBank&) const = default;

private:
    std::string arch_hash_;
    std::vector<EditDirection<T>> directions_;
};

// styles + strength * dir.offsets, layer by layer.
template <typename T>
StyleStack<T> apply_edit(const StyleStack<T>& styles, const EditDirection<T>& dir, double strength);

template <typename T>
Image<T> edited_generate(const GeneratorParams<T>& params, const NoiseVector<T>& z, const EditDirection<T>& dir,
                         double strength);

// Gaussian offsets rescaled so every layer has L2 norm `norm`.
template <typename T>
EditDirection<T> random_direction(Rng& rng, int layers, int w_dim, double norm, std::string name = "random");

// Bank of `count` random directions for a generator, used by the toy benchmark.
template <typename T>
EditBank<T> make_random_bank(const Architecture& arch, int count, std::uint64_t seed, double norm);

// JSON file: {arch_hash, directions: [{name, default_strength, strength_range,
// offsets: [[w_dim floats] x L], channel_mask?}]}.
template <typename T>
void save_bank(const EditBank<T>& bank, const std::filesystem::path& path);

// When `arch` is given, every direction must match its style count and width
// and the stored hash must match. Throws FormatError naming the bad field.
template <typename T>
EditBank<T> load_bank(const std::filesystem::path& path, const Architecture* arch = nullptr);

template <typename T>
std::string bank_to_json(const EditBank<T>& bank);
template <typename T>
EditBank<T> bank_from_json(const std::string& text, const Architecture* arch = nullptr);

}  // namespace makeitso

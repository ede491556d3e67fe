#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stvsa/matrix.hpp"

namespace stvsa::data {

inline constexpr int label_stable = 0;
inline constexpr int label_unstable = 1;
inline constexpr int label_unlabeled = -1;

struct Sample {
    std::int64_t id = 0;
    std::int64_t scenario_id = 0;
    std::string split;       // "train" or "test"
    int label = label_unlabeled;
    std::string provenance;  // scenario descriptor or resampler name
    bool synthetic = false;
    std::vector<double> features;
};

/// Flat labeled dataset. Every sample carries feature_dim features; the CSV
/// form is `id,scenario_id,split,label,provenance,synthetic,f0..f{D-1}` with
/// floats written in shortest round-trip form.
struct Dataset {
    std::size_t feature_dim = 0;
    std::vector<Sample> samples;
};

void save_csv(const Dataset& d, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path);

/// Indices of samples with the given label; split filter off when empty.
std::vector<std::size_t> indices_of(const Dataset& d, int label,
                                    std::string_view split = {});
std::size_t count_label(const Dataset& d, int label, std::string_view split = {});

/// Feature rows gathered into a matrix, one row per index.
Matrix feature_rows(const Dataset& d, std::span<const std::size_t> idx);

std::int64_t next_id(const Dataset& d);

/// FNV-1a 64-bit over bytes; the file variant streams the file contents.
std::uint64_t fnv1a(std::string_view bytes);
std::uint64_t fnv1a_file(const std::filesystem::path& path);
std::string hash_hex(std::uint64_t h);

}  // namespace stvsa::data

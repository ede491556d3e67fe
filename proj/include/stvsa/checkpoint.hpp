#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stvsa/nn.hpp"
#include "stvsa/tensor.hpp"

namespace stvsa::io {

/// Versioned parameter snapshot. Doubles survive the JSON round trip
/// bit-exactly (shortest-round-trip formatting), so save/load/save is stable.
struct Checkpoint {
    std::string kind;
    nlohmann::json meta;
    std::vector<std::pair<std::string, ad::Tensor>> params;  // order preserved
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void save_staat(const std::filesystem::path& path, const nn::StaaTModel& m);
nn::StaaTModel load_staat(const std::filesystem::path& path);

}  // namespace stvsa::io

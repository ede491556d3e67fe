#include "stvsa/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "stvsa/errors.hpp"

namespace stvsa::data {

namespace {

// shortest round-trip decimal form so rereading restores the exact bits
std::string format_double(double x) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    if (ec != std::errc{}) throw NumericFault("dataset: float formatting failed");
    return {buf, end};
}

double parse_double(std::string_view s, std::size_t line_no) {
    double x = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ConfigError("dataset: bad float '" + std::string(s) + "' on line " +
                          std::to_string(line_no));
    return x;
}

std::int64_t parse_int(std::string_view s, std::size_t line_no) {
    std::int64_t x = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ConfigError("dataset: bad integer '" + std::string(s) +
                          "' on line " + std::to_string(line_no));
    return x;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

}  // namespace

void save_csv(const Dataset& d, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ConfigError("dataset: cannot open " + path.string() + " for writing");
    out << "id,scenario_id,split,label,provenance,synthetic";
    for (std::size_t k = 0; k < d.feature_dim; ++k) out << ",f" << k;
    out << '\n';
    for (const auto& s : d.samples) {
        if (s.features.size() != d.feature_dim)
            throw ShapeError("dataset: sample " + std::to_string(s.id) + " has " +
                             std::to_string(s.features.size()) + " features, dataset dim is " +
                             std::to_string(d.feature_dim));
        if (s.split.find(',') != std::string::npos ||
            s.provenance.find(',') != std::string::npos)
            throw ConfigError("dataset: commas are not allowed in split/provenance");
        out << s.id << ',' << s.scenario_id << ',' << s.split << ',' << s.label
            << ',' << s.provenance << ',' << (s.synthetic ? 1 : 0);
        for (double f : s.features) out << ',' << format_double(f);
        out << '\n';
    }
    if (!out) throw ConfigError("dataset: write to " + path.string() + " failed");
}

Dataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("dataset: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line))
        throw ConfigError("dataset: " + path.string() + " is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    auto header = split_fields(line);
    constexpr std::size_t meta_fields = 6;
    if (header.size() < meta_fields + 1 || header[0] != "id" ||
        header[1] != "scenario_id" || header[2] != "split" ||
        header[3] != "label" || header[4] != "provenance" ||
        header[5] != "synthetic")
        throw ConfigError("dataset: unexpected header in " + path.string());

    Dataset d;
    d.feature_dim = header.size() - meta_fields;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = split_fields(line);
        if (f.size() != meta_fields + d.feature_dim)
            throw ConfigError("dataset: line " + std::to_string(line_no) + " has " +
                              std::to_string(f.size()) + " fields, expected " +
                              std::to_string(meta_fields + d.feature_dim));
        Sample s;
        s.id = parse_int(f[0], line_no);
        s.scenario_id = parse_int(f[1], line_no);
        s.split = std::string(f[2]);
        s.label = static_cast<int>(parse_int(f[3], line_no));
        s.provenance = std::string(f[4]);
        s.synthetic = parse_int(f[5], line_no) != 0;
        s.features.reserve(d.feature_dim);
        for (std::size_t k = 0; k < d.feature_dim; ++k)
            s.features.push_back(parse_double(f[meta_fields + k], line_no));
        d.samples.push_back(std::move(s));
    }
    return d;
}

std::vector<std::size_t> indices_of(const Dataset& d, int label,
                                    std::string_view split) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
        const auto& s = d.samples[i];
        if (s.label == label && (split.empty() || s.split == split))
            idx.push_back(i);
    }
    return idx;
}

std::size_t count_label(const Dataset& d, int label, std::string_view split) {
    std::size_t n = 0;
    for (const auto& s : d.samples)
        n += s.label == label && (split.empty() || s.split == split);
    return n;
}

Matrix feature_rows(const Dataset& d, std::span<const std::size_t> idx) {
    Matrix m(idx.size(), d.feature_dim);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto& s = d.samples[idx[r]];
        if (s.features.size() != d.feature_dim)
            throw ShapeError("dataset: inconsistent feature dim at sample " +
                             std::to_string(s.id));
        std::copy(s.features.begin(), s.features.end(), m.v.begin() + r * m.cols);
    }
    return m;
}

std::int64_t next_id(const Dataset& d) {
    std::int64_t top = -1;
    for (const auto& s : d.samples) top = std::max(top, s.id);
    return top + 1;
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("dataset: cannot open " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const auto n = static_cast<std::size_t>(in.gcount());
        for (std::size_t i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace stvsa::data

#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "hpylori/error.hpp"

namespace hpylori::detail {

/// Shortest round-trip decimal form; "inf" for +infinity.
inline std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

template <typename V>
V parse(const std::string& text, const std::string& what) {
    V v{};
    const std::string t = trim(text);
    if constexpr (std::is_floating_point_v<V>) {
        if (t == "inf") return std::numeric_limits<V>::infinity();
    }
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || p != t.data() + t.size()) {
        fail(ErrorKind::MalformedFile, "cannot parse " + what + " from '" + text + "'");
    }
    return v;
}

/// Rows of a headered CSV file; checks the header matches exactly.
inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                                      const std::vector<std::string>& header) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::MissingInput, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::MalformedFile, path.string() + " is empty");
    auto got = split(trim(line));
    if (got != header) fail(ErrorKind::MalformedFile, path.string() + " has an unexpected header");
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty()) continue;
        auto cells = split(t);
        if (cells.size() != header.size()) {
            fail(ErrorKind::MalformedFile, path.string() + ": row has " + std::to_string(cells.size()) +
                                               " cells, expected " + std::to_string(header.size()));
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    return out;
}

}  // namespace hpylori::detail

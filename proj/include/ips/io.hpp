#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ips/error.hpp"

namespace ips::io {

// Shortest round-trip-safe text for a double; identical bytes on every run.
inline std::string fmt(double v) {
    char buf[40];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline std::string fmt(std::size_t v) { return std::to_string(v); }
inline std::string fmt(int v) { return std::to_string(v); }
inline std::string fmt(long long v) { return std::to_string(v); }
inline std::string fmt(bool v) { return v ? "1" : "0"; }
inline std::string fmt(const std::string& v) { return v; }
inline std::string fmt(const char* v) { return v; }

class Csv {
public:
    explicit Csv(std::initializer_list<std::string> header) : columns_(header.size()) {
        bool first = true;
        for (const auto& h : header) {
            text_ += (first ? "" : ",") + h;
            first = false;
        }
        text_ += "\n";
    }

    template <class... Ts>
    void row(const Ts&... values) {
        require(sizeof...(Ts) == columns_, "csv row has the wrong number of fields");
        bool first = true;
        ((text_ += (first ? "" : ","), text_ += fmt(values), first = false), ...);
        text_ += "\n";
    }

    // Trailing comment line pointing at the run's manifest.
    void finish(const std::string& manifest) { text_ += "# manifest: " + manifest + "\n"; }

    const std::string& str() const { return text_; }

private:
    std::size_t columns_;
    std::string text_;
};

// Writes through a temporary file in the same directory and renames it into place.
inline void atomic_write(const std::filesystem::path& path, std::string_view content) {
    const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    std::filesystem::create_directories(dir);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InvalidArgument("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw InvalidArgument("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace ips::io

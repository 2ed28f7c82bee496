#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "stepwise/errors.hpp"

namespace stepwise {

/// FNV-1a content digests: cheap, dependency-free run provenance. These are
/// integrity fingerprints for exact-rerun bookkeeping, not security hashes.
inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (const char c : data) {
        hash ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

inline std::string digest_hex(std::string_view data) {
    static const char* hex = "0123456789abcdef";
    const std::uint64_t h = fnv1a64(data);
    std::string out(16, '0');
    for (int i = 0; i < 16; ++i) {
        out[15 - i] = hex[(h >> (4 * i)) & 0xf];
    }
    return out;
}

inline std::string json_digest(const nlohmann::json& j) { return digest_hex(j.dump()); }

inline std::string file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open file for digesting: " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return digest_hex(buffer.str());
}

/// Attaches a provenance block to an artifact document: a digest of the
/// payload itself plus digests of whatever produced it.
inline nlohmann::json with_provenance(nlohmann::json payload, const std::string& config_digest,
                                      const std::map<std::string, std::string>& input_digests) {
    nlohmann::json inputs = nlohmann::json::object();
    for (const auto& [name, digest] : input_digests) inputs[name] = digest;
    payload["provenance"] = nlohmann::json{{"artifact_version", "1"},
                                           {"config_digest", config_digest},
                                           {"input_digests", std::move(inputs)},
                                           {"content_digest", json_digest(payload)}};
    return payload;
}

/// Verifies the embedded content digest (when present) and returns the
/// document without its provenance block.
inline nlohmann::json verify_and_strip_provenance(nlohmann::json doc) {
    if (!doc.contains("provenance")) return doc;
    const nlohmann::json provenance = doc["provenance"];
    doc.erase("provenance");
    if (provenance.contains("content_digest")) {
        const std::string expected = provenance["content_digest"].get<std::string>();
        const std::string actual = json_digest(doc);
        if (expected != actual) {
            throw ProtocolError("artifact content digest mismatch: expected " + expected + ", got " + actual);
        }
    }
    return doc;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open JSON file: " + path.string());
    }
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        throw ProtocolError("not valid JSON: " + path.string());
    }
    return doc;
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write JSON file: " + path.string());
    }
    out << doc.dump(2) << '\n';
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

}  // namespace stepwise

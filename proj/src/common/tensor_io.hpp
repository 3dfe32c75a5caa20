// SPDX-License-Identifier: Apache-2.0
//
// Raw little-endian tensor buffers with JSON sidecars.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace cardioreg::io {

namespace fs = std::filesystem;
using nlohmann::json;

void write_f32(const fs::path& path, const std::vector<float>& data);
void write_u8(const fs::path& path, const std::vector<std::uint8_t>& data);

/// Reads exactly `count` elements. A shorter file raises TruncatedPayload,
/// a longer one MalformedHeader, a missing one MissingInput.
std::vector<float> read_f32(const fs::path& path, std::size_t count);
std::vector<std::uint8_t> read_u8(const fs::path& path, std::size_t count);

void write_json(const fs::path& path, const json& j);
/// Parses a sidecar; a missing file is MissingInput, unparsable content is
/// MalformedHeader.
json read_json(const fs::path& path);

/// Checks `magic` and `format_version` keys of a sidecar.
void check_header(const json& j, const std::string& magic, int version, const fs::path& where);

/// Product of a JSON shape array; MalformedHeader when absent or invalid.
std::size_t shape_count(const json& j, const std::string& key, std::size_t expected_rank);

/// Git blob-style SHA-1 of a file ("blob <size>\0" + bytes), hex encoded.
std::string git_hash_file(const fs::path& path);
std::string git_hash_bytes(const std::string& bytes);
/// Hash over every regular file below a directory (sorted relative paths).
std::string git_hash_tree(const fs::path& dir);

}  // namespace cardioreg::io

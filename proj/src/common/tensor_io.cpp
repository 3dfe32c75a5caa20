// SPDX-License-Identifier: Apache-2.0
#include "common/tensor_io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "common/error.hpp"

namespace cardioreg::io {

static_assert(std::endian::native == std::endian::little, "tensor files are little-endian");

namespace {

template <class T>
void write_raw(const fs::path& path, const std::vector<T>& data) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::MissingInput, "cannot open for writing: " + path.string());
  os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(T)));
  if (!os) fail(ErrorKind::MissingInput, "write failed: " + path.string());
}

template <class T>
std::vector<T> read_raw(const fs::path& path, std::size_t count) {
  if (!fs::exists(path)) fail(ErrorKind::MissingInput, "missing tensor file: " + path.string());
  const auto bytes = fs::file_size(path);
  const auto want = count * sizeof(T);
  if (bytes < want)
    fail(ErrorKind::TruncatedPayload, "truncated payload in " + path.string() + ": " + std::to_string(bytes) +
                                          " bytes, header declares " + std::to_string(want));
  if (bytes > want)
    fail(ErrorKind::MalformedHeader, "payload of " + path.string() + " is larger than the declared shape");
  std::vector<T> out(count);
  std::ifstream is(path, std::ios::binary);
  is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(want));
  if (!is) fail(ErrorKind::TruncatedPayload, "short read: " + path.string());
  return out;
}

std::string sha1_hex(const std::string& header, std::istream* stream, const std::string* bytes) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  if (bytes) EVP_DigestUpdate(ctx, bytes->data(), bytes->size());
  if (stream) {
    std::vector<char> buf(1 << 16);
    while (*stream) {
      stream->read(buf.data(), static_cast<std::streamsize>(buf.size()));
      if (stream->gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(stream->gcount()));
    }
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned k = 0; k < len; ++k) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[k]);
  return hex.str();
}

}  // namespace

void write_f32(const fs::path& path, const std::vector<float>& data) { write_raw(path, data); }
void write_u8(const fs::path& path, const std::vector<std::uint8_t>& data) { write_raw(path, data); }
std::vector<float> read_f32(const fs::path& path, std::size_t count) { return read_raw<float>(path, count); }
std::vector<std::uint8_t> read_u8(const fs::path& path, std::size_t count) {
  return read_raw<std::uint8_t>(path, count);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorKind::MissingInput, "cannot open for writing: " + path.string());
  os << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorKind::MissingInput, "missing sidecar: " + path.string());
  std::ifstream is(path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    fail(ErrorKind::MalformedHeader, "malformed header " + path.string() + ": " + e.what());
  }
}

void check_header(const json& j, const std::string& magic, int version, const fs::path& where) {
  if (!j.is_object() || !j.contains("magic") || !j["magic"].is_string() || j["magic"].get<std::string>() != magic)
    fail(ErrorKind::MalformedHeader, "malformed header in " + where.string() + ": bad magic");
  if (!j.contains("format_version") || !j["format_version"].is_number_integer())
    fail(ErrorKind::MalformedHeader, "malformed header in " + where.string() + ": no format_version");
  const int v = j["format_version"].get<int>();
  if (v != version)
    fail(ErrorKind::VersionMismatch, "version mismatch in " + where.string() + ": format_version " +
                                         std::to_string(v) + ", supported " + std::to_string(version));
}

std::size_t shape_count(const json& j, const std::string& key, std::size_t expected_rank) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != expected_rank)
    fail(ErrorKind::MalformedHeader, "malformed header: shape '" + key + "'");
  std::size_t n = 1;
  for (const auto& d : j[key]) {
    if (!d.is_number_integer() || d.get<long>() < 0) fail(ErrorKind::MalformedHeader, "malformed header: shape");
    n *= d.get<std::size_t>();
  }
  return n;
}

std::string git_hash_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::MissingInput, "cannot hash missing file " + path.string());
  const auto size = fs::file_size(path);
  std::string header = "blob " + std::to_string(size);
  header.push_back('\0');
  return sha1_hex(header, &is, nullptr);
}

std::string git_hash_bytes(const std::string& bytes) {
  std::string header = "blob " + std::to_string(bytes.size());
  header.push_back('\0');
  return sha1_hex(header, nullptr, &bytes);
}

std::string git_hash_tree(const fs::path& dir) {
  if (fs::is_regular_file(dir)) return git_hash_file(dir);
  if (!fs::is_directory(dir)) fail(ErrorKind::MissingInput, "cannot hash missing path " + dir.string());
  std::vector<std::string> entries;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file())
      entries.push_back(fs::relative(e.path(), dir).generic_string() + " " + git_hash_file(e.path()));
  std::sort(entries.begin(), entries.end());
  std::string listing;
  for (const auto& s : entries) listing += s + "\n";
  return git_hash_bytes(listing);
}

}  // namespace cardioreg::io

// SPDX-License-Identifier: Apache-2.0
#include "common/checkpoint.hpp"

#include "common/error.hpp"

namespace cardioreg::ckpt {

namespace fs = std::filesystem;

std::vector<float> flatten_params(const torch::nn::Module& module) {
  std::vector<float> out;
  for (const auto& p : module.named_parameters()) {
    const auto t = p.value().detach().to(torch::kFloat).contiguous();
    out.insert(out.end(), t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
  }
  return out;
}

void save(const fs::path& dir, const torch::nn::Module& module, const std::string& kind, const io::json& meta) {
  fs::create_directories(dir);
  io::json params = io::json::array();
  std::size_t offset = 0;
  for (const auto& p : module.named_parameters()) {
    const auto n = static_cast<std::size_t>(p.value().numel());
    params.push_back({{"name", p.key()}, {"shape", p.value().sizes().vec()}, {"offset", offset}, {"count", n}});
    offset += n;
  }
  const auto blob = flatten_params(module);
  io::write_f32(dir / "params.f32", blob);
  io::json m = meta;
  m["magic"] = kMagic;
  m["format_version"] = kVersion;
  m["kind"] = kind;
  m["params"] = params;
  m["n_values"] = offset;
  m["params_hash"] = io::git_hash_file(dir / "params.f32");
  io::write_json(dir / "checkpoint.json", m);
}

io::json read_manifest(const fs::path& dir, const std::string& kind) {
  if (!fs::is_directory(dir)) fail(ErrorKind::MissingInput, "checkpoint not found: " + dir.string());
  io::json m = io::read_json(dir / "checkpoint.json");
  io::check_header(m, kMagic, kVersion, dir / "checkpoint.json");
  if (m.value("kind", std::string{}) != kind)
    fail(ErrorKind::MalformedHeader, "checkpoint " + dir.string() + " is not a " + kind + " checkpoint");
  return m;
}

void load_params(const fs::path& dir, torch::nn::Module& module, const io::json& manifest) {
  std::size_t total = 0;
  try {
    total = manifest.at("n_values").get<std::size_t>();
  } catch (const std::exception& e) {
    fail(ErrorKind::MalformedHeader, std::string("checkpoint manifest: ") + e.what());
  }
  const auto blob = io::read_f32(dir / "params.f32", total);
  const auto& entries = manifest.at("params");
  auto named = module.named_parameters();
  if (entries.size() != named.size())
    fail(ErrorKind::MalformedHeader, "checkpoint parameter count does not match the architecture");
  torch::NoGradGuard guard;
  std::size_t k = 0;
  for (auto& p : named) {
    const auto& e = entries.at(k++);
    if (e.at("name").get<std::string>() != p.key() ||
        e.at("shape").get<std::vector<int64_t>>() != p.value().sizes().vec())
      fail(ErrorKind::MalformedHeader, "checkpoint parameter '" + p.key() + "' does not match the architecture");
    const auto off = e.at("offset").get<std::size_t>(), n = e.at("count").get<std::size_t>();
    if (off + n > blob.size()) fail(ErrorKind::TruncatedPayload, "checkpoint parameter blob out of range");
    auto src = torch::from_blob(const_cast<float*>(blob.data() + off), p.value().sizes(), torch::kFloat);
    p.value().copy_(src.to(p.value().dtype()));
  }
}

}  // namespace cardioreg::ckpt

// SPDX-License-Identifier: Apache-2.0
#include "harness/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <type_traits>

#include "common/tensor_io.hpp"

namespace cardioreg::harness {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& what) {
  fail(ErrorKind::Config, "config " + key + " = '" + value + "': " + what);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  T out{};
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  if (s.empty() || ec != std::errc{} || p != end) bad(key, text, "not a valid number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad(key, text, "expected true or false");
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, item));
  if (out.empty()) bad(key, text, "empty list");
  return out;
}

std::string fmt(double x) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}

template <class T>
std::string fmt_num(T x) {
  if constexpr (std::is_floating_point_v<T>) return fmt(x);
  else return std::to_string(x);
}

template <class T>
std::string fmt_list(const std::vector<T>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k) s += ",";
    s += fmt_num(v[k]);
  }
  return s;
}

struct Binding {
  const char* section;
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <auto M>
Binding str(const char* sec, const char* key) {
  return {sec, key, [](ExperimentConfig& c, const std::string&, const std::string& v) { c.*M = trim(v); },
          [](const ExperimentConfig& c) { return c.*M; }};
}

template <auto M>
Binding num(const char* sec, const char* key) {
  return {sec, key,
          [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*M = parse_number<std::remove_reference_t<decltype(c.*M)>>(k, v);
          },
          [](const ExperimentConfig& c) { return fmt_num(c.*M); }};
}

template <auto M>
Binding list(const char* sec, const char* key) {
  return {sec, key,
          [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*M = parse_list<typename std::remove_reference_t<decltype(c.*M)>::value_type>(k, v);
          },
          [](const ExperimentConfig& c) { return fmt_list(c.*M); }};
}

template <auto M>
Binding boolean(const char* sec, const char* key) {
  return {sec, key, [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*M = parse_bool(k, v); },
          [](const ExperimentConfig& c) { return std::string(c.*M ? "true" : "false"); }};
}

using C = ExperimentConfig;

const std::vector<Binding>& schema() {
  static const std::vector<Binding> s = {
      str<&C::name>("experiment", "name"),
      num<&C::seed>("experiment", "seed"),
      num<&C::jobs>("experiment", "jobs"),
      str<&C::runs_dir>("experiment", "runs_dir"),
      num<&C::rows>("data", "rows"),
      num<&C::cols>("data", "cols"),
      num<&C::spacing_mm>("data", "spacing_mm"),
      num<&C::n_train>("data", "n_train"),
      num<&C::n_val>("data", "n_val"),
      num<&C::n_test>("data", "n_test"),
      num<&C::mu_kpa>("fem", "mu_kpa"),
      num<&C::kappa_ratio>("fem", "kappa_ratio"),
      num<&C::n_steps>("fem", "n_steps"),
      num<&C::elem_size_px>("fem", "elem_size_px"),
      num<&C::rel_tol>("fem", "rel_tol"),
      num<&C::max_newton_iters>("fem", "max_newton_iters"),
      num<&C::max_halvings>("fem", "max_halvings"),
      num<&C::area_rel_tol>("fem", "area_rel_tol"),
      num<&C::latent_dim>("vae", "latent_dim"),
      num<&C::beta>("vae", "beta"),
      list<&C::vae_channels>("vae", "channels"),
      num<&C::vae_epochs>("vae", "epochs"),
      num<&C::vae_batch_size>("vae", "batch_size"),
      num<&C::vae_lr>("vae", "lr"),
      num<&C::vae_frame_stride>("vae", "frame_stride"),
      num<&C::alpha>("reg", "alpha"),
      str<&C::regulariser>("reg", "regulariser"),
      num<&C::reg_lr>("reg", "lr"),
      num<&C::reg_epochs>("reg", "epochs"),
      num<&C::reg_batch_size>("reg", "batch_size"),
      list<&C::reg_channels>("reg", "channels"),
      num<&C::reg_frame_stride>("reg", "frame_stride"),
      num<&C::reg_max_steps>("reg", "max_steps"),
      list<&C::alpha_grid>("reg", "alpha_grid"),
      str<&C::eval_split>("eval", "split"),
      num<&C::eval_frame_stride>("eval", "frame_stride"),
      boolean<&C::plots>("eval", "plots"),
  };
  return s;
}

const Binding& find(const std::string& section, const std::string& key) {
  for (const auto& b : schema())
    if (section == b.section && key == b.key) return b;
  fail(ErrorKind::Config, "unknown config key '" + section + "." + key + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::Config, "config: " + what);
  };
  check(!name.empty() && name.find('/') == std::string::npos, "experiment.name must be a non-empty file name");
  check(jobs >= 1, "experiment.jobs must be >= 1");
  check(rows >= 32 && cols >= 32, "data grid must be at least 32x32");
  check(spacing_mm > 0, "data.spacing_mm must be > 0");
  check(n_train >= 0 && n_val >= 0 && n_test >= 0, "split sizes must be >= 0");
  check(total_cases() >= 1, "data: at least one case is required");
  check(mu_kpa > 0, "fem.mu_kpa must be > 0");
  check(kappa_ratio >= 100, "fem.kappa_ratio must be >= 100");
  check(n_steps >= 2, "fem.n_steps must be >= 2");
  simulation().validate();
  vae_model().validate();
  check(vae_epochs >= 1 && vae_batch_size >= 1 && vae_lr > 0 && vae_frame_stride >= 1, "invalid [vae] schedule");
  regnet::reg_kind_from_string(regulariser);
  reg_model().validate();
  reg_training().validate();
  check(!alpha_grid.empty(), "reg.alpha_grid must not be empty");
  for (double a : alpha_grid) check(a >= 0, "reg.alpha_grid values must be >= 0");
  check(eval_split == "test" || eval_split == "val" || eval_split == "train", "eval.split must be train, val or test");
  check(eval_frame_stride >= 1, "eval.frame_stride must be >= 1");
}

fem::SimulationConfig ExperimentConfig::simulation() const {
  fem::SimulationConfig s;
  s.n_steps = n_steps;
  s.elem_size = elem_size_px;
  s.area_rel_tol = area_rel_tol;
  s.material = fem::MaterialModel::with_mu(mu_kpa, kappa_ratio);
  s.solver.rel_tolerance = rel_tol;
  s.solver.max_newton_iters = max_newton_iters;
  s.solver.max_halvings = max_halvings;
  return s;
}

vae::VaeConfig ExperimentConfig::vae_model() const {
  vae::VaeConfig v;
  v.latent_dim = latent_dim;
  v.beta = beta;
  v.channels = vae_channels;
  v.grid = grid();
  return v;
}

vae::VaeTrainConfig ExperimentConfig::vae_training() const {
  vae::VaeTrainConfig t;
  t.epochs = vae_epochs;
  t.batch_size = vae_batch_size;
  t.lr = vae_lr;
  t.seed = seed;
  return t;
}

regnet::RegNetConfig ExperimentConfig::reg_model() const {
  regnet::RegNetConfig r;
  r.grid = grid();
  r.channels = reg_channels;
  return r;
}

regnet::TrainConfig ExperimentConfig::reg_training() const {
  regnet::TrainConfig t;
  t.alpha = alpha;
  t.reg = regnet::reg_kind_from_string(regulariser);
  t.lr = reg_lr;
  t.epochs = reg_epochs;
  t.batch_size = reg_batch_size;
  t.seed = seed;
  t.frame_stride = reg_frame_stride;
  t.max_steps = reg_max_steps;
  return t;
}

std::string ExperimentConfig::to_ini() const {
  std::ostringstream os;
  std::string section;
  for (const auto& b : schema()) {
    if (section != b.section) {
      if (!section.empty()) os << '\n';
      section = b.section;
      os << '[' << section << "]\n";
    }
    os << b.key << " = " << b.get(*this) << '\n';
  }
  return os.str();
}

std::string ExperimentConfig::hash() const { return io::git_hash_bytes(to_ini()); }

void set_value(ExperimentConfig& cfg, const std::string& dotted_key, const std::string& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos) fail(ErrorKind::Config, "config key '" + dotted_key + "' must be section.key");
  find(dotted_key.substr(0, dot), dotted_key.substr(dot + 1)).set(cfg, dotted_key, value);
}

std::string get_value(const ExperimentConfig& cfg, const std::string& dotted_key) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos) fail(ErrorKind::Config, "config key '" + dotted_key + "' must be section.key");
  return find(dotted_key.substr(0, dot), dotted_key.substr(dot + 1)).get(cfg);
}

ExperimentConfig parse_config(const std::string& ini_text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream is(ini_text);
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorKind::Config, std::string("config parse error: ") + e.what());
  }
  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) fail(ErrorKind::Config, "config key '" + section + "' is outside any section");
    for (const auto& [key, value] : body) set_value(cfg, section + "." + key, value.data());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::Config, "config file not found: " + path.string());
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

}  // namespace cardioreg::harness

// SPDX-License-Identifier: Apache-2.0
#include "cardioreg/cardioreg.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "common/error.hpp"
#include "harness/config.hpp"
#include "harness/pipeline.hpp"
#include "phantom/phantom.hpp"
#include "regnet/regnet.hpp"
#include "vae/grad_field.hpp"
#include "vae/vae.hpp"

using namespace cardioreg;

struct cr_config {
  harness::ExperimentConfig cfg;
};
struct cr_vae {
  vae::VaeModel model;
};
struct cr_regnet {
  regnet::RegModel model;
};
struct cr_case {
  phantom::PhantomCase pc;
};

namespace {

thread_local std::string g_last_error;

cr_status status_of(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return CR_ERR_INVALID_ARGUMENT;
    case ErrorKind::Config: return CR_ERR_CONFIG;
    case ErrorKind::Topology: return CR_ERR_TOPOLOGY;
    case ErrorKind::MalformedHeader: return CR_ERR_MALFORMED_HEADER;
    case ErrorKind::TruncatedPayload: return CR_ERR_TRUNCATED_PAYLOAD;
    case ErrorKind::VersionMismatch: return CR_ERR_VERSION_MISMATCH;
    case ErrorKind::MissingInput: return CR_ERR_MISSING_INPUT;
    case ErrorKind::NonConvergence: return CR_ERR_NON_CONVERGENCE;
    case ErrorKind::NonFinite: return CR_ERR_NON_FINITE;
  }
  return CR_ERR_INTERNAL;
}

template <class F>
cr_status guard(F&& f) {
  g_last_error.clear();
  try {
    f();
    return CR_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return CR_ERR_MISSING_INPUT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return CR_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CR_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) fail(ErrorKind::InvalidArgument, std::string(what) + " must not be NULL");
}

std::string str_arg(const char* s, const char* what) {
  need(s, what);
  return s;
}

void copy_out(const std::string& s, char* buf, std::size_t len, std::size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (buf && len > 0) {
    const std::size_t n = std::min(len - 1, s.size());
    std::memcpy(buf, s.data(), n);
    buf[n] = '\0';
  }
}

const cr_config* cfg_arg(const cr_config* c) {
  need(c, "config");
  return c;
}

}  // namespace

extern "C" {

const char* cr_version(void) { return "1.0.0"; }

const char* cr_last_error(void) { return g_last_error.c_str(); }

const char* cr_status_name(cr_status s) {
  switch (s) {
    case CR_OK: return "ok";
    case CR_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case CR_ERR_CONFIG: return "config";
    case CR_ERR_TOPOLOGY: return "topology";
    case CR_ERR_MALFORMED_HEADER: return "malformed-header";
    case CR_ERR_TRUNCATED_PAYLOAD: return "truncated-payload";
    case CR_ERR_VERSION_MISMATCH: return "version-mismatch";
    case CR_ERR_MISSING_INPUT: return "missing-input";
    case CR_ERR_NON_CONVERGENCE: return "non-convergence";
    case CR_ERR_NON_FINITE: return "non-finite";
    case CR_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

int cr_exit_code(cr_status s) {
  switch (s) {
    case CR_OK: return 0;
    case CR_ERR_CONFIG:
    case CR_ERR_INVALID_ARGUMENT: return 2;
    case CR_ERR_TOPOLOGY:
    case CR_ERR_MALFORMED_HEADER:
    case CR_ERR_TRUNCATED_PAYLOAD:
    case CR_ERR_VERSION_MISMATCH:
    case CR_ERR_MISSING_INPUT: return 3;
    case CR_ERR_NON_CONVERGENCE:
    case CR_ERR_NON_FINITE: return 4;
    case CR_ERR_INTERNAL: return 1;
  }
  return 1;
}

cr_status cr_config_default(cr_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new cr_config{};
  });
}

cr_status cr_config_load(const char* path, cr_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new cr_config{harness::load_config(str_arg(path, "path"))};
  });
}

cr_status cr_config_parse(const char* ini_text, cr_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new cr_config{harness::parse_config(str_arg(ini_text, "ini_text"))};
  });
}

cr_status cr_config_clone(const cr_config* cfg, cr_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new cr_config{cfg_arg(cfg)->cfg};
  });
}

void cr_config_free(cr_config* cfg) { delete cfg; }

cr_status cr_config_set(cr_config* cfg, const char* key, const char* value) {
  return guard([&] {
    need(cfg, "config");
    harness::set_value(cfg->cfg, str_arg(key, "key"), str_arg(value, "value"));
  });
}

cr_status cr_config_get(const cr_config* cfg, const char* key, char* buf, size_t len, size_t* needed) {
  return guard([&] { copy_out(harness::get_value(cfg_arg(cfg)->cfg, str_arg(key, "key")), buf, len, needed); });
}

cr_status cr_config_validate(const cr_config* cfg) {
  return guard([&] { cfg_arg(cfg)->cfg.validate(); });
}

cr_status cr_config_to_ini(const cr_config* cfg, char* buf, size_t len, size_t* needed) {
  return guard([&] { copy_out(cfg_arg(cfg)->cfg.to_ini(), buf, len, needed); });
}

cr_status cr_config_hash(const cr_config* cfg, char* buf, size_t len, size_t* needed) {
  return guard([&] { copy_out(cfg_arg(cfg)->cfg.hash(), buf, len, needed); });
}

cr_status cr_resolve_out(const cr_config* cfg, const char* out, const char* sub, char* buf, size_t len,
                         size_t* needed) {
  return guard([&] {
    std::optional<std::filesystem::path> o;
    if (out && *out) o = out;
    copy_out(harness::resolve_out(cfg_arg(cfg)->cfg, o, str_arg(sub, "sub")).string(), buf, len, needed);
  });
}

cr_status cr_simulate(const cr_config* cfg, const char* out_dir) {
  return guard([&] { harness::cmd_simulate(cfg_arg(cfg)->cfg, str_arg(out_dir, "out_dir")); });
}

cr_status cr_train_vae(const cr_config* cfg, const char* data_dir, const char* out_dir) {
  return guard([&] {
    harness::cmd_train_vae(cfg_arg(cfg)->cfg, str_arg(data_dir, "data_dir"), str_arg(out_dir, "out_dir"));
  });
}

cr_status cr_train_reg(const cr_config* cfg, const char* data_dir, const char* vae_dir, const char* out_dir) {
  return guard([&] {
    std::optional<std::filesystem::path> v;
    if (vae_dir && *vae_dir) v = vae_dir;
    harness::cmd_train_reg(cfg_arg(cfg)->cfg, str_arg(data_dir, "data_dir"), v, str_arg(out_dir, "out_dir"));
  });
}

cr_status cr_evaluate(const cr_config* cfg, const char* data_dir, const char* source, const char* out_dir) {
  return guard([&] {
    harness::cmd_evaluate(cfg_arg(cfg)->cfg, str_arg(data_dir, "data_dir"),
                          harness::eval_source_from_string(str_arg(source, "source")), str_arg(out_dir, "out_dir"));
  });
}

cr_status cr_report(const cr_config* cfg, const char* const* eval_dirs, size_t n, const char* out_dir) {
  return guard([&] {
    if (n) need(eval_dirs, "eval_dirs");
    std::vector<std::filesystem::path> dirs;
    for (size_t k = 0; k < n; ++k) dirs.emplace_back(str_arg(eval_dirs[k], "eval_dirs[k]"));
    harness::cmd_report(cfg_arg(cfg)->cfg, dirs, str_arg(out_dir, "out_dir"));
  });
}

cr_status cr_sweep_alpha(const cr_config* cfg, const char* data_dir, const char* vae_dir, const char* out_dir) {
  return guard([&] {
    harness::cmd_sweep_alpha(cfg_arg(cfg)->cfg, str_arg(data_dir, "data_dir"), str_arg(vae_dir, "vae_dir"),
                             str_arg(out_dir, "out_dir"));
  });
}

cr_status cr_case_load(const char* case_dir, cr_case** out) {
  return guard([&] {
    need(out, "out");
    *out = new cr_case{phantom::load_case(str_arg(case_dir, "case_dir"))};
  });
}

void cr_case_free(cr_case* c) { delete c; }

cr_status cr_case_shape(const cr_case* c, int* n_frames, int* rows, int* cols) {
  return guard([&] {
    need(c, "case");
    if (n_frames) *n_frames = c->pc.n_frames();
    if (rows) *rows = c->pc.grid().rows;
    if (cols) *cols = c->pc.grid().cols;
  });
}

namespace {
void check_frame(const cr_case* c, int t) {
  need(c, "case");
  require(t >= 0 && t < c->pc.n_frames(), "frame index out of range");
}
}  // namespace

cr_status cr_case_frame(const cr_case* c, int t, double* image) {
  return guard([&] {
    check_frame(c, t);
    need(image, "image");
    const auto& v = c->pc.frames[t].storage();
    std::copy(v.begin(), v.end(), image);
  });
}

cr_status cr_case_mask(const cr_case* c, int t, uint8_t* labels) {
  return guard([&] {
    check_frame(c, t);
    need(labels, "labels");
    const auto& v = c->pc.masks[t].labels().storage();
    std::copy(v.begin(), v.end(), labels);
  });
}

cr_status cr_case_gt_field(const cr_case* c, int t, double* field) {
  return guard([&] {
    check_frame(c, t);
    need(field, "field");
    const auto& f = c->pc.gt_fields[t];
    const auto n = f.u.storage().size();
    std::copy(f.u.storage().begin(), f.u.storage().end(), field);
    std::copy(f.v.storage().begin(), f.v.storage().end(), field + n);
  });
}

cr_status cr_vae_load(const char* dir, cr_vae** out) {
  return guard([&] {
    need(out, "out");
    *out = new cr_vae{vae::load_vae(str_arg(dir, "dir"))};
  });
}

void cr_vae_free(cr_vae* v) { delete v; }

cr_status cr_vae_shape(const cr_vae* v, int* rows, int* cols, int* latent_dim) {
  return guard([&] {
    need(v, "vae");
    const auto& c = v->model.config();
    if (rows) *rows = c.grid.rows;
    if (cols) *cols = c.grid.cols;
    if (latent_dim) *latent_dim = c.latent_dim;
  });
}

namespace {
Mask mask_from(const uint8_t* labels, Grid g) {
  Array2D<std::uint8_t> a(g);
  std::copy(labels, labels + g.size(), a.storage().begin());
  return Mask(std::move(a));
}
}  // namespace

cr_status cr_vae_score(cr_vae* v, const double* grad, int n, const uint8_t* mask, double* scores) {
  return guard([&] {
    need(v, "vae");
    need(grad, "grad");
    need(scores, "scores");
    require(n >= 0, "n must be >= 0");
    const Grid g = v->model.config().grid;
    std::optional<Mask> m;
    if (mask) m = mask_from(mask, g);
    const std::size_t plane = static_cast<std::size_t>(g.size());
    for (int b = 0; b < n; ++b) {
      GradientField gf(g);
      for (int c = 0; c < GradientField::kChannels; ++c) {
        const double* src = grad + (static_cast<std::size_t>(b) * GradientField::kChannels + c) * plane;
        std::copy(src, src + plane, gf.channel[c].storage().begin());
      }
      scores[b] = vae::score(v->model, gf, m ? &*m : nullptr);
    }
  });
}

cr_status cr_vae_score_field(cr_vae* v, const double* field, const uint8_t* mask, double* score) {
  return guard([&] {
    need(v, "vae");
    need(field, "field");
    need(score, "score");
    const Grid g = v->model.config().grid;
    DisplacementField phi(g);
    const std::size_t plane = static_cast<std::size_t>(g.size());
    std::copy(field, field + plane, phi.u.storage().begin());
    std::copy(field + plane, field + 2 * plane, phi.v.storage().begin());
    std::optional<Mask> m;
    if (mask) m = mask_from(mask, g);
    *score = vae::score(v->model, vae::grad_field(phi), m ? &*m : nullptr);
  });
}

cr_status cr_regnet_load(const char* dir, cr_regnet** out) {
  return guard([&] {
    need(out, "out");
    *out = new cr_regnet{regnet::load_regnet(str_arg(dir, "dir"))};
  });
}

void cr_regnet_free(cr_regnet* r) { delete r; }

cr_status cr_regnet_shape(const cr_regnet* r, int* rows, int* cols) {
  return guard([&] {
    need(r, "regnet");
    if (rows) *rows = r->model.config().grid.rows;
    if (cols) *cols = r->model.config().grid.cols;
  });
}

cr_status cr_regnet_predict(cr_regnet* r, const double* source, const double* target, int n, double* phi) {
  return guard([&] {
    need(r, "regnet");
    need(source, "source");
    need(target, "target");
    need(phi, "phi");
    require(n >= 1, "n must be >= 1");
    const Grid g = r->model.config().grid;
    const auto opts = torch::TensorOptions().dtype(torch::kDouble);
    const auto s = torch::from_blob(const_cast<double*>(source), {n, 1, g.rows, g.cols}, opts).to(torch::kFloat);
    const auto t = torch::from_blob(const_cast<double*>(target), {n, 1, g.rows, g.cols}, opts).to(torch::kFloat);
    const auto out = regnet::predict(r->model, s, t).to(torch::kDouble).contiguous();
    std::memcpy(phi, out.data_ptr<double>(), sizeof(double) * static_cast<std::size_t>(out.numel()));
  });
}

}  // extern "C"

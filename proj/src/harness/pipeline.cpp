// SPDX-License-Identifier: Apache-2.0
#include "harness/pipeline.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "common/rng.hpp"
#include "common/tensor_io.hpp"
#include "fem/simulate.hpp"
#include "harness/plot.hpp"
#include "metrics/metrics.hpp"
#include "regnet/regnet.hpp"
#include "regnet/warp.hpp"
#include "vae/grad_field.hpp"
#include "vae/vae.hpp"

namespace cardioreg::harness {

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Output directory assembled next to its final location and renamed into
// place by commit(); removed on destruction otherwise.
class StagedDir {
 public:
  explicit StagedDir(fs::path final_path) : final_(std::move(final_path)) {
    if (final_.filename().empty()) final_ = final_.parent_path();
    const fs::path parent = final_.has_parent_path() ? final_.parent_path() : fs::path(".");
    fs::create_directories(parent);
    tmp_ = parent / ("." + final_.filename().string() + ".partial-" + std::to_string(::getpid()));
    fs::remove_all(tmp_);
    fs::create_directories(tmp_);
  }
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;
  ~StagedDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(tmp_, ec);
    }
  }
  const fs::path& path() const noexcept { return tmp_; }
  void commit() {
    if (fs::exists(final_)) fs::remove_all(final_);
    fs::rename(tmp_, final_);
    committed_ = true;
  }

 private:
  fs::path final_, tmp_;
  bool committed_ = false;
};

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::trunc | std::ios::binary);
  if (!os) fail(ErrorKind::MissingInput, "cannot write " + p.string());
  os << s;
}

io::json output_hashes(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(fs::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  io::json out = io::json::object();
  for (const auto& f : files) out[f.generic_string()] = io::git_hash_file(dir / f);
  return out;
}

void write_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg,
                    const io::json& inputs, const io::json& metrics, const std::string& started) {
  write_text(dir / "config.ini", cfg.to_ini());
  io::json m = {{"command", command},
                {"config_hash", cfg.hash()},
                {"seed", cfg.seed},
                {"inputs", inputs},
                {"metrics", metrics},
                {"started_utc", started},
                {"finished_utc", utc_now()}};
  m["outputs"] = output_hashes(dir);
  io::write_json(dir / "manifest.json", m);
}

io::json input_entry(const fs::path& p) {
  return {{"path", p.string()}, {"hash", fs::is_directory(p) ? io::git_hash_tree(p) : io::git_hash_file(p)}};
}

[[noreturn]] void rethrow_with_prefix(const std::string& prefix) {
  try {
    throw;
  } catch (const NonConvergenceError& e) {
    throw NonConvergenceError(prefix + e.what(), e.last_residual());
  } catch (const Error& e) {
    throw Error(e.kind(), prefix + e.what());
  }
}

std::string fixed(double x, int prec = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, x == 0.0 ? 0.0 : x);
  return buf;
}

std::vector<int> eval_frames(int n_frames, int stride) {
  std::vector<int> f{0};
  for (int t : regnet::pair_frames(n_frames, stride)) f.push_back(t);
  return f;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double mean_epe(const DisplacementField& a, const DisplacementField& b, const Mask& m) {
  double s = 0;
  long n = 0;
  for (int i = 0; i < m.grid().rows; ++i)
    for (int j = 0; j < m.grid().cols; ++j)
      if (m.myocardium(i, j)) {
        s += std::hypot(a.u(i, j) - b.u(i, j), a.v(i, j) - b.v(i, j));
        ++n;
      }
  return n ? s / n : 0.0;
}

// ---- training / evaluation bodies writing into an existing directory ----

io::json train_reg_into(const ExperimentConfig& cfg, const Dataset& ds, vae::VaeModel* vae, const std::string& vae_hash,
                        const fs::path& dir) {
  const auto tc = cfg.reg_training();
  const auto train_cases = load_cases(ds, ds.splits.train, cfg.jobs);
  if (train_cases.empty()) fail(ErrorKind::InvalidArgument, "train-reg: the training split is empty");
  const auto train = regnet::make_pairs(train_cases, tc.frame_stride);
  regnet::PairSet val;
  if (!ds.splits.val.empty()) val = regnet::make_pairs(load_cases(ds, ds.splits.val, cfg.jobs), tc.frame_stride);
  auto res = regnet::train_registration(train, val, cfg.reg_model(), tc, vae);
  regnet::save_regnet(dir, res.model, tc, vae_hash);
  regnet::write_log_csv(dir / "loss_components.csv", res.log);
  if (cfg.plots && !res.log.empty()) {
    Series s, v;
    for (const auto& e : res.log) {
      s.x.push_back(e.epoch);
      s.y.push_back(e.train_total);
      v.x.push_back(e.epoch);
      v.y.push_back(e.val_total);
    }
    v.rgb = palette(1);
    write_line_chart(dir / "loss_curve.png", {s, v});
  }
  return {{"train_pairs", train.size()},
          {"val_pairs", val.size()},
          {"initial_val_total", res.initial_val.total},
          {"final_val_total", res.final_val.total},
          {"final_val_sim", res.final_val.sim},
          {"final_val_reg", res.final_val.reg},
          {"epochs_run", res.log.size()},
          {"steps", res.log.empty() ? 0L : res.log.back().steps}};
}

struct CaseEval {
  int case_id;
  metrics::SliceTag tag;
  std::vector<int> frames;
  std::vector<double> dice, mcd;
  std::vector<double> epe;  // per evaluated frame
  metrics::StrainSummary strain;
  double identity_disp = 0;
};

io::json evaluate_into(const ExperimentConfig& cfg, const Dataset& ds, const EvalSource& src, const fs::path& dir) {
  const auto& ids = ds.split(cfg.eval_split);
  if (ids.empty()) fail(ErrorKind::InvalidArgument, "evaluate: split '" + cfg.eval_split + "' is empty");
  std::optional<regnet::RegModel> model;
  if (src.kind == EvalSource::Kind::Model) {
    model.emplace(regnet::load_regnet(src.checkpoint));
    if (model->config().grid != ds.grid)
      fail(ErrorKind::InvalidArgument, "evaluate: model grid does not match the dataset grid");
  }
  const auto cases = load_cases(ds, ids, cfg.jobs);
  std::vector<CaseEval> evals(cases.size());
  const auto frames = eval_frames(ds.n_frames, cfg.eval_frame_stride);

  // Inference runs serially (one model instance); metrics per case may run in parallel.
  std::vector<std::vector<DisplacementField>> fields(cases.size());
  std::vector<double> identity(cases.size(), 0.0);
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const auto& pc = cases[c];
    auto& f = fields[c];
    f.assign(frames.size(), DisplacementField(ds.grid));
    if (src.kind == EvalSource::Kind::GroundTruth) {
      for (std::size_t k = 1; k < frames.size(); ++k) f[k] = pc.gt_fields[frames[k]];
    } else if (src.kind == EvalSource::Kind::Model) {
      std::vector<torch::Tensor> tg;
      for (std::size_t k = 1; k < frames.size(); ++k) tg.push_back(regnet::to_tensor(pc.frames[frames[k]], torch::kFloat));
      const auto tgt = torch::cat(tg);
      const auto s0 = regnet::to_tensor(pc.frames[0], torch::kFloat);
      const auto phi = regnet::predict(*model, s0.expand_as(tgt).contiguous(), tgt).to(torch::kDouble);
      for (std::size_t k = 1; k < frames.size(); ++k) f[k] = regnet::field_from_tensor(phi[k - 1]);
      const auto id = regnet::predict(*model, s0, s0);
      identity[c] = id.pow(2).sum(1).sqrt().mean().item<double>();
    }
  }
  parallel_for(static_cast<int>(cases.size()), cfg.jobs, [&](int c) {
    const auto& pc = cases[c];
    CaseEval& e = evals[c];
    e.case_id = pc.meta.case_id;
    e.tag = pc.meta.slice_tag;
    e.frames = frames;
    e.identity_disp = identity[c];
    std::vector<Mask> masks;
    for (std::size_t k = 0; k < frames.size(); ++k) {
      const int t = frames[k];
      const Mask warped = phantom::warp_mask(pc.masks[0], fields[c][k]);
      e.dice.push_back(metrics::dice(warped, pc.masks[t]));
      e.mcd.push_back(metrics::mcd(warped, pc.masks[t]));
      e.epe.push_back(mean_epe(fields[c][k], pc.gt_fields[t], pc.masks[t]));
      masks.push_back(pc.masks[t]);
    }
    e.strain = metrics::cycle_report(fields[c], masks, pc.masks[0].cavity_centroid(), pc.meta.slice_tag);
  });

  std::ostringstream csv;
  csv << "case,slice_tag,frame,RR_pct,CC_pct,mean_detJ,dice,mcd_px,jac_dev\n";
  for (const auto& e : evals)
    for (std::size_t k = 0; k < e.frames.size(); ++k) {
      const auto& fr = e.strain.frames[k];
      csv << e.case_id << ',' << metrics::to_string(e.tag) << ',' << e.frames[k] << ',' << fixed(fr.rr_pct) << ','
          << fixed(fr.cc_pct) << ',' << fixed(fr.mean_detJ) << ',' << fixed(e.dice[k]) << ',' << fixed(e.mcd[k])
          << ',' << fixed(fr.jac_dev) << '\n';
    }
  write_text(dir / "report.csv", csv.str());

  // Aggregates: the last evaluated frame is the peak-inflation pair.
  const std::size_t last = frames.size() - 1;
  std::vector<double> d_last, m_last, j_last, epe_last, epe_all, j_all, d_all, rr_peak, cc_peak, ident;
  std::vector<double> curve_det(frames.size(), 0.0), curve_rr(frames.size(), 0.0), curve_cc(frames.size(), 0.0);
  double case_det_min = 1e300, case_det_max = -1e300;
  for (const auto& e : evals) {
    d_last.push_back(e.dice[last]);
    m_last.push_back(e.mcd[last]);
    j_last.push_back(e.strain.frames[last].jac_dev);
    epe_last.push_back(e.epe[last]);
    std::vector<double> ea, ja, da;
    for (std::size_t k = 1; k < frames.size(); ++k) {
      ea.push_back(e.epe[k]);
      ja.push_back(e.strain.frames[k].jac_dev);
      da.push_back(e.dice[k]);
    }
    epe_all.push_back(mean_of(ea));
    j_all.push_back(mean_of(ja));
    d_all.push_back(mean_of(da));
    rr_peak.push_back(e.strain.peak_rr_pct);
    cc_peak.push_back(e.strain.peak_cc_pct);
    ident.push_back(e.identity_disp);
    for (std::size_t k = 0; k < frames.size(); ++k) {
      const double d = e.strain.frames[k].mean_detJ;
      curve_det[k] += d / evals.size();
      curve_rr[k] += e.strain.frames[k].rr_pct / evals.size();
      curve_cc[k] += e.strain.frames[k].cc_pct / evals.size();
      case_det_min = std::min(case_det_min, d);
      case_det_max = std::max(case_det_max, d);
    }
  }
  auto ms = [&](const std::vector<double>& v) { return io::json{{"mean", mean_of(v)}, {"std", std_of(v)}}; };
  io::json summary = {
      {"source", src.label()},
      {"split", cfg.eval_split},
      {"n_cases", evals.size()},
      {"frames", frames},
      {"peak_pair", {{"dice", ms(d_last)}, {"mcd_px", ms(m_last)}, {"jac_dev", ms(j_last)}, {"epe_px", ms(epe_last)}}},
      {"all_frames", {{"dice", ms(d_all)}, {"jac_dev", ms(j_all)}, {"epe_px", ms(epe_all)}}},
      {"peak_strain", {{"rr_pct", ms(rr_peak)}, {"cc_pct", ms(cc_peak)}}},
      {"mean_detJ_curve", curve_det},
      {"rr_curve", curve_rr},
      {"cc_curve", curve_cc},
      {"mean_detJ_range_over_cases", {case_det_min, case_det_max}},
      {"identity_pair_mean_disp_px", ms(ident)},
  };
  io::write_json(dir / "summary.json", summary);
  std::ostringstream table;
  table << "method,n_cases,dice_mean,dice_std,mcd_px_mean,mcd_px_std,jac_dev_mean,jac_dev_std,epe_px_mean,epe_px_std\n"
        << src.label() << ',' << evals.size() << ',' << fixed(mean_of(d_last)) << ',' << fixed(std_of(d_last)) << ','
        << fixed(mean_of(m_last)) << ',' << fixed(std_of(m_last)) << ',' << fixed(mean_of(j_last)) << ','
        << fixed(std_of(j_last)) << ',' << fixed(mean_of(epe_last)) << ',' << fixed(std_of(epe_last)) << '\n';
  write_text(dir / "table.csv", table.str());

  if (cfg.plots) {
    fs::create_directories(dir / "plots");
    std::vector<double> x(frames.begin(), frames.end());
    Series rr{x, curve_rr, palette(0)}, cc{x, curve_cc, palette(1)};
    write_line_chart(dir / "plots" / "strain_curves.png", {rr, cc});
    ChartOptions o;
    o.y_band = std::array<double, 2>{0.9, 1.1};
    write_line_chart(dir / "plots" / "jacobian_curve.png", {Series{x, curve_det, palette(2)}}, o);
    std::ostringstream pc;
    pc << "frame,RR_pct,CC_pct,mean_detJ\n";
    for (std::size_t k = 0; k < frames.size(); ++k)
      pc << frames[k] << ',' << fixed(curve_rr[k]) << ',' << fixed(curve_cc[k]) << ',' << fixed(curve_det[k]) << '\n';
    write_text(dir / "plots" / "curves.csv", pc.str());
  }
  return summary;
}

}  // namespace

const std::vector<int>& Dataset::split(const std::string& name) const {
  if (name == "train") return splits.train;
  if (name == "val") return splits.val;
  if (name == "test") return splits.test;
  fail(ErrorKind::Config, "unknown split '" + name + "'");
}

Dataset open_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorKind::MissingInput, "dataset not found: " + dir.string());
  const auto j = io::read_json(dir / "dataset.json");
  io::check_header(j, kDatasetMagic, phantom::kFormatVersion, dir / "dataset.json");
  Dataset ds;
  ds.dir = dir;
  try {
    ds.grid = {j.at("shape").at(0).get<int>(), j.at("shape").at(1).get<int>()};
    ds.n_frames = j.at("n_frames").get<int>();
    ds.splits.train = j.at("splits").at("train").get<std::vector<int>>();
    ds.splits.val = j.at("splits").at("val").get<std::vector<int>>();
    ds.splits.test = j.at("splits").at("test").get<std::vector<int>>();
  } catch (const std::exception& e) {
    fail(ErrorKind::MalformedHeader, "malformed dataset.json: " + std::string(e.what()));
  }
  return ds;
}

std::vector<phantom::PhantomCase> load_cases(const Dataset& ds, const std::vector<int>& ids, int jobs) {
  std::vector<phantom::PhantomCase> out(ids.size());
  parallel_for(static_cast<int>(ids.size()), jobs, [&](int k) {
    try {
      out[k] = phantom::load_case(ds.dir / phantom::case_dir_name(ids[k]));
    } catch (const Error&) {
      rethrow_with_prefix("case " + std::to_string(ids[k]) + ": ");
    }
    if (out[k].grid() != ds.grid || out[k].n_frames() != ds.n_frames)
      fail(ErrorKind::MalformedHeader, "case " + std::to_string(ids[k]) + " does not match dataset.json");
  });
  return out;
}

std::vector<GradientField> training_fields(const std::vector<phantom::PhantomCase>& cases, int stride) {
  std::vector<GradientField> out;
  for (const auto& c : cases)
    for (int t : regnet::pair_frames(c.n_frames(), stride))
      out.push_back(vae::apply_mask(vae::grad_field(c.gt_fields[t]), c.masks[0]));
  return out;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  const int workers = std::max(1, std::min(jobs, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        {
          std::lock_guard lk(mu);
          if (first) return;
        }
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lk(mu);
          if (!first) first = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

fs::path resolve_out(const ExperimentConfig& cfg, const std::optional<fs::path>& out, const fs::path& sub) {
  if (out && !out->empty()) return *out;
  return fs::path(cfg.runs_dir) / cfg.name / sub;
}

void cmd_simulate(const ExperimentConfig& cfg, const fs::path& out) {
  cfg.validate();
  const std::string started = utc_now();
  const int K = cfg.total_cases();
  const auto sim_cfg = cfg.simulation();
  const Grid g = cfg.grid();
  StagedDir stage(out);
  struct CaseInfo {
    double P_ED = 0, worst_mean = 0, worst_max = 0;
    std::string tag;
  };
  std::vector<CaseInfo> info(K);
  parallel_for(K, cfg.jobs, [&](int id) {
    try {
      const std::uint64_t seed = derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(id));
      const auto geo = phantom::sample_geometry(g, seed);
      const Mask base = phantom::make_annulus_mask(geo.center, geo.r_endo, geo.r_epi, g, geo.eccentricity, geo.orientation);
      const auto sim = fem::simulate_from_mask(base, geo.area_ratio, sim_cfg);
      phantom::CaseMeta meta{id, seed, cfg.spacing_mm, geo.tag};
      const auto pc = phantom::synthesize_case(sim.fields, base, derive_seed(seed, 7), meta, cfg.n_steps);
      phantom::check_case_topology(pc);
      phantom::save_case(stage.path() / phantom::case_dir_name(id), pc);
      fem::save_simulation(stage.path() / fem::sim_dir_name(id), id, sim, sim_cfg);
      CaseInfo ci{sim.P_ED, 0, 0, metrics::to_string(geo.tag)};
      for (const auto& v : sim.volume) {
        ci.worst_mean = std::max(ci.worst_mean, v.mean_abs_dev);
        ci.worst_max = std::max(ci.worst_max, v.max_abs_dev);
      }
      info[id] = ci;
    } catch (const Error&) {
      rethrow_with_prefix("case " + std::to_string(id) + ": ");
    }
  });
  const auto splits = phantom::make_splits(cfg.n_train, cfg.n_val, cfg.n_test, derive_seed(cfg.seed, 3));
  io::json cases = io::json::array();
  double worst_mean = 0;
  for (int id = 0; id < K; ++id) {
    cases.push_back({{"case_id", id},
                     {"slice_tag", info[id].tag},
                     {"P_ED_kPa", info[id].P_ED},
                     {"worst_mean_abs_detF_dev", info[id].worst_mean},
                     {"worst_max_abs_detF_dev", info[id].worst_max}});
    worst_mean = std::max(worst_mean, info[id].worst_mean);
  }
  io::json ds = {{"magic", kDatasetMagic},
                 {"format_version", phantom::kFormatVersion},
                 {"shape", {g.rows, g.cols}},
                 {"n_frames", cfg.n_steps},
                 {"n_cases", K},
                 {"spacing_mm", cfg.spacing_mm},
                 {"splits", {{"train", splits.train}, {"val", splits.val}, {"test", splits.test}}},
                 {"cases", cases}};
  io::write_json(stage.path() / "dataset.json", ds);
  write_manifest(stage.path(), "simulate", cfg, io::json::object(),
                 {{"n_cases", K}, {"worst_mean_abs_detF_dev", worst_mean}}, started);
  stage.commit();
}

void cmd_train_vae(const ExperimentConfig& cfg, const fs::path& data, const fs::path& out) {
  cfg.validate();
  const std::string started = utc_now();
  const Dataset ds = open_dataset(data);
  if (ds.grid != cfg.grid()) fail(ErrorKind::Config, "train-vae: config grid does not match the dataset");
  const auto train = training_fields(load_cases(ds, ds.splits.train, cfg.jobs), cfg.vae_frame_stride);
  std::vector<GradientField> val;
  if (!ds.splits.val.empty()) val = training_fields(load_cases(ds, ds.splits.val, cfg.jobs), cfg.vae_frame_stride);
  StagedDir stage(out);
  auto res = vae::train_vae(train, val, cfg.vae_model(), cfg.vae_training());
  vae::save_vae(stage.path(), res.model, cfg.seed);
  vae::write_curve_csv(stage.path() / "training_curve.csv", res.curve);
  if (cfg.plots) {
    Series t, v;
    for (const auto& e : res.curve) {
      t.x.push_back(e.epoch);
      t.y.push_back(std::log10(std::max(e.train_total, 1e-12)));
      v.x.push_back(e.epoch);
      v.y.push_back(std::log10(std::max(e.val_total, 1e-12)));
    }
    v.rgb = palette(1);
    write_line_chart(stage.path() / "training_curve.png", {t, v});
  }
  write_manifest(stage.path(), "train-vae", cfg, {{"data", input_entry(data)}},
                 {{"train_fields", train.size()},
                  {"val_fields", val.size()},
                  {"initial_val_total", res.initial_val_total},
                  {"final_val_total", res.final_val_total},
                  {"reduction_factor", res.initial_val_total / res.final_val_total}},
                 started);
  stage.commit();
}

void cmd_train_reg(const ExperimentConfig& cfg, const fs::path& data, const std::optional<fs::path>& vae_dir,
                   const fs::path& out) {
  cfg.validate();
  const std::string started = utc_now();
  const auto tc = cfg.reg_training();
  if (tc.reg == regnet::RegKind::Vae && (!vae_dir || vae_dir->empty()))
    fail(ErrorKind::MissingInput, "train-reg: regulariser 'vae' requires --vae CKPT");
  const Dataset ds = open_dataset(data);
  if (ds.grid != cfg.grid()) fail(ErrorKind::Config, "train-reg: config grid does not match the dataset");
  std::optional<vae::VaeModel> vae;
  std::string vae_hash;
  io::json inputs = {{"data", input_entry(data)}};
  if (tc.reg == regnet::RegKind::Vae) {
    vae.emplace(vae::load_vae(*vae_dir));
    vae_hash = io::git_hash_tree(*vae_dir);
    inputs["vae"] = input_entry(*vae_dir);
  }
  StagedDir stage(out);
  const auto metrics = train_reg_into(cfg, ds, vae ? &*vae : nullptr, vae_hash, stage.path());
  write_manifest(stage.path(), "train-reg", cfg, inputs, metrics, started);
  stage.commit();
}

std::string EvalSource::label() const {
  switch (kind) {
    case Kind::GroundTruth: return "gt";
    case Kind::Zero: return "zero";
    case Kind::Model: return checkpoint.filename().string();
  }
  return "model";
}

EvalSource eval_source_from_string(const std::string& spec) {
  EvalSource s;
  if (spec == "gt") s.kind = EvalSource::Kind::GroundTruth;
  else if (spec == "zero") s.kind = EvalSource::Kind::Zero;
  else {
    s.kind = EvalSource::Kind::Model;
    s.checkpoint = spec;
  }
  return s;
}

void cmd_evaluate(const ExperimentConfig& cfg, const fs::path& data, const EvalSource& src, const fs::path& out) {
  cfg.validate();
  const std::string started = utc_now();
  io::json inputs = {{"data", input_entry(data)}};
  if (src.kind == EvalSource::Kind::Model) {
    if (src.checkpoint.empty() || !fs::is_directory(src.checkpoint))
      fail(ErrorKind::MissingInput, "evaluate: checkpoint not found: " + src.checkpoint.string());
    inputs["model"] = input_entry(src.checkpoint);
  }
  const Dataset ds = open_dataset(data);
  StagedDir stage(out);
  const auto summary = evaluate_into(cfg, ds, src, stage.path());
  write_manifest(stage.path(), "evaluate", cfg, inputs,
                 {{"peak_pair", summary["peak_pair"]}, {"all_frames", summary["all_frames"]}}, started);
  stage.commit();
}

void cmd_report(const ExperimentConfig& cfg, const std::vector<fs::path>& evals, const fs::path& out) {
  cfg.validate();
  if (evals.empty()) fail(ErrorKind::InvalidArgument, "report: no evaluation directories given");
  const std::string started = utc_now();
  std::vector<io::json> summaries;
  io::json inputs = io::json::object();
  for (const auto& e : evals) {
    summaries.push_back(io::read_json(e / "summary.json"));
    inputs[e.filename().string()] = input_entry(e / "summary.json");
  }
  StagedDir stage(out);
  std::ostringstream csv, md;
  csv << "method,n_cases,dice_mean,dice_std,mcd_px_mean,mcd_px_std,jac_dev_mean,jac_dev_std,epe_px_mean,epe_px_std\n";
  md << "| Method | Dice | MCD (px) | mean abs(det J - 1) | EPE (px) |\n|---|---|---|---|---|\n";
  auto ms = [](const io::json& j) {
    return fixed(j.at("mean").get<double>(), 3) + " (" + fixed(j.at("std").get<double>(), 3) + ")";
  };
  std::vector<Series> curves;
  for (std::size_t k = 0; k < summaries.size(); ++k) {
    const auto& s = summaries[k];
    const auto& p = s.at("peak_pair");
    const std::string name = evals[k].filename().string();
    csv << name << ',' << s.at("n_cases").get<int>();
    for (const char* key : {"dice", "mcd_px", "jac_dev", "epe_px"})
      csv << ',' << fixed(p.at(key).at("mean").get<double>()) << ',' << fixed(p.at(key).at("std").get<double>());
    csv << '\n';
    md << "| " << name << " | " << ms(p.at("dice")) << " | " << ms(p.at("mcd_px")) << " | " << ms(p.at("jac_dev"))
       << " | " << ms(p.at("epe_px")) << " |\n";
    Series c;
    for (int f : s.at("frames").get<std::vector<int>>()) c.x.push_back(f);
    c.y = s.at("mean_detJ_curve").get<std::vector<double>>();
    c.rgb = palette(static_cast<int>(k));
    curves.push_back(c);
  }
  write_text(stage.path() / "table.csv", csv.str());
  write_text(stage.path() / "table.md", md.str());
  if (cfg.plots) {
    fs::create_directories(stage.path() / "plots");
    ChartOptions o;
    o.y_band = std::array<double, 2>{0.9, 1.1};
    write_line_chart(stage.path() / "plots" / "jacobian_curves.png", curves, o);
  }
  write_manifest(stage.path(), "report", cfg, inputs, io::json::object(), started);
  stage.commit();
}

void cmd_sweep_alpha(const ExperimentConfig& cfg, const fs::path& data, const fs::path& vae_dir, const fs::path& out) {
  cfg.validate();
  const std::string started = utc_now();
  if (vae_dir.empty()) fail(ErrorKind::MissingInput, "sweep-alpha: --vae CKPT is required");
  const Dataset ds = open_dataset(data);
  if (ds.grid != cfg.grid()) fail(ErrorKind::Config, "sweep-alpha: config grid does not match the dataset");
  auto vae = vae::load_vae(vae_dir);
  const std::string vae_hash = io::git_hash_tree(vae_dir);
  StagedDir stage(out);
  std::ostringstream csv;
  csv << "alpha,jac_dev_mean,dice_mean,mcd_px_mean,epe_px_mean,all_frames_jac_dev_mean,all_frames_dice_mean\n";
  Series jd, dc;
  io::json runs = io::json::array();
  for (double a : cfg.alpha_grid) {
    ExperimentConfig c = cfg;
    c.alpha = a;
    c.regulariser = "vae";
    std::ostringstream name;
    name << "alpha_" << a;
    const fs::path run = stage.path() / name.str();
    fs::create_directories(run / "checkpoint");
    fs::create_directories(run / "eval");
    train_reg_into(c, ds, &vae, vae_hash, run / "checkpoint");
    EvalSource src{EvalSource::Kind::Model, run / "checkpoint"};
    const auto s = evaluate_into(c, ds, src, run / "eval");
    const auto& p = s.at("peak_pair");
    const auto& all = s.at("all_frames");
    csv << a << ',' << fixed(p.at("jac_dev").at("mean").get<double>()) << ','
        << fixed(p.at("dice").at("mean").get<double>()) << ',' << fixed(p.at("mcd_px").at("mean").get<double>())
        << ',' << fixed(p.at("epe_px").at("mean").get<double>()) << ','
        << fixed(all.at("jac_dev").at("mean").get<double>()) << ',' << fixed(all.at("dice").at("mean").get<double>())
        << '\n';
    jd.x.push_back(a);
    jd.y.push_back(p.at("jac_dev").at("mean").get<double>());
    dc.x.push_back(a);
    dc.y.push_back(p.at("dice").at("mean").get<double>());
    runs.push_back({{"alpha", a}, {"peak_pair", p}});
  }
  write_text(stage.path() / "sweep.csv", csv.str());
  if (cfg.plots) {
    ChartOptions o;
    o.log_x = true;
    write_line_chart(stage.path() / "sweep_jac_dev.png", {jd}, o);
    dc.rgb = palette(1);
    write_line_chart(stage.path() / "sweep_dice.png", {dc}, o);
  }
  write_manifest(stage.path(), "sweep-alpha", cfg, {{"data", input_entry(data)}, {"vae", input_entry(vae_dir)}},
                 {{"runs", runs}}, started);
  stage.commit();
}

}  // namespace cardioreg::harness

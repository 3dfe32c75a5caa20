// SPDX-License-Identifier: Apache-2.0
#include "regnet/regnet.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "common/checkpoint.hpp"
#include "common/rng.hpp"
#include "regnet/warp.hpp"

namespace cardioreg::regnet {

namespace F = torch::nn::functional;
namespace fs = std::filesystem;

std::string to_string(RegKind k) {
  switch (k) {
    case RegKind::Vae: return "vae";
    case RegKind::L2: return "l2";
    case RegKind::None: return "none";
  }
  return "none";
}

RegKind reg_kind_from_string(const std::string& s) {
  if (s == "vae") return RegKind::Vae;
  if (s == "l2") return RegKind::L2;
  if (s == "none") return RegKind::None;
  fail(ErrorKind::Config, "unknown regulariser '" + s + "' (expected vae, l2 or none)");
}

void RegNetConfig::validate() const {
  if (grid.rows < 2 || grid.cols < 2) fail(ErrorKind::Config, "regnet: grid must be at least 2x2");
  if (channels.size() != 5) fail(ErrorKind::Config, "regnet: expected 5 channel counts (1 + 4 stride-2 stages)");
  for (int c : channels)
    if (c < 1) fail(ErrorKind::Config, "regnet: channel counts must be positive");
}

std::string RegNetConfig::architecture() const {
  std::ostringstream os;
  os << "regnet/v1 in=2x1x" << grid.rows << "x" << grid.cols << " siamese=conv3";
  for (int c : channels) os << ":" << c;
  os << " dec=bilinear+skip head=conv3->2 zero-init";
  return os.str();
}

void TrainConfig::validate() const {
  if (!(alpha >= 0) || !std::isfinite(alpha)) fail(ErrorKind::Config, "reg: alpha must be >= 0");
  if (!(lr > 0)) fail(ErrorKind::Config, "reg: learning rate must be > 0");
  if (epochs < 1 || batch_size < 1) fail(ErrorKind::Config, "reg: epochs and batch size must be >= 1");
  if (frame_stride < 1) fail(ErrorKind::Config, "reg: frame stride must be >= 1");
  if (max_steps < 0) fail(ErrorKind::Config, "reg: max_steps must be >= 0");
}

RegNetImpl::RegNetImpl(const RegNetConfig& cfg) {
  cfg.validate();
  const auto& c = cfg.channels;
  int64_t cin = 1;
  for (int k = 0; k < 5; ++k) {
    auto opt = torch::nn::Conv2dOptions(cin, c[k], 3).padding(1).stride(k == 0 ? 1 : 2);
    enc_.push_back(register_module("enc" + std::to_string(k), torch::nn::Conv2d(opt)));
    cin = c[k];
  }
  dec_.push_back(register_module("dec4", torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * c[4], c[4], 3).padding(1))));
  for (int k = 3; k >= 0; --k)
    dec_.push_back(register_module("dec" + std::to_string(k),
                                   torch::nn::Conv2d(torch::nn::Conv2dOptions(c[k + 1] + 2 * c[k], c[k], 3).padding(1))));
  head_ = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(c[0], 2, 3).padding(1)));
  torch::NoGradGuard ng;
  head_->weight.zero_();
  head_->bias.zero_();
}

std::vector<torch::Tensor> RegNetImpl::features(const torch::Tensor& x) {
  std::vector<torch::Tensor> f;
  auto h = x;
  for (auto& c : enc_) {
    h = F::leaky_relu(c->forward(h), F::LeakyReLUFuncOptions().negative_slope(0.2));
    f.push_back(h);
  }
  return f;
}

torch::Tensor RegNetImpl::forward(const torch::Tensor& source, const torch::Tensor& target) {
  const auto fs_ = features(source), ft = features(target);
  auto act = [](const torch::Tensor& t) { return F::leaky_relu(t, F::LeakyReLUFuncOptions().negative_slope(0.2)); };
  auto h = act(dec_[0]->forward(torch::cat({fs_[4], ft[4]}, 1)));
  for (int k = 3, d = 1; k >= 0; --k, ++d) {
    const auto up = F::interpolate(h, F::InterpolateFuncOptions()
                                          .size(std::vector<int64_t>{fs_[k].size(2), fs_[k].size(3)})
                                          .mode(torch::kBilinear)
                                          .align_corners(false));
    h = act(dec_[d]->forward(torch::cat({up, fs_[k], ft[k]}, 1)));
  }
  return head_->forward(h);
}

RegModel::RegModel(const RegNetConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  torch::manual_seed(init_seed);
  net_ = RegNet(cfg_);
}

torch::Tensor sim_loss(const torch::Tensor& target, const torch::Tensor& source, const torch::Tensor& phi) {
  require(target.sizes() == source.sizes(), "sim_loss: source and target shapes differ");
  return (target - warp(source, phi)).pow(2).mean();
}

double sim_loss(const Image& target, const Image& source, const DisplacementField& phi) {
  require(target.grid() == source.grid() && phi.grid() == target.grid(), "sim_loss: grid mismatch");
  torch::NoGradGuard ng;
  return sim_loss(to_tensor(target), to_tensor(source), to_tensor(phi)).item<double>();
}

torch::Tensor l2_reg(const torch::Tensor& phi, const torch::Tensor& mask) {
  require(mask.dim() == 4 && mask.size(0) == phi.size(0) && mask.size(1) == 1 && mask.size(2) == phi.size(2) &&
              mask.size(3) == phi.size(3),
          "l2_reg: mask shape does not match the field");
  const auto area = mask.sum({1, 2, 3});
  if ((area <= 0).any().item<bool>()) fail(ErrorKind::InvalidArgument, "l2_reg: empty mask");
  const auto sq = vae::grad_field(phi).pow(2).sum(1, true);
  return ((sq * mask).sum({1, 2, 3}) / area).mean();
}

double l2_reg(const DisplacementField& phi, const Mask& mask) {
  require(phi.grid() == mask.grid(), "l2_reg: grid mismatch");
  torch::NoGradGuard ng;
  return l2_reg(to_tensor(phi), myocardium_tensor(mask)).item<double>();
}

torch::Tensor vae_reg(vae::VaeModel& model, const torch::Tensor& phi, const torch::Tensor& mask) {
  const auto g = vae::grad_field(phi) * mask;
  return model.terms(g.to(model.dtype())).total.mean().to(phi.scalar_type());
}

LossTensors total_loss(const torch::Tensor& target, const torch::Tensor& source, const torch::Tensor& phi,
                       const torch::Tensor& mask, const TrainConfig& cfg, vae::VaeModel* vae) {
  LossTensors t;
  t.sim = sim_loss(target, source, phi);
  switch (cfg.reg) {
    case RegKind::Vae:
      if (!vae) fail(ErrorKind::MissingInput, "regulariser 'vae' requires a VAE checkpoint");
      t.reg = vae_reg(*vae, phi, mask);
      break;
    case RegKind::L2:
      t.reg = l2_reg(phi, mask);
      break;
    case RegKind::None:
      t.reg = torch::zeros({}, phi.options());
      break;
  }
  t.total = cfg.alpha == 0.0 ? t.sim : t.sim + cfg.alpha * t.reg;
  return t;
}

LossBreakdown total_loss(const Image& target, const Image& source, const DisplacementField& phi, const Mask& mask,
                         const TrainConfig& cfg, vae::VaeModel* vae) {
  require(target.grid() == source.grid() && phi.grid() == target.grid() && mask.grid() == target.grid(),
          "total_loss: grid mismatch");
  torch::NoGradGuard ng;
  const auto t = total_loss(to_tensor(target), to_tensor(source), to_tensor(phi), myocardium_tensor(mask), cfg, vae);
  return {t.sim.item<double>(), t.reg.item<double>(), t.total.item<double>()};
}

torch::Tensor predict(RegModel& model, const torch::Tensor& source, const torch::Tensor& target) {
  const Grid g = model.config().grid;
  require(source.dim() == 4 && source.sizes() == target.sizes() && source.size(2) == g.rows && source.size(3) == g.cols,
          "predict: image shape does not match the model grid " + to_string(g));
  torch::NoGradGuard ng;
  model.net()->eval();
  const auto dtype = model.net()->parameters().front().scalar_type();
  return model.net()->forward(source.to(dtype), target.to(dtype));
}

DisplacementField predict(RegModel& model, const Image& source, const Image& target) {
  if (source.grid() != model.config().grid || target.grid() != model.config().grid)
    fail(ErrorKind::InvalidArgument, "predict: image grid does not match the model grid " + to_string(model.config().grid));
  return field_from_tensor(predict(model, to_tensor(source, torch::kFloat), to_tensor(target, torch::kFloat)));
}

std::vector<int> pair_frames(int n_frames, int stride) {
  require(n_frames >= 2 && stride >= 1, "pair_frames: need >= 2 frames and stride >= 1");
  std::vector<int> t;
  for (int k = stride; k < n_frames; k += stride) t.push_back(k);
  if (t.empty() || t.back() != n_frames - 1) t.push_back(n_frames - 1);
  return t;
}

PairSet make_pairs(const std::vector<phantom::PhantomCase>& cases, int frame_stride) {
  if (cases.empty()) fail(ErrorKind::InvalidArgument, "make_pairs: empty dataset");
  std::vector<torch::Tensor> src, tgt, msk, gt, gtm;
  const Grid g = cases.front().grid();
  for (const auto& c : cases) {
    if (c.grid() != g) fail(ErrorKind::InvalidArgument, "make_pairs: cases differ in grid size");
    if (c.masks.size() != c.frames.size() || c.gt_fields.size() != c.frames.size())
      fail(ErrorKind::InvalidArgument, "make_pairs: case " + std::to_string(c.meta.case_id) + " has mismatched masks");
    const auto s = to_tensor(c.frames[0], torch::kFloat);
    const auto m = myocardium_tensor(c.masks[0], torch::kFloat);
    for (int t : pair_frames(c.n_frames(), frame_stride)) {
      src.push_back(s);
      msk.push_back(m);
      tgt.push_back(to_tensor(c.frames[t], torch::kFloat));
      gt.push_back(to_tensor(c.gt_fields[t], torch::kFloat));
      gtm.push_back(myocardium_tensor(c.masks[t], torch::kFloat));
    }
  }
  return {torch::cat(src), torch::cat(tgt), torch::cat(msk), torch::cat(gt), torch::cat(gtm)};
}

LossBreakdown evaluate_loss(RegModel& model, const PairSet& data, const TrainConfig& cfg, vae::VaeModel* vae,
                            int batch_size) {
  torch::NoGradGuard ng;
  model.net()->eval();
  const int64_t n = static_cast<int64_t>(data.size());
  require(n > 0, "evaluate_loss: empty dataset");
  double s = 0, r = 0, t = 0;
  for (int64_t b = 0; b < n; b += batch_size) {
    const int64_t e = std::min<int64_t>(n, b + batch_size);
    const auto src = data.source.slice(0, b, e), tgt = data.target.slice(0, b, e);
    const auto phi = model.net()->forward(src, tgt);
    const auto l = total_loss(tgt, src, phi, data.mask.slice(0, b, e), cfg, vae);
    const double w = static_cast<double>(e - b);
    s += w * l.sim.item<double>();
    r += w * l.reg.item<double>();
    t += w * l.total.item<double>();
  }
  return {s / n, r / n, t / n};
}

RegTrainResult train_registration(const PairSet& train, const PairSet& val, const RegNetConfig& net_cfg,
                                  const TrainConfig& cfg, vae::VaeModel* vae) {
  cfg.validate();
  if (train.size() == 0) fail(ErrorKind::InvalidArgument, "train_registration: empty dataset");
  if (cfg.reg == RegKind::Vae && !vae) fail(ErrorKind::MissingInput, "regulariser 'vae' requires a VAE checkpoint");
  if (train.mask.size(0) != train.source.size(0) || train.target.size(0) != train.source.size(0))
    fail(ErrorKind::InvalidArgument, "train_registration: masks do not match the image pairs");
  if (train.source.size(2) != net_cfg.grid.rows || train.source.size(3) != net_cfg.grid.cols)
    fail(ErrorKind::InvalidArgument, "train_registration: data grid does not match the network grid");
  if (vae) {
    vae->freeze();
    if (vae->config().grid != net_cfg.grid)
      fail(ErrorKind::InvalidArgument, "train_registration: VAE grid does not match the network grid");
  }
  const PairSet& v = val.size() ? val : train;

  RegTrainResult res{RegModel(net_cfg, derive_seed(cfg.seed, 11)), {}, {}, {}};
  RegModel& model = res.model;
  torch::optim::Adam opt(model.net()->parameters(), torch::optim::AdamOptions(cfg.lr));
  res.initial_val = evaluate_loss(model, v, cfg, vae);

  Rng rng(derive_seed(cfg.seed, 12));
  const int64_t n = static_cast<int64_t>(train.size());
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  long steps = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    model.net()->train();
    rng.shuffle(order);
    double s = 0, r = 0, t = 0;
    int64_t seen = 0;
    for (int64_t b = 0; b < n; b += cfg.batch_size) {
      if (cfg.max_steps > 0 && steps >= cfg.max_steps) break;
      const int64_t e = std::min<int64_t>(n, b + cfg.batch_size);
      const auto idx = torch::from_blob(order.data() + b, {e - b}, torch::kLong).clone();
      const auto src = train.source.index_select(0, idx), tgt = train.target.index_select(0, idx);
      const auto phi = model.net()->forward(src, tgt);
      const auto l = total_loss(tgt, src, phi, train.mask.index_select(0, idx), cfg, vae);
      const double lv = l.total.item<double>();
      if (!std::isfinite(lv)) {
        std::ostringstream os;
        os << "train_registration: non-finite loss at epoch " << epoch << ", step " << steps
           << " (sim=" << l.sim.item<double>() << ", reg=" << l.reg.item<double>() << ")";
        fail(ErrorKind::NonFinite, os.str());
      }
      opt.zero_grad();
      l.total.backward();
      opt.step();
      ++steps;
      const double w = static_cast<double>(e - b);
      s += w * l.sim.item<double>();
      r += w * l.reg.item<double>();
      t += w * lv;
      seen += e - b;
    }
    if (seen == 0) break;
    const auto vl = evaluate_loss(model, v, cfg, vae);
    res.log.push_back({epoch, steps, s / seen, r / seen, t / seen, vl.sim, vl.reg, vl.total});
    if (!std::isfinite(vl.total))
      fail(ErrorKind::NonFinite, "train_registration: non-finite validation loss at epoch " + std::to_string(epoch));
  }
  model.net()->eval();
  res.final_val = evaluate_loss(model, v, cfg, vae);
  return res;
}

void write_log_csv(const fs::path& path, const std::vector<RegEpochLog>& log) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorKind::MissingInput, "cannot write " + path.string());
  os << "epoch,steps,train_sim,train_reg,train_total,val_sim,val_reg,val_total\n" << std::setprecision(9);
  for (const auto& e : log)
    os << e.epoch << ',' << e.steps << ',' << e.train_sim << ',' << e.train_reg << ',' << e.train_total << ','
       << e.val_sim << ',' << e.val_reg << ',' << e.val_total << '\n';
}

void save_regnet(const fs::path& dir, const RegModel& model, const TrainConfig& cfg, const std::string& vae_hash) {
  const auto& c = model.config();
  io::json meta = {{"architecture", c.architecture()},
                   {"architecture_hash", io::git_hash_bytes(c.architecture())},
                   {"grid", {c.grid.rows, c.grid.cols}},
                   {"channels", c.channels},
                   {"train_config",
                    {{"alpha", cfg.alpha},
                     {"regulariser", to_string(cfg.reg)},
                     {"lr", cfg.lr},
                     {"optimiser", "adam"},
                     {"epochs", cfg.epochs},
                     {"batch_size", cfg.batch_size},
                     {"seed", cfg.seed},
                     {"frame_stride", cfg.frame_stride},
                     {"max_steps", cfg.max_steps}}},
                   {"vae_checkpoint_hash", vae_hash}};
  ckpt::save(dir, *model.net(), "regnet", meta);
}

RegModel load_regnet(const fs::path& dir) {
  const auto m = ckpt::read_manifest(dir, "regnet");
  RegNetConfig c;
  try {
    c.grid = {m.at("grid").at(0).get<int>(), m.at("grid").at(1).get<int>()};
    c.channels = m.at("channels").get<std::vector<int>>();
  } catch (const std::exception& e) {
    fail(ErrorKind::MalformedHeader, std::string("regnet checkpoint manifest: ") + e.what());
  }
  if (m.value("architecture_hash", std::string{}) != io::git_hash_bytes(c.architecture()))
    fail(ErrorKind::VersionMismatch, "regnet checkpoint architecture hash does not match this build");
  RegModel model(c, 0);
  ckpt::load_params(dir, *model.net(), m);
  model.net()->eval();
  return model;
}

TrainConfig load_train_config(const fs::path& dir) {
  const auto m = ckpt::read_manifest(dir, "regnet");
  TrainConfig t;
  try {
    const auto& j = m.at("train_config");
    t.alpha = j.at("alpha").get<double>();
    t.reg = reg_kind_from_string(j.at("regulariser").get<std::string>());
    t.lr = j.at("lr").get<double>();
    t.epochs = j.at("epochs").get<int>();
    t.batch_size = j.at("batch_size").get<int>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.frame_stride = j.at("frame_stride").get<int>();
    t.max_steps = j.at("max_steps").get<long>();
  } catch (const std::exception& e) {
    fail(ErrorKind::MalformedHeader, std::string("regnet checkpoint train_config: ") + e.what());
  }
  return t;
}

}  // namespace cardioreg::regnet

// SPDX-License-Identifier: Apache-2.0
#include "vae/vae.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "common/checkpoint.hpp"
#include "common/rng.hpp"
#include "regnet/warp.hpp"
#include "vae/grad_field.hpp"

namespace cardioreg::vae {

namespace F = torch::nn::functional;
namespace fs = std::filesystem;

torch::Tensor grad_field(const torch::Tensor& phi) {
  require(phi.dim() == 4 && phi.size(1) == 2, "grad_field: expected [B,2,H,W]");
  const auto H = phi.size(2), W = phi.size(3);
  auto dx = torch::zeros_like(phi);
  auto dy = torch::zeros_like(phi);
  if (W > 1) dx = F::pad(phi.narrow(3, 1, W - 1) - phi.narrow(3, 0, W - 1), F::PadFuncOptions({0, 1, 0, 0}));
  if (H > 1) dy = F::pad(phi.narrow(2, 1, H - 1) - phi.narrow(2, 0, H - 1), F::PadFuncOptions({0, 0, 0, 1}));
  // [du/dx, du/dy, dv/dx, dv/dy]
  return torch::stack({dx.select(1, 0), dy.select(1, 0), dx.select(1, 1), dy.select(1, 1)}, 1);
}

void VaeConfig::validate() const {
  if (latent_dim < 1) fail(ErrorKind::Config, "vae: latent_dim must be >= 1");
  if (!(beta >= 0)) fail(ErrorKind::Config, "vae: beta must be >= 0");
  if (channels.empty()) fail(ErrorKind::Config, "vae: at least one encoder stage is required");
  for (int c : channels)
    if (c < 1) fail(ErrorKind::Config, "vae: channel counts must be positive");
  if (grid.rows < 1 || grid.cols < 1) fail(ErrorKind::Config, "vae: empty input grid");
}

std::string VaeConfig::architecture() const {
  std::ostringstream os;
  os << "vae/v1 in=4x" << grid.rows << "x" << grid.cols << " enc=conv3s2";
  for (int c : channels) os << ":" << c;
  os << " act=leaky0.2 latent=" << latent_dim << " dec=nearest+conv3";
  return os.str();
}

VaeNetImpl::VaeNetImpl(const VaeConfig& cfg) {
  cfg.validate();
  int64_t h = cfg.grid.rows, w = cfg.grid.cols, cin = 4;
  for (std::size_t k = 0; k < cfg.channels.size(); ++k) {
    sizes_.push_back({h, w});
    enc_.push_back(register_module("enc" + std::to_string(k),
                                   torch::nn::Conv2d(torch::nn::Conv2dOptions(cin, cfg.channels[k], 3).stride(2).padding(1))));
    cin = cfg.channels[k];
    h = (h - 1) / 2 + 1;
    w = (w - 1) / 2 + 1;
  }
  bottleneck_ = {cin, h, w};
  const int64_t flat = cin * h * w;
  fc_mean_ = register_module("fc_mean", torch::nn::Linear(flat, cfg.latent_dim));
  fc_logvar_ = register_module("fc_logvar", torch::nn::Linear(flat, cfg.latent_dim));
  fc_dec_ = register_module("fc_dec", torch::nn::Linear(cfg.latent_dim, flat));
  for (int k = static_cast<int>(cfg.channels.size()) - 1; k >= 0; --k) {
    const int64_t cout = k > 0 ? cfg.channels[k - 1] : 4;
    dec_.push_back(register_module("dec" + std::to_string(k),
                                   torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg.channels[k], cout, 3).padding(1))));
  }
}

std::pair<torch::Tensor, torch::Tensor> VaeNetImpl::encode(const torch::Tensor& x) {
  auto h = x;
  for (auto& c : enc_) h = F::leaky_relu(c->forward(h), F::LeakyReLUFuncOptions().negative_slope(0.2));
  h = h.flatten(1);
  return {fc_mean_->forward(h), fc_logvar_->forward(h)};
}

torch::Tensor VaeNetImpl::decode(const torch::Tensor& z) {
  auto h = F::leaky_relu(fc_dec_->forward(z), F::LeakyReLUFuncOptions().negative_slope(0.2));
  h = h.view({z.size(0), bottleneck_[0], bottleneck_[1], bottleneck_[2]});
  const std::size_t n = dec_.size();
  for (std::size_t k = 0; k < n; ++k) {
    const auto& sz = sizes_[n - 1 - k];
    h = F::interpolate(h, F::InterpolateFuncOptions().size(std::vector<int64_t>{sz[0], sz[1]}).mode(torch::kNearest));
    h = dec_[k]->forward(h);
    if (k + 1 < n) h = F::leaky_relu(h, F::LeakyReLUFuncOptions().negative_slope(0.2));
  }
  return h;
}

VaeModel::VaeModel(const VaeConfig& cfg, std::uint64_t init_seed, double input_scale) : cfg_(cfg) {
  cfg_.validate();
  set_input_scale(input_scale);
  torch::manual_seed(init_seed);
  net_ = VaeNet(cfg_);
}

void VaeModel::set_input_scale(double s) {
  require(std::isfinite(s) && s > 0, "vae: input scale must be positive");
  scale_ = s;
}

torch::Tensor kl_divergence(const torch::Tensor& mean, const torch::Tensor& logvar) {
  return 0.5 * (mean.pow(2) + logvar.exp() - 1.0 - logvar).sum(1);
}

std::pair<torch::Tensor, torch::Tensor> VaeModel::encode(const torch::Tensor& g) {
  return net_->encode(g / scale_);
}

VaeTerms VaeModel::terms(const torch::Tensor& g, const torch::Tensor* eps) {
  require(g.dim() == 4 && g.size(1) == 4 && g.size(2) == cfg_.grid.rows && g.size(3) == cfg_.grid.cols,
          "vae: input shape does not match the model grid " + to_string(cfg_.grid));
  auto [mean, logvar] = encode(g);
  auto z = eps ? mean + (0.5 * logvar).exp() * (*eps) : mean;
  const auto rec = net_->decode(z) * scale_;
  VaeTerms t;
  t.recon = (g - rec).pow(2).sum({1, 2, 3});
  t.kl = kl_divergence(mean, logvar);
  t.total = t.recon + cfg_.beta * t.kl;
  return t;
}

void VaeModel::freeze() {
  for (auto& p : net_->parameters()) p.set_requires_grad(false);
  net_->eval();
}

void VaeModel::to(torch::Dtype dtype) { net_->to(dtype); }

torch::Dtype VaeModel::dtype() const { return net_->parameters().front().scalar_type(); }

void check_input_shape(const VaeModel& model, const GradientField& gf) {
  if (gf.grid() != model.config().grid)
    fail(ErrorKind::InvalidArgument, "vae: gradient field grid " + to_string(gf.grid()) +
                                         " does not match the model grid " + to_string(model.config().grid));
}

namespace {

torch::Tensor sample_eps(int64_t batch, int64_t dim, std::uint64_t seed, torch::Dtype dtype) {
  auto gen = at::detail::createCPUGenerator(seed);
  return torch::randn({batch, dim}, gen, torch::TensorOptions().dtype(dtype));
}

VaeLossReport report(const VaeTerms& t) {
  return {t.recon.mean().item<double>(), t.kl.mean().item<double>(), t.total.mean().item<double>()};
}

}  // namespace

VaeLossReport vae_loss(VaeModel& model, const GradientField& gf, std::uint64_t sample_seed) {
  check_input_shape(model, gf);
  torch::NoGradGuard ng;
  const auto x = regnet::to_tensor(gf, model.dtype());
  const auto eps = sample_eps(1, model.config().latent_dim, sample_seed, model.dtype());
  return report(model.terms(x, &eps));
}

double score(VaeModel& model, const GradientField& gf, const Mask* mask, std::optional<std::uint64_t> sample_seed) {
  check_input_shape(model, gf);
  torch::NoGradGuard ng;
  const GradientField g = mask ? apply_mask(gf, *mask) : gf;
  const auto x = regnet::to_tensor(g, model.dtype());
  if (sample_seed) {
    const auto eps = sample_eps(1, model.config().latent_dim, *sample_seed, model.dtype());
    return model.terms(x, &eps).total.item<double>();
  }
  return model.terms(x).total.item<double>();
}

torch::Tensor stack(const std::vector<GradientField>& fields) {
  require(!fields.empty(), "vae: empty dataset");
  const Grid g = fields.front().grid();
  auto out = torch::empty({static_cast<int64_t>(fields.size()), 4, g.rows, g.cols}, torch::kFloat);
  float* p = out.data_ptr<float>();
  for (const auto& f : fields) {
    require(f.grid() == g, "vae: dataset fields differ in grid size");
    for (const auto& ch : f.channel)
      for (double x : ch.values()) *p++ = static_cast<float>(x);
  }
  return out;
}

VaeLossReport evaluate(VaeModel& model, const torch::Tensor& data, int batch_size) {
  torch::NoGradGuard ng;
  const int64_t n = data.size(0);
  double r = 0, k = 0, t = 0;
  for (int64_t s = 0; s < n; s += batch_size) {
    const auto x = data.slice(0, s, std::min<int64_t>(n, s + batch_size)).to(model.dtype());
    const auto terms = model.terms(x);
    r += terms.recon.sum().item<double>();
    k += terms.kl.sum().item<double>();
    t += terms.total.sum().item<double>();
  }
  return {r / n, k / n, t / n};
}

VaeTrainResult train_vae(const std::vector<GradientField>& train, const std::vector<GradientField>& val,
                         const VaeConfig& cfg, const VaeTrainConfig& tc) {
  if (train.empty()) fail(ErrorKind::InvalidArgument, "train_vae: empty dataset");
  if (train.size() < tc.min_fields)
    fail(ErrorKind::InvalidArgument, "train_vae: need at least " + std::to_string(tc.min_fields) +
                                         " training fields, got " + std::to_string(train.size()));
  if (tc.epochs < 1 || tc.batch_size < 1 || !(tc.lr > 0)) fail(ErrorKind::Config, "train_vae: invalid schedule");
  const auto xtr = stack(train);
  const auto xval = val.empty() ? xtr : stack(val);
  require(xtr.size(2) == cfg.grid.rows && xtr.size(3) == cfg.grid.cols, "train_vae: data grid does not match config");
  const double rms = xtr.pow(2).mean().sqrt().item<double>();

  VaeTrainResult res{VaeModel(cfg, derive_seed(tc.seed, 1), rms > 1e-8 ? rms : 1.0), {}, 0, 0};
  VaeModel& model = res.model;
  torch::optim::Adam opt(model.net()->parameters(), torch::optim::AdamOptions(tc.lr));
  res.initial_val_total = evaluate(model, xval).total;

  Rng rng(derive_seed(tc.seed, 2));
  const int64_t n = xtr.size(0);
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::uint64_t batch_counter = 0;
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    model.net()->train();
    rng.shuffle(order);
    double sr = 0, sk = 0, st = 0;
    for (int64_t s = 0; s < n; s += tc.batch_size) {
      const int64_t e = std::min<int64_t>(n, s + tc.batch_size);
      const auto idx = torch::from_blob(order.data() + s, {e - s}, torch::kLong).clone();
      const auto x = xtr.index_select(0, idx);
      const auto eps = sample_eps(e - s, cfg.latent_dim, derive_seed(tc.seed, 1000 + batch_counter++), torch::kFloat);
      const auto t = model.terms(x, &eps);
      const auto loss = t.total.mean();
      const double lv = loss.item<double>();
      if (!std::isfinite(lv)) {
        std::ostringstream os;
        os << "train_vae: non-finite loss at epoch " << epoch << ", batch starting at " << s
           << " (recon=" << t.recon.mean().item<double>() << ", kl=" << t.kl.mean().item<double>() << ")";
        fail(ErrorKind::NonFinite, os.str());
      }
      opt.zero_grad();
      loss.backward();
      opt.step();
      sr += t.recon.sum().item<double>();
      sk += t.kl.sum().item<double>();
      st += t.total.sum().item<double>();
    }
    model.net()->eval();
    const auto v = evaluate(model, xval);
    if (!std::isfinite(v.total)) fail(ErrorKind::NonFinite, "train_vae: non-finite validation loss at epoch " + std::to_string(epoch));
    res.curve.push_back({epoch, sr / n, sk / n, st / n, v.recon, v.kl, v.total});
  }
  model.net()->eval();
  res.final_val_total = res.curve.back().val_total;
  return res;
}

void write_curve_csv(const fs::path& path, const std::vector<VaeEpochLog>& curve) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorKind::MissingInput, "cannot write " + path.string());
  os << "epoch,train_recon,train_kl,train_total,val_recon,val_kl,val_total\n";
  os << std::setprecision(9);
  for (const auto& e : curve)
    os << e.epoch << ',' << e.train_recon << ',' << e.train_kl << ',' << e.train_total << ',' << e.val_recon << ','
       << e.val_kl << ',' << e.val_total << '\n';
}

void save_vae(const fs::path& dir, const VaeModel& model, std::uint64_t train_seed) {
  const auto& c = model.config();
  io::json meta = {{"architecture", c.architecture()},
                   {"architecture_hash", io::git_hash_bytes(c.architecture())},
                   {"latent_dim", c.latent_dim},
                   {"beta", c.beta},
                   {"channels", c.channels},
                   {"grid", {c.grid.rows, c.grid.cols}},
                   {"normalisation", {{"input_scale", model.input_scale()}}},
                   {"recon_reduction", "sum over channels and pixels"},
                   {"kl_reduction", "sum over latent dims"},
                   {"training_seed", train_seed}};
  ckpt::save(dir, *model.net(), "vae", meta);
}

VaeModel load_vae(const fs::path& dir) {
  const auto m = ckpt::read_manifest(dir, "vae");
  VaeConfig c;
  double scale = 1.0;
  try {
    c.latent_dim = m.at("latent_dim").get<int>();
    c.beta = m.at("beta").get<double>();
    c.channels = m.at("channels").get<std::vector<int>>();
    c.grid = {m.at("grid").at(0).get<int>(), m.at("grid").at(1).get<int>()};
    scale = m.at("normalisation").at("input_scale").get<double>();
  } catch (const std::exception& e) {
    fail(ErrorKind::MalformedHeader, std::string("vae checkpoint manifest: ") + e.what());
  }
  if (m.value("architecture_hash", std::string{}) != io::git_hash_bytes(c.architecture()))
    fail(ErrorKind::VersionMismatch, "vae checkpoint architecture hash does not match this build");
  VaeModel model(c, 0, scale);
  ckpt::load_params(dir, *model.net(), m);
  model.net()->eval();
  return model;
}

}  // namespace cardioreg::vae

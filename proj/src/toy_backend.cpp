// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "aedit/toy_backend.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <tuple>

#include "aedit/errors.hpp"
#include "aedit/rng.hpp"
#include "aedit/safetensors.hpp"

namespace aedit {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using D = ToyDims;

constexpr std::size_t kHW = D::kLatentH * D::kLatentW;
constexpr std::size_t kPatch = D::kBlockF * D::kBlockT;
constexpr std::size_t kBands = D::kLatentH * D::kBlockF;
constexpr std::size_t kFrames = D::kLatentW * D::kBlockT;
constexpr int kFormatVersion = 1;

Eigen::Map<const RowMat> as_mat(const Tensor& t, std::size_t rows, std::size_t cols) {
  return {t.data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

Eigen::Map<const Vec> as_vec(const Tensor& t) {
  return {t.data.data(), static_cast<Eigen::Index>(t.numel())};
}

Tensor from_mat(const RowMat& m, Shape shape) {
  Tensor t(std::move(shape));
  std::copy(m.data(), m.data() + m.size(), t.data.begin());
  return t;
}

Tensor from_vec(const Vec& v) {
  Tensor t({static_cast<std::size_t>(v.size())});
  std::copy(v.data(), v.data() + v.size(), t.data.begin());
  return t;
}

// 3x3, stride 1, zero padding. Row index: channel * 9 + ky * 3 + kx.
RowMat im2col(const RowMat& x) {
  const auto channels = x.rows();
  RowMat cols = RowMat::Zero(channels * 9, static_cast<Eigen::Index>(kHW));
  const int H = static_cast<int>(D::kLatentH), W = static_cast<int>(D::kLatentW);
  for (Eigen::Index c = 0; c < channels; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const Eigen::Index row = c * 9 + ky * 3 + kx;
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          for (int xx = 0; xx < W; ++xx) {
            const int sx = xx + kx - 1;
            if (sx < 0 || sx >= W) continue;
            cols(row, y * W + xx) = x(c, sy * W + sx);
          }
        }
      }
  return cols;
}

RowMat col2im(const RowMat& cols, Eigen::Index channels) {
  RowMat x = RowMat::Zero(channels, static_cast<Eigen::Index>(kHW));
  const int H = static_cast<int>(D::kLatentH), W = static_cast<int>(D::kLatentW);
  for (Eigen::Index c = 0; c < channels; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const Eigen::Index row = c * 9 + ky * 3 + kx;
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          for (int xx = 0; xx < W; ++xx) {
            const int sx = xx + kx - 1;
            if (sx < 0 || sx >= W) continue;
            x(c, sy * W + sx) += cols(row, y * W + xx);
          }
        }
      }
  return x;
}

Vec timestep_features(int t) {
  Vec phi(static_cast<Eigen::Index>(D::kTimeDim));
  const std::size_t half = D::kTimeDim / 2;
  for (std::size_t k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / half);
    phi(static_cast<Eigen::Index>(k)) = std::sin(t * freq);
    phi(static_cast<Eigen::Index>(half + k)) = std::cos(t * freq);
  }
  return phi;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct MatrixSpec {
  const char* name;
  std::size_t out, in;
};

// LoRA-targetable conditioning matrices.
constexpr MatrixSpec kCondMatrices[] = {
    {"cond_proj", D::kCondDim, D::kSeqLen * D::kEmbedDim},
    {"film1_gamma", D::kHidden, D::kCondDim},
    {"film1_beta", D::kHidden, D::kCondDim},
    {"film2_gamma", D::kHidden, D::kCondDim},
    {"film2_beta", D::kHidden, D::kCondDim},
    {"freq_profile", D::kProfiles * D::kLatentH, D::kCondDim},
};

NamedTensors init_params(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "toy-denoiser-init"));
  NamedTensors p;
  auto add = [&](const std::string& name, Shape shape, double stddev) {
    p.emplace(name, rng.normal_tensor(shape, stddev));
  };
  const double h = static_cast<double>(D::kHidden);
  // Learned positional channels, initialised to linear and quadratic ramps in frequency and time.
  Tensor pos({D::kPosChannels, D::kLatentH, D::kLatentW});
  for (std::size_t y = 0; y < D::kLatentH; ++y)
    for (std::size_t x = 0; x < D::kLatentW; ++x) {
      const double fy = -1.0 + 2.0 * static_cast<double>(y) / (D::kLatentH - 1);
      const double tx = -1.0 + 2.0 * static_cast<double>(x) / (D::kLatentW - 1);
      const double ramps[4] = {fy, 2.0 * fy * fy - 1.0, tx, 2.0 * tx * tx - 1.0};
      for (std::size_t c = 0; c < D::kPosChannels; ++c) pos[(c * D::kLatentH + y) * D::kLatentW + x] = ramps[c % 4];
    }
  p.emplace("pos_embed", std::move(pos));
  add("conv1.weight", {D::kHidden, D::kLatentChannels + D::kPosChannels, 3, 3},
      std::sqrt(2.0 / ((D::kLatentChannels + D::kPosChannels) * 9)));
  p.emplace("conv1.bias", Tensor({D::kHidden}));
  p.emplace("pos_bias", Tensor({D::kHidden, D::kLatentH, D::kLatentW}));
  add("conv2.weight", {D::kHidden, D::kHidden, 3, 3}, std::sqrt(2.0 / (h * 9)));
  p.emplace("conv2.bias", Tensor({D::kHidden}));
  add("conv3.weight", {D::kLatentChannels, D::kHidden, 3, 3}, std::sqrt(1.0 / (h * 9)));
  p.emplace("conv3.bias", Tensor({D::kLatentChannels}));
  add("time_proj.weight", {D::kHidden, D::kTimeDim}, std::sqrt(1.0 / D::kTimeDim));
  p.emplace("time_proj.bias", Tensor({D::kHidden}));
  add("profile_mix1", {D::kHidden, D::kProfiles}, 1.0 / std::sqrt(D::kProfiles));
  add("profile_mix2", {D::kHidden, D::kProfiles}, 1.0 / std::sqrt(D::kProfiles));
  for (const char* name : {"time_film1", "time_film2"}) {
    add(std::string(name) + ".weight", {2 * D::kHidden, D::kTimeDim}, 0.1 / std::sqrt(D::kTimeDim));
    p.emplace(std::string(name) + ".bias", Tensor({2 * D::kHidden}));
  }
  for (const auto& m : kCondMatrices) {
    const double stddev = std::string(m.name) == "cond_proj" ? std::sqrt(1.0 / m.in) : 0.3 / std::sqrt(m.in);
    add(std::string(m.name) + ".weight", {m.out, m.in}, stddev);
    p.emplace(std::string(m.name) + ".bias", Tensor({m.out}));
  }
  return p;
}

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "a", "an", "the", "of", "with", "in", "on", "and", "at", "to", "is", "are", "sound",
      "sounds", "some", "from", "by", "for", "into", "background", "foreground", "while"};
  return words;
}

}  // namespace

// ---------------------------------------------------------------------------
// Text encoder

std::vector<std::string> ToyTextEncoder::tokenize(std::string_view prompt) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty() && !stopwords().contains(cur)) tokens.push_back(cur);
    cur.clear();
  };
  for (char ch : prompt) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

TextEmbedding ToyTextEncoder::encode(std::string_view prompt) const {
  TextEmbedding e{Tensor({D::kSeqLen, D::kEmbedDim}), EmbeddingRole::target};
  const auto tokens = tokenize(prompt);
  for (std::size_t i = 0; i < std::min(tokens.size(), D::kSeqLen); ++i) {
    Rng rng(derive_seed(0x7e47e0c0de, tokens[i]));
    for (std::size_t j = 0; j < D::kEmbedDim; ++j) e.values[i * D::kEmbedDim + j] = rng.normal();
  }
  return e;
}

// ---------------------------------------------------------------------------
// VAE

ToyVae::ToyVae(double log_floor)
    : mean_({kPatch}, log_floor / 2.0),
      basis_({D::kLatentChannels, kPatch}),
      scale_({D::kLatentChannels}, 4.0) {
  // Lowest-order separable DCT-II functions on a band x frame patch.
  const int orders[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  auto dct = [](int k, std::size_t n, std::size_t len) {
    const double norm = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(len));
    return norm * std::cos(M_PI * (2.0 * n + 1.0) * k / (2.0 * static_cast<double>(len)));
  };
  for (std::size_t c = 0; c < D::kLatentChannels; ++c)
    for (std::size_t i = 0; i < D::kBlockF; ++i)
      for (std::size_t j = 0; j < D::kBlockT; ++j)
        basis_[c * kPatch + i * D::kBlockT + j] =
            dct(orders[c][0], i, D::kBlockF) * dct(orders[c][1], j, D::kBlockT);
}

void ToyVae::fit(const std::vector<MelSpec>& corpus) {
  if (corpus.empty()) throw ValidationError("vae fit: empty corpus");
  Vec sum = Vec::Zero(kPatch);
  Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(kPatch, kPatch);
  std::size_t count = 0;
  Vec patch(kPatch);
  for (const MelSpec& raw : corpus) {
    const MelSpec mel = fit_mel_frames(raw, kFrames);
    if (mel.n_mels() != kBands) throw ValidationError("vae fit: wrong band count");
    for (std::size_t by = 0; by < D::kLatentH; ++by)
      for (std::size_t bx = 0; bx < D::kLatentW; ++bx) {
        for (std::size_t i = 0; i < D::kBlockF; ++i)
          for (std::size_t j = 0; j < D::kBlockT; ++j)
            patch(static_cast<Eigen::Index>(i * D::kBlockT + j)) = mel.at(by * D::kBlockF + i, bx * D::kBlockT + j);
        sum += patch;
        outer += patch * patch.transpose();
        ++count;
      }
  }
  const Vec mean = sum / static_cast<double>(count);
  const Eigen::MatrixXd cov = outer / static_cast<double>(count) - mean * mean.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  for (std::size_t i = 0; i < kPatch; ++i) mean_[i] = mean(static_cast<Eigen::Index>(i));
  for (std::size_t c = 0; c < D::kLatentChannels; ++c) {
    const Eigen::Index col = static_cast<Eigen::Index>(kPatch - 1 - c);  // eigenvalues ascend
    Vec v = solver.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    for (std::size_t i = 0; i < kPatch; ++i) basis_[c * kPatch + i] = v(static_cast<Eigen::Index>(i));
    scale_[c] = std::sqrt(std::max(solver.eigenvalues()(col), 1e-8));
  }
}

Latent ToyVae::encode(const MelSpec& raw) const {
  require_finite(raw.values, "encode");
  if (raw.n_mels() != kBands)
    throw ValidationError("encode: expected " + std::to_string(kBands) +
                          " mel bands, got " + std::to_string(raw.n_mels()));
  const MelSpec mel = fit_mel_frames(raw, kFrames);
  Latent z{Tensor({D::kLatentChannels, D::kLatentH, D::kLatentW}), LatentRole::z};
  for (std::size_t by = 0; by < D::kLatentH; ++by)
    for (std::size_t bx = 0; bx < D::kLatentW; ++bx)
      for (std::size_t c = 0; c < D::kLatentChannels; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < D::kBlockF; ++i)
          for (std::size_t j = 0; j < D::kBlockT; ++j) {
            const std::size_t k = i * D::kBlockT + j;
            acc += basis_[c * kPatch + k] * (mel.at(by * D::kBlockF + i, bx * D::kBlockT + j) - mean_[k]);
          }
        z.values[(c * D::kLatentH + by) * D::kLatentW + bx] = acc / scale_[c];
      }
  return z;
}

MelSpec ToyVae::decode(const Latent& z, const MelConfig& cfg) const {
  const Shape expected{D::kLatentChannels, D::kLatentH, D::kLatentW};
  if (z.values.shape != expected)
    throw ValidationError("decode: latent shape " + shape_str(z.values.shape) + " != " + shape_str(expected));
  require_finite(z.values, "decode");
  MelSpec mel{Tensor({kBands, kFrames}), cfg};
  for (std::size_t by = 0; by < D::kLatentH; ++by)
    for (std::size_t bx = 0; bx < D::kLatentW; ++bx)
      for (std::size_t i = 0; i < D::kBlockF; ++i)
        for (std::size_t j = 0; j < D::kBlockT; ++j) {
          const std::size_t k = i * D::kBlockT + j;
          double v = mean_[k];
          for (std::size_t c = 0; c < D::kLatentChannels; ++c)
            v += z.values[(c * D::kLatentH + by) * D::kLatentW + bx] * scale_[c] * basis_[c * kPatch + k];
          mel.at(by * D::kBlockF + i, bx * D::kBlockT + j) = std::max(v, cfg.log_floor);
        }
  return mel;
}

NamedTensors ToyVae::state() const {
  return {{"vae.mean", mean_}, {"vae.basis", basis_}, {"vae.scale", scale_}};
}

void ToyVae::load_state(const NamedTensors& state) {
  Tensor mean = state.at("vae.mean"), basis = state.at("vae.basis"), scale = state.at("vae.scale");
  if (mean.shape != mean_.shape || basis.shape != basis_.shape || scale.shape != scale_.shape)
    throw ValidationError("vae state has unexpected shapes");
  mean_ = std::move(mean);
  basis_ = std::move(basis);
  scale_ = std::move(scale);
}

// ---------------------------------------------------------------------------
// Denoiser

namespace {

struct Forward {
  Vec evec, phi, c, gamma1, beta1, gamma2, beta2;
  Vec tscale1, tshift1, tscale2, tshift2;  // timestep modulation
  Vec g1, g2;                              // combined per-channel scales
  Vec profile;                             // [kProfiles x kLatentH], row-major
  std::map<std::string, RowMat> eff;  // effective conditioning matrices
  RowMat cols0, h1pre, a1, cols1, h2pre, a2, cols2;
  RowMat out;
};

class DenoiserView {
 public:
  DenoiserView(const NamedTensors& params, const std::optional<LoRAAdapter>& adapter)
      : p_(params), adapter_(adapter) {}

  Forward forward(const Tensor& z_t, int t, const Tensor& e) const {
    Forward f;
    f.evec = as_vec(e);
    for (const auto& m : kCondMatrices) {
      RowMat w = as_mat(p_.at(std::string(m.name) + ".weight"), m.out, m.in);
      if (adapter_ && adapter_->params.contains(LoRAAdapter::a_key(m.name))) {
        const Tensor& a = adapter_->params.at(LoRAAdapter::a_key(m.name));
        const Tensor& b = adapter_->params.at(LoRAAdapter::b_key(m.name));
        const auto r = static_cast<std::size_t>(adapter_->rank);
        w.noalias() += adapter_->scaling() * (as_mat(b, m.out, r) * as_mat(a, r, m.in));
      }
      f.eff.emplace(m.name, std::move(w));
    }
    f.c = (f.eff.at("cond_proj") * f.evec + as_vec(p_.at("cond_proj.bias"))).array().tanh().matrix();
    f.gamma1 = (f.eff.at("film1_gamma") * f.c + as_vec(p_.at("film1_gamma.bias"))).array() + 1.0;
    f.beta1 = f.eff.at("film1_beta") * f.c + as_vec(p_.at("film1_beta.bias"));
    f.gamma2 = (f.eff.at("film2_gamma") * f.c + as_vec(p_.at("film2_gamma.bias"))).array() + 1.0;
    f.beta2 = f.eff.at("film2_beta") * f.c + as_vec(p_.at("film2_beta.bias"));
    f.profile = f.eff.at("freq_profile") * f.c + as_vec(p_.at("freq_profile.bias"));

    f.phi = timestep_features(t);
    auto time_mod = [&](const char* name, Vec& scale, Vec& shift) {
      const Vec m = as_mat(p_.at(std::string(name) + ".weight"), 2 * D::kHidden, D::kTimeDim) * f.phi +
                    as_vec(p_.at(std::string(name) + ".bias"));
      scale = m.head(static_cast<Eigen::Index>(D::kHidden)).array() + 1.0;
      shift = m.tail(static_cast<Eigen::Index>(D::kHidden));
    };
    time_mod("time_film1", f.tscale1, f.tshift1);
    time_mod("time_film2", f.tscale2, f.tshift2);
    f.g1 = f.gamma1.cwiseProduct(f.tscale1);
    f.g2 = f.gamma2.cwiseProduct(f.tscale2);
    const Vec temb = as_mat(p_.at("time_proj.weight"), D::kHidden, D::kTimeDim) * f.phi +
                     as_vec(p_.at("time_proj.bias"));

    RowMat x0(static_cast<Eigen::Index>(D::kLatentChannels + D::kPosChannels), static_cast<Eigen::Index>(kHW));
    for (std::size_t c = 0; c < D::kLatentChannels; ++c)
      for (std::size_t i = 0; i < kHW; ++i) x0(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)) = z_t[c * kHW + i];
    const Tensor& pos = p_.at("pos_embed");
    for (std::size_t c = 0; c < D::kPosChannels; ++c)
      for (std::size_t i = 0; i < kHW; ++i)
        x0(static_cast<Eigen::Index>(D::kLatentChannels + c), static_cast<Eigen::Index>(i)) = pos[c * kHW + i];

    f.cols0 = im2col(x0);
    f.h1pre = as_mat(p_.at("conv1.weight"), D::kHidden, (D::kLatentChannels + D::kPosChannels) * 9) * f.cols0;
    f.h1pre.colwise() += as_vec(p_.at("conv1.bias")) + temb;
    f.h1pre += as_mat(p_.at("pos_bias"), D::kHidden, kHW);
    f.a1 = (f.h1pre.array().colwise() * f.g1.array()).colwise() + (f.beta1 + f.tshift1).array();
    add_row_shift(f.a1, "profile_mix1", f.profile);
    const RowMat h1 = f.a1.unaryExpr([](double v) { return v * sigmoid(v); });

    f.cols1 = im2col(h1);
    f.h2pre = as_mat(p_.at("conv2.weight"), D::kHidden, D::kHidden * 9) * f.cols1;
    f.h2pre.colwise() += as_vec(p_.at("conv2.bias"));
    f.a2 = (f.h2pre.array().colwise() * f.g2.array()).colwise() + (f.beta2 + f.tshift2).array();
    add_row_shift(f.a2, "profile_mix2", f.profile);
    const RowMat h2 = f.a2.unaryExpr([](double v) { return v * sigmoid(v); });

    f.cols2 = im2col(h2);
    f.out = as_mat(p_.at("conv3.weight"), D::kLatentChannels, D::kHidden * 9) * f.cols2;
    f.out.colwise() += as_vec(p_.at("conv3.bias"));
    return f;
  }

  void backward(const Forward& f, const Tensor& d_out_t, unsigned targets, NoiseVjp& result) const {
    const bool base = targets & kGradBase;
    const bool lora = (targets & kGradAdapter) && adapter_.has_value();
    auto silu_grad = [](double v) {
      const double s = sigmoid(v);
      return s * (1.0 + v * (1.0 - s));
    };
    auto put = [&](const std::string& name, Tensor t) { result.d_params[name] = std::move(t); };

    const RowMat d_out = as_mat(d_out_t, D::kLatentChannels, kHW);
    const auto& w3 = p_.at("conv3.weight");
    if (base) {
      put("conv3.weight", from_mat(d_out * f.cols2.transpose(), w3.shape));
      put("conv3.bias", from_vec(d_out.rowwise().sum()));
    }
    const RowMat dh2 = col2im(as_mat(w3, D::kLatentChannels, D::kHidden * 9).transpose() * d_out,
                              static_cast<Eigen::Index>(D::kHidden));
    const RowMat da2 = dh2.cwiseProduct(f.a2.unaryExpr(silu_grad));
    const Vec dg2 = da2.cwiseProduct(f.h2pre).rowwise().sum();
    const Vec dgamma2 = dg2.cwiseProduct(f.tscale2);
    const Vec dbeta2 = da2.rowwise().sum();
    const RowMat ds2 = row_shift_grad(da2);
    const RowMat dh2pre = da2.array().colwise() * f.g2.array();

    const auto& w2 = p_.at("conv2.weight");
    if (base) {
      put("conv2.weight", from_mat(dh2pre * f.cols1.transpose(), w2.shape));
      put("conv2.bias", from_vec(dh2pre.rowwise().sum()));
    }
    const RowMat dh1 = col2im(as_mat(w2, D::kHidden, D::kHidden * 9).transpose() * dh2pre,
                              static_cast<Eigen::Index>(D::kHidden));
    const RowMat da1 = dh1.cwiseProduct(f.a1.unaryExpr(silu_grad));
    const Vec dg1 = da1.cwiseProduct(f.h1pre).rowwise().sum();
    const Vec dgamma1 = dg1.cwiseProduct(f.tscale1);
    const Vec dbeta1 = da1.rowwise().sum();
    const RowMat ds1 = row_shift_grad(da1);
    const RowMat dh1pre = da1.array().colwise() * f.g1.array();

    if (base) {
      const Vec dtemb = dh1pre.rowwise().sum();
      const auto& w1 = p_.at("conv1.weight");
      put("conv1.weight", from_mat(dh1pre * f.cols0.transpose(), w1.shape));
      const RowMat dx0 = col2im(as_mat(w1, D::kHidden, (D::kLatentChannels + D::kPosChannels) * 9).transpose() * dh1pre,
                                static_cast<Eigen::Index>(D::kLatentChannels + D::kPosChannels));
      put("pos_embed", from_mat(dx0.bottomRows(static_cast<Eigen::Index>(D::kPosChannels)),
                                {D::kPosChannels, D::kLatentH, D::kLatentW}));
      put("conv1.bias", from_vec(dtemb));
      put("pos_bias", from_mat(dh1pre, {D::kHidden, D::kLatentH, D::kLatentW}));
      put("time_proj.weight", from_mat(dtemb * f.phi.transpose(), p_.at("time_proj.weight").shape));
      put("time_proj.bias", from_vec(dtemb));
      const std::tuple<const char*, Vec, const Vec*> tfilm[] = {
          {"time_film1", dg1.cwiseProduct(f.gamma1), &dbeta1}, {"time_film2", dg2.cwiseProduct(f.gamma2), &dbeta2}};
      for (const auto& [name, dscale, dshift] : tfilm) {
        Vec dm(static_cast<Eigen::Index>(2 * D::kHidden));
        dm << dscale, *dshift;
        put(std::string(name) + ".weight", from_mat(dm * f.phi.transpose(), {2 * D::kHidden, D::kTimeDim}));
        put(std::string(name) + ".bias", from_vec(dm));
      }
    }

    const Eigen::Map<const RowMat> prof(f.profile.data(), D::kProfiles, D::kLatentH);
    if (base) {
      put("profile_mix1", from_mat(ds1 * prof.transpose(), {D::kHidden, D::kProfiles}));
      put("profile_mix2", from_mat(ds2 * prof.transpose(), {D::kHidden, D::kProfiles}));
    }
    const RowMat dprof_mat = as_mat(p_.at("profile_mix1"), D::kHidden, D::kProfiles).transpose() * ds1 +
                             as_mat(p_.at("profile_mix2"), D::kHidden, D::kProfiles).transpose() * ds2;
    const Vec dprof = Eigen::Map<const Vec>(dprof_mat.data(), dprof_mat.size());
    const std::pair<const char*, const Vec*> film[] = {{"film1_gamma", &dgamma1}, {"film1_beta", &dbeta1},
                                                       {"film2_gamma", &dgamma2}, {"film2_beta", &dbeta2},
                                                       {"freq_profile", &dprof}};
    Vec dc = Vec::Zero(static_cast<Eigen::Index>(D::kCondDim));
    std::map<std::string, RowMat> d_eff;
    for (const auto& [name, grad] : film) {
      dc.noalias() += f.eff.at(name).transpose() * (*grad);
      if (base || lora) d_eff[name] = (*grad) * f.c.transpose();
      if (base) put(std::string(name) + ".bias", from_vec(*grad));
    }
    const Vec du = dc.cwiseProduct((1.0 - f.c.array().square()).matrix());
    if (base || lora) d_eff["cond_proj"] = du * f.evec.transpose();
    if (base) put("cond_proj.bias", from_vec(du));
    if (targets & kGradEmbedding) {
      result.d_embedding = Tensor({D::kSeqLen, D::kEmbedDim});
      const Vec de = f.eff.at("cond_proj").transpose() * du;
      std::copy(de.data(), de.data() + de.size(), result.d_embedding.data.begin());
    }

    for (const auto& m : kCondMatrices) {
      if (base) put(std::string(m.name) + ".weight", from_mat(d_eff.at(m.name), {m.out, m.in}));
      if (lora && adapter_->params.contains(LoRAAdapter::a_key(m.name))) {
        const Tensor& a = adapter_->params.at(LoRAAdapter::a_key(m.name));
        const Tensor& b = adapter_->params.at(LoRAAdapter::b_key(m.name));
        const auto r = static_cast<std::size_t>(adapter_->rank);
        const double s = adapter_->scaling();
        const RowMat& g = d_eff.at(m.name);
        put(LoRAAdapter::a_key(m.name), from_mat(s * (as_mat(b, m.out, r).transpose() * g), a.shape));
        put(LoRAAdapter::b_key(m.name), from_mat(s * (g * as_mat(a, r, m.in).transpose()), b.shape));
      }
    }
  }

 private:
  // Text-driven shift per (channel, frequency row), broadcast over time.
  void add_row_shift(RowMat& a, const char* mix, const Vec& profile) const {
    const RowMat shift = as_mat(p_.at(mix), D::kHidden, D::kProfiles) *
                         Eigen::Map<const RowMat>(profile.data(), D::kProfiles, D::kLatentH);
    for (std::size_t y = 0; y < D::kLatentH; ++y)
      a.middleCols(static_cast<Eigen::Index>(y * D::kLatentW), D::kLatentW).colwise() +=
          shift.col(static_cast<Eigen::Index>(y));
  }

  // Returns d(shift) summed over time; accumulates the mix gradient when requested.
  RowMat row_shift_grad(const RowMat& da) const {
    RowMat ds(static_cast<Eigen::Index>(D::kHidden), static_cast<Eigen::Index>(D::kLatentH));
    for (std::size_t y = 0; y < D::kLatentH; ++y)
      ds.col(static_cast<Eigen::Index>(y)) =
          da.middleCols(static_cast<Eigen::Index>(y * D::kLatentW), D::kLatentW).rowwise().sum();
    return ds;
  }

  const NamedTensors& p_;
  const std::optional<LoRAAdapter>& adapter_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Backend

ToyBackend::ToyBackend(std::uint64_t seed, ScheduleConfig schedule, MelConfig mel)
    : seed_(seed), schedule_(schedule), mel_(mel), vae_(mel.log_floor), params_(init_params(seed)) {
  mel_.validate();
  if (static_cast<std::size_t>(mel_.n_mels) != kBands)
    throw ValidationError("toy backend requires 64 mel bands");
}

std::unique_ptr<DiffusionBackend> ToyBackend::clone() const { return std::make_unique<ToyBackend>(*this); }

Shape ToyBackend::latent_shape() const { return {D::kLatentChannels, D::kLatentH, D::kLatentW}; }
Shape ToyBackend::embedding_shape() const { return {D::kSeqLen, D::kEmbedDim}; }

Latent ToyBackend::encode(const MelSpec& mel) const { return vae_.encode(mel); }
MelSpec ToyBackend::decode(const Latent& z) const { return vae_.decode(z, mel_); }

TextEmbedding ToyBackend::encode_text(std::string_view prompt) const { return text_.encode(prompt); }

Tensor ToyBackend::predict_noise(const Tensor& z_t, int t, const Tensor& e) const {
  schedule_.require_step(t);
  if (z_t.shape != latent_shape()) throw ValidationError("predict_noise: latent shape " + shape_str(z_t.shape));
  if (e.shape != embedding_shape()) throw ValidationError("predict_noise: embedding shape " + shape_str(e.shape));
  const Forward f = DenoiserView(params_, adapter_).forward(z_t, t, e);
  return from_mat(f.out, latent_shape());
}

NoiseVjp ToyBackend::predict_noise_vjp(const Tensor& z_t, int t, const Tensor& e, const UpstreamFn& upstream,
                                       unsigned targets) const {
  schedule_.require_step(t);
  if (z_t.shape != latent_shape() || e.shape != embedding_shape())
    throw ValidationError("predict_noise_vjp: shape mismatch");
  if ((targets & kGradAdapter) && !adapter_) throw StateError("adapter gradients requested without an adapter");
  const DenoiserView view(params_, adapter_);
  const Forward f = view.forward(z_t, t, e);
  NoiseVjp result;
  result.prediction = from_mat(f.out, latent_shape());
  const Tensor d_out = upstream(result.prediction);
  require_same_shape(d_out, result.prediction, "upstream gradient");
  view.backward(f, d_out, targets, result);
  return result;
}

std::vector<std::string> ToyBackend::lora_target_names() const {
  std::vector<std::string> names;
  for (const auto& m : kCondMatrices) names.emplace_back(m.name);
  return names;
}

Shape ToyBackend::lora_target_shape(const std::string& target) const {
  for (const auto& m : kCondMatrices)
    if (target == m.name) return {m.out, m.in};
  throw ValidationError("unknown LoRA target '" + target + "'");
}

void ToyBackend::set_adapter(std::optional<LoRAAdapter> adapter) {
  if (adapter) {
    for (const auto& target : adapter->targets) {
      const Shape s = lora_target_shape(target);
      const auto r = static_cast<std::size_t>(adapter->rank);
      if (adapter->params.at(LoRAAdapter::a_key(target)).shape != Shape{r, s[1]} ||
          adapter->params.at(LoRAAdapter::b_key(target)).shape != Shape{s[0], r})
        throw ValidationError("adapter arrays for '" + target + "' have wrong shapes");
    }
  }
  adapter_ = std::move(adapter);
}

void ToyBackend::save(const std::filesystem::path& archive_path) const {
  ArrayArchive archive;
  for (const auto& [name, t] : params_) archive.arrays.emplace("denoiser." + name, t);
  for (auto& [name, t] : vae_.state()) archive.arrays.emplace(name, t);
  const nlohmann::json meta = {
      {"format_version", kFormatVersion},
      {"backend", id()},
      {"seed", seed_},
      {"schedule", {{"steps", schedule_.config().steps},
                    {"beta_start", schedule_.config().beta_start},
                    {"beta_end", schedule_.config().beta_end}}},
      {"mel", {{"sample_rate", mel_.sample_rate}, {"n_fft", mel_.n_fft}, {"hop", mel_.hop},
               {"n_mels", mel_.n_mels}, {"fmin", mel_.fmin}, {"fmax", mel_.fmax},
               {"log_floor", mel_.log_floor}, {"center", mel_.center}}},
      {"latent_shape", latent_shape()},
      {"embedding_shape", embedding_shape()},
      {"lineage", lineage()},
  };
  archive.metadata["aedit"] = meta.dump();
  save_archive(archive_path, archive);

  nlohmann::json sidecar = meta;
  for (const auto& [name, t] : archive.arrays) sidecar["arrays"][name] = t.shape;
  auto sidecar_path = archive_path;
  sidecar_path.replace_extension(".json");
  std::ofstream out(sidecar_path);
  if (!out) throw IoError("cannot write " + sidecar_path.string());
  out << sidecar.dump(2) << '\n';
}

ToyBackend ToyBackend::load(const std::filesystem::path& archive_path) {
  ArrayArchive archive = load_archive(archive_path);
  if (!archive.metadata.contains("aedit")) throw IoError(archive_path.string() + ": missing backend metadata");
  const auto meta = nlohmann::json::parse(archive.metadata.at("aedit"));
  if (meta.at("format_version").get<int>() != kFormatVersion)
    throw IoError(archive_path.string() + ": unsupported checkpoint version");
  ScheduleConfig sched{meta["schedule"]["steps"].get<int>(), meta["schedule"]["beta_start"].get<double>(),
                       meta["schedule"]["beta_end"].get<double>()};
  const auto& m = meta["mel"];
  MelConfig mel{m["sample_rate"], m["n_fft"], m["hop"], m["n_mels"], m["fmin"], m["fmax"], m["log_floor"], m["center"]};
  ToyBackend backend(meta.at("seed").get<std::uint64_t>(), sched, mel);
  for (auto& [name, t] : backend.params_) {
    auto it = archive.arrays.find("denoiser." + name);
    if (it == archive.arrays.end() || it->second.shape != t.shape)
      throw IoError(archive_path.string() + ": missing or misshaped parameter " + name);
    t = std::move(it->second);
  }
  backend.vae_.load_state(archive.arrays);
  backend.set_lineage(meta.value("lineage", ""));
  return backend;
}

}  // namespace aedit

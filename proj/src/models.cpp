#include "iad/models.hpp"

#include <cmath>
#include <sstream>

namespace iad {

namespace {

constexpr std::uint64_t kNoiseTag = 0x76616520657073ULL;  // noise stream family

FlatParams slice_params(const FlatParams& combined, const ParamLayout& sub,
                        std::size_t offset) {
  FlatParams out{sub, Vector(combined.values.begin() + static_cast<std::ptrdiff_t>(offset),
                             combined.values.begin() +
                                 static_cast<std::ptrdiff_t>(offset + sub.total_size()))};
  return out;
}

}  // namespace

VaeModel VaeModel::make(MlpSpec encoder, MlpSpec decoder, std::size_t latent_dim,
                        std::size_t mc_samples) {
  encoder.validate();
  decoder.validate();
  if (latent_dim == 0) throw ConfigError("vae: latent_dim must be >= 1");
  if (mc_samples == 0) throw ConfigError("vae: mc_samples (l) must be >= 1");
  if (encoder.output_dim() != 2 * latent_dim) {
    throw ConfigError("vae: encoder output width " + std::to_string(encoder.output_dim()) +
                      " must equal 2*latent_dim = " + std::to_string(2 * latent_dim));
  }
  if (decoder.input_dim() != latent_dim) {
    throw ConfigError("vae: decoder input width " + std::to_string(decoder.input_dim()) +
                      " must equal latent_dim = " + std::to_string(latent_dim));
  }
  if (decoder.output_dim() != encoder.input_dim()) {
    throw ConfigError("vae: decoder output width " + std::to_string(decoder.output_dim()) +
                      " must equal data dim = " + std::to_string(encoder.input_dim()));
  }
  VaeModel model;
  model.encoder = std::move(encoder);
  model.decoder = std::move(decoder);
  model.latent_dim = latent_dim;
  model.mc_samples = mc_samples;
  model.layout = ParamLayout::concat(ParamLayout::for_spec(model.encoder),
                                     ParamLayout::for_spec(model.decoder));
  return model;
}

std::size_t VaeModel::encoder_param_count() const {
  return ParamLayout::for_spec(encoder).total_size();
}

FlatParams VaeModel::init(Rng& rng) const {
  FlatParams enc = init_params(encoder, rng);
  FlatParams dec = init_params(decoder, rng);
  FlatParams out{layout, Vector()};
  out.values.reserve(layout.total_size());
  out.values.insert(out.values.end(), enc.values.begin(), enc.values.end());
  out.values.insert(out.values.end(), dec.values.begin(), dec.values.end());
  return out;
}

std::string VaeModel::describe() const {
  std::ostringstream os;
  os << "vae{enc=" << encoder.describe() << "|dec=" << decoder.describe()
     << "|latent=" << latent_dim << "|l=" << mc_samples << "}";
  return os.str();
}

VaeEncoding vae_encode(const VaeModel& model, const FlatParams& params,
                       std::span<const double> x) {
  if (x.size() != model.data_dim()) {
    throw ShapeError("vae_encode: sample dim " + std::to_string(x.size()) +
                     " does not match data dim " + std::to_string(model.data_dim()));
  }
  const ParamLayout enc_layout = ParamLayout::for_spec(model.encoder);
  const FlatParams enc = slice_params(params, enc_layout, 0);
  Matrix in(1, x.size(), Vector(x.begin(), x.end()));
  const Matrix h = mlp_forward(model.encoder, enc, in);
  if (!h.all_finite()) {
    throw NumericError("vae encoder produced a non-finite output");
  }
  VaeEncoding out;
  const std::size_t latent = model.latent_dim;
  out.mu.assign(h.row(0).begin(), h.row(0).begin() + static_cast<std::ptrdiff_t>(latent));
  out.sigma.resize(latent);
  for (std::size_t j = 0; j < latent; ++j) {
    out.sigma[j] = std::exp(0.5 * h.at(0, latent + j));
  }
  return out;
}

double kl_diag_gaussian(std::span<const double> mu, std::span<const double> sigma) {
  if (mu.size() != sigma.size()) {
    throw ShapeError("kl_diag_gaussian: mu and sigma lengths differ");
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < mu.size(); ++j) {
    if (!(sigma[j] > 0.0)) {
      throw NumericError("kl_diag_gaussian: sigma must be positive, got " +
                         std::to_string(sigma[j]) + " at index " + std::to_string(j));
    }
    const double s2 = sigma[j] * sigma[j];
    acc += mu[j] * mu[j] + s2 - 1.0 - std::log(s2);
  }
  // The summand is analytically >= 0; only rounding can push the total below.
  return 0.5 * std::max(acc, 0.0);
}

namespace {

struct VaeForward {
  FlatParams enc_params;
  FlatParams dec_params;
  ForwardTrace enc_trace;
  Matrix enc_out;  // 1 x 2L
  Vector mu;
  Vector sigma;
};

VaeForward vae_encode_traced(const VaeModel& model, const FlatParams& params,
                             std::span<const double> x) {
  if (x.size() != model.data_dim()) {
    throw ShapeError("vae loss: sample dim " + std::to_string(x.size()) +
                     " does not match data dim " + std::to_string(model.data_dim()));
  }
  VaeForward f;
  const ParamLayout enc_layout = ParamLayout::for_spec(model.encoder);
  const ParamLayout dec_layout = ParamLayout::for_spec(model.decoder);
  f.enc_params = slice_params(params, enc_layout, 0);
  f.dec_params = slice_params(params, dec_layout, enc_layout.total_size());
  Matrix in(1, x.size(), Vector(x.begin(), x.end()));
  f.enc_out = mlp_forward_traced(model.encoder, f.enc_params, in, f.enc_trace);
  // trace.input must outlive backward; stash the input inside the struct.
  const std::size_t latent = model.latent_dim;
  f.mu.assign(f.enc_out.row(0).begin(),
              f.enc_out.row(0).begin() + static_cast<std::ptrdiff_t>(latent));
  f.sigma.resize(latent);
  for (std::size_t j = 0; j < latent; ++j) {
    f.sigma[j] = std::exp(0.5 * f.enc_out.at(0, latent + j));
  }
  return f;
}

void check_noise_shape(const VaeModel& model, const Matrix& eps) {
  if (eps.rows() != model.mc_samples || eps.cols() != model.latent_dim) {
    throw ShapeError("vae noise matrix is " + std::to_string(eps.rows()) + "x" +
                     std::to_string(eps.cols()) + ", expected " +
                     std::to_string(model.mc_samples) + "x" +
                     std::to_string(model.latent_dim));
  }
}

}  // namespace

double vae_loss_with_noise(const VaeModel& model, const FlatParams& params,
                           std::span<const double> x, const Matrix& eps) {
  check_noise_shape(model, eps);
  // Rebuild the encoder pass without keeping traces.
  const VaeEncoding enc = vae_encode(model, params, x);
  const ParamLayout dec_layout = ParamLayout::for_spec(model.decoder);
  const FlatParams dec =
      slice_params(params, dec_layout, ParamLayout::for_spec(model.encoder).total_size());

  const std::size_t latent = model.latent_dim;
  const std::size_t l = model.mc_samples;
  double recon = 0.0;
  for (std::size_t s = 0; s < l; ++s) {
    Matrix z(1, latent);
    for (std::size_t j = 0; j < latent; ++j) {
      z.at(0, j) = enc.mu[j] + enc.sigma[j] * eps.at(s, j);
    }
    const Matrix xt = mlp_forward(model.decoder, dec, z);
    double err = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double d = xt.at(0, j) - x[j];
      err += d * d;
    }
    recon += 0.5 * err;
  }
  recon /= static_cast<double>(l);
  return recon + kl_diag_gaussian(enc.mu, enc.sigma);
}

FlatParams vae_gradient_with_noise(const VaeModel& model, const FlatParams& params,
                                   std::span<const double> x, const Matrix& eps) {
  check_noise_shape(model, eps);
  VaeForward f = vae_encode_traced(model, params, x);
  const std::size_t latent = model.latent_dim;
  const std::size_t l = model.mc_samples;
  const std::size_t enc_size = f.enc_params.layout.total_size();
  const double inv_l = 1.0 / static_cast<double>(l);

  FlatParams grad{model.layout, Vector(model.layout.total_size(), 0.0)};
  std::span<double> grad_enc(grad.values.data(), enc_size);
  std::span<double> grad_dec(grad.values.data() + enc_size,
                             grad.values.size() - enc_size);

  Vector d_mu(latent, 0.0);
  Vector d_logvar(latent, 0.0);

  for (std::size_t s = 0; s < l; ++s) {
    Matrix z(1, latent);
    for (std::size_t j = 0; j < latent; ++j) {
      z.at(0, j) = f.mu[j] + f.sigma[j] * eps.at(s, j);
    }
    ForwardTrace dec_trace;
    const Matrix xt = mlp_forward_traced(model.decoder, f.dec_params, z, dec_trace);

    Matrix d_xt(1, x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
      d_xt.at(0, j) = (xt.at(0, j) - x[j]) * inv_l;
    }
    Matrix d_z;
    mlp_backward(model.decoder, f.dec_params, dec_trace, d_xt, grad_dec, &d_z);
    for (std::size_t j = 0; j < latent; ++j) {
      d_mu[j] += d_z.at(0, j);
      // z = mu + exp(0.5*lv) * eps  =>  dz/dlv = 0.5 * sigma * eps
      d_logvar[j] += d_z.at(0, j) * eps.at(s, j) * 0.5 * f.sigma[j];
    }
  }

  // KL term: 0.5 * sum(mu^2 + exp(lv) - 1 - lv).
  for (std::size_t j = 0; j < latent; ++j) {
    d_mu[j] += f.mu[j];
    d_logvar[j] += 0.5 * (f.sigma[j] * f.sigma[j] - 1.0);
  }

  Matrix d_h(1, 2 * latent);
  for (std::size_t j = 0; j < latent; ++j) {
    d_h.at(0, j) = d_mu[j];
    d_h.at(0, latent + j) = d_logvar[j];
  }
  mlp_backward(model.encoder, f.enc_params, f.enc_trace, d_h, grad_enc, nullptr);
  return grad;
}

double vae_loss(const VaeModel& model, const FlatParams& params,
                std::span<const double> x, Rng& rng) {
  const Matrix eps = gaussian_sample(rng, model.mc_samples, model.latent_dim);
  return vae_loss_with_noise(model, params, x, eps);
}

double reconstruction_score(const VaeModel& model, const FlatParams& params,
                            std::span<const double> x) {
  const VaeEncoding enc = vae_encode(model, params, x);
  const ParamLayout dec_layout = ParamLayout::for_spec(model.decoder);
  const FlatParams dec =
      slice_params(params, dec_layout, ParamLayout::for_spec(model.encoder).total_size());
  Matrix z(1, model.latent_dim, Vector(enc.mu.begin(), enc.mu.end()));
  const Matrix xt = mlp_forward(model.decoder, dec, z);
  double err = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x[j] - xt.at(0, j);
    err += d * d;
  }
  return err;
}

DsvddModel DsvddModel::make(MlpSpec encoder) {
  encoder.validate();
  encoder.final_bias = false;  // hypersphere center absorbs any offset
  DsvddModel model;
  model.encoder = std::move(encoder);
  model.center.assign(model.encoder.output_dim(), 0.0);
  return model;
}

FlatParams DsvddModel::init(Rng& rng) const { return init_params(encoder, rng); }

std::string DsvddModel::describe() const {
  return "dsvdd{enc=" + encoder.describe() + "}";
}

Vector dsvdd_center_init(const DsvddModel& model, const FlatParams& params,
                         const Matrix& train) {
  if (train.rows() == 0) {
    throw DataError("dsvdd_center_init: training set is empty");
  }
  const Matrix out = mlp_forward(model.encoder, params, train);
  Vector c(model.latent_dim(), 0.0);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t j = 0; j < c.size(); ++j) c[j] += out.at(r, j);
  }
  const double inv = 1.0 / static_cast<double>(out.rows());
  for (double& v : c) v *= inv;
  for (double& v : c) {
    if (std::abs(v) < 0.1) v = (v < 0.0) ? -0.1 : 0.1;
  }
  return c;
}

double dsvdd_loss(const DsvddModel& model, const FlatParams& params,
                  std::span<const double> x) {
  Matrix in(1, x.size(), Vector(x.begin(), x.end()));
  const Matrix out = mlp_forward(model.encoder, params, in);
  double acc = 0.0;
  for (std::size_t j = 0; j < model.center.size(); ++j) {
    const double d = out.at(0, j) - model.center[j];
    acc += d * d;
  }
  return acc;
}

// ---- MseLoss -------------------------------------------------------------

MseLoss::MseLoss(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.input_dim() != spec_.output_dim()) {
    throw ConfigError("mse loss needs input dim == output dim, got " +
                      std::to_string(spec_.input_dim()) + " vs " +
                      std::to_string(spec_.output_dim()));
  }
  layout_ = ParamLayout::for_spec(spec_);
}

double MseLoss::loss(const FlatParams& params, std::span<const double> sample,
                     NoiseKey) const {
  Matrix in(1, sample.size(), Vector(sample.begin(), sample.end()));
  const Matrix y = mlp_forward(spec_, params, in);
  double acc = 0.0;
  for (std::size_t j = 0; j < sample.size(); ++j) {
    const double d = y.at(0, j) - sample[j];
    acc += d * d;
  }
  return 0.5 * acc;
}

FlatParams MseLoss::gradient(const FlatParams& params, std::span<const double> sample,
                             NoiseKey) const {
  Matrix in(1, sample.size(), Vector(sample.begin(), sample.end()));
  ForwardTrace trace;
  const Matrix y = mlp_forward_traced(spec_, params, in, trace);
  Matrix d_out(1, sample.size());
  for (std::size_t j = 0; j < sample.size(); ++j) {
    d_out.at(0, j) = y.at(0, j) - sample[j];
  }
  FlatParams grad{layout_, Vector(layout_.total_size(), 0.0)};
  mlp_backward(spec_, params, trace, d_out, grad.values, nullptr);
  return grad;
}

// ---- VaeElboLoss -----------------------------------------------------------

VaeElboLoss::VaeElboLoss(VaeModel model) : model_(std::move(model)) {}

Matrix VaeElboLoss::noise_for(std::span<const double> sample, NoiseKey key) const {
  Rng rng = Rng(key.seed).derive({kNoiseTag, key.stream, hash_sample(sample)});
  return gaussian_sample(rng, model_.mc_samples, model_.latent_dim);
}

double VaeElboLoss::loss(const FlatParams& params, std::span<const double> sample,
                         NoiseKey key) const {
  return vae_loss_with_noise(model_, params, sample, noise_for(sample, key));
}

FlatParams VaeElboLoss::gradient(const FlatParams& params, std::span<const double> sample,
                                 NoiseKey key) const {
  return vae_gradient_with_noise(model_, params, sample, noise_for(sample, key));
}

FlatParams VaeElboLoss::batch_gradient(const FlatParams& params, const Matrix& batch,
                                       NoiseKey key, double* mean_loss) const {
  const std::size_t n = batch.rows();
  if (n == 0) {
    if (mean_loss) *mean_loss = 0.0;
    return {model_.layout, Vector(model_.layout.total_size(), 0.0)};
  }
  if (batch.cols() != model_.data_dim()) {
    throw ShapeError("vae batch gradient: batch has " + std::to_string(batch.cols()) +
                     " columns, data dim is " + std::to_string(model_.data_dim()));
  }
  const std::size_t latent = model_.latent_dim;
  const std::size_t l = model_.mc_samples;
  const std::size_t d = model_.data_dim();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_l = 1.0 / static_cast<double>(l);

  const ParamLayout enc_layout = ParamLayout::for_spec(model_.encoder);
  const ParamLayout dec_layout = ParamLayout::for_spec(model_.decoder);
  const FlatParams enc_params = FlatParams{
      enc_layout, Vector(params.values.begin(),
                         params.values.begin() +
                             static_cast<std::ptrdiff_t>(enc_layout.total_size()))};
  const FlatParams dec_params = FlatParams{
      dec_layout, Vector(params.values.begin() +
                             static_cast<std::ptrdiff_t>(enc_layout.total_size()),
                         params.values.end())};

  ForwardTrace enc_trace;
  const Matrix h = mlp_forward_traced(model_.encoder, enc_params, batch, enc_trace);

  Matrix sigma(n, latent);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < latent; ++j) {
      sigma.at(r, j) = std::exp(0.5 * h.at(r, latent + j));
    }
  }

  // Per-row noise keyed by sample content, identical to the per-sample path.
  std::vector<Matrix> eps(n);
  for (std::size_t r = 0; r < n; ++r) eps[r] = noise_for(batch.row(r), key);

  FlatParams grad{model_.layout, Vector(model_.layout.total_size(), 0.0)};
  std::span<double> grad_enc(grad.values.data(), enc_layout.total_size());
  std::span<double> grad_dec(grad.values.data() + enc_layout.total_size(),
                             dec_layout.total_size());

  Matrix d_h(n, 2 * latent);
  double recon_acc = 0.0;
  for (std::size_t s = 0; s < l; ++s) {
    Matrix z(n, latent);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < latent; ++j) {
        z.at(r, j) = h.at(r, j) + sigma.at(r, j) * eps[r].at(s, j);
      }
    }
    ForwardTrace dec_trace;
    const Matrix xt = mlp_forward_traced(model_.decoder, dec_params, z, dec_trace);
    Matrix d_xt(n, d);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = xt.at(r, j) - batch.at(r, j);
        recon_acc += 0.5 * diff * diff;
        d_xt.at(r, j) = diff * inv_l * inv_n;
      }
    }
    Matrix d_z;
    mlp_backward(model_.decoder, dec_params, dec_trace, d_xt, grad_dec, &d_z);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < latent; ++j) {
        d_h.at(r, j) += d_z.at(r, j);
        d_h.at(r, latent + j) += d_z.at(r, j) * eps[r].at(s, j) * 0.5 * sigma.at(r, j);
      }
    }
  }

  double kl_acc = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < latent; ++j) {
      const double mu = h.at(r, j);
      const double s2 = sigma.at(r, j) * sigma.at(r, j);
      kl_acc += 0.5 * (mu * mu + s2 - 1.0 - std::log(s2));
      d_h.at(r, j) += mu * inv_n;
      d_h.at(r, latent + j) += 0.5 * (s2 - 1.0) * inv_n;
    }
  }
  mlp_backward(model_.encoder, enc_params, enc_trace, d_h, grad_enc, nullptr);

  if (mean_loss) *mean_loss = (recon_acc * inv_l + kl_acc) * inv_n;
  return grad;
}

// ---- DsvddLoss -------------------------------------------------------------

DsvddLoss::DsvddLoss(DsvddModel model) : model_(std::move(model)) {
  if (model_.center.size() != model_.latent_dim()) {
    throw ConfigError("dsvdd loss: center dim " + std::to_string(model_.center.size()) +
                      " does not match latent dim " + std::to_string(model_.latent_dim()));
  }
  layout_ = ParamLayout::for_spec(model_.encoder);
}

double DsvddLoss::loss(const FlatParams& params, std::span<const double> sample,
                       NoiseKey) const {
  return dsvdd_loss(model_, params, sample);
}

FlatParams DsvddLoss::gradient(const FlatParams& params, std::span<const double> sample,
                               NoiseKey) const {
  Matrix in(1, sample.size(), Vector(sample.begin(), sample.end()));
  ForwardTrace trace;
  const Matrix out = mlp_forward_traced(model_.encoder, params, in, trace);
  Matrix d_out(1, out.cols());
  for (std::size_t j = 0; j < out.cols(); ++j) {
    d_out.at(0, j) = 2.0 * (out.at(0, j) - model_.center[j]);
  }
  FlatParams grad{layout_, Vector(layout_.total_size(), 0.0)};
  mlp_backward(model_.encoder, params, trace, d_out, grad.values, nullptr);
  return grad;
}

std::unique_ptr<SampleLoss> make_loss(const std::string& kind, const VaeModel* vae,
                                      const DsvddModel* dsvdd, const MlpSpec* autoencoder) {
  if (kind == "vae-elbo") {
    if (!vae) throw ConfigError("loss vae-elbo requires a VAE model");
    return std::make_unique<VaeElboLoss>(*vae);
  }
  if (kind == "dsvdd") {
    if (!dsvdd) throw ConfigError("loss dsvdd requires a DSVDD model");
    return std::make_unique<DsvddLoss>(*dsvdd);
  }
  if (kind == "mse") {
    if (!autoencoder) throw ConfigError("loss mse requires an autoencoder spec");
    return std::make_unique<MseLoss>(*autoencoder);
  }
  throw ConfigError("unknown loss descriptor '" + kind +
                    "' (expected vae-elbo, dsvdd or mse)");
}

FlatParams per_sample_gradient(const SampleLoss& loss, const FlatParams& params,
                               std::span<const double> sample, NoiseKey key) {
  if (sample.size() != loss.sample_dim()) {
    throw ShapeError("per_sample_gradient: sample dim " + std::to_string(sample.size()) +
                     " does not match loss input dim " +
                     std::to_string(loss.sample_dim()));
  }
  return loss.gradient(params, sample, key);
}

}  // namespace iad

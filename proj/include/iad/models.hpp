#pragma once

#include <memory>
#include <span>
#include <string>

#include "iad/loss.hpp"
#include "iad/mlp.hpp"

namespace iad {

// Gaussian-prior VAE with diagonal posterior. The encoder emits
// [mu | log sigma^2] (first half / second half of its output layer), the
// decoder maps latents back to data space with unit output variance, so the
// reconstruction term of the loss is plain squared error over 2.
struct VaeModel {
  MlpSpec encoder;       // d -> ... -> 2 * latent_dim
  MlpSpec decoder;       // latent_dim -> ... -> d
  std::size_t latent_dim = 0;
  std::size_t mc_samples = 1;  // l: Monte-Carlo draws per loss evaluation

  ParamLayout layout;    // encoder segments then decoder segments

  static VaeModel make(MlpSpec encoder, MlpSpec decoder, std::size_t latent_dim,
                       std::size_t mc_samples);

  std::size_t data_dim() const { return encoder.input_dim(); }
  std::size_t encoder_param_count() const;

  FlatParams init(Rng& rng) const;
  std::string describe() const;
};

struct VaeEncoding {
  Vector mu;
  Vector sigma;  // exp(0.5 * logvar head), strictly positive
};

VaeEncoding vae_encode(const VaeModel& model, const FlatParams& params,
                       std::span<const double> x);

// 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2), KL(N(mu, diag sigma^2) || N(0, I)).
// Throws NumericError if any sigma <= 0.
double kl_diag_gaussian(std::span<const double> mu, std::span<const double> sigma);

// Loss with caller-supplied reparameterization noise (mc_samples x latent_dim).
// Finite-difference checks rely on holding eps fixed while perturbing params.
double vae_loss_with_noise(const VaeModel& model, const FlatParams& params,
                           std::span<const double> x, const Matrix& eps);
FlatParams vae_gradient_with_noise(const VaeModel& model, const FlatParams& params,
                                   std::span<const double> x, const Matrix& eps);

// Convenience overload drawing eps from the rng.
double vae_loss(const VaeModel& model, const FlatParams& params,
                std::span<const double> x, Rng& rng);

// Eq.-7-style anomaly score: squared reconstruction error at the posterior
// mean (z = mu(x), no sampling). Higher = more anomalous.
double reconstruction_score(const VaeModel& model, const FlatParams& params,
                            std::span<const double> x);

// Deep-SVDD: encoder to latent space, distance to a fixed center c.
struct DsvddModel {
  MlpSpec encoder;  // d -> ... -> latent_dim, final layer without bias
  Vector center;    // fixed after initialization, excluded from gradients

  static DsvddModel make(MlpSpec encoder);

  std::size_t data_dim() const { return encoder.input_dim(); }
  std::size_t latent_dim() const { return encoder.output_dim(); }

  FlatParams init(Rng& rng) const;
  std::string describe() const;
};

// c = mean encoder output over the training set at the given params; any
// coordinate with |c_j| < 0.1 is pushed to +-0.1 (sign kept, +0.1 at zero).
Vector dsvdd_center_init(const DsvddModel& model, const FlatParams& params,
                         const Matrix& train);

// ||f_theta(x) - c||^2; doubles as the plain DSVDD anomaly score.
double dsvdd_loss(const DsvddModel& model, const FlatParams& params,
                  std::span<const double> x);

// ---- SampleLoss families ----------------------------------------------

// 0.5 * ||f_theta(x) - x||^2 autoencoder reconstruction (`mse`).
class MseLoss final : public SampleLoss {
 public:
  explicit MseLoss(MlpSpec spec);

  double loss(const FlatParams& params, std::span<const double> sample,
              NoiseKey key) const override;
  FlatParams gradient(const FlatParams& params, std::span<const double> sample,
                      NoiseKey key) const override;
  const ParamLayout& layout() const override { return layout_; }
  std::size_t sample_dim() const override { return spec_.input_dim(); }
  std::string name() const override { return "mse"; }

 private:
  MlpSpec spec_;
  ParamLayout layout_;
};

// Eq.-5 ELBO loss with l-draw Monte-Carlo reconstruction averaging
// (`vae-elbo`). Noise is keyed by (key.seed, key.stream, hash(sample)).
class VaeElboLoss final : public SampleLoss {
 public:
  explicit VaeElboLoss(VaeModel model);

  double loss(const FlatParams& params, std::span<const double> sample,
              NoiseKey key) const override;
  FlatParams gradient(const FlatParams& params, std::span<const double> sample,
                      NoiseKey key) const override;
  const ParamLayout& layout() const override { return model_.layout; }
  std::size_t sample_dim() const override { return model_.data_dim(); }
  std::string name() const override { return "vae-elbo"; }

  const VaeModel& model() const { return model_; }
  Matrix noise_for(std::span<const double> sample, NoiseKey key) const;

  // Batched sweep over all rows at once; the minibatch hot path.
  FlatParams batch_gradient(const FlatParams& params, const Matrix& batch, NoiseKey key,
                            double* mean_loss = nullptr) const override;

 private:
  VaeModel model_;
};

// ||f_theta(x) - c||^2 with fixed center (`dsvdd`).
class DsvddLoss final : public SampleLoss {
 public:
  explicit DsvddLoss(DsvddModel model);

  double loss(const FlatParams& params, std::span<const double> sample,
              NoiseKey key) const override;
  FlatParams gradient(const FlatParams& params, std::span<const double> sample,
                      NoiseKey key) const override;
  const ParamLayout& layout() const override { return layout_; }
  std::size_t sample_dim() const override { return model_.data_dim(); }
  std::string name() const override { return "dsvdd"; }

  const DsvddModel& model() const { return model_; }

 private:
  DsvddModel model_;
  ParamLayout layout_;
};

// Facade over the named loss descriptors. Unknown names -> ConfigError.
// vae-elbo requires `vae`, dsvdd requires `dsvdd`, mse an autoencoder spec.
std::unique_ptr<SampleLoss> make_loss(const std::string& kind, const VaeModel* vae,
                                      const DsvddModel* dsvdd,
                                      const MlpSpec* autoencoder = nullptr);

// Spec-named per-sample gradient entry point over the production families.
FlatParams per_sample_gradient(const SampleLoss& loss, const FlatParams& params,
                               std::span<const double> sample, NoiseKey key);

}  // namespace iad

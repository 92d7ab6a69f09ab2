#include "iad/loss.hpp"

namespace iad {

double SampleLoss::batch_loss(const FlatParams& params, const Matrix& batch,
                              NoiseKey key) const {
  double acc = 0.0;
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    acc += loss(params, batch.row(r), key);
  }
  return batch.rows() ? acc / static_cast<double>(batch.rows()) : 0.0;
}

FlatParams SampleLoss::batch_gradient(const FlatParams& params, const Matrix& batch,
                                      NoiseKey key, double* mean_loss) const {
  FlatParams acc{layout(), Vector(layout().total_size(), 0.0)};
  double loss_acc = 0.0;
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const FlatParams g = gradient(params, batch.row(r), key);
    for (std::size_t i = 0; i < acc.values.size(); ++i) acc.values[i] += g.values[i];
    if (mean_loss) loss_acc += loss(params, batch.row(r), key);
  }
  if (batch.rows() > 0) {
    const double inv = 1.0 / static_cast<double>(batch.rows());
    for (double& v : acc.values) v *= inv;
    loss_acc *= inv;
  }
  if (mean_loss) *mean_loss = loss_acc;
  return acc;
}

}  // namespace iad

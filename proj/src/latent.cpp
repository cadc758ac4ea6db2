#include "gnerf/latent.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gnerf {

void TruncationConfig::validate() const {
  if (!(psi >= 0.0 && psi <= 1.0)) {
    throw std::invalid_argument("truncation: psi must lie in [0, 1], got " + std::to_string(psi));
  }
}

LatentCode sample_z(int dim, Rng& rng) {
  if (dim < 1) {
    throw std::invalid_argument("sample_z: dimension must be >= 1");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  LatentCode z;
  z.values.resize(dim);
  for (int i = 0; i < dim; ++i) {
    z.values[i] = normal(rng);
  }
  return z;
}

MappingNetwork MappingNetwork::random(int z_dim, int w_dim, int hidden, std::uint64_t seed) {
  if (z_dim < 1 || w_dim < 1 || hidden < 1) {
    throw std::invalid_argument("mapping: dimensions must be >= 1");
  }
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MappingNetwork m;
  m.z_dim_ = z_dim;
  m.w_dim_ = w_dim;
  m.w1_.resize(hidden, z_dim);
  m.b1_.resize(hidden);
  m.w2_.resize(w_dim, hidden);
  m.b2_.resize(w_dim);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(z_dim));
  // tanh of a unit-variance pre-activation has variance ~0.39
  const double s2 = 1.0 / std::sqrt(0.39 * hidden);
  for (Eigen::Index i = 0; i < m.w1_.size(); ++i) m.w1_.data()[i] = s1 * normal(rng);
  for (Eigen::Index i = 0; i < m.b1_.size(); ++i) m.b1_[i] = 0.1 * normal(rng);
  for (Eigen::Index i = 0; i < m.w2_.size(); ++i) m.w2_.data()[i] = s2 * normal(rng);
  for (Eigen::Index i = 0; i < m.b2_.size(); ++i) m.b2_[i] = 0.3 * normal(rng);
  m.bias_image_ = m.map(LatentCode{Eigen::VectorXd::Zero(z_dim)}).values;
  return m;
}

MappingNetwork MappingNetwork::identity(int dim) {
  if (dim < 1) {
    throw std::invalid_argument("mapping: dimension must be >= 1");
  }
  MappingNetwork m;
  m.z_dim_ = dim;
  m.w_dim_ = dim;
  m.identity_ = true;
  m.bias_image_ = Eigen::VectorXd::Zero(dim);
  return m;
}

IntermediateLatent MappingNetwork::map(const LatentCode& z) const {
  if (z.values.size() != z_dim_) {
    throw std::invalid_argument("mapping: expected latent of dimension " + std::to_string(z_dim_) +
                                ", got " + std::to_string(z.values.size()));
  }
  if (identity_) {
    return IntermediateLatent{z.values};
  }
  const Eigen::VectorXd h = (w1_ * z.values + b1_).array().tanh().matrix();
  return IntermediateLatent{w2_ * h + b2_};
}

double MappingNetwork::lipschitz_bound() const {
  if (identity_) {
    return 1.0;
  }
  const double n1 = Eigen::JacobiSVD<Eigen::MatrixXd>(w1_).singularValues()(0);
  const double n2 = Eigen::JacobiSVD<Eigen::MatrixXd>(w2_).singularValues()(0);
  return n1 * n2;
}

LatentCenter estimate_center(const MappingNetwork& mapping, std::size_t n, Rng& rng) {
  if (n < 1) {
    throw std::invalid_argument("estimate_center: need at least one sample");
  }
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(mapping.w_dim());
  for (std::size_t i = 0; i < n; ++i) {
    acc += mapping.map(sample_z(mapping.z_dim(), rng)).values;
  }
  if (n > 1) {
    acc /= static_cast<double>(n);
  }
  return LatentCenter{acc, n};
}

IntermediateLatent truncate(const IntermediateLatent& w, const LatentCenter& center,
                            const TruncationConfig& cfg) {
  cfg.validate();
  if (w.values.size() != center.values.size()) {
    throw std::invalid_argument("truncate: latent dimension " + std::to_string(w.values.size()) +
                                " does not match center dimension " +
                                std::to_string(center.values.size()));
  }
  return IntermediateLatent{cfg.psi * w.values + (1.0 - cfg.psi) * center.values};
}

}  // namespace gnerf

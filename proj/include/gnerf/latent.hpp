#pragma once

// Latent sampling, the fixed mapping into the intermediate space, its center
// of mass, and truncation towards that center.

#include "gnerf/camera.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>

namespace gnerf {

struct LatentCode {
  Eigen::VectorXd values;
};

struct IntermediateLatent {
  Eigen::VectorXd values;
};

struct LatentCenter {
  Eigen::VectorXd values;
  std::size_t n_samples = 0;
};

struct TruncationConfig {
  double psi = 0.5;

  void validate() const;
};

/// I.i.d. standard normal entries.
LatentCode sample_z(int dim, Rng& rng);

/// Fixed smooth map z -> w: w = W2 tanh(W1 z + b1) + b2.
class MappingNetwork {
 public:
  /// Weights drawn from a fixed seed; coordinates of w have roughly unit
  /// spread under standard normal z.
  static MappingNetwork random(int z_dim, int w_dim, int hidden, std::uint64_t seed);
  /// w = z, for tests.
  static MappingNetwork identity(int dim);

  IntermediateLatent map(const LatentCode& z) const;

  int z_dim() const { return z_dim_; }
  int w_dim() const { return w_dim_; }
  /// Upper bound on the Lipschitz constant: ||W2||_2 ||W1||_2 (tanh is 1-Lipschitz).
  double lipschitz_bound() const;
  /// M(0), recorded at construction.
  const Eigen::VectorXd& bias_image() const { return bias_image_; }

 private:
  int z_dim_ = 0;
  int w_dim_ = 0;
  bool identity_ = false;
  Eigen::MatrixXd w1_;
  Eigen::VectorXd b1_;
  Eigen::MatrixXd w2_;
  Eigen::VectorXd b2_;
  Eigen::VectorXd bias_image_;
};

/// Monte-Carlo mean of M(z) over n fresh samples.
LatentCenter estimate_center(const MappingNetwork& mapping, std::size_t n, Rng& rng);

/// w' = psi * w + (1 - psi) * center. psi = 0 and psi = 1 reproduce the
/// center and w bit for bit.
IntermediateLatent truncate(const IntermediateLatent& w, const LatentCenter& center,
                            const TruncationConfig& cfg);

}  // namespace gnerf

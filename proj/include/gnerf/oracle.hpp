#pragma once

// Procedural stand-in for a pretrained 3D-aware generator: latents decode to
// scenes of anisotropic Gaussian blobs whose surfaces get rougher the further
// the latent sits from the center of mass.

#include "gnerf/camera.hpp"
#include "gnerf/latent.hpp"
#include "gnerf/render.hpp"
#include "gnerf/triplet.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace gnerf {

struct Blob {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d radii = Eigen::Vector3d::Constant(0.2);
  Eigen::Matrix3d orientation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d albedo = Eigen::Vector3d::Constant(0.5);
  double amplitude = 10.0;
};

struct NoiseWave {
  Eigen::Vector3d frequency = Eigen::Vector3d::Zero();
  double phase = 0.0;
};

struct SceneParams {
  std::vector<Blob> blobs;
  Eigen::Vector3d background = Eigen::Vector3d::Ones();
  double geometry_noise_amplitude = 0.0;
  std::vector<NoiseWave> noise;

  void validate() const;
};

struct OracleConfig {
  int z_dim = 64;
  int w_dim = 64;
  int mapping_hidden = 64;
  int decoder_hidden = 64;
  int blob_count = 3;
  int noise_waves = 6;
  double noise_frequency = 14.0;
  /// Noise amplitude per unit distance of w' from the center.
  double kappa = 0.15;
  std::uint64_t seed = 7;
  Eigen::Vector3d background = Eigen::Vector3d::Ones();
};

/// Density is a sum of Gaussian blobs with a shared multiplicative surface
/// perturbation; color is the density-weighted blend of blob albedos.
class OracleField : public RadianceField {
 public:
  explicit OracleField(SceneParams scene);

  FieldSamples evaluate(const Eigen::MatrixX3d& positions,
                        const Eigen::MatrixX3d& directions) const override;
  const SceneParams& scene() const { return scene_; }

 private:
  SceneParams scene_;
  std::vector<Eigen::Matrix3d> inverse_shapes_;
};

class OracleGan {
 public:
  explicit OracleGan(OracleConfig cfg);

  const OracleConfig& config() const { return cfg_; }
  const MappingNetwork& mapping() const { return mapping_; }
  const LatentCenter& center() const { return center_; }
  void set_center(LatentCenter center);
  /// Replaces the center with a fresh Monte-Carlo estimate.
  void estimate_center(std::size_t n, std::uint64_t seed);

  /// z ~ N(0, I), w = M(z), then truncation with `psi`.
  IntermediateLatent sample_latent(Rng& rng, double psi) const;

  /// Fixed-seed two-layer decoder from w' to blob parameters. Noise
  /// amplitude is kappa * ||w' - center||.
  SceneParams decode_scene(const IntermediateLatent& w_prime) const;

  Triplet synthesize_triplet(const IntermediateLatent& w_prime, const CameraPose& pose_first,
                             const CameraPose& pose_second, const CameraPose& pose_depth,
                             const Intrinsics& intr, const RenderConfig& render_cfg) const;

 private:
  OracleConfig cfg_;
  MappingNetwork mapping_;
  LatentCenter center_;
  Eigen::MatrixXd dec_w1_;
  Eigen::VectorXd dec_b1_;
  Eigen::MatrixXd dec_w2_;
  Eigen::VectorXd dec_b2_;
};

/// Same scene with the surface perturbation switched off.
SceneParams without_noise(SceneParams scene);

struct SynthesisRequest {
  std::size_t count = 1;
  /// Global index of the first triplet, so a dataset can be built in chunks.
  std::size_t first_index = 0;
  double psi = 0.5;
  std::uint64_t seed = 1;
  PoseDistribution poses;
  Intrinsics intrinsics;
  RenderConfig render;
  int threads = 1;
};

/// Triplet i draws its latent and poses from a stream seeded by
/// (seed, first_index + i), so results do not depend on the thread count.
std::vector<Triplet> generate_triplets(const OracleGan& gan, const SynthesisRequest& request);

/// Single-view images standing in for a real-world collection: untruncated
/// latents, clean geometry, rendered from a fixed pose. The scene is kept for
/// evaluation only.
struct SingleViewSample {
  Image image;
  CameraPose pose;
  SceneParams scene;
};

std::vector<SingleViewSample> generate_single_view_pool(const OracleGan& gan, std::size_t count,
                                                        std::uint64_t seed, const CameraPose& pose,
                                                        const Intrinsics& intr,
                                                        const RenderConfig& render_cfg);

}  // namespace gnerf

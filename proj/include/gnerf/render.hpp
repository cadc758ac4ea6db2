#pragma once

// Stratified ray sampling and front-to-back alpha compositing of a radiance
// field into color, depth and accumulated weight.

#include "gnerf/autodiff.hpp"
#include "gnerf/camera.hpp"
#include "gnerf/image.hpp"

#include <Eigen/Dense>

#include <functional>
#include <utility>

namespace gnerf {

struct RenderConfig {
  double near = 1.7;
  double far = 3.7;
  int samples = 96;
  bool jitter = false;
  Eigen::Vector3d background = Eigen::Vector3d::Ones();
  /// Pixels with accumulated weight at or above this are valid depth.
  double mask_threshold = 0.5;

  void validate() const;
};

struct RaySamples {
  Eigen::VectorXd t;
  Eigen::VectorXd delta;
  bool jittered = false;
};

/// One sample per equal-width bin of [near, far]: bin midpoints, or a uniform
/// draw inside each bin when jittering. delta_i = t_{i+1} - t_i; the last
/// delta is far - t_n capped at the bin width.
RaySamples stratified_samples(double near, double far, int n, Rng* rng, bool jitter);

struct RenderOutput {
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  double depth = 0.0;
  double weight_sum = 0.0;
  Eigen::VectorXd weights;
};

/// C = sum tau_i alpha_i c_i, D = sum tau_i alpha_i t_i,
/// alpha_i = 1 - exp(-sigma_i delta_i), tau_i = prod_{j<i} (1 - alpha_j).
RenderOutput composite(const Eigen::MatrixX3d& colors, const Eigen::VectorXd& densities,
                       const RaySamples& samples);

struct FieldSamples {
  Eigen::VectorXd density;
  Eigen::MatrixX3d color;
};

/// Deterministic (position, direction) -> (color, density) evaluator.
class RadianceField {
 public:
  virtual ~RadianceField() = default;
  virtual FieldSamples evaluate(const Eigen::MatrixX3d& positions,
                                const Eigen::MatrixX3d& directions) const = 0;

  /// Single-point convenience wrapper: (color, density).
  std::pair<Eigen::Vector3d, double> query(const Eigen::Vector3d& position,
                                           const Eigen::Vector3d& direction) const;
};

/// Sample positions for a whole ray grid, ray-major: point r * samples + i.
struct SampledRays {
  int rays = 0;
  int samples = 0;
  Eigen::MatrixX3d positions;
  Eigen::MatrixX3d directions;
  Eigen::MatrixXd t;      // rays x samples
  Eigen::MatrixXd delta;  // rays x samples
};

SampledRays sample_rays(const RayGrid& grid, const RenderConfig& cfg, Rng* rng);

struct RenderedView {
  Image image;
  Eigen::VectorXd depth;
  Eigen::VectorXd weight;

  DepthMap depth_map(double mask_threshold) const;
};

/// Renders a field; background is blended with the residual transmittance in
/// the image only. Depth is the raw weighted sum. `rng` is needed only when
/// jittering.
RenderedView render(const RadianceField& field, const CameraPose& pose, const Intrinsics& intr,
                    const RenderConfig& cfg, Rng* rng = nullptr);

/// Differentiable compositing of (points x 1) densities and (points x 3)
/// colors into a (rays x 5) tensor of [r, g, b, depth, weight_sum].
ad::Tensor composite_op(const ad::Tensor& density, const ad::Tensor& color, const SampledRays& rays);

/// Field built from differentiable ops: returns (density points x 1, color points x 3).
using DifferentiableField = std::function<std::pair<ad::Tensor, ad::Tensor>(
    const Eigen::MatrixX3d& positions, const Eigen::MatrixX3d& directions)>;

struct DifferentiableView {
  int width = 0;
  int height = 0;
  ad::Tensor image;   // 3 x HW
  ad::Tensor depth;   // 1 x HW
  ad::Tensor weight;  // 1 x HW
};

DifferentiableView render_differentiable(const DifferentiableField& field, const CameraPose& pose,
                                         const Intrinsics& intr, const RenderConfig& cfg,
                                         Rng* rng = nullptr);

}  // namespace gnerf

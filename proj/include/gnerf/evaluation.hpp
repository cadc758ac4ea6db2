#pragma once

// Metrics, the truncation sweep and the ablation suite.

#include "gnerf/config.hpp"
#include "gnerf/image.hpp"
#include "gnerf/losses.hpp"
#include "gnerf/model.hpp"
#include "gnerf/oracle.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace gnerf {

/// Mean squared error over masked pixels. With alignment both maps are first
/// shifted to zero median over the mask. Throws on an empty mask.
double depth_mse(const Eigen::VectorXd& pred, const Eigen::VectorXd& gt, const Eigen::VectorXd& mask,
                 bool align = true);

inline constexpr double kPsnrCap = 99.0;

/// Peak signal-to-noise ratio on unit range, capped at kPsnrCap.
double metric_psnr(const Image& a, const Image& b);
double metric_ssim(const Image& a, const Image& b, int window = 11);

/// Fixed random-feature embedding used as an identity probe: per-channel mean
/// and standard deviation of every stage of a random convolutional stack.
class ProbeEncoder {
 public:
  explicit ProbeEncoder(std::uint64_t seed);
  Eigen::VectorXd embed(const Image& image) const;

 private:
  PerceptualFeatures features_;
};

/// Cosine similarity of probe embeddings.
double identity_proxy(const Image& input, const Image& novel, const ProbeEncoder& probe);

/// Mean pairwise perceptual distance; needs at least two images.
double diversity_measure(const std::vector<Image>& images, const PerceptualFeatures& features);

struct SweepRow {
  double psi = 0.0;
  double diversity = 0.0;
  /// Mean depth_mse of the perturbed scene against its noise-free version.
  double geometry_error = 0.0;
  double mean_noise_amplitude = 0.0;
};

struct SweepSettings {
  std::vector<double> psis;
  std::size_t scenes = 200;
  std::uint64_t seed = 1;
  CameraPose pose;
  Intrinsics intrinsics;
  RenderConfig render;
};

/// Scene i uses the same untruncated latent at every psi.
std::vector<SweepRow> truncation_sweep(const OracleGan& gan, const SweepSettings& settings,
                                       const PerceptualFeatures& features);
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

struct MetricReport {
  std::map<std::string, double> metrics;
  std::size_t samples = 0;
  /// "all", "frontal" or "side".
  std::string split = "all";
  std::uint64_t config_hash = 0;
  double side_yaw = 0.45;

  std::string to_json() const;
};

struct TestView {
  CameraPose pose;
  double yaw = 0.0;
  Image image;
  DepthMap depth;
};

struct TestScene {
  Image input;
  CameraPose input_pose;
  std::vector<TestView> views;
};

/// Held-out scenes: untruncated latents with clean geometry, a frontal input
/// image, `eval.test_random_poses` views from the pose distribution plus one
/// side view with |yaw| >= eval.side_yaw.
std::vector<TestScene> make_test_pool(const OracleGan& gan, const ExperimentConfig& cfg);

bool is_side_pose(double yaw, double side_yaw);

struct ModelEvaluation {
  MetricReport all;
  MetricReport frontal;
  MetricReport side;
};

ModelEvaluation evaluate_model(const GNeRFModel& model, const std::vector<TestScene>& pool,
                               const ExperimentConfig& cfg, const ProbeEncoder& probe);

struct AblationSpec {
  std::string name;
  bool synthetic = true;
  double psi = 0.5;
  bool discriminator = false;
};

/// Rows: no synthetic data, psi = 1.0, psi = 0.5, psi = 0.5 with D_g.
std::vector<AblationSpec> default_ablation();

struct AblationResult {
  AblationSpec spec;
  std::vector<std::uint64_t> seeds;
  std::vector<ModelEvaluation> per_seed;
  /// Medians across seeds, keyed by metric name, for the all and side splits.
  std::map<std::string, double> median_all;
  std::map<std::string, double> median_side;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Trains every spec with every seed and evaluates on one shared test pool.
std::vector<AblationResult> ablation_suite(const ExperimentConfig& base, const std::vector<AblationSpec>& specs,
                                           const std::vector<std::uint64_t>& seeds,
                                           const ProgressFn& progress = {});

/// Config for one ablation cell.
ExperimentConfig ablation_config(const ExperimentConfig& base, const AblationSpec& spec, std::uint64_t seed);

/// One row per spec: name, psi, flags, median Depth (all poses), Depth (side),
/// SSIM, PSNR and identity proxy.
void write_ablation_csv(std::ostream& os, const std::vector<AblationResult>& results);

double median(std::vector<double> values);

}  // namespace gnerf

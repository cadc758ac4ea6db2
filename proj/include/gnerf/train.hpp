#pragma once

// Mixed synthetic/real training: per-batch branch selection, alternating
// generator and discriminator updates with Adam, checkpointing.

#include "gnerf/camera.hpp"
#include "gnerf/losses.hpp"
#include "gnerf/model.hpp"
#include "gnerf/render.hpp"
#include "gnerf/triplet.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gnerf {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(NamedTensors params, AdamConfig cfg);

  /// Applies one update given gradients aligned with the parameter list.
  void step(const std::vector<ad::Tensor>& grads);
  const NamedTensors& parameters() const { return params_; }
  std::int64_t steps() const { return t_; }

 private:
  NamedTensors params_;
  AdamConfig cfg_;
  std::vector<Eigen::MatrixXd> m_, v_;
  std::int64_t t_ = 0;
};

struct TrainConfig {
  int batch_size = 2;
  std::int64_t total_steps = 2000;
  double lr_generator = 1e-3;
  double lr_discriminator = 8e-6;
  double beta1_generator = 0.9;
  double beta2_generator = 0.999;
  double beta1_discriminator = 0.0;
  double beta2_discriminator = 0.99;
  std::uint64_t seed = 1;
  double gamma_threshold = 0.5;
  int d_extra_pose_count = 2;
  /// The generator's adversarial term also covers the extra-pose renders.
  bool g_adv_extra_poses = true;
  bool use_discriminator = true;
  std::int64_t checkpoint_interval = 1000;
  std::int64_t log_interval = 1;

  void validate() const;
};

enum class Branch { Synthetic, Real };

/// Synthetic iff gamma <= threshold.
Branch select_branch(double gamma, double threshold);

struct RealImage {
  Image image;
  CameraPose pose;
};

struct TrainingData {
  std::vector<Triplet> synthetic;
  std::vector<RealImage> real;
};

struct BatchItem {
  Image reference;
  Image target;
  CameraPose reference_pose;
  CameraPose target_pose;
};

struct PosedDepth {
  DepthMap depth;
  CameraPose pose;
};

struct Batch {
  Branch branch = Branch::Synthetic;
  std::vector<BatchItem> items;
  /// Real-side samples for the discriminator, always synthetic depths.
  std::vector<PosedDepth> real_depths;
};

Batch build_batch(Branch branch, const TrainingData& data, int batch_size, bool need_depths, Rng& rng);

/// Everything a training step needs besides the batch.
struct TrainContext {
  GNeRFModel* model = nullptr;
  const ReconstructionLoss* recon = nullptr;
  LossConfig loss;
  TrainConfig train;
  RenderConfig render;
  Intrinsics intrinsics;
  PoseDistribution poses;
};

/// Detached fake depth maps produced during the generator step.
struct FakeDepths {
  std::vector<PosedDepth> samples;
};

struct GeneratorStepResult {
  LossRecord record;
  FakeDepths fakes;
};

/// One Adam step on E and G_n. D_g is evaluated but never updated. Throws
/// with the step index on a non-finite loss.
GeneratorStepResult generator_step(const Batch& batch, TrainContext& ctx, Adam& optimizer, std::int64_t step,
                                   Rng& rng);

struct DiscriminatorStepResult {
  double d_adv = 0.0;
  double r1 = 0.0;
  double mean_real_logit = 0.0;
  double mean_fake_logit = 0.0;
};

/// One Adam step on D_g from real synthetic depths and the given fakes.
DiscriminatorStepResult discriminator_step(const Batch& batch, const FakeDepths& fakes, TrainContext& ctx,
                                           Adam& optimizer, std::int64_t step);

struct FitOptions {
  /// Directory for checkpoints and the loss log; none writes nothing.
  std::optional<std::filesystem::path> out_dir;
  std::uint64_t config_hash = 0;
  /// Called after each step with the record.
  std::function<void(const LossRecord&)> on_step;
};

struct FitResult {
  std::vector<LossRecord> log;
  std::vector<std::filesystem::path> checkpoints;
  std::int64_t synthetic_batches = 0;
};

FitResult fit(TrainContext& ctx, const TrainingData& data, const FitOptions& options = {});

}  // namespace gnerf

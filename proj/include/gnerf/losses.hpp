#pragma once

// Reconstruction loss (L1 + SSIM + random-feature perceptual), depth
// adversarial losses with an R1 penalty, and the total objective.

#include "gnerf/autodiff.hpp"
#include "gnerf/image.hpp"

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace gnerf {

enum class SignConvention { Inverted, Standard };
enum class R1Target { Fake, Real };

struct LossConfig {
  double lambda_g = 1.2;
  double lambda_r1 = 1.0;
  int ssim_window = 11;
  double ssim_sigma = 1.5;
  /// Output channels of each stage of the perceptual feature stack; stages
  /// after the first halve the resolution.
  std::vector<int> perceptual_scales = {16, 32, 32};
  std::uint64_t perceptual_seed = 1234;
  double weight_l1 = 1.0;
  double weight_ssim = 1.0;
  double weight_perceptual = 1.0;
  SignConvention sign_convention = SignConvention::Inverted;
  R1Target r1_on = R1Target::Fake;

  void validate() const;
};

/// Mean absolute difference. Both tensors are C x HW.
ad::Tensor l1_loss(const ad::Tensor& a, const ad::Tensor& b);

/// Mean local SSIM with a normalized Gaussian window on unit dynamic range.
ad::Tensor ssim(const ad::Tensor& a, const ad::Tensor& b, int width, int height, int window, double sigma = 1.5);

/// Fixed random-weight convolutional feature stack.
class PerceptualFeatures {
 public:
  PerceptualFeatures(const std::vector<int>& scales, std::uint64_t seed);

  /// Feature maps of a 3 x HW image, one per stage.
  std::vector<ad::Tensor> features(const ad::Tensor& image, int width, int height) const;
  /// Mean squared feature distance summed over stages. No mean subtraction,
  /// so a brightness shift applied to both inputs is not guaranteed to cancel.
  ad::Tensor distance(const ad::Tensor& a, const ad::Tensor& b, int width, int height) const;

 private:
  struct Stage {
    int in = 0;
    int out = 0;
    int stride = 1;
    Eigen::MatrixXd weight;
    Eigen::MatrixXd bias;
  };
  std::vector<Stage> stages_;
};

struct ReconTerms {
  ad::Tensor l1;
  ad::Tensor ssim_loss;
  ad::Tensor perceptual;
  ad::Tensor total;
};

class ReconstructionLoss {
 public:
  explicit ReconstructionLoss(const LossConfig& cfg);

  ReconTerms operator()(const ad::Tensor& fake, const ad::Tensor& ref, int width, int height) const;
  const PerceptualFeatures& perceptual() const { return perceptual_; }

 private:
  LossConfig cfg_;
  PerceptualFeatures perceptual_;
};

ad::Tensor recon_loss(const ad::Tensor& fake, const ad::Tensor& ref, int width, int height, const LossConfig& cfg);

/// Discriminator objective for one (real, fake) logit pair plus the weighted
/// penalty. Inverted convention: softplus(real) + softplus(-fake); standard:
/// softplus(-real) + softplus(fake).
ad::Tensor d_adversarial_loss(const ad::Tensor& real_logit, const ad::Tensor& fake_logit,
                              const ad::Tensor& r1_grad_sq_norm, const LossConfig& cfg);

/// Batched form: mean real term over `real`, mean fake term over `fake`, plus
/// lambda_r1 times `r1_mean`.
ad::Tensor d_adversarial_batch(const std::vector<ad::Tensor>& real, const std::vector<ad::Tensor>& fake,
                               const ad::Tensor& r1_mean, const LossConfig& cfg);

/// Generator objective that pushes fakes towards the discriminator's "real"
/// side: softplus(-fake) under the standard convention, softplus(fake) under
/// the inverted convention.
ad::Tensor g_adversarial_loss(const ad::Tensor& fake_logit, const LossConfig& cfg);

/// Sum of squared gradients of `logit` w.r.t. `input`, recorded so that it can
/// be differentiated further.
ad::Tensor r1_penalty(const ad::Tensor& logit, const ad::Tensor& input);

double total_loss(double recon, double gan, const LossConfig& cfg);
ad::Tensor total_loss(const ad::Tensor& recon, const ad::Tensor& gan, const LossConfig& cfg);

struct LossRecord {
  std::int64_t step = 0;
  double l1 = 0.0;
  double ssim_loss = 0.0;
  double perceptual = 0.0;
  double g_adv = 0.0;
  double d_adv = 0.0;
  double r1 = 0.0;
  double total = 0.0;
};

void write_loss_header(std::ostream& os);
void write_loss_row(std::ostream& os, const LossRecord& record);

std::string to_string(SignConvention c);
std::string to_string(R1Target t);
SignConvention parse_sign_convention(const std::string& s);
R1Target parse_r1_target(const std::string& s);

}  // namespace gnerf

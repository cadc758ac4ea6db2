#pragma once

// Learned components: scene encoder E, image-conditioned radiance field G_n
// and the pose-conditioned depth discriminator D_g.

#include "gnerf/autodiff.hpp"
#include "gnerf/camera.hpp"
#include "gnerf/image.hpp"
#include "gnerf/render.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace gnerf {

struct ModelConfig {
  /// Square render and input resolution.
  int resolution = 64;
  int embedding_dim = 128;
  int encoder_channels = 16;
  int field_width = 64;
  int field_layers = 4;
  int pe_frequencies = 4;
  /// "modulation" (FiLM) or "concat".
  std::string conditioning = "modulation";
  /// Density = density_scale * softplus(raw).
  double density_scale = 8.0;
  int disc_channels = 16;
  int disc_hidden = 64;
  std::uint64_t seed = 11;

  void validate() const;
};

using NamedTensors = std::vector<std::pair<std::string, ad::Tensor>>;

struct SceneEmbedding {
  ad::Tensor values;  // 1 x embedding_dim
};

struct GeneratorOutput {
  ad::Tensor image;   // 3 x HW
  ad::Tensor depth;   // 1 x HW
  ad::Tensor weight;  // 1 x HW

  Image to_image(int width, int height) const;
  DepthMap to_depth(int width, int height, double mask_threshold) const;
};

/// Image tensor helpers.
ad::Tensor image_tensor(const Image& image);

class Encoder {
 public:
  Encoder() = default;
  Encoder(const ModelConfig& cfg, Rng& rng);

  /// Input is a 3 x HW tensor at the configured resolution.
  SceneEmbedding encode(const ad::Tensor& image) const;
  SceneEmbedding encode(const Image& image) const { return encode(image_tensor(image)); }
  NamedTensors parameters() const;

 private:
  struct Conv {
    ad::ConvGeometry geometry;
    ad::Tensor weight;  // out x (in * k * k)
    ad::Tensor bias;    // out x 1
  };
  int resolution_ = 0;
  std::vector<Conv> convs_;
  ad::Tensor fc_weight_;  // flat x embedding
  ad::Tensor fc_bias_;    // 1 x embedding
};

/// Positional encoding: [x, sin(2^k pi x), cos(2^k pi x)] for k < L.
Eigen::MatrixXd positional_encoding(const Eigen::MatrixX3d& positions, int frequencies);

class ConditionedField {
 public:
  ConditionedField() = default;
  ConditionedField(const ModelConfig& cfg, Rng& rng);

  /// (density points x 1, color points x 3); view direction is not used.
  std::pair<ad::Tensor, ad::Tensor> evaluate(const SceneEmbedding& embedding,
                                             const Eigen::MatrixX3d& positions) const;
  NamedTensors parameters() const;

 private:
  struct Layer {
    ad::Tensor weight;  // in x out
    ad::Tensor bias;    // 1 x out
    ad::Tensor film_scale_w;  // embedding x out
    ad::Tensor film_shift_w;  // embedding x out
  };
  ModelConfig cfg_;
  std::vector<Layer> layers_;
  ad::Tensor density_w_, density_b_;
  ad::Tensor color_w_, color_b_;
};

/// Non-differentiable view of a conditioned field for the plain renderer.
class FrozenField : public RadianceField {
 public:
  FrozenField(const ConditionedField& field, SceneEmbedding embedding);
  FieldSamples evaluate(const Eigen::MatrixX3d& positions, const Eigen::MatrixX3d& directions) const override;

 private:
  const ConditionedField& field_;
  SceneEmbedding embedding_;
};

/// Depth normalized to zero mean and unit variance over the mask, zero off
/// the mask.
ad::Tensor normalize_depth(const ad::Tensor& depth, const Eigen::RowVectorXd& mask);

class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const ModelConfig& cfg, Rng& rng);

  /// depth: 1 x HW raw depth, mask: 0/1 per pixel. Returns a 1x1 logit.
  ad::Tensor discriminate(const ad::Tensor& depth, const Eigen::RowVectorXd& mask, const CameraPose& pose) const;
  NamedTensors parameters() const;

 private:
  struct Conv {
    ad::ConvGeometry geometry;
    ad::Tensor weight;
    ad::Tensor bias;
  };
  int resolution_ = 0;
  std::vector<Conv> convs_;
  ad::Tensor fc1_w_, fc1_b_, fc2_w_, fc2_b_;
};

/// E, G_n and D_g with a shared configuration.
class GNeRFModel {
 public:
  explicit GNeRFModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  const Encoder& encoder() const { return encoder_; }
  const ConditionedField& field() const { return field_; }
  const Discriminator& discriminator() const { return disc_; }

  /// Renders the conditioned field from `pose`; differentiable end to end.
  GeneratorOutput generate(const CameraPose& pose, const SceneEmbedding& embedding, const Intrinsics& intr,
                           const RenderConfig& render_cfg, Rng* rng = nullptr) const;

  /// E and G_n parameters.
  NamedTensors generator_parameters() const;
  NamedTensors discriminator_parameters() const;
  NamedTensors all_parameters() const;

 private:
  ModelConfig cfg_;
  Encoder encoder_;
  ConditionedField field_;
  Discriminator disc_;
};

}  // namespace gnerf

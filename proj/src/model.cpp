#include "gnerf/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace gnerf {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kLeak = 0.2;

ad::Tensor random_parameter(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return ad::Tensor::parameter(std::move(m));
}

ad::Tensor zero_parameter(Eigen::Index rows, Eigen::Index cols, double fill = 0.0) {
  return ad::Tensor::parameter(Eigen::MatrixXd::Constant(rows, cols, fill));
}

ad::Tensor act(const ad::Tensor& x) { return ad::leaky_softplus(x, kLeak); }

// Number of stride-2 stages that bring `resolution` down to 4.
int downsample_stages(int resolution) {
  int stages = 0;
  while ((resolution >> stages) > 4) ++stages;
  return stages;
}

bool power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

void check_image(const ad::Tensor& image, int channels, int resolution, const char* who) {
  if (image.rows() != channels || image.cols() != static_cast<Eigen::Index>(resolution) * resolution) {
    throw std::invalid_argument(std::string(who) + ": expected " + std::to_string(channels) + " x " +
                                std::to_string(resolution) + "^2 input, got " + std::to_string(image.rows()) +
                                " x " + std::to_string(image.cols()));
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (resolution < 8 || !power_of_two(resolution)) {
    throw std::invalid_argument("model: resolution must be a power of two >= 8");
  }
  if (embedding_dim < 1 || encoder_channels < 1 || field_width < 1 || field_layers < 1 || pe_frequencies < 0 ||
      disc_channels < 1 || disc_hidden < 1) {
    throw std::invalid_argument("model: layer sizes must be positive");
  }
  if (conditioning != "modulation" && conditioning != "concat") {
    throw std::invalid_argument("model: conditioning must be 'modulation' or 'concat'");
  }
  if (!(density_scale > 0.0)) {
    throw std::invalid_argument("model: density_scale must be positive");
  }
}

ad::Tensor image_tensor(const Image& image) { return ad::Tensor::constant(image.pixels); }

Image GeneratorOutput::to_image(int width, int height) const {
  Image img;
  img.width = width;
  img.height = height;
  img.pixels = image.value();
  return img;
}

DepthMap GeneratorOutput::to_depth(int width, int height, double mask_threshold) const {
  DepthMap d;
  d.width = width;
  d.height = height;
  d.values = depth.value().row(0).transpose();
  d.mask = (weight.value().row(0).transpose().array() >= mask_threshold).cast<double>().matrix();
  return d;
}

// ---------------------------------------------------------------------------

Encoder::Encoder(const ModelConfig& cfg, Rng& rng) : resolution_(cfg.resolution) {
  cfg.validate();
  int channels = 3;
  int size = cfg.resolution;
  int out = cfg.encoder_channels;
  auto add = [&](int stride) {
    Conv c;
    c.geometry = ad::ConvGeometry{channels, size, size, 3, stride, 1};
    const int fan_in = channels * 9;
    c.weight = random_parameter(out, fan_in, std::sqrt(2.0 / fan_in), rng);
    c.bias = zero_parameter(out, 1);
    convs_.push_back(c);
    channels = out;
    size = c.geometry.out_height();
  };
  add(1);
  for (int s = 0; s < downsample_stages(cfg.resolution); ++s) {
    out = std::min(2 * channels, 64);
    add(2);
  }
  const int flat = channels * size * size;
  fc_weight_ = random_parameter(flat, cfg.embedding_dim, std::sqrt(1.0 / flat), rng);
  fc_bias_ = zero_parameter(1, cfg.embedding_dim);
}

SceneEmbedding Encoder::encode(const ad::Tensor& image) const {
  check_image(image, 3, resolution_, "encode");
  ad::Tensor x = image;
  for (const Conv& c : convs_) {
    x = act(ad::add_col(ad::matmul(c.weight, ad::im2col(x, c.geometry)), c.bias));
  }
  const ad::Tensor flat = ad::reshape(x, 1, x.size());
  return SceneEmbedding{ad::matmul(flat, fc_weight_) + fc_bias_};
}

NamedTensors Encoder::parameters() const {
  NamedTensors out;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    out.emplace_back("encoder.conv" + std::to_string(i) + ".weight", convs_[i].weight);
    out.emplace_back("encoder.conv" + std::to_string(i) + ".bias", convs_[i].bias);
  }
  out.emplace_back("encoder.fc.weight", fc_weight_);
  out.emplace_back("encoder.fc.bias", fc_bias_);
  return out;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd positional_encoding(const Eigen::MatrixX3d& positions, int frequencies) {
  Eigen::MatrixXd out(positions.rows(), 3 + 6 * frequencies);
  out.leftCols(3) = positions;
  for (int k = 0; k < frequencies; ++k) {
    const double f = std::ldexp(kPi, k);
    out.middleCols(3 + 6 * k, 3) = (f * positions.array()).sin().matrix();
    out.middleCols(6 + 6 * k, 3) = (f * positions.array()).cos().matrix();
  }
  return out;
}

ConditionedField::ConditionedField(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  const bool film = cfg.conditioning == "modulation";
  int in = 3 + 6 * cfg.pe_frequencies + (film ? 0 : cfg.embedding_dim);
  const double film_std = 0.3 / std::sqrt(static_cast<double>(cfg.embedding_dim));
  for (int l = 0; l < cfg.field_layers; ++l) {
    Layer layer;
    layer.weight = random_parameter(in, cfg.field_width, std::sqrt(2.0 / in), rng);
    layer.bias = zero_parameter(1, cfg.field_width);
    if (film) {
      layer.film_scale_w = random_parameter(cfg.embedding_dim, cfg.field_width, film_std, rng);
      layer.film_shift_w = random_parameter(cfg.embedding_dim, cfg.field_width, film_std, rng);
    }
    layers_.push_back(layer);
    in = cfg.field_width;
  }
  density_w_ = random_parameter(in, 1, std::sqrt(1.0 / in), rng);
  // Starts mostly transparent so early renders are not a uniform fog.
  density_b_ = zero_parameter(1, 1, -2.5);
  color_w_ = random_parameter(in, 3, std::sqrt(1.0 / in), rng);
  color_b_ = zero_parameter(1, 3);
}

std::pair<ad::Tensor, ad::Tensor> ConditionedField::evaluate(const SceneEmbedding& embedding,
                                                             const Eigen::MatrixX3d& positions) const {
  if (embedding.values.rows() != 1 || embedding.values.cols() != cfg_.embedding_dim) {
    throw std::invalid_argument("field: embedding must be 1 x " + std::to_string(cfg_.embedding_dim));
  }
  const bool film = cfg_.conditioning == "modulation";
  const Eigen::Index n = positions.rows();
  ad::Tensor h = ad::Tensor::constant(positional_encoding(positions, cfg_.pe_frequencies));
  if (!film) {
    h = ad::concat_cols({h, ad::broadcast_rows(embedding.values, n)});
  }
  for (const Layer& layer : layers_) {
    h = act(ad::add_row(ad::matmul(h, layer.weight), layer.bias));
    if (film) {
      const ad::Tensor scale = ad::add_scalar(ad::matmul(embedding.values, layer.film_scale_w), 1.0);
      const ad::Tensor shift = ad::matmul(embedding.values, layer.film_shift_w);
      h = ad::add_row(ad::mul_row(h, scale), shift);
    }
  }
  const ad::Tensor density = cfg_.density_scale * ad::softplus(ad::add_row(ad::matmul(h, density_w_), density_b_));
  const ad::Tensor color = ad::sigmoid(ad::add_row(ad::matmul(h, color_w_), color_b_));
  return {density, color};
}

NamedTensors ConditionedField::parameters() const {
  NamedTensors out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string p = "field.layer" + std::to_string(i);
    out.emplace_back(p + ".weight", layers_[i].weight);
    out.emplace_back(p + ".bias", layers_[i].bias);
    if (layers_[i].film_scale_w.defined()) {
      out.emplace_back(p + ".film_scale", layers_[i].film_scale_w);
      out.emplace_back(p + ".film_shift", layers_[i].film_shift_w);
    }
  }
  out.emplace_back("field.density.weight", density_w_);
  out.emplace_back("field.density.bias", density_b_);
  out.emplace_back("field.color.weight", color_w_);
  out.emplace_back("field.color.bias", color_b_);
  return out;
}

FrozenField::FrozenField(const ConditionedField& field, SceneEmbedding embedding)
    : field_(field), embedding_{embedding.values.detach()} {}

FieldSamples FrozenField::evaluate(const Eigen::MatrixX3d& positions, const Eigen::MatrixX3d& /*directions*/) const {
  ad::NoGradGuard guard;
  auto [density, color] = field_.evaluate(embedding_, positions);
  FieldSamples out;
  out.density = density.value().col(0);
  out.color = color.value();
  return out;
}

// ---------------------------------------------------------------------------

ad::Tensor normalize_depth(const ad::Tensor& depth, const Eigen::RowVectorXd& mask) {
  if (depth.rows() != 1 || depth.cols() != mask.size()) {
    throw std::invalid_argument("normalize_depth: depth and mask sizes differ");
  }
  const ad::Tensor m = ad::Tensor::constant(mask);
  const double inv_count = 1.0 / std::max(mask.sum(), 1.0);
  const ad::Tensor mean = ad::sum(depth * m) * inv_count;
  const ad::Tensor centered = ad::add_scalar(depth, -mean) * m;
  const ad::Tensor var = ad::sum(ad::square(centered)) * inv_count;
  return ad::mul_scalar(centered, ad::reciprocal(ad::sqrt(ad::add_scalar(var, 1e-4))));
}

Discriminator::Discriminator(const ModelConfig& cfg, Rng& rng) : resolution_(cfg.resolution) {
  cfg.validate();
  int channels = 2;
  int size = cfg.resolution;
  int out = cfg.disc_channels;
  const int stages = std::max(2, downsample_stages(cfg.resolution));
  for (int s = 0; s < stages; ++s) {
    Conv c;
    c.geometry = ad::ConvGeometry{channels, size, size, 4, 2, 1};
    const int fan_in = channels * 16;
    c.weight = random_parameter(out, fan_in, std::sqrt(2.0 / fan_in), rng);
    c.bias = zero_parameter(out, 1);
    convs_.push_back(c);
    channels = out;
    size = c.geometry.out_height();
    out = std::min(2 * channels, 64);
  }
  const int flat = channels * size * size + 16;
  fc1_w_ = random_parameter(flat, cfg.disc_hidden, std::sqrt(2.0 / flat), rng);
  fc1_b_ = zero_parameter(1, cfg.disc_hidden);
  fc2_w_ = random_parameter(cfg.disc_hidden, 1, std::sqrt(1.0 / cfg.disc_hidden), rng);
  fc2_b_ = zero_parameter(1, 1);
}

ad::Tensor Discriminator::discriminate(const ad::Tensor& depth, const Eigen::RowVectorXd& mask,
                                       const CameraPose& pose) const {
  check_image(depth, 1, resolution_, "discriminate");
  ad::Tensor x = ad::concat_rows({normalize_depth(depth, mask), ad::Tensor::constant(mask)});
  for (const Conv& c : convs_) {
    x = act(ad::add_col(ad::matmul(c.weight, ad::im2col(x, c.geometry)), c.bias));
  }
  const auto flat_pose = pose.to_row_major();
  Eigen::MatrixXd cond(1, 16);
  for (int i = 0; i < 16; ++i) cond(0, i) = flat_pose[static_cast<std::size_t>(i)];
  const ad::Tensor features = ad::concat_cols({ad::reshape(x, 1, x.size()), ad::Tensor::constant(cond)});
  const ad::Tensor hidden = act(ad::matmul(features, fc1_w_) + fc1_b_);
  return ad::matmul(hidden, fc2_w_) + fc2_b_;
}

NamedTensors Discriminator::parameters() const {
  NamedTensors out;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    out.emplace_back("disc.conv" + std::to_string(i) + ".weight", convs_[i].weight);
    out.emplace_back("disc.conv" + std::to_string(i) + ".bias", convs_[i].bias);
  }
  out.emplace_back("disc.fc1.weight", fc1_w_);
  out.emplace_back("disc.fc1.bias", fc1_b_);
  out.emplace_back("disc.fc2.weight", fc2_w_);
  out.emplace_back("disc.fc2.bias", fc2_b_);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct ModelRngs {
  Rng encoder, field, disc;
  explicit ModelRngs(std::uint64_t seed)
      : encoder(derive_seed(seed, 0)), field(derive_seed(seed, 1)), disc(derive_seed(seed, 2)) {}
};

}  // namespace

GNeRFModel::GNeRFModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  ModelRngs rngs(cfg_.seed);
  encoder_ = Encoder(cfg_, rngs.encoder);
  field_ = ConditionedField(cfg_, rngs.field);
  disc_ = Discriminator(cfg_, rngs.disc);
}

GeneratorOutput GNeRFModel::generate(const CameraPose& pose, const SceneEmbedding& embedding,
                                     const Intrinsics& intr, const RenderConfig& render_cfg, Rng* rng) const {
  if (intr.width != cfg_.resolution || intr.height != cfg_.resolution) {
    throw std::invalid_argument("generate: intrinsics do not match the model resolution");
  }
  const ConditionedField& field = field_;
  DifferentiableField f = [&field, &embedding](const Eigen::MatrixX3d& positions, const Eigen::MatrixX3d&) {
    return field.evaluate(embedding, positions);
  };
  DifferentiableView view = render_differentiable(f, pose, intr, render_cfg, rng);
  return GeneratorOutput{view.image, view.depth, view.weight};
}

NamedTensors GNeRFModel::generator_parameters() const {
  NamedTensors out = encoder_.parameters();
  for (auto& p : field_.parameters()) out.push_back(p);
  return out;
}

NamedTensors GNeRFModel::discriminator_parameters() const { return disc_.parameters(); }

NamedTensors GNeRFModel::all_parameters() const {
  NamedTensors out = generator_parameters();
  for (auto& p : disc_.parameters()) out.push_back(p);
  return out;
}

}  // namespace gnerf

#include "gnerf/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>

namespace gnerf {

namespace {

constexpr int kBlobParams = 13;  // center 3, radii 3, euler 3, albedo 3, amplitude 1
constexpr int kWaveParams = 4;   // direction 3, phase 1
constexpr double kPi = 3.14159265358979323846;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Eigen::Matrix3d euler_rotation(double a, double b, double c) {
  return (Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()) * Eigen::AngleAxisd(b, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(c, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

}  // namespace

void SceneParams::validate() const {
  for (const auto& blob : blobs) {
    if ((blob.radii.array() <= 0.0).any()) {
      throw std::invalid_argument("scene: blob radii must be positive");
    }
    if (!(blob.amplitude > 0.0)) {
      throw std::invalid_argument("scene: blob amplitude must be positive");
    }
    const double residual =
        (blob.orientation.transpose() * blob.orientation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (residual > 1e-9) {
      throw std::invalid_argument("scene: blob orientation is not orthonormal");
    }
  }
  if (!(geometry_noise_amplitude >= 0.0)) {
    throw std::invalid_argument("scene: noise amplitude must be non-negative");
  }
}

OracleField::OracleField(SceneParams scene) : scene_(std::move(scene)) {
  scene_.validate();
  for (const auto& blob : scene_.blobs) {
    inverse_shapes_.push_back(blob.radii.cwiseInverse().asDiagonal() * blob.orientation.transpose());
  }
}

FieldSamples OracleField::evaluate(const Eigen::MatrixX3d& positions,
                                   const Eigen::MatrixX3d& /*directions*/) const {
  const Eigen::Index n = positions.rows();
  const std::size_t k = scene_.blobs.size();
  FieldSamples out;
  out.density = Eigen::VectorXd::Zero(n);
  out.color.setZero(n, 3);
  if (k == 0) {
    out.color.setConstant(0.5);
    return out;
  }
  const double amplitude = scene_.geometry_noise_amplitude;
  const double wave_norm =
      scene_.noise.empty() ? 0.0 : 1.0 / std::sqrt(static_cast<double>(scene_.noise.size()));
  std::vector<double> log_density(k);
  for (Eigen::Index p = 0; p < n; ++p) {
    const Eigen::Vector3d x = positions.row(p).transpose();
    double scale = 1.0;
    if (amplitude > 0.0) {
      double noise = 0.0;
      for (const auto& wave : scene_.noise) {
        noise += std::sin(wave.frequency.dot(x) + wave.phase);
      }
      scale = std::exp(-amplitude * wave_norm * noise);
    }
    double max_log = -1e300;
    double density = 0.0;
    for (std::size_t b = 0; b < k; ++b) {
      const Blob& blob = scene_.blobs[b];
      const double q = (inverse_shapes_[b] * (x - blob.center)).squaredNorm();
      log_density[b] = std::log(blob.amplitude) - 0.5 * q * scale;
      density += std::exp(log_density[b]);
      max_log = std::max(max_log, log_density[b]);
    }
    // Softmax over log-densities: the density-weighted albedo blend, defined everywhere.
    double norm = 0.0;
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    for (std::size_t b = 0; b < k; ++b) {
      const double w = std::exp(log_density[b] - max_log);
      norm += w;
      color += w * scene_.blobs[b].albedo;
    }
    out.density[p] = density;
    out.color.row(p) = (color / norm).transpose();
  }
  return out;
}

OracleGan::OracleGan(OracleConfig cfg)
    : cfg_(std::move(cfg)),
      mapping_(MappingNetwork::random(cfg_.z_dim, cfg_.w_dim, cfg_.mapping_hidden, derive_seed(cfg_.seed, 1))) {
  if (cfg_.blob_count < 1 || cfg_.noise_waves < 0 || cfg_.decoder_hidden < 1) {
    throw std::invalid_argument("oracle: invalid blob, wave or hidden counts");
  }
  if (!(cfg_.kappa >= 0.0)) {
    throw std::invalid_argument("oracle: kappa must be non-negative");
  }
  Rng rng(derive_seed(cfg_.seed, 2));
  std::normal_distribution<double> normal(0.0, 1.0);
  const int outputs = cfg_.blob_count * kBlobParams + cfg_.noise_waves * kWaveParams;
  dec_w1_.resize(cfg_.decoder_hidden, cfg_.w_dim);
  dec_b1_.resize(cfg_.decoder_hidden);
  dec_w2_.resize(outputs, cfg_.decoder_hidden);
  dec_b2_.resize(outputs);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(cfg_.w_dim));
  const double s2 = 1.2 / std::sqrt(0.39 * cfg_.decoder_hidden);
  for (Eigen::Index i = 0; i < dec_w1_.size(); ++i) dec_w1_.data()[i] = s1 * normal(rng);
  for (Eigen::Index i = 0; i < dec_b1_.size(); ++i) dec_b1_[i] = 0.1 * normal(rng);
  for (Eigen::Index i = 0; i < dec_w2_.size(); ++i) dec_w2_.data()[i] = s2 * normal(rng);
  for (Eigen::Index i = 0; i < dec_b2_.size(); ++i) dec_b2_[i] = 0.3 * normal(rng);
  center_ = LatentCenter{mapping_.bias_image(), 1};
}

void OracleGan::set_center(LatentCenter center) {
  if (center.values.size() != cfg_.w_dim) {
    throw std::invalid_argument("oracle: center dimension does not match w_dim");
  }
  center_ = std::move(center);
}

void OracleGan::estimate_center(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  center_ = gnerf::estimate_center(mapping_, n, rng);
}

IntermediateLatent OracleGan::sample_latent(Rng& rng, double psi) const {
  const IntermediateLatent w = mapping_.map(sample_z(cfg_.z_dim, rng));
  return truncate(w, center_, TruncationConfig{psi});
}

SceneParams OracleGan::decode_scene(const IntermediateLatent& w_prime) const {
  if (w_prime.values.size() != cfg_.w_dim) {
    throw std::invalid_argument("decode_scene: latent dimension " + std::to_string(w_prime.values.size()) +
                                " does not match " + std::to_string(cfg_.w_dim));
  }
  const Eigen::VectorXd hidden = (dec_w1_ * w_prime.values + dec_b1_).array().tanh().matrix();
  const Eigen::VectorXd raw = dec_w2_ * hidden + dec_b2_;

  SceneParams scene;
  scene.background = cfg_.background;
  for (int b = 0; b < cfg_.blob_count; ++b) {
    const double* r = raw.data() + b * kBlobParams;
    Blob blob;
    for (int i = 0; i < 3; ++i) {
      blob.center[i] = 0.35 * std::tanh(r[i]);
      blob.radii[i] = 0.14 + 0.14 * sigmoid(r[3 + i]);
      blob.albedo[i] = 0.1 + 0.8 * sigmoid(r[9 + i]);
    }
    blob.orientation = euler_rotation(kPi * std::tanh(r[6]), kPi * std::tanh(r[7]), kPi * std::tanh(r[8]));
    blob.amplitude = 10.0 + 15.0 * sigmoid(r[12]);
    scene.blobs.push_back(blob);
  }
  const double* waves = raw.data() + cfg_.blob_count * kBlobParams;
  for (int j = 0; j < cfg_.noise_waves; ++j) {
    const double* r = waves + j * kWaveParams;
    Eigen::Vector3d dir(r[0], r[1], r[2]);
    if (dir.norm() < 1e-9) dir = Eigen::Vector3d::UnitX();
    scene.noise.push_back(NoiseWave{cfg_.noise_frequency * dir.normalized(), kPi * std::tanh(r[3])});
  }
  scene.geometry_noise_amplitude = cfg_.kappa * (w_prime.values - center_.values).norm();
  return scene;
}

Triplet OracleGan::synthesize_triplet(const IntermediateLatent& w_prime, const CameraPose& pose_first,
                                      const CameraPose& pose_second, const CameraPose& pose_depth,
                                      const Intrinsics& intr, const RenderConfig& render_cfg) const {
  if (render_cfg.jitter) {
    throw std::invalid_argument("synthesize_triplet: ground-truth renders must not jitter");
  }
  const OracleField field(decode_scene(w_prime));
  Triplet t;
  t.first = render(field, pose_first, intr, render_cfg).image;
  t.second = render(field, pose_second, intr, render_cfg).image;
  t.depth = render(field, pose_depth, intr, render_cfg).depth_map(render_cfg.mask_threshold);
  // Stored as f32 on disk; round here so in-memory and loaded datasets agree.
  t.depth.values = t.depth.values.cast<float>().cast<double>();
  t.pose_first = pose_first;
  t.pose_second = pose_second;
  t.pose_depth = pose_depth;
  t.latent = w_prime;
  return t;
}

SceneParams without_noise(SceneParams scene) {
  scene.geometry_noise_amplitude = 0.0;
  return scene;
}

std::vector<Triplet> generate_triplets(const OracleGan& gan, const SynthesisRequest& request) {
  if (request.count < 1) {
    throw std::invalid_argument("generate_triplets: count must be >= 1");
  }
  TruncationConfig{request.psi}.validate();
  request.poses.validate();
  std::vector<Triplet> out(request.count);
  auto work = [&](std::size_t i) {
    Rng rng(derive_seed(request.seed, request.first_index + i));
    const IntermediateLatent w = gan.sample_latent(rng, request.psi);
    const CameraPose pf = sample_pose(request.poses, rng);
    const CameraPose ps = sample_pose(request.poses, rng);
    const CameraPose pd = sample_pose(request.poses, rng);
    out[i] = gan.synthesize_triplet(w, pf, ps, pd, request.intrinsics, request.render);
  };
  const int threads = std::max(1, std::min<int>(request.threads, static_cast<int>(request.count)));
  if (threads == 1) {
    for (std::size_t i = 0; i < request.count; ++i) work(i);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = static_cast<std::size_t>(t); i < request.count; i += static_cast<std::size_t>(threads)) {
          work(i);
        }
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<SingleViewSample> generate_single_view_pool(const OracleGan& gan, std::size_t count,
                                                        std::uint64_t seed, const CameraPose& pose,
                                                        const Intrinsics& intr,
                                                        const RenderConfig& render_cfg) {
  std::vector<SingleViewSample> pool;
  pool.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, i));
    SceneParams scene = without_noise(gan.decode_scene(gan.sample_latent(rng, 1.0)));
    SingleViewSample sample;
    sample.image = render(OracleField(scene), pose, intr, render_cfg).image;
    sample.pose = pose;
    sample.scene = std::move(scene);
    pool.push_back(std::move(sample));
  }
  return pool;
}

}  // namespace gnerf

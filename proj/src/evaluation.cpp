#include "gnerf/evaluation.hpp"

#include "gnerf/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <stdexcept>

namespace gnerf {

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty set");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

namespace {

double masked_median(const Eigen::VectorXd& x, const Eigen::VectorXd& mask) {
  std::vector<double> vals;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (mask[i] > 0.5) vals.push_back(x[i]);
  }
  return median(std::move(vals));
}

}  // namespace

double depth_mse(const Eigen::VectorXd& pred, const Eigen::VectorXd& gt, const Eigen::VectorXd& mask, bool align) {
  if (pred.size() != gt.size() || mask.size() != gt.size()) {
    throw std::invalid_argument("depth_mse: size mismatch");
  }
  const Eigen::Index n = (mask.array() > 0.5).count();
  if (n == 0) throw std::invalid_argument("depth_mse: empty mask");
  const double shift_pred = align ? masked_median(pred, mask) : 0.0;
  const double shift_gt = align ? masked_median(gt, mask) : 0.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < gt.size(); ++i) {
    if (mask[i] > 0.5) {
      const double d = (pred[i] - shift_pred) - (gt[i] - shift_gt);
      sum += d * d;
    }
  }
  return sum / static_cast<double>(n);
}

double metric_psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: shape mismatch");
  const double mse = (a.pixels - b.pixels).squaredNorm() / static_cast<double>(a.pixels.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double metric_ssim(const Image& a, const Image& b, int window) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
  ad::NoGradGuard guard;
  return ssim(image_tensor(a), image_tensor(b), a.width, a.height, window).item();
}

ProbeEncoder::ProbeEncoder(std::uint64_t seed) : features_({16, 32, 32}, seed) {}

Eigen::VectorXd ProbeEncoder::embed(const Image& image) const {
  ad::NoGradGuard guard;
  const auto maps = features_.features(image_tensor(image), image.width, image.height);
  Eigen::Index total = 0;
  for (const auto& m : maps) total += 2 * m.rows();
  Eigen::VectorXd out(total);
  Eigen::Index k = 0;
  for (const auto& m : maps) {
    const Eigen::MatrixXd& v = m.value();
    const Eigen::VectorXd mean = v.rowwise().mean();
    const Eigen::VectorXd sd = ((v.colwise() - mean).array().square().rowwise().mean()).sqrt().matrix();
    out.segment(k, v.rows()) = mean;
    out.segment(k + v.rows(), v.rows()) = sd;
    k += 2 * v.rows();
  }
  return out;
}

double identity_proxy(const Image& input, const Image& novel, const ProbeEncoder& probe) {
  const Eigen::VectorXd a = probe.embed(input);
  const Eigen::VectorXd b = probe.embed(novel);
  const double denom = a.norm() * b.norm();
  if (denom <= 0.0) return 0.0;
  return std::clamp(a.dot(b) / denom, -1.0, 1.0);
}

double diversity_measure(const std::vector<Image>& images, const PerceptualFeatures& features) {
  if (images.size() < 2) throw std::invalid_argument("diversity_measure: need at least two images");
  ad::NoGradGuard guard;
  // distance(a, b) = sum over stages of mean squared difference; precompute
  // each image's stage features scaled by 1/sqrt(stage size).
  std::vector<Eigen::VectorXd> flat;
  for (const Image& img : images) {
    if (!img.same_shape(images.front())) throw std::invalid_argument("diversity_measure: image sizes differ");
    const auto maps = features.features(image_tensor(img), img.width, img.height);
    Eigen::Index total = 0;
    for (const auto& m : maps) total += m.size();
    Eigen::VectorXd v(total);
    Eigen::Index k = 0;
    for (const auto& m : maps) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(m.size()));
      v.segment(k, m.size()) = scale * Eigen::Map<const Eigen::VectorXd>(m.value().data(), m.size());
      k += m.size();
    }
    flat.push_back(std::move(v));
  }
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    for (std::size_t j = i + 1; j < flat.size(); ++j) {
      sum += (flat[i] - flat[j]).squaredNorm();
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

std::vector<SweepRow> truncation_sweep(const OracleGan& gan, const SweepSettings& s,
                                       const PerceptualFeatures& features) {
  if (s.scenes < 2) throw std::invalid_argument("truncation_sweep: need at least two scenes");
  std::vector<IntermediateLatent> latents;
  for (std::size_t i = 0; i < s.scenes; ++i) {
    Rng rng(derive_seed(s.seed, i));
    latents.push_back(gan.sample_latent(rng, 1.0));
  }
  std::vector<SweepRow> rows;
  for (double psi : s.psis) {
    TruncationConfig{psi}.validate();
    SweepRow row;
    row.psi = psi;
    std::vector<Image> images;
    double err = 0.0;
    std::size_t counted = 0;
    for (const auto& w : latents) {
      const SceneParams scene = gan.decode_scene(truncate(w, gan.center(), TruncationConfig{psi}));
      row.mean_noise_amplitude += scene.geometry_noise_amplitude / static_cast<double>(s.scenes);
      const RenderedView noisy = render(OracleField(scene), s.pose, s.intrinsics, s.render);
      const RenderedView clean = render(OracleField(without_noise(scene)), s.pose, s.intrinsics, s.render);
      const DepthMap clean_depth = clean.depth_map(s.render.mask_threshold);
      if (clean_depth.valid_count() > 0) {
        err += depth_mse(noisy.depth, clean.depth, clean_depth.mask);
        ++counted;
      }
      images.push_back(noisy.image);
    }
    row.diversity = diversity_measure(images, features);
    row.geometry_error = counted ? err / static_cast<double>(counted) : 0.0;
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "psi,diversity,geometry_error,mean_noise_amplitude\n" << std::setprecision(10);
  for (const auto& r : rows) {
    os << r.psi << ',' << r.diversity << ',' << r.geometry_error << ',' << r.mean_noise_amplitude << '\n';
  }
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["metrics"] = metrics;
  j["samples"] = samples;
  j["split"] = split;
  j["config_hash"] = hash_hex(config_hash);
  j["side_yaw"] = side_yaw;
  return j.dump(2);
}

bool is_side_pose(double yaw, double side_yaw) { return std::abs(yaw) >= side_yaw; }

std::vector<TestScene> make_test_pool(const OracleGan& gan, const ExperimentConfig& cfg) {
  const Intrinsics intr = cfg.intrinsics();
  RenderConfig rc = cfg.render;
  rc.jitter = false;
  const double side_lo = std::min(cfg.eval.side_yaw, cfg.poses.yaw.hi);
  std::vector<TestScene> pool;
  for (std::size_t i = 0; i < cfg.eval.test_pool_size; ++i) {
    Rng rng(derive_seed(cfg.eval.test_seed, i));
    const OracleField field(without_noise(gan.decode_scene(gan.sample_latent(rng, 1.0))));
    TestScene scene;
    scene.input_pose = frontal_pose(cfg);
    scene.input = render(field, scene.input_pose, intr, rc).image;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int k = 0; k <= cfg.eval.test_random_poses; ++k) {
      double yaw;
      double pitch;
      if (k < cfg.eval.test_random_poses) {
        yaw = cfg.poses.yaw.lo + unit(rng) * (cfg.poses.yaw.hi - cfg.poses.yaw.lo);
      } else {
        const double mag = side_lo + unit(rng) * (cfg.poses.yaw.hi - side_lo);
        yaw = unit(rng) < 0.5 ? -mag : mag;
      }
      pitch = cfg.poses.pitch.lo + unit(rng) * (cfg.poses.pitch.hi - cfg.poses.pitch.lo);
      TestView v;
      v.pose = pose_from_angles(yaw, pitch, cfg.poses);
      v.yaw = yaw;
      const RenderedView r = render(field, v.pose, intr, rc);
      v.image = r.image;
      v.depth = r.depth_map(rc.mask_threshold);
      scene.views.push_back(std::move(v));
    }
    pool.push_back(std::move(scene));
  }
  return pool;
}

ModelEvaluation evaluate_model(const GNeRFModel& model, const std::vector<TestScene>& pool,
                               const ExperimentConfig& cfg, const ProbeEncoder& probe) {
  const Intrinsics intr = cfg.intrinsics();
  RenderConfig rc = cfg.render;
  rc.jitter = false;
  struct Acc {
    std::map<std::string, double> sums;
    std::size_t n = 0;
    void add(const std::map<std::string, double>& m) {
      for (const auto& [k, v] : m) sums[k] += v;
      ++n;
    }
    MetricReport report(const std::string& split, const ExperimentConfig& cfg) const {
      MetricReport r;
      r.split = split;
      r.samples = n;
      r.config_hash = config_hash(cfg);
      r.side_yaw = cfg.eval.side_yaw;
      for (const auto& [k, v] : sums) r.metrics[k] = n ? v / static_cast<double>(n) : std::nan("");
      return r;
    }
  };
  Acc all, frontal, side;
  for (const TestScene& scene : pool) {
    const SceneEmbedding emb = [&] {
      ad::NoGradGuard guard;
      return SceneEmbedding{model.encoder().encode(scene.input).values.detach()};
    }();
    const FrozenField field(model.field(), emb);
    for (const TestView& v : scene.views) {
      if (v.depth.valid_count() == 0) continue;
      const RenderedView pred = render(field, v.pose, intr, rc);
      std::map<std::string, double> m;
      m["depth_mse"] = depth_mse(pred.depth, v.depth.values, v.depth.mask, cfg.eval.align_median);
      m["psnr"] = metric_psnr(pred.image, v.image);
      m["ssim"] = metric_ssim(pred.image, v.image, std::min(cfg.loss.ssim_window, (intr.width - 1) | 1));
      m["identity"] = identity_proxy(scene.input, pred.image, probe);
      all.add(m);
      (is_side_pose(v.yaw, cfg.eval.side_yaw) ? side : frontal).add(m);
    }
  }
  return ModelEvaluation{all.report("all", cfg), frontal.report("frontal", cfg), side.report("side", cfg)};
}

std::vector<AblationSpec> default_ablation() {
  return {
      {"no_synthetic", false, 0.5, false},
      {"psi_1.0", true, 1.0, false},
      {"psi_0.5", true, 0.5, false},
      {"psi_0.5_dg", true, 0.5, true},
  };
}

ExperimentConfig ablation_config(const ExperimentConfig& base, const AblationSpec& spec, std::uint64_t seed) {
  ExperimentConfig cfg = base;
  cfg.data.psi = spec.psi;
  cfg.data.data_seed = derive_seed(base.data.data_seed, seed);
  cfg.data.synthetic_dir.clear();
  cfg.model.seed = derive_seed(base.model.seed, seed);
  cfg.train.seed = derive_seed(base.train.seed, seed);
  cfg.train.use_discriminator = spec.discriminator;
  if (!spec.synthetic) {
    cfg.train.gamma_threshold = 0.0;
    cfg.train.use_discriminator = false;
  }
  return cfg;
}

std::vector<AblationResult> ablation_suite(const ExperimentConfig& base, const std::vector<AblationSpec>& specs,
                                           const std::vector<std::uint64_t>& seeds, const ProgressFn& progress) {
  if (seeds.size() < 3) throw std::invalid_argument("ablation_suite: need at least three seeds");
  const OracleGan gan = make_oracle(base);
  const std::vector<TestScene> pool = make_test_pool(gan, base);
  const ProbeEncoder probe(base.eval.probe_seed);
  std::vector<AblationResult> results;
  for (const AblationSpec& spec : specs) {
    AblationResult res;
    res.spec = spec;
    res.seeds = seeds;
    std::map<std::string, std::vector<double>> all_vals, side_vals;
    for (std::uint64_t seed : seeds) {
      const ExperimentConfig cfg = ablation_config(base, spec, seed);
      if (progress) progress("training " + spec.name + " seed " + std::to_string(seed));
      const TrainingData data = build_training_data(cfg, gan, spec.synthetic);
      try {
        const TrainedModel trained = train_model(cfg, data);
        res.per_seed.push_back(evaluate_model(trained.model, pool, cfg, probe));
      } catch (const std::exception& e) {
        throw std::runtime_error("ablation '" + spec.name + "' seed " + std::to_string(seed) + ": " + e.what());
      }
      for (const auto& [k, v] : res.per_seed.back().all.metrics) all_vals[k].push_back(v);
      for (const auto& [k, v] : res.per_seed.back().side.metrics) side_vals[k].push_back(v);
      if (progress) {
        progress(spec.name + " seed " + std::to_string(seed) +
                 ": depth_mse all=" + std::to_string(res.per_seed.back().all.metrics["depth_mse"]) +
                 " side=" + std::to_string(res.per_seed.back().side.metrics["depth_mse"]));
      }
    }
    for (auto& [k, v] : all_vals) res.median_all[k] = median(v);
    for (auto& [k, v] : side_vals) res.median_side[k] = median(v);
    results.push_back(std::move(res));
  }
  return results;
}

void write_ablation_csv(std::ostream& os, const std::vector<AblationResult>& results) {
  os << "config,synthetic,psi,discriminator,seeds,depth_mse,depth_mse_side,ssim,psnr,identity\n"
     << std::setprecision(10);
  for (const auto& r : results) {
    auto get = [](const std::map<std::string, double>& m, const char* k) {
      const auto it = m.find(k);
      return it == m.end() ? std::nan("") : it->second;
    };
    os << r.spec.name << ',' << (r.spec.synthetic ? 1 : 0) << ',' << r.spec.psi << ','
       << (r.spec.discriminator ? 1 : 0) << ',' << r.seeds.size() << ',' << get(r.median_all, "depth_mse") << ','
       << get(r.median_side, "depth_mse") << ',' << get(r.median_all, "ssim") << ',' << get(r.median_all, "psnr")
       << ',' << get(r.median_all, "identity") << '\n';
  }
}

}  // namespace gnerf

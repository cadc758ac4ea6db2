#include "gnerf/experiment.hpp"

#include "gnerf/dataset.hpp"

#include <cstdlib>
#include <string>

namespace gnerf {

OracleGan make_oracle(const ExperimentConfig& cfg) {
  OracleConfig oc = cfg.oracle;
  oc.background = cfg.render.background;
  OracleGan gan(oc);
  gan.estimate_center(cfg.data.center_samples, cfg.data.center_seed);
  return gan;
}

CameraPose frontal_pose(const ExperimentConfig& cfg) { return pose_from_angles(0.0, 0.0, cfg.poses); }

SynthesisRequest synthesis_request(const ExperimentConfig& cfg) {
  SynthesisRequest r;
  r.count = cfg.data.dataset_size;
  r.psi = cfg.data.psi;
  r.seed = cfg.data.data_seed;
  r.poses = cfg.poses;
  r.intrinsics = cfg.intrinsics();
  r.render = cfg.render;
  r.render.jitter = false;
  r.threads = worker_threads(cfg.data.threads);
  return r;
}

TrainingData build_training_data(const ExperimentConfig& cfg, const OracleGan& gan, bool with_synthetic) {
  TrainingData data;
  if (with_synthetic) {
    if (!cfg.data.synthetic_dir.empty()) {
      data.synthetic = load_dataset(cfg.data.synthetic_dir);
    } else {
      data.synthetic = generate_triplets(gan, synthesis_request(cfg));
    }
  }
  RenderConfig rc = cfg.render;
  rc.jitter = false;
  for (auto& s : generate_single_view_pool(gan, cfg.data.real_pool_size, cfg.data.real_seed, frontal_pose(cfg),
                                           cfg.intrinsics(), rc)) {
    data.real.push_back(RealImage{std::move(s.image), s.pose});
  }
  return data;
}

TrainedModel train_model(const ExperimentConfig& cfg, const TrainingData& data, const FitOptions& options) {
  TrainedModel out{GNeRFModel(cfg.model), {}};
  const ReconstructionLoss recon(cfg.loss);
  TrainContext ctx;
  ctx.model = &out.model;
  ctx.recon = &recon;
  ctx.loss = cfg.loss;
  ctx.train = cfg.train;
  ctx.render = cfg.render;
  ctx.intrinsics = cfg.intrinsics();
  ctx.poses = cfg.poses;
  out.fit = fit(ctx, data, options);
  return out;
}

int worker_threads(int requested) {
  int n = requested < 1 ? 1 : requested;
  if (const char* env = std::getenv("GNERF_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1 && cap < n) n = cap;
    } catch (const std::exception&) {
    }
  }
  return n;
}

}  // namespace gnerf

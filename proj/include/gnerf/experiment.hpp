#pragma once

// Glue that turns an ExperimentConfig into oracles, datasets and trained
// models. Shared by the command-line tool, the ablation suite and tests.

#include "gnerf/config.hpp"
#include "gnerf/model.hpp"
#include "gnerf/oracle.hpp"
#include "gnerf/train.hpp"

#include <filesystem>
#include <functional>
#include <optional>

namespace gnerf {

/// Oracle with its latent center estimated from config.data.center_samples.
OracleGan make_oracle(const ExperimentConfig& cfg);

/// yaw = 0, pitch = 0 on the configured orbit.
CameraPose frontal_pose(const ExperimentConfig& cfg);

SynthesisRequest synthesis_request(const ExperimentConfig& cfg);

/// Synthetic triplets (loaded from data.synthetic_dir when set, otherwise
/// generated in memory) plus the single-view real pool. `with_synthetic`
/// false leaves the synthetic set empty.
TrainingData build_training_data(const ExperimentConfig& cfg, const OracleGan& gan, bool with_synthetic);

struct TrainedModel {
  GNeRFModel model;
  FitResult fit;
};

TrainedModel train_model(const ExperimentConfig& cfg, const TrainingData& data, const FitOptions& options = {});

/// `requested` capped by the GNERF_THREADS environment variable.
int worker_threads(int requested);

}  // namespace gnerf

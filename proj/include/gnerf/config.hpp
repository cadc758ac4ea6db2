#pragma once

// Flat "key = value" experiment configuration covering every module.

#include "gnerf/camera.hpp"
#include "gnerf/losses.hpp"
#include "gnerf/model.hpp"
#include "gnerf/oracle.hpp"
#include "gnerf/render.hpp"
#include "gnerf/train.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gnerf {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  double psi = 0.5;
  std::size_t dataset_size = 2000;
  std::uint64_t data_seed = 101;
  std::size_t real_pool_size = 500;
  std::uint64_t real_seed = 202;
  std::size_t center_samples = 100000;
  std::uint64_t center_seed = 303;
  double focal_ratio = 1.7;
  /// Existing dataset directory to train from; empty synthesizes in memory.
  std::string synthetic_dir;
  int threads = 1;
};

struct EvalConfig {
  double side_yaw = 0.45;
  std::size_t test_pool_size = 24;
  std::uint64_t test_seed = 404;
  /// Random poses per test scene in addition to one side pose.
  int test_random_poses = 3;
  bool align_median = true;
  std::vector<double> sweep_psi = {0.0, 0.3, 0.7, 1.0};
  std::size_t sweep_scenes = 200;
  int sweep_resolution = 32;
  int sweep_samples = 64;
  std::vector<std::uint64_t> ablation_seeds = {1, 2, 3};
  std::uint64_t probe_seed = 505;
};

struct ExperimentConfig {
  OracleConfig oracle;
  PoseDistribution poses;
  RenderConfig render;
  DataConfig data;
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  EvalConfig eval;

  Intrinsics intrinsics() const;
  void validate() const;
};

/// Every key in canonical order.
std::vector<std::string> config_keys();

/// Parses "key = value" lines ('#' starts a comment) on top of `base`.
/// Unknown or repeated keys are errors.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {},
                              const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies "key=value" overrides. Repeating a key with a different value is an
/// error; exact repeats are accepted.
void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& overrides);

void set_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::string get_value(const ExperimentConfig& cfg, const std::string& key);

/// Canonical text form: one "key = value" line per key.
std::string to_text(const ExperimentConfig& cfg);
/// 64-bit FNV-1a of the canonical text.
std::uint64_t config_hash(const ExperimentConfig& cfg);
std::string hash_hex(std::uint64_t hash);

}  // namespace gnerf

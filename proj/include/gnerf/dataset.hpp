#pragma once

// On-disk triplet datasets and parameter checkpoints.
//
// Dataset layout: manifest.json, img_f_%06d.png, img_s_%06d.png,
// depth_%06d.gnrf, mask_%06d.gnrf. All paths in the manifest are relative.

#include "gnerf/model.hpp"
#include "gnerf/oracle.hpp"
#include "gnerf/tensor_io.hpp"
#include "gnerf/triplet.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gnerf {

inline constexpr const char* kManifestVersion = "gnerf-dataset-1";

struct TripletRecord {
  std::string image_first;
  std::string image_second;
  std::string depth;
  std::string mask;
  std::array<double, 16> pose_first{};
  std::array<double, 16> pose_second{};
  std::array<double, 16> pose_depth{};
  std::vector<double> latent;
};

struct DatasetManifest {
  std::string version = kManifestVersion;
  std::size_t count = 0;
  double psi = 0.5;
  std::uint64_t seed = 0;
  PoseDistribution poses;
  RenderConfig render;
  Intrinsics intrinsics;
  std::vector<double> center;
  std::size_t center_samples = 0;
  std::vector<TripletRecord> records;
};

/// Writes the four files of triplet `index`; errors name the index.
TripletRecord save_triplet(const std::filesystem::path& dir, std::size_t index, const Triplet& triplet);
Triplet load_triplet(const std::filesystem::path& dir, const TripletRecord& record);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text, const std::string& what);
/// Atomic: temp file then rename.
void write_manifest(const std::filesystem::path& dir, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& dir);

/// Generates `request.count` triplets with the oracle and writes them plus the
/// manifest to `dir`. Output bytes do not depend on `request.threads`.
DatasetManifest synthesize_dataset(const std::filesystem::path& dir, const OracleGan& gan,
                                   const SynthesisRequest& request);

/// Reads every triplet listed in the manifest.
std::vector<Triplet> load_dataset(const std::filesystem::path& dir, DatasetManifest* manifest = nullptr);

// Checkpoints: "GNCK", u32 version, u64 config hash, u32 count, then per
// tensor a u32 name length, the name, a u64 block length and a tensor block.

struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::vector<std::pair<std::string, Eigen::MatrixXd>> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& params, std::uint64_t config_hash);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct RestoreResult {
  /// Set when the stored hash differs from the expected one.
  bool hash_mismatch = false;
  std::string warning;
};

/// Copies checkpoint values into `params`. Throws listing every parameter that
/// is missing or has the wrong shape.
RestoreResult restore_parameters(const Checkpoint& checkpoint, const NamedTensors& params,
                                 std::uint64_t expected_hash);

}  // namespace gnerf

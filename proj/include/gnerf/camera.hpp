#pragma once

// Pinhole camera model, orbit pose distribution and per-pixel rays.
//
// Conventions: camera-to-world extrinsics, right-handed world, the camera
// looks down its local -z axis with +y up and +x right. Image rows grow
// downwards.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <random>

namespace gnerf {

using Rng = std::mt19937_64;

struct Intrinsics {
  double focal_px = 1.0;
  Eigen::Vector2d principal_point = Eigen::Vector2d::Zero();
  int width = 1;
  int height = 1;

  /// Principal point at the image center.
  static Intrinsics centered(int width, int height, double focal_px);
  void validate() const;
};

struct CameraPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  /// Camera viewing direction in world coordinates.
  Eigen::Vector3d forward() const { return -rotation.col(2); }
  Eigen::Matrix4d to_matrix() const;
  static CameraPose from_matrix(const Eigen::Matrix4d& m);
  /// Row-major flattening of the 4x4 camera-to-world matrix.
  std::array<double, 16> to_row_major() const;
  static CameraPose from_row_major(const std::array<double, 16>& values);
  /// max |R^T R - I| and |det R - 1|.
  double orthonormality_residual() const;
};

struct Ray {
  Eigen::Vector3d origin;
  Eigen::Vector3d direction;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double x) const { return x >= lo && x <= hi; }
};

/// Uniform orbit distribution over yaw and pitch around a look-at point.
struct PoseDistribution {
  Interval yaw{-0.6, 0.6};
  Interval pitch{-0.3, 0.3};
  double radius = 2.7;
  Eigen::Vector3d look_at = Eigen::Vector3d::Zero();

  void validate() const;
};

/// Camera on the sphere of `dist.radius` around `dist.look_at`. Yaw rotates
/// about world +y (yaw 0 sits on +z), pitch raises the camera towards +y.
CameraPose pose_from_angles(double yaw, double pitch, const PoseDistribution& dist);

/// Yaw/pitch drawn uniformly from the distribution's ranges.
CameraPose sample_pose(const PoseDistribution& dist, Rng& rng);

/// Yaw and pitch recovered from an orbit pose (inverse of pose_from_angles).
std::pair<double, double> orbit_angles(const CameraPose& pose, const Eigen::Vector3d& look_at);

/// Row-major ray grid; pixel (x, y) is at index y * width + x.
struct RayGrid {
  int width = 0;
  int height = 0;
  Eigen::MatrixX3d origins;
  Eigen::MatrixX3d directions;

  Ray at(int x, int y) const;
  Eigen::Index count() const { return origins.rows(); }
};

/// Ray through continuous image coordinates (u, v); pixel centers sit at
/// half-integer coordinates.
Ray pixel_ray(const CameraPose& pose, const Intrinsics& intr, double u, double v);

RayGrid generate_rays(const CameraPose& pose, const Intrinsics& intr);

/// Seed for an independent stream derived from (seed, index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace gnerf

#include "gnerf/camera.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gnerf {

Intrinsics Intrinsics::centered(int width, int height, double focal_px) {
  Intrinsics intr;
  intr.focal_px = focal_px;
  intr.width = width;
  intr.height = height;
  intr.principal_point = Eigen::Vector2d(0.5 * width, 0.5 * height);
  intr.validate();
  return intr;
}

void Intrinsics::validate() const {
  if (!(focal_px > 0.0) || !std::isfinite(focal_px)) {
    throw std::invalid_argument("intrinsics: focal_px must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("intrinsics: image size must be positive");
  }
  if (principal_point.x() < 0.0 || principal_point.x() > width || principal_point.y() < 0.0 ||
      principal_point.y() > height) {
    throw std::invalid_argument("intrinsics: principal point outside the image");
  }
}

Eigen::Matrix4d CameraPose::to_matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

CameraPose CameraPose::from_matrix(const Eigen::Matrix4d& m) {
  CameraPose pose;
  pose.rotation = m.topLeftCorner<3, 3>();
  pose.translation = m.topRightCorner<3, 1>();
  return pose;
}

std::array<double, 16> CameraPose::to_row_major() const {
  const Eigen::Matrix4d m = to_matrix();
  std::array<double, 16> out{};
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      out[static_cast<std::size_t>(r * 4 + c)] = m(r, c);
    }
  }
  return out;
}

CameraPose CameraPose::from_row_major(const std::array<double, 16>& values) {
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      m(r, c) = values[static_cast<std::size_t>(r * 4 + c)];
    }
  }
  return from_matrix(m);
}

double CameraPose::orthonormality_residual() const {
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(rotation.determinant() - 1.0));
}

void PoseDistribution::validate() const {
  if (!(yaw.lo <= yaw.hi) || !(pitch.lo <= pitch.hi)) {
    throw std::invalid_argument("pose distribution: empty yaw or pitch range");
  }
  if (!(radius > 0.0)) {
    throw std::invalid_argument("pose distribution: radius must be positive");
  }
}

CameraPose pose_from_angles(double yaw, double pitch, const PoseDistribution& dist) {
  const Eigen::Vector3d offset(std::sin(yaw) * std::cos(pitch), std::sin(pitch),
                               std::cos(yaw) * std::cos(pitch));
  const Eigen::Vector3d position = dist.look_at + dist.radius * offset;
  const Eigen::Vector3d to_target = dist.look_at - position;
  const double distance = to_target.norm();
  if (!(distance > 1e-12)) {
    throw std::invalid_argument("pose_from_angles: camera position coincides with look_at");
  }
  const Eigen::Vector3d forward = to_target / distance;
  const Eigen::Vector3d world_up = Eigen::Vector3d::UnitY();
  Eigen::Vector3d up = world_up - world_up.dot(forward) * forward;
  const double up_norm = up.norm();
  if (!(up_norm > 1e-9)) {
    throw std::invalid_argument("pose_from_angles: forward axis parallel to world up");
  }
  up /= up_norm;
  const Eigen::Vector3d back = -forward;
  const Eigen::Vector3d right = up.cross(back);

  CameraPose pose;
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = up;
  pose.rotation.col(2) = back;
  pose.translation = position;
  return pose;
}

CameraPose sample_pose(const PoseDistribution& dist, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double yaw = dist.yaw.lo + (dist.yaw.hi - dist.yaw.lo) * unit(rng);
  const double pitch = dist.pitch.lo + (dist.pitch.hi - dist.pitch.lo) * unit(rng);
  return pose_from_angles(yaw, pitch, dist);
}

std::pair<double, double> orbit_angles(const CameraPose& pose, const Eigen::Vector3d& look_at) {
  const Eigen::Vector3d offset = (pose.translation - look_at).normalized();
  const double pitch = std::asin(std::clamp(offset.y(), -1.0, 1.0));
  const double yaw = std::atan2(offset.x(), offset.z());
  return {yaw, pitch};
}

Ray RayGrid::at(int x, int y) const {
  const Eigen::Index i = static_cast<Eigen::Index>(y) * width + x;
  return Ray{origins.row(i).transpose(), directions.row(i).transpose()};
}

Ray pixel_ray(const CameraPose& pose, const Intrinsics& intr, double u, double v) {
  const Eigen::Vector3d local((u - intr.principal_point.x()) / intr.focal_px,
                              -(v - intr.principal_point.y()) / intr.focal_px, -1.0);
  return Ray{pose.translation, (pose.rotation * local).normalized()};
}

RayGrid generate_rays(const CameraPose& pose, const Intrinsics& intr) {
  intr.validate();
  RayGrid grid;
  grid.width = intr.width;
  grid.height = intr.height;
  const Eigen::Index n = static_cast<Eigen::Index>(intr.width) * intr.height;
  grid.origins.resize(n, 3);
  grid.directions.resize(n, 3);
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      const Ray ray = pixel_ray(pose, intr, x + 0.5, y + 0.5);
      const Eigen::Index i = static_cast<Eigen::Index>(y) * intr.width + x;
      grid.origins.row(i) = ray.origin.transpose();
      grid.directions.row(i) = ray.direction.transpose();
    }
  }
  return grid;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 over a mixed key
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace gnerf

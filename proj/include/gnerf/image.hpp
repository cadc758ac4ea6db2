#pragma once

#include <Eigen/Dense>

namespace gnerf {

/// RGB image stored as a 3 x (height * width) matrix; pixel (x, y) is column
/// y * width + x. Values are nominally in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  Eigen::MatrixXd pixels;

  static Image filled(int width, int height, const Eigen::Vector3d& color);
  Eigen::Index pixel_count() const { return static_cast<Eigen::Index>(width) * height; }
  Eigen::Vector3d at(int x, int y) const { return pixels.col(static_cast<Eigen::Index>(y) * width + x); }
  bool same_shape(const Image& other) const { return width == other.width && height == other.height; }
  /// Largest absolute channel difference; throws on shape mismatch.
  double max_abs_diff(const Image& other) const;
};

/// Depth along the ray with a validity mask (1 = valid).
struct DepthMap {
  int width = 0;
  int height = 0;
  Eigen::VectorXd values;
  Eigen::VectorXd mask;

  Eigen::Index pixel_count() const { return static_cast<Eigen::Index>(width) * height; }
  Eigen::Index valid_count() const;
};

}  // namespace gnerf

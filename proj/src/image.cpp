#include "gnerf/image.hpp"

#include <stdexcept>

namespace gnerf {

Image Image::filled(int width, int height, const Eigen::Vector3d& color) {
  Image img;
  img.width = width;
  img.height = height;
  img.pixels = color.replicate(1, static_cast<Eigen::Index>(width) * height);
  return img;
}

double Image::max_abs_diff(const Image& other) const {
  if (!same_shape(other)) {
    throw std::invalid_argument("image shape mismatch");
  }
  return (pixels - other.pixels).cwiseAbs().maxCoeff();
}

Eigen::Index DepthMap::valid_count() const {
  Eigen::Index n = 0;
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    n += mask[i] > 0.5 ? 1 : 0;
  }
  return n;
}

}  // namespace gnerf

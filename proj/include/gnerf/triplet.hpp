#pragma once

#include "gnerf/camera.hpp"
#include "gnerf/image.hpp"
#include "gnerf/latent.hpp"

namespace gnerf {

/// One unit of multi-view synthetic data: two views of the same scene and a
/// depth map from a third pose.
struct Triplet {
  Image first;
  Image second;
  DepthMap depth;
  CameraPose pose_first;
  CameraPose pose_second;
  CameraPose pose_depth;
  IntermediateLatent latent;
};

}  // namespace gnerf

#pragma once

#include "kinflow/tensor.hpp"
#include "kinflow/trajectory.hpp"

namespace kinflow {

// Trajectory-conditioned latent from the first-frame latent z [h,w,c]:
// frame 0 is z; in every later frame the cell occupied by object n receives
// z at that object's frame-0 cell, all other cells stay zero. Cell ownership
// comes from the mask, which makes collision handling order-independent.
Tensor inject(const Tensor& z, const LatentTrajectory& lt, const TrajMask& mask);

}  // namespace kinflow

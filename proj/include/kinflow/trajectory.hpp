#pragma once

#include "kinflow/rng.hpp"
#include "kinflow/tensor.hpp"

#include <string>
#include <vector>

namespace kinflow {

// Per-object pixel tracks. x is the column coordinate, y the row coordinate,
// y grows downward; both arrays are [frames x objects].
struct Trajectory {
    Eigen::ArrayXXd x, y;
    int image_width = 0;
    int image_height = 0;
    double fps = 0.0;
    std::vector<std::string> ids;

    Index frames() const { return x.rows(); }
    Index objects() const { return x.cols(); }
};

// JSON layout:
// {"image_width":int,"image_height":int,"fps":float,
//  "objects":[{"id":str,"points":[[x,y],...]},...]}
// All objects must share the frame count.
Trajectory parse_trajectory_json(const std::string& text);
Trajectory load_trajectory(const std::string& path);
std::string trajectory_to_json(const Trajectory& traj);

// Track pooled down to the latent frame count.
struct PooledTrajectory {
    Eigen::ArrayXXd x, y;  // [f x objects]
    int image_width = 0;
    int image_height = 0;
    double fps_effective = 0.0;

    Index frames() const { return x.rows(); }
    Index objects() const { return x.cols(); }
};

// Contiguous near-equal windows: window k covers raw frames
// [floor(k*F/f), floor((k+1)*F/f)); each output frame is the window mean.
PooledTrajectory pool_temporal(const Trajectory& traj, Index f);

// Integer cells on the h x w latent grid. p is the row, q the column.
struct LatentTrajectory {
    Eigen::ArrayXXi p, q;  // [f x objects]
    Index downsample = 1;
    Index grid_h = 0, grid_w = 0;

    Index frames() const { return p.rows(); }
    Index objects() const { return p.cols(); }
};

// p = clamp(round(y/s), 0, h-1), q = clamp(round(x/s), 0, w-1),
// rounding half away from zero.
LatentTrajectory to_latent_grid(const PooledTrajectory& pt, Index s, Index h, Index w);

// Occupancy of trajectory cells on the latent grid. binary is the 0/1
// indicator, soft its per-frame Gaussian blur, owner the object index
// holding each occupied cell (-1 elsewhere). When several objects land on
// one cell the owner is picked uniformly at random, keyed by (frame, cell)
// so the choice is reproducible and order-independent.
struct TrajMask {
    Tensor binary;  // [f,h,w] in {0,1}
    Tensor soft;    // [f,h,w] in [0,1]
    std::vector<std::int32_t> owner;
    Index f = 0, h = 0, w = 0;

    std::int32_t owner_at(Index i, Index p, Index q) const {
        return owner[static_cast<std::size_t>((i * h + p) * w + q)];
    }
    std::int32_t& owner_at(Index i, Index p, Index q) {
        return owner[static_cast<std::size_t>((i * h + p) * w + q)];
    }
};

TrajMask build_mask(const LatentTrajectory& lt, Index f, Index h, Index w, double blur_sigma,
                    Seed seed);

// Per-frame 2-D Gaussian blur, truncated at radius ceil(3*sigma) (min 1),
// kernel renormalized to sum 1, zero padding at the grid edge, output
// clipped to [0,1]. sigma == 0 copies the input.
Tensor gaussian_blur_frames(const Tensor& frames, double sigma);

// Single-file form of a TrajMask: rank-4 [3,f,h,w] with channel 0 = binary,
// 1 = soft, 2 = owner (as double, -1 where empty).
Tensor pack_mask(const TrajMask& mask);
TrajMask unpack_mask(const Tensor& packed);

// [f,N,2] tensor of (p,q) cells, for moving latent trajectories through
// tensor files.
Tensor latent_trajectory_to_tensor(const LatentTrajectory& lt);
LatentTrajectory latent_trajectory_from_tensor(const Tensor& t, Index s, Index h, Index w);

}  // namespace kinflow

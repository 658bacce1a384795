#pragma once

#include "kinflow/rng.hpp"
#include "kinflow/tensor.hpp"
#include "kinflow/trajectory.hpp"

#include <string>
#include <vector>

namespace kinflow {

// How acceleration is filled at the first/last frame, where no centered
// second difference exists. `replicate` copies the nearest interior value;
// `one_sided` uses the first-order one-sided second difference.
enum class BoundaryAccel { replicate, one_sided };

// Second-order kinematic state per (frame, object): normalized position r,
// velocity v (1/s), acceleration a (1/s^2) and their Euclidean magnitudes.
// Positions are pixel coordinates divided by the longer image side, so
// r stays in [0,1] for in-bounds points. tau is the seconds-per-frame of the
// pooled track.
struct KinematicTrack {
    Eigen::ArrayXXd rx, ry, vx, vy, ax, ay;  // [f x objects]
    Eigen::ArrayXXd vmag, amag;              // [f x objects]
    double tau = 0.0;

    Index frames() const { return rx.rows(); }
    Index objects() const { return rx.cols(); }
};

// Centered differences on interior frames, forward/backward differences for
// the boundary velocities. With only two frames both velocities are the
// single forward difference and acceleration is zero (no curvature is
// observable).
KinematicTrack derive_kinematics(const PooledTrajectory& pt,
                                 BoundaryAccel boundary = BoundaryAccel::replicate);

// sign(d) * log10(1 + |d|), elementwise. Odd and strictly increasing.
double log_compress(double d);
Eigen::ArrayXd log_compress(const Eigen::ArrayXd& d);
Eigen::ArrayXXd log_compress(const Eigen::ArrayXXd& d);

inline constexpr Index kFeatureWidth = 8;
inline constexpr double kStdFloor = 1e-6;
inline constexpr int kStatsVersion = 1;

// Per-component mean/std of the compressed feature distribution.
struct FeatureStats {
    Eigen::Array<double, 8, 1> mean = Eigen::Array<double, 8, 1>::Zero();
    Eigen::Array<double, 8, 1> std = Eigen::Array<double, 8, 1>::Ones();
};

std::string feature_stats_to_json(const FeatureStats& stats);
FeatureStats feature_stats_from_json(const std::string& text);
void save_feature_stats(const std::string& path, const FeatureStats& stats);
FeatureStats load_feature_stats(const std::string& path);

// phi: raw [r, v, a, |v|, |a|] rows; phi_tilde: positions kept raw, the
// remaining six components log-compressed, then the whole row standardized
// with the dataset stats. Both are [f,N,8].
struct KinematicFeature {
    Tensor phi;
    Tensor phi_tilde;
};

Tensor raw_features(const KinematicTrack& kt);  // phi only
KinematicFeature assemble_features(const KinematicTrack& kt, const FeatureStats& stats);

// Population mean/std over all rows of the given raw feature tensors, taken
// after log-compression; std floored at 1e-6. Needs at least two rows.
FeatureStats fit_stats(const std::vector<Tensor>& raw_phi);

// Three affine layers 8 -> hidden -> hidden -> d with GELU between them.
struct KinEncoder {
    Eigen::MatrixXd w1, w2, w3;  // [hidden,8], [hidden,hidden], [d,hidden]
    Eigen::VectorXd b1, b2, b3;

    Index hidden() const { return w1.rows(); }
    Index out_dim() const { return w3.rows(); }

    static KinEncoder init(Index hidden, Index d, Seed seed);
};

// Kinematic tokens [f,N,d] from normalized features.
Tensor encode(const KinematicFeature& feat, const KinEncoder& enc);

// Training-path forward/backward on a row matrix X [rows x 8].
struct KinEncoderCache {
    Eigen::MatrixXd x, z1, h1, z2, h2;
};

Eigen::MatrixXd encoder_forward(const KinEncoder& enc, const Eigen::MatrixXd& x,
                                KinEncoderCache* cache = nullptr);

struct KinEncoderGrads {
    Eigen::MatrixXd w1, w2, w3;
    Eigen::VectorXd b1, b2, b3;
    Eigen::MatrixXd x;
};

KinEncoderGrads encoder_backward(const KinEncoder& enc, const KinEncoderCache& cache,
                                 const Eigen::MatrixXd& d_out);

// Exact (erf-based) GELU and its derivative.
double gelu(double x);
double gelu_grad(double x);

}  // namespace kinflow

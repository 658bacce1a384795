#pragma once

#include "kinflow/rng.hpp"
#include "kinflow/tensor.hpp"
#include "kinflow/trajectory.hpp"

namespace kinflow {

inline constexpr double kLambdaOut = 0.5;
inline constexpr double kLambdaTraj = 0.5;
inline constexpr double kLossDelta = 1e-8;
inline constexpr double kVideoWeight = 0.85;
inline constexpr double kAudioWeight = 0.15;

// One training point of the two-region flow. Off the trajectory mask the
// path runs to Gaussian noise, on it to the trajectory-conditioned latent;
// both legs are affine in t, so x_t == x_0 + t * v_target everywhere.
struct FlowSample {
    Tensor x_t;
    Tensor v_target;
    double t = 0.0;
};

// x0, eps, xtraj are [f,h,w,c]; the binary mask [f,h,w] broadcasts over
// channels. t must lie in [0,1].
FlowSample hybrid_interpolant(const Tensor& x0, const Tensor& eps, const Tensor& xtraj,
                              const TrajMask& mask, double t);

struct LossBreakdown {
    double l_out = 0.0;
    double l_traj = 0.0;
    double l_video = 0.0;
    double l_final = 0.0;
};

// Region-normalized squared errors:
//   l_out  = sum((1-soft) (vhat-v)^2) / (sum(1-soft) + delta)
//   l_traj = sum(  soft   (vhat-v)^2) / (sum(soft)   + delta)
//   l_video = lambda_out * l_out + lambda_traj * l_traj
// soft [f,h,w] broadcasts over channels and its sums count broadcast
// elements, so soft == 0 reduces l_out to the plain MSE. Sums run in flat
// index order for bitwise reproducibility.
LossBreakdown region_losses(const Tensor& v_hat, const Tensor& v_target, const Tensor& soft,
                            double lambda_out = kLambdaOut, double lambda_traj = kLambdaTraj,
                            double delta = kLossDelta);

// d l_video / d v_hat, elementwise.
Tensor region_loss_grad(const Tensor& v_hat, const Tensor& v_target, const Tensor& soft,
                        double lambda_out = kLambdaOut, double lambda_traj = kLambdaTraj,
                        double delta = kLossDelta);

double final_loss(double l_video, double l_audio, double video_weight = kVideoWeight,
                  double audio_weight = kAudioWeight);

// Sampling start at t=1: noise off-mask, the conditioned latent on-mask.
Tensor inference_init(const Tensor& eps, const Tensor& xtraj, const TrajMask& mask);

// Conditioning inputs of one training sample.
struct ConditionBundle {
    Tensor xtraj;
    TrajMask mask;
};

// Whether sample `sample_index` trains unconditionally.
bool dropout_decision(Seed seed, std::uint64_t sample_index, double p);

// With probability p the mask is zeroed and xtraj keeps only frame 0, i.e.
// the sample becomes unconditional. Deterministic in (seed, sample_index).
ConditionBundle traj_dropout(const ConditionBundle& bundle, double p, Seed seed,
                             std::uint64_t sample_index);

}  // namespace kinflow

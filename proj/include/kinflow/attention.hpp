#pragma once

#include "kinflow/rng.hpp"
#include "kinflow/tensor.hpp"

#include <vector>

namespace kinflow {

// Row-wise root-mean-square normalization with a learned gain:
// y = gain .* x / sqrt(mean(x^2) + eps).
Eigen::MatrixXd rms_norm(const Eigen::MatrixXd& x, const Eigen::VectorXd& gain,
                         double eps = 1e-6);

// Rotary encoding over consecutive column pairs. Row r is rotated by angles
// positions[r] * base^(-2k/width) for pair k. Positions may be fractional.
// Width must be even.
Eigen::MatrixXd rope(const Eigen::MatrixXd& x, const Eigen::VectorXd& positions, double base);

// Cross-attention block fusing kinematic tokens into an audio token stream:
//   q = rope(Norm(audio W_q)), k = rope(Norm(kin W_k)), v = kin W_v
//   out = audio + sigmoid(gamma) * softmax(q k^T / sqrt(d_head)) v
// Kinematic keys use their frame index as rotary position; audio queries use
// l * f / L_a so both timelines share one phase axis. gamma starts strongly
// negative so the block opens as a near-identity.
struct FusionBlock {
    Eigen::MatrixXd w_q, w_k, w_v;   // [d x d]
    Eigen::VectorXd q_gain, k_gain;  // [d]
    double gamma = -10.0;
    Index n_heads = 1;
    double rope_base = 10000.0;

    Index dim() const { return w_q.rows(); }
    Index head_dim() const { return dim() / n_heads; }

    static FusionBlock init(Index d, Index n_heads, Seed seed, double gamma_init = -10.0,
                            double rope_base = 10000.0);
};

// Per-head attention internals, for tests and diagnostics.
struct FuseTrace {
    std::vector<Eigen::MatrixXd> logits;   // [L_a x f*N] per head
    std::vector<Eigen::MatrixXd> weights;  // softmax rows
};

// audio [L_a x d], kin_tokens [f,N,d]. N = 0 returns audio unchanged.
// position_offset shifts both timelines jointly (the relative-position
// geometry is unaffected).
Eigen::MatrixXd fuse(const Eigen::MatrixXd& audio, const Tensor& kin_tokens,
                     const FusionBlock& block, FuseTrace* trace = nullptr,
                     double position_offset = 0.0);

struct FusionGrads {
    Eigen::MatrixXd w_q, w_k, w_v;
    Eigen::VectorXd q_gain, k_gain;
    double gamma = 0.0;
    Eigen::MatrixXd d_audio;
    Tensor d_kin;
};

// Gradients for loss = sum(d_out .* fuse(...)); d_out is the upstream
// gradient at the block output.
FusionGrads fuse_backward(const Eigen::MatrixXd& audio, const Tensor& kin_tokens,
                          const FusionBlock& block, const Eigen::MatrixXd& d_out,
                          double position_offset = 0.0);

double sigmoid(double x);

}  // namespace kinflow

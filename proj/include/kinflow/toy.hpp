#pragma once

#include "kinflow/config.hpp"
#include "kinflow/hybrid_flow.hpp"
#include "kinflow/latent_inject.hpp"
#include "kinflow/tensor.hpp"
#include "kinflow/trajectory.hpp"

#include <functional>
#include <string>
#include <vector>

namespace kinflow {

// A single moving-blob clip: Gaussian bumps of the given amplitude/radius
// rendered along `path` on a height x width grid, plus a per-frame loudness
// envelope derived from speed (clipped to [0,1], forced to 1 at impact
// frames).
struct SceneSpec {
    Index height = 16, width = 16;
    PooledTrajectory path;        // pixel coordinates on the grid
    double amplitude = 1.0;
    double radius = 1.5;
    double envelope_gain = 1.0;   // scales |v| before clipping
    std::vector<Index> impact_frames;
};

struct SyntheticScene {
    Tensor video;                 // [f,h,w,1] pixel-space frames
    Tensor x0;                    // encoded latents [f, h/s, w/s, 1]
    Tensor z;                     // x0 frame 0, [h/s, w/s, 1]
    PooledTrajectory path;
    LatentTrajectory lt;
    TrajMask mask;
    Tensor xtraj;
    Eigen::ArrayXd audio_env;     // [f] in [0,1]
    std::vector<Index> impact_frames;
};

// Renders the clip, encodes it with the s-fold average-pool latent map
// (identity at s=1), builds the occupancy mask (owner ties keyed by seed)
// and the injected conditioning latent.
SyntheticScene make_scene(const SceneSpec& spec, Seed seed, Index downsample = 1,
                          double blur_sigma = 0.5);

// s x s block average per frame; pixel dims must be divisible by s.
Tensor encode_average_pool(const Tensor& video, Index s);

// Randomized ballistic paths (straight or gravity+bounce) for dataset
// generation; a given (seed, index) always produces the same spec.
SceneSpec random_scene_spec(const RunConfig& cfg, Seed seed, std::uint64_t index);

std::vector<SyntheticScene> make_dataset(const RunConfig& cfg, Index count, Seed seed);

// Residual per-frame MLP velocity model. Input per frame: the frame's
// latent block, the conditioning block, a sinusoidal t embedding and a
// frame-position embedding. The flow time additionally gates each hidden
// layer multiplicatively (the regression target scales like 1/t near the
// data end, which an additive embedding alone cannot express).
struct VelocityNetConfig {
    Index frames = 16, height = 16, width = 16, channels = 1;
    Index hidden = 384;
    bool conditioned = true;
};

inline constexpr Index kTimeEmbWidth = 16;
inline constexpr Index kFrameEmbWidth = 8;

struct VelocityNet {
    VelocityNetConfig cfg;
    Eigen::MatrixXd w1, w2, w3;
    Eigen::VectorXd b1, b2, b3;
    Eigen::MatrixXd wt1, wt2;  // [hidden x kTimeEmbWidth] gate projections

    Index frame_size() const { return cfg.height * cfg.width * cfg.channels; }
    Index in_dim() const { return 2 * frame_size() + kTimeEmbWidth + kFrameEmbWidth; }
    Index param_count() const {
        return w1.size() + w2.size() + w3.size() + b1.size() + b2.size() + b3.size() +
               wt1.size() + wt2.size();
    }

    static VelocityNet init(const VelocityNetConfig& cfg, Seed seed);
};

struct VNetCache {
    Eigen::MatrixXd in, z1, g1, h1, z2, g2, h2;
    Eigen::VectorXd t_emb, m1, m2;
};

// x [f,h,w,c] -> v_hat of the same shape. cond may be null (zeros are fed).
Tensor vnet_forward(const VelocityNet& net, const Tensor& x, double t, const Tensor* cond,
                    VNetCache* cache = nullptr);

struct VNetGrads {
    Eigen::MatrixXd w1, w2, w3;
    Eigen::VectorXd b1, b2, b3;
    Eigen::MatrixXd wt1, wt2;

    void add(const VNetGrads& other);
};

VNetGrads vnet_backward(const VelocityNet& net, const VNetCache& cache, const Tensor& d_out);

void save_velocity_net(const std::string& dir, const VelocityNet& net);
VelocityNet load_velocity_net(const std::string& dir);

// Loss went non-finite; `step` is the offending training step.
struct TrainingError : std::runtime_error {
    explicit TrainingError(int step_, const std::string& msg)
        : std::runtime_error(msg), step(step_) {}
    int step;
};

struct TrainResult {
    VelocityNet net;
    std::vector<LossBreakdown> curve;  // one entry per step (batch means)
};

// Deterministic given cfg.seed: fixed sample order, per-sample noise/t/
// dropout streams, sequential reduction. Needs at least 64 scenes.
TrainResult train_toy(const std::vector<SyntheticScene>& dataset, const RunConfig& cfg);

void write_loss_curve(const std::string& path, const std::vector<LossBreakdown>& curve);

using VelocityField = std::function<Tensor(const Tensor&, double)>;

// Euler integration from t=1 to t=0 starting at the masked init
// (noise off-mask, conditioning latent on-mask): x <- x - dt * v(x, t).
Tensor euler_sample(const VelocityField& field, const Tensor& eps, const Tensor& xtraj,
                    const TrajMask& mask, Index steps);

// Conditioned nets receive the full bundle; unconditional nets a frame-0-only
// latent and an empty mask. Noise is drawn from `seed`.
Tensor sample(const VelocityNet& net, const Tensor& z, const LatentTrajectory& lt,
              const TrajMask& mask, Index steps, Seed seed);

// Intensity-weighted centroid per frame (negative values ignored), reported
// in pixel coordinates of the s-upscaled grid.
PooledTrajectory centroid_track(const Tensor& latents, Index downsample, int image_width,
                                int image_height, double fps_effective);

// Envelope-modulated white noise, n = round(f * tau * sample_rate) samples.
// Impact frames additionally get a full-amplitude 20 ms click at the frame
// start so onsets survive windowed energy analysis.
Eigen::ArrayXd synth_audio(const Eigen::ArrayXd& envelope, double tau, int sample_rate,
                           Seed seed, const std::vector<Index>& impact_frames = {});

}  // namespace kinflow

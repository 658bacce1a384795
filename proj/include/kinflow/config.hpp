#pragma once

#include "kinflow/tensor.hpp"

#include <cstdint>
#include <string>

namespace kinflow {

struct OptimizerConfig {
    double lr = 4e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.01;
    double grad_clip = 1.0;
};

struct MetricConfig {
    double window_seconds = 0.02;
    double hop_seconds = 0.01;
    double theta_traj = 1.0;    // event threshold on mean |a|
    double theta_audio = 0.1;   // onset threshold on envelope rise
    double cap_seconds = 0.5;   // unmatched-event penalty
    int sample_rate = 16000;
};

struct SceneConfig {
    double fps = 8.0;
    double blob_radius = 1.5;
    double blob_amplitude = 1.0;
    double envelope_gain = 0.3;  // cells/frame -> loudness; keeps toy speeds mid-range
};

struct TrainConfig {
    Index steps = 400;
    Index batch = 8;
    Index dataset_size = 64;
    Index hidden = 384;
    bool conditioned = true;
    std::string t_schedule = "uniform";  // uniform | logit-normal
    double logit_normal_mean = 0.0;
    double logit_normal_std = 1.0;
};

// Every field has a default so configs materialize fully; partial JSON
// overrides individual fields.
struct RunConfig {
    std::uint64_t seed = 0;

    Index frames = 16;
    Index height = 16;
    Index width = 16;
    Index channels = 1;
    Index vae_downsample = 1;

    double blur_sigma = 0.5;
    double lambda_out = 0.5;
    double lambda_traj = 0.5;
    double video_weight = 0.85;
    double audio_weight = 0.15;
    double delta = 1e-8;
    double dropout_p = 0.05;
    double gamma_init = -10.0;
    std::string boundary_accel = "replicate";  // replicate | one-sided

    OptimizerConfig optimizer;
    MetricConfig metrics;
    SceneConfig scene;
    TrainConfig train;

    Index sample_steps = 50;
};

std::string run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::string& path);
void save_run_config(const std::string& path, const RunConfig& cfg);
void validate_config(const RunConfig& cfg);

}  // namespace kinflow

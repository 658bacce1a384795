#include "kinflow/config.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace kinflow {

namespace {

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) {
        out = j.at(key).get<T>();
    }
}

}  // namespace

std::string run_config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["frames"] = cfg.frames;
    j["height"] = cfg.height;
    j["width"] = cfg.width;
    j["channels"] = cfg.channels;
    j["vae_downsample"] = cfg.vae_downsample;
    j["blur_sigma"] = cfg.blur_sigma;
    j["lambda_out"] = cfg.lambda_out;
    j["lambda_traj"] = cfg.lambda_traj;
    j["video_weight"] = cfg.video_weight;
    j["audio_weight"] = cfg.audio_weight;
    j["delta"] = cfg.delta;
    j["dropout_p"] = cfg.dropout_p;
    j["gamma_init"] = cfg.gamma_init;
    j["boundary_accel"] = cfg.boundary_accel;
    j["sample_steps"] = cfg.sample_steps;
    j["optimizer"] = {{"lr", cfg.optimizer.lr},
                      {"beta1", cfg.optimizer.beta1},
                      {"beta2", cfg.optimizer.beta2},
                      {"weight_decay", cfg.optimizer.weight_decay},
                      {"grad_clip", cfg.optimizer.grad_clip}};
    j["metrics"] = {{"window_seconds", cfg.metrics.window_seconds},
                    {"hop_seconds", cfg.metrics.hop_seconds},
                    {"theta_traj", cfg.metrics.theta_traj},
                    {"theta_audio", cfg.metrics.theta_audio},
                    {"cap_seconds", cfg.metrics.cap_seconds},
                    {"sample_rate", cfg.metrics.sample_rate}};
    j["scene"] = {{"fps", cfg.scene.fps},
                  {"blob_radius", cfg.scene.blob_radius},
                  {"blob_amplitude", cfg.scene.blob_amplitude},
                  {"envelope_gain", cfg.scene.envelope_gain}};
    j["train"] = {{"steps", cfg.train.steps},
                  {"batch", cfg.train.batch},
                  {"dataset_size", cfg.train.dataset_size},
                  {"hidden", cfg.train.hidden},
                  {"conditioned", cfg.train.conditioned},
                  {"t_schedule", cfg.train.t_schedule},
                  {"logit_normal_mean", cfg.train.logit_normal_mean},
                  {"logit_normal_std", cfg.train.logit_normal_std}};
    return j.dump(2);
}

RunConfig run_config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("config json: ") + e.what());
    }

    RunConfig cfg;
    try {
        maybe(j, "seed", cfg.seed);
        maybe(j, "frames", cfg.frames);
        maybe(j, "height", cfg.height);
        maybe(j, "width", cfg.width);
        maybe(j, "channels", cfg.channels);
        maybe(j, "vae_downsample", cfg.vae_downsample);
        maybe(j, "blur_sigma", cfg.blur_sigma);
        maybe(j, "lambda_out", cfg.lambda_out);
        maybe(j, "lambda_traj", cfg.lambda_traj);
        maybe(j, "video_weight", cfg.video_weight);
        maybe(j, "audio_weight", cfg.audio_weight);
        maybe(j, "delta", cfg.delta);
        maybe(j, "dropout_p", cfg.dropout_p);
        maybe(j, "gamma_init", cfg.gamma_init);
        maybe(j, "boundary_accel", cfg.boundary_accel);
        maybe(j, "sample_steps", cfg.sample_steps);
        if (j.contains("optimizer")) {
            const auto& o = j.at("optimizer");
            maybe(o, "lr", cfg.optimizer.lr);
            maybe(o, "beta1", cfg.optimizer.beta1);
            maybe(o, "beta2", cfg.optimizer.beta2);
            maybe(o, "weight_decay", cfg.optimizer.weight_decay);
            maybe(o, "grad_clip", cfg.optimizer.grad_clip);
        }
        if (j.contains("metrics")) {
            const auto& m = j.at("metrics");
            maybe(m, "window_seconds", cfg.metrics.window_seconds);
            maybe(m, "hop_seconds", cfg.metrics.hop_seconds);
            maybe(m, "theta_traj", cfg.metrics.theta_traj);
            maybe(m, "theta_audio", cfg.metrics.theta_audio);
            maybe(m, "cap_seconds", cfg.metrics.cap_seconds);
            maybe(m, "sample_rate", cfg.metrics.sample_rate);
        }
        if (j.contains("scene")) {
            const auto& s = j.at("scene");
            maybe(s, "fps", cfg.scene.fps);
            maybe(s, "blob_radius", cfg.scene.blob_radius);
            maybe(s, "blob_amplitude", cfg.scene.blob_amplitude);
            maybe(s, "envelope_gain", cfg.scene.envelope_gain);
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            maybe(t, "steps", cfg.train.steps);
            maybe(t, "batch", cfg.train.batch);
            maybe(t, "dataset_size", cfg.train.dataset_size);
            maybe(t, "hidden", cfg.train.hidden);
            maybe(t, "conditioned", cfg.train.conditioned);
            maybe(t, "t_schedule", cfg.train.t_schedule);
            maybe(t, "logit_normal_mean", cfg.train.logit_normal_mean);
            maybe(t, "logit_normal_std", cfg.train.logit_normal_std);
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("config json: ") + e.what());
    }

    validate_config(cfg);
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw FormatError("config file '" + path + "': cannot open");
    }
    std::stringstream ss;
    ss << f.rdbuf();
    return run_config_from_json(ss.str());
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw FormatError("config file '" + path + "': cannot open for writing");
    }
    f << run_config_to_json(cfg) << "\n";
}

void validate_config(const RunConfig& cfg) {
    require(cfg.frames >= 2 && cfg.height >= 1 && cfg.width >= 1 && cfg.channels >= 1,
            "config: grid dims must be positive (frames >= 2)");
    require(cfg.vae_downsample >= 1, "config: vae_downsample must be at least 1");
    require(cfg.blur_sigma >= 0.0, "config: blur_sigma must be nonnegative");
    require(cfg.dropout_p >= 0.0 && cfg.dropout_p <= 1.0, "config: dropout_p must lie in [0,1]");
    require(cfg.delta > 0.0, "config: delta must be positive");
    require(cfg.boundary_accel == "replicate" || cfg.boundary_accel == "one-sided",
            "config: boundary_accel must be 'replicate' or 'one-sided'");
    require(cfg.train.t_schedule == "uniform" || cfg.train.t_schedule == "logit-normal",
            "config: t_schedule must be 'uniform' or 'logit-normal'");
    require(cfg.train.batch >= 1 && cfg.train.steps >= 0 && cfg.train.hidden >= 1,
            "config: bad training sizes");
    require(cfg.sample_steps >= 1, "config: sample_steps must be at least 1");
    require(cfg.metrics.hop_seconds > 0.0 &&
                cfg.metrics.window_seconds >= cfg.metrics.hop_seconds,
            "config: need window >= hop > 0");
    require(cfg.scene.fps > 0.0 && cfg.scene.blob_radius > 0.0,
            "config: scene fps and blob radius must be positive");
}

}  // namespace kinflow

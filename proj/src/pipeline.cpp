#include "kinflow/pipeline.hpp"

#include "kinflow/kinematics.hpp"
#include "kinflow/latent_inject.hpp"
#include "kinflow/metrics.hpp"
#include "kinflow/tensor_io.hpp"
#include "kinflow/toy.hpp"
#include "kinflow/wav.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <vector>

namespace kinflow {

namespace {

namespace fs = std::filesystem;

struct Manifest {
    std::vector<std::string> stages;
    std::vector<std::string> artifacts;

    void write(const std::string& out_dir, const std::string& failed_stage) const {
        nlohmann::json j;
        j["complete"] = failed_stage.empty();
        j["stages_done"] = stages;
        j["artifacts"] = artifacts;
        j["failed_stage"] = failed_stage.empty() ? nlohmann::json() : nlohmann::json(failed_stage);
        std::ofstream f(fs::path(out_dir) / "MANIFEST.json", std::ios::trunc);
        f << j.dump(2) << "\n";
    }
};

nlohmann::json metric_entry(const std::string& name, double value, const nlohmann::json& config,
                            const nlohmann::json& per_item) {
    return {{"metric", name}, {"value", value}, {"config", config}, {"per_item", per_item}};
}

}  // namespace

void run_pipeline(const RunConfig& cfg, const std::string& traj_path, const std::string& out_dir) {
    validate_config(cfg);
    fs::create_directories(out_dir);
    const auto out = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };

    Manifest manifest;
    std::string stage = "parse";
    int stage_code = 2;

    try {
        // parse
        const Trajectory traj = load_trajectory(traj_path);
        require(traj.image_width == cfg.width * cfg.vae_downsample &&
                    traj.image_height == cfg.height * cfg.vae_downsample,
                "pipeline: trajectory image dims do not match config grid x downsample");
        const PooledTrajectory pooled = pool_temporal(traj, cfg.frames);
        manifest.stages.push_back(stage);

        // dataset + stats
        stage = "stats";
        stage_code = 3;
        const Seed seed{cfg.seed};
        const std::vector<SyntheticScene> dataset =
            make_dataset(cfg, cfg.train.dataset_size, seed);
        const BoundaryAccel boundary = cfg.boundary_accel == "one-sided"
                                           ? BoundaryAccel::one_sided
                                           : BoundaryAccel::replicate;
        std::vector<Tensor> corpus;
        corpus.reserve(dataset.size() + 1);
        for (const SyntheticScene& scene : dataset) {
            corpus.push_back(raw_features(derive_kinematics(scene.path, boundary)));
        }
        const KinematicTrack input_kin = derive_kinematics(pooled, boundary);
        corpus.push_back(raw_features(input_kin));
        const FeatureStats stats = fit_stats(corpus);
        save_feature_stats(out("stats.json"), stats);
        manifest.artifacts.push_back("stats.json");
        manifest.stages.push_back(stage);

        // features of the input trajectory
        stage = "features";
        stage_code = 4;
        const KinematicFeature feat = assemble_features(input_kin, stats);
        write_tensor(out("feats.tensor"), feat.phi_tilde);
        manifest.artifacts.push_back("feats.tensor");
        manifest.stages.push_back(stage);

        // occupancy mask
        stage = "mask";
        stage_code = 5;
        const LatentTrajectory lt =
            to_latent_grid(pooled, cfg.vae_downsample, cfg.height, cfg.width);
        const TrajMask mask =
            build_mask(lt, cfg.frames, cfg.height, cfg.width, cfg.blur_sigma, seed);
        write_tensor(out("lt.tensor"), latent_trajectory_to_tensor(lt));
        write_tensor(out("mask.tensor"), pack_mask(mask));
        manifest.artifacts.push_back("lt.tensor");
        manifest.artifacts.push_back("mask.tensor");
        manifest.stages.push_back(stage);

        // conditioning latent for the input trajectory
        stage = "inject";
        stage_code = 6;
        SceneSpec input_spec;
        input_spec.height = cfg.height * cfg.vae_downsample;
        input_spec.width = cfg.width * cfg.vae_downsample;
        input_spec.path = pooled;
        input_spec.amplitude = cfg.scene.blob_amplitude;
        input_spec.radius = cfg.scene.blob_radius * static_cast<double>(cfg.vae_downsample);
        input_spec.envelope_gain = cfg.scene.envelope_gain;
        // synthetic foley clicks at the trajectory's own impact events
        for (const double event_time :
             extract_events(input_kin, cfg.metrics.theta_traj).times) {
            input_spec.impact_frames.push_back(
                static_cast<Index>(std::lround(event_time * pooled.fps_effective)));
        }
        const SyntheticScene input_scene =
            make_scene(input_spec, seed, cfg.vae_downsample, cfg.blur_sigma);
        const Tensor xtraj = inject(input_scene.z, lt, mask);
        write_tensor(out("xtraj.tensor"), xtraj);
        manifest.artifacts.push_back("xtraj.tensor");
        manifest.stages.push_back(stage);

        // training
        stage = "train";
        stage_code = 7;
        const TrainResult trained = train_toy(dataset, cfg);
        save_velocity_net(out("ckpt"), trained.net);
        write_loss_curve(out("ckpt/loss.csv"), trained.curve);
        manifest.artifacts.push_back("ckpt");
        manifest.stages.push_back(stage);

        // sampling
        stage = "sample";
        stage_code = 8;
        const Tensor vid = sample(trained.net, input_scene.z, lt, mask, cfg.sample_steps,
                                  split_seed(seed, 1, kTagNoise));
        write_tensor(out("vid.tensor"), vid);
        manifest.artifacts.push_back("vid.tensor");
        manifest.stages.push_back(stage);

        // evaluation
        stage = "eval";
        stage_code = 9;
        const PooledTrajectory tracked =
            centroid_track(vid, cfg.vae_downsample, traj.image_width, traj.image_height,
                           pooled.fps_effective);
        const double te = trajectory_error(pooled, tracked);

        const Eigen::ArrayXd audio = synth_audio(input_scene.audio_env, 1.0 / pooled.fps_effective,
                                                 cfg.metrics.sample_rate,
                                                 split_seed(seed, 2, kTagCarrier),
                                                 input_scene.impact_frames);
        write_wav_mono(out("audio.wav"), audio, cfg.metrics.sample_rate);
        manifest.artifacts.push_back("audio.wav");

        const AudioEnvelope env = audio_envelope(audio, cfg.metrics.sample_rate,
                                                 cfg.metrics.window_seconds,
                                                 cfg.metrics.hop_seconds);
        const EventList traj_events = extract_events(input_kin, cfg.metrics.theta_traj);
        const EventList audio_events = onsets(env, cfg.metrics.theta_audio);
        const double ete_value = ete(traj_events, audio_events, cfg.metrics.cap_seconds);
        const double maic_value = maic(input_kin, env);

        nlohmann::json report;
        nlohmann::json te_items = nlohmann::json::array();
        for (Index i = 0; i < pooled.frames(); ++i) {
            const double dx = pooled.x(i, 0) - tracked.x(i, 0);
            const double dy = pooled.y(i, 0) - tracked.y(i, 0);
            te_items.push_back(std::sqrt(dx * dx + dy * dy));
        }
        report["metrics"] = nlohmann::json::array();
        report["metrics"].push_back(metric_entry(
            "te", te, {{"tracker", "centroid"}, {"frames", cfg.frames}}, te_items));
        report["metrics"].push_back(metric_entry(
            "ete", ete_value,
            {{"theta_traj", cfg.metrics.theta_traj},
             {"theta_audio", cfg.metrics.theta_audio},
             {"cap_seconds", cfg.metrics.cap_seconds}},
            {{"trajectory_events", traj_events.times}, {"audio_onsets", audio_events.times}}));
        report["metrics"].push_back(metric_entry(
            "maic", maic_value,
            {{"window_seconds", cfg.metrics.window_seconds},
             {"hop_seconds", cfg.metrics.hop_seconds}},
            {{"envelope_samples", env.values.size()}}));
        std::ofstream rf(out("report.json"), std::ios::trunc);
        rf << report.dump(2) << "\n";
        manifest.artifacts.push_back("report.json");
        manifest.stages.push_back(stage);

        // final config + manifest
        stage = "write";
        stage_code = 10;
        save_run_config(out("config.json"), cfg);
        manifest.artifacts.push_back("config.json");
        manifest.stages.push_back(stage);
        manifest.write(out_dir, "");
    } catch (const std::exception& e) {
        manifest.write(out_dir, stage);
        throw StageError(stage, stage_code, std::string(e.what()));
    }
}

}  // namespace kinflow

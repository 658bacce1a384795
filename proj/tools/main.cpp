// kinflow command-line front end: trajectory-conditioned flow-matching
// toolkit with motion-sound coherence metrics.

#include <CLI11.hpp>

#include "kinflow/checkpoint.hpp"
#include "kinflow/hybrid_flow.hpp"
#include "kinflow/kinematics.hpp"
#include "kinflow/latent_inject.hpp"
#include "kinflow/metrics.hpp"
#include "kinflow/pipeline.hpp"
#include "kinflow/tensor_io.hpp"
#include "kinflow/toy.hpp"
#include "kinflow/wav.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using namespace kinflow;

std::uint64_t default_seed() {
    if (const char* env = std::getenv("KF_SEED")) {
        try {
            return std::stoull(env);
        } catch (...) {
            throw std::invalid_argument("KF_SEED must be an unsigned integer");
        }
    }
    return 0;
}

PooledTrajectory pool_to(const Trajectory& traj, Index frames) {
    // frames == 0 keeps the raw count (identity windows)
    return pool_temporal(traj, frames > 0 ? frames : traj.frames());
}

void write_report(const std::string& path, const std::string& metric, double value,
                  const nlohmann::json& config, const nlohmann::json& per_item) {
    nlohmann::json j;
    j["metric"] = metric;
    j["value"] = value;
    j["config"] = config;
    j["per_item"] = per_item;
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw FormatError("report '" + path + "': cannot open for writing");
    }
    f << j.dump(2) << "\n";
    std::cout << metric << " = " << value << "\n";
}

int run(int argc, char** argv) {
    CLI::App app{"kinflow: trajectory-conditioned flow matching toolkit"};
    app.require_subcommand(1);

    std::uint64_t seed = default_seed();
    app.add_option("--seed", seed, "base seed (overrides KF_SEED)");

    // ---- kin ----------------------------------------------------------
    auto* kin = app.add_subcommand("kin", "kinematic feature extraction");
    kin->require_subcommand(1);
    kin->add_option("--seed", seed, "base seed");

    std::string kin_traj, kin_stats, kin_out;
    Index kin_frames = 0;
    auto* kin_extract = kin->add_subcommand("extract", "normalized kinematic features");
    kin_extract->add_option("--traj", kin_traj, "trajectory json")->required();
    kin_extract->add_option("--stats", kin_stats, "feature stats json")->required();
    kin_extract->add_option("--out", kin_out, "output tensor path")->required();
    kin_extract->add_option("--frames", kin_frames, "pooled frame count (0 keeps raw)");
    kin_extract->add_option("--seed", seed, "base seed");
    kin_extract->callback([&] {
        const PooledTrajectory pooled = pool_to(load_trajectory(kin_traj), kin_frames);
        const FeatureStats stats = load_feature_stats(kin_stats);
        const KinematicFeature feat = assemble_features(derive_kinematics(pooled), stats);
        write_tensor(kin_out, feat.phi_tilde);
    });

    std::vector<std::string> fit_trajs;
    std::string fit_out;
    Index fit_frames = 0;
    auto* kin_fit = kin->add_subcommand("fit-stats", "fit feature statistics over trajectories");
    kin_fit->add_option("--traj", fit_trajs, "trajectory json (repeatable)")->required();
    kin_fit->add_option("--out", fit_out, "output stats json")->required();
    kin_fit->add_option("--frames", fit_frames, "pooled frame count (0 keeps raw)");
    kin_fit->add_option("--seed", seed, "base seed");
    kin_fit->callback([&] {
        std::vector<Tensor> corpus;
        for (const std::string& path : fit_trajs) {
            corpus.push_back(
                raw_features(derive_kinematics(pool_to(load_trajectory(path), fit_frames))));
        }
        save_feature_stats(fit_out, fit_stats(corpus));
    });

    // ---- mask ---------------------------------------------------------
    auto* mask_cmd = app.add_subcommand("mask", "trajectory occupancy mask on the latent grid");
    std::string mask_traj, mask_out, mask_lt_out;
    Index mask_frames = 16, mask_s = 1, mask_h = 0, mask_w = 0;
    double mask_sigma = 0.5;
    mask_cmd->add_option("--traj", mask_traj, "trajectory json")->required();
    mask_cmd->add_option("--out", mask_out, "packed mask tensor [3,f,h,w]")->required();
    mask_cmd->add_option("--out-lt", mask_lt_out, "latent trajectory tensor [f,N,2]");
    mask_cmd->add_option("--frames", mask_frames, "latent frame count");
    mask_cmd->add_option("--downsample", mask_s, "spatial downsample factor");
    mask_cmd->add_option("--height", mask_h, "latent grid height (0 = image_height/downsample)");
    mask_cmd->add_option("--width", mask_w, "latent grid width (0 = image_width/downsample)");
    mask_cmd->add_option("--sigma", mask_sigma, "gaussian blur sigma");
    mask_cmd->add_option("--seed", seed, "base seed");
    mask_cmd->callback([&] {
        const Trajectory traj = load_trajectory(mask_traj);
        const Index h = mask_h > 0 ? mask_h : (traj.image_height + mask_s - 1) / mask_s;
        const Index w = mask_w > 0 ? mask_w : (traj.image_width + mask_s - 1) / mask_s;
        const PooledTrajectory pooled = pool_to(traj, mask_frames);
        const LatentTrajectory lt = to_latent_grid(pooled, mask_s, h, w);
        const TrajMask mask = build_mask(lt, pooled.frames(), h, w, mask_sigma, Seed{seed});
        write_tensor(mask_out, pack_mask(mask));
        if (!mask_lt_out.empty()) {
            write_tensor(mask_lt_out, latent_trajectory_to_tensor(lt));
        }
    });

    // ---- inject -------------------------------------------------------
    auto* inject_cmd = app.add_subcommand("inject", "propagate first-frame latents along a track");
    std::string inj_latent, inj_lt, inj_mask, inj_out;
    inject_cmd->add_option("--latent", inj_latent, "first-frame latent tensor [h,w,c]")->required();
    inject_cmd->add_option("--traj", inj_lt, "latent trajectory tensor [f,N,2]")->required();
    inject_cmd->add_option("--mask", inj_mask, "packed mask tensor [3,f,h,w]")->required();
    inject_cmd->add_option("--out", inj_out, "output tensor [f,h,w,c]")->required();
    inject_cmd->add_option("--seed", seed, "base seed");
    inject_cmd->callback([&] {
        const Tensor z = read_tensor(inj_latent);
        const TrajMask mask = unpack_mask(read_tensor(inj_mask));
        const LatentTrajectory lt =
            latent_trajectory_from_tensor(read_tensor(inj_lt), 1, mask.h, mask.w);
        write_tensor(inj_out, inject(z, lt, mask));
    });

    // ---- flow ---------------------------------------------------------
    auto* flow = app.add_subcommand("flow", "hybrid flow-matching samples");
    flow->require_subcommand(1);
    flow->add_option("--seed", seed, "base seed");

    std::string fs_x0, fs_xtraj, fs_mask, fs_out;
    std::uint64_t fs_eps_seed = 0;
    double fs_t = 0.5;
    auto* flow_sample = flow->add_subcommand("make-sample", "one (x_t, v_target) training point");
    flow_sample->add_option("--x0", fs_x0, "clean latent tensor [f,h,w,c]")->required();
    flow_sample->add_option("--eps-seed", fs_eps_seed, "noise seed")->required();
    flow_sample->add_option("--xtraj", fs_xtraj, "conditioning latent tensor")->required();
    flow_sample->add_option("--mask", fs_mask, "packed mask tensor")->required();
    flow_sample->add_option("--t", fs_t, "flow time in [0,1]")->required();
    flow_sample->add_option("--out", fs_out, "output tensor [2f,h,w,c] stacking x_t and v")
        ->required();
    flow_sample->add_option("--seed", seed, "base seed");
    flow_sample->callback([&] {
        const Tensor x0 = read_tensor(fs_x0);
        const Tensor xtraj = read_tensor(fs_xtraj);
        const TrajMask mask = unpack_mask(read_tensor(fs_mask));
        const Tensor eps = gaussian_noise(x0.dims(), Seed{fs_eps_seed});
        const FlowSample sample = hybrid_interpolant(x0, eps, xtraj, mask, fs_t);

        // rank-4 cap: stack (x_t, v) along a doubled leading axis
        std::vector<Index> dims = x0.dims();
        dims[0] *= 2;
        Tensor stacked(dims);
        for (Index i = 0; i < x0.size(); ++i) {
            stacked.data()[i] = sample.x_t.data()[i];
            stacked.data()[x0.size() + i] = sample.v_target.data()[i];
        }
        write_tensor(fs_out, stacked);
        std::cout << "t = " << sample.t << "\n";
    });

    // ---- train-toy ----------------------------------------------------
    auto* train_cmd = app.add_subcommand("train-toy", "train the toy velocity model");
    std::string train_config, train_out;
    bool train_seed_given = false;
    train_cmd->add_option("--config", train_config, "run config json")->required();
    train_cmd->add_option("--out", train_out, "checkpoint directory")->required();
    train_cmd->add_option("--seed", seed, "base seed (overrides config seed)")
        ->each([&](const std::string&) { train_seed_given = true; });
    train_cmd->callback([&] {
        RunConfig cfg = load_run_config(train_config);
        if (train_seed_given) {
            cfg.seed = seed;
        }
        const std::vector<SyntheticScene> dataset =
            make_dataset(cfg, cfg.train.dataset_size, Seed{cfg.seed});
        const TrainResult trained = train_toy(dataset, cfg);
        save_velocity_net(train_out, trained.net);
        write_loss_curve((std::filesystem::path(train_out) / "loss.csv").string(), trained.curve);
        save_run_config((std::filesystem::path(train_out) / "config.json").string(), cfg);
        std::cout << "final l_video = " << trained.curve.back().l_video << "\n";
    });

    // ---- sample -------------------------------------------------------
    auto* sample_cmd = app.add_subcommand("sample", "generate latents along a trajectory");
    std::string smp_ckpt, smp_traj, smp_out;
    Index smp_steps = 50;
    double smp_sigma = 0.5;
    sample_cmd->add_option("--ckpt", smp_ckpt, "checkpoint directory")->required();
    sample_cmd->add_option("--traj", smp_traj, "trajectory json")->required();
    sample_cmd->add_option("--steps", smp_steps, "Euler steps");
    sample_cmd->add_option("--sigma", smp_sigma, "mask blur sigma");
    sample_cmd->add_option("--out", smp_out, "output latent tensor [f,h,w,c]")->required();
    sample_cmd->add_option("--seed", seed, "base seed");
    sample_cmd->callback([&] {
        const VelocityNet net = load_velocity_net(smp_ckpt);
        const Trajectory traj = load_trajectory(smp_traj);
        const Index s = traj.image_height / net.cfg.height;
        require(s >= 1 && net.cfg.height * s == traj.image_height &&
                    net.cfg.width * s == traj.image_width,
                "sample: trajectory image dims must be a multiple of the model grid");
        const PooledTrajectory pooled = pool_temporal(traj, net.cfg.frames);

        SceneSpec spec;
        spec.height = traj.image_height;
        spec.width = traj.image_width;
        spec.path = pooled;
        const SyntheticScene scene = make_scene(spec, Seed{seed}, s, smp_sigma);
        const Tensor vid = sample(net, scene.z, scene.lt, scene.mask, smp_steps, Seed{seed});
        write_tensor(smp_out, vid);
    });

    // ---- eval ---------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "motion-control and motion-sound metrics");
    eval_cmd->require_subcommand(1);
    eval_cmd->add_option("--seed", seed, "base seed");

    std::string ev_traj, ev_traj_b, ev_wav, ev_report;
    double ev_theta_traj = 1.0, ev_theta_audio = 0.1, ev_cap = 0.5;
    double ev_window = 0.02, ev_hop = 0.01;

    auto* eval_te = eval_cmd->add_subcommand("te", "trajectory error in pixels");
    eval_te->add_option("--traj", ev_traj, "conditioning trajectory json")->required();
    eval_te->add_option("--traj-b", ev_traj_b, "tracked trajectory json")->required();
    eval_te->add_option("--report", ev_report, "output report json")->required();
    eval_te->add_option("--seed", seed, "base seed");
    eval_te->callback([&] {
        const Trajectory a = load_trajectory(ev_traj);
        const Trajectory b = load_trajectory(ev_traj_b);
        const Index f = std::min(a.frames(), b.frames());
        const PooledTrajectory pa = pool_temporal(a, f);
        const PooledTrajectory pb = pool_temporal(b, f);
        const double value = trajectory_error(pa, pb);

        nlohmann::json per_item = nlohmann::json::array();
        for (Index n = 0; n < pa.objects(); ++n) {
            double sum = 0.0;
            for (Index i = 0; i < f; ++i) {
                sum += std::sqrt(std::pow(pa.x(i, n) - pb.x(i, n), 2) +
                                 std::pow(pa.y(i, n) - pb.y(i, n), 2));
            }
            per_item.push_back({{"object", n}, {"te", sum / static_cast<double>(f)}});
        }
        write_report(ev_report, "te", value, {{"frames", f}}, per_item);
    });

    auto* eval_ete = eval_cmd->add_subcommand("ete", "event timing error in seconds");
    eval_ete->add_option("--traj", ev_traj, "trajectory json")->required();
    eval_ete->add_option("--wav", ev_wav, "mono 16-bit wav")->required();
    eval_ete->add_option("--report", ev_report, "output report json")->required();
    eval_ete->add_option("--theta-traj", ev_theta_traj, "trajectory event threshold");
    eval_ete->add_option("--theta-audio", ev_theta_audio, "audio onset threshold");
    eval_ete->add_option("--cap", ev_cap, "unmatched event penalty seconds");
    eval_ete->add_option("--window", ev_window, "envelope window seconds");
    eval_ete->add_option("--hop", ev_hop, "envelope hop seconds");
    eval_ete->add_option("--seed", seed, "base seed");
    eval_ete->callback([&] {
        const KinematicTrack kt = derive_kinematics(pool_to(load_trajectory(ev_traj), 0));
        const WavAudio audio = read_wav_mono(ev_wav);
        const AudioEnvelope env =
            audio_envelope(audio.samples, audio.sample_rate, ev_window, ev_hop);
        const EventList te_events = extract_events(kt, ev_theta_traj);
        const EventList onset_events = onsets(env, ev_theta_audio);
        const double value = ete(te_events, onset_events, ev_cap);
        write_report(ev_report, "ete", value,
                     {{"theta_traj", ev_theta_traj},
                      {"theta_audio", ev_theta_audio},
                      {"cap_seconds", ev_cap}},
                     {{"trajectory_events", te_events.times},
                      {"audio_onsets", onset_events.times}});
    });

    auto* eval_maic = eval_cmd->add_subcommand("maic", "motion-audio intensity correlation");
    eval_maic->add_option("--traj", ev_traj, "trajectory json")->required();
    eval_maic->add_option("--wav", ev_wav, "mono 16-bit wav")->required();
    eval_maic->add_option("--report", ev_report, "output report json")->required();
    eval_maic->add_option("--window", ev_window, "envelope window seconds");
    eval_maic->add_option("--hop", ev_hop, "envelope hop seconds");
    eval_maic->add_option("--seed", seed, "base seed");
    eval_maic->callback([&] {
        const KinematicTrack kt = derive_kinematics(pool_to(load_trajectory(ev_traj), 0));
        const WavAudio audio = read_wav_mono(ev_wav);
        const AudioEnvelope env =
            audio_envelope(audio.samples, audio.sample_rate, ev_window, ev_hop);
        const double value = maic(kt, env);
        write_report(ev_report, "maic", value,
                     {{"window_seconds", ev_window}, {"hop_seconds", ev_hop}},
                     {{"envelope_samples", env.values.size()}});
    });

    // ---- pipeline -----------------------------------------------------
    auto* pipe_cmd = app.add_subcommand("pipeline", "full run: features to report");
    std::string pipe_config, pipe_traj, pipe_out;
    bool pipe_seed_given = false;
    pipe_cmd->add_option("--config", pipe_config, "run config json (defaults when omitted)");
    pipe_cmd->add_option("--traj", pipe_traj, "trajectory json")->required();
    pipe_cmd->add_option("--out", pipe_out, "output directory")->required();
    pipe_cmd->add_option("--seed", seed, "base seed (overrides config seed)")
        ->each([&](const std::string&) { pipe_seed_given = true; });
    pipe_cmd->callback([&] {
        RunConfig cfg = pipe_config.empty() ? RunConfig{} : load_run_config(pipe_config);
        if (pipe_seed_given || std::getenv("KF_SEED") != nullptr) {
            cfg.seed = seed;
        }
        run_pipeline(cfg, pipe_traj, pipe_out);
        std::cout << "pipeline complete: " << pipe_out << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const kinflow::StageError& e) {
        std::cerr << "error in stage '" << e.stage << "': " << e.what() << "\n";
        return e.exit_code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

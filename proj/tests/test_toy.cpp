#include <doctest.h>

#include "kinflow/metrics.hpp"
#include "kinflow/toy.hpp"

#include <cmath>
#include <filesystem>

using namespace kinflow;

namespace {

SceneSpec spec_with_path(const std::function<double(Index)>& fx,
                         const std::function<double(Index)>& fy, Index frames = 8,
                         Index dim = 16, double fps = 8.0) {
    SceneSpec spec;
    spec.height = dim;
    spec.width = dim;
    spec.path.image_width = static_cast<int>(dim);
    spec.path.image_height = static_cast<int>(dim);
    spec.path.fps_effective = fps;
    spec.path.x.resize(frames, 1);
    spec.path.y.resize(frames, 1);
    for (Index i = 0; i < frames; ++i) {
        spec.path.x(i, 0) = fx(i);
        spec.path.y(i, 0) = fy(i);
    }
    return spec;
}

RunConfig tiny_config() {
    RunConfig cfg;
    cfg.frames = 6;
    cfg.height = 10;
    cfg.width = 10;
    cfg.channels = 1;
    cfg.seed = 7;
    cfg.train.steps = 10;
    cfg.train.batch = 4;
    cfg.train.dataset_size = 64;
    cfg.train.hidden = 32;
    cfg.optimizer.lr = 1e-3;
    return cfg;
}

}  // namespace

TEST_CASE("make_scene on a stationary path") {
    const SceneSpec spec =
        spec_with_path([](Index) { return 8.0; }, [](Index) { return 8.0; });
    const SyntheticScene scene = make_scene(spec, Seed{1});

    // identical frames
    const Index fs = 16 * 16;
    for (Index i = 1; i < 8; ++i) {
        for (Index e = 0; e < fs; ++e) {
            CHECK(scene.video.data()[i * fs + e] == scene.video.data()[e]);
        }
    }
    // flat zero envelope
    CHECK(scene.audio_env.maxCoeff() == 0.0);
}

TEST_CASE("make_scene envelope of uniform motion is constant") {
    const SceneSpec spec = spec_with_path(
        [](Index i) { return 3.0 + 1.2 * static_cast<double>(i); }, [](Index) { return 8.0; });
    const SyntheticScene scene = make_scene(spec, Seed{1});
    // interior frames share one speed; boundary diffs agree for affine paths
    for (Index i = 1; i < scene.audio_env.size(); ++i) {
        CHECK(scene.audio_env[i] == doctest::Approx(scene.audio_env[0]).epsilon(1e-9));
    }
    CHECK(scene.audio_env[0] > 0.0);
}

TEST_CASE("make_scene adds unit impulses at impact frames") {
    SceneSpec spec = spec_with_path(
        [](Index i) { return 3.0 + 0.5 * static_cast<double>(i); }, [](Index) { return 8.0; });
    spec.impact_frames = {2, 5};
    const SyntheticScene scene = make_scene(spec, Seed{1});
    CHECK(scene.audio_env[2] == 1.0);
    CHECK(scene.audio_env[5] == 1.0);
    CHECK(scene.audio_env[0] < 1.0);
}

TEST_CASE("make_scene rejects out-of-grid paths") {
    const SceneSpec spec =
        spec_with_path([](Index i) { return 14.0 + static_cast<double>(i); },
                       [](Index) { return 8.0; });
    CHECK_THROWS_AS(make_scene(spec, Seed{1}), std::invalid_argument);
}

TEST_CASE("blob centroid recovers the path for interior positions") {
    const SceneSpec spec = spec_with_path(
        [](Index i) { return 5.0 + 0.7 * static_cast<double>(i); },
        [](Index i) { return 6.0 + 0.4 * static_cast<double>(i); }, 8, 16);
    const SyntheticScene scene = make_scene(spec, Seed{1});
    const PooledTrajectory tracked = centroid_track(scene.x0, 1, 16, 16, 8.0);
    for (Index i = 0; i < 8; ++i) {
        CHECK(std::abs(tracked.x(i, 0) - scene.path.x(i, 0)) < 0.1);
        CHECK(std::abs(tracked.y(i, 0) - scene.path.y(i, 0)) < 0.1);
    }
}

TEST_CASE("average-pool latent map") {
    Tensor video({1, 4, 4, 1});
    for (Index i = 0; i < 16; ++i) {
        video.data()[i] = static_cast<double>(i);
    }
    const Tensor pooled = encode_average_pool(video, 2);
    CHECK(pooled.dims() == std::vector<Index>{1, 2, 2, 1});
    CHECK(pooled(0, 0, 0, 0) == doctest::Approx((0.0 + 1 + 4 + 5) / 4.0));
    CHECK(pooled(0, 1, 1, 0) == doctest::Approx((10.0 + 11 + 14 + 15) / 4.0));
    CHECK_THROWS_AS(encode_average_pool(Tensor({1, 5, 4, 1}), 2), std::invalid_argument);
}

TEST_CASE("euler sampling inverts a constant oracle field in one step") {
    const SceneSpec spec = spec_with_path(
        [](Index i) { return 4.0 + 0.9 * static_cast<double>(i); },
        [](Index i) { return 5.0 + 0.3 * static_cast<double>(i); });
    const SyntheticScene scene = make_scene(spec, Seed{3});
    const Tensor eps = gaussian_noise(scene.x0.dims(), Seed{4});

    // off the mask, x1 = eps and v = eps - x0, so one Euler step lands on x0
    const Tensor recovered = euler_sample(
        [&](const Tensor&, double) {
            Tensor v(scene.x0.dims());
            v.flat() = eps.flat() - scene.x0.flat();
            return v;
        },
        eps, scene.xtraj, scene.mask, 1);

    const Index c = scene.x0.dim(3);
    for (Index cell = 0; cell < scene.mask.binary.size(); ++cell) {
        if (scene.mask.binary.data()[cell] != 0.0) continue;
        for (Index ch = 0; ch < c; ++ch) {
            const Index i = cell * c + ch;
            CHECK(recovered.data()[i] == doctest::Approx(scene.x0.data()[i]).epsilon(1e-15));
        }
    }
}

TEST_CASE("sampling is deterministic and step-count robust") {
    RunConfig cfg = tiny_config();
    const std::vector<SyntheticScene> dataset = make_dataset(cfg, 64, Seed{cfg.seed});
    const TrainResult trained = train_toy(dataset, cfg);

    const SyntheticScene& probe = dataset[0];
    const Tensor a = sample(trained.net, probe.z, probe.lt, probe.mask, 8, Seed{99});
    const Tensor b = sample(trained.net, probe.z, probe.lt, probe.mask, 8, Seed{99});
    for (Index i = 0; i < a.size(); ++i) {
        CHECK(a.data()[i] == b.data()[i]);
    }

    const Tensor one = sample(trained.net, probe.z, probe.lt, probe.mask, 1, Seed{99});
    const Tensor many = sample(trained.net, probe.z, probe.lt, probe.mask, 100, Seed{99});
    CHECK(one.all_finite());
    CHECK(many.all_finite());
}

TEST_CASE("zero learning rate leaves parameters untouched") {
    RunConfig cfg = tiny_config();
    cfg.optimizer.lr = 0.0;
    cfg.optimizer.weight_decay = 0.0;
    const std::vector<SyntheticScene> dataset = make_dataset(cfg, 64, Seed{cfg.seed});

    VelocityNetConfig net_cfg;
    net_cfg.frames = cfg.frames;
    net_cfg.height = cfg.height;
    net_cfg.width = cfg.width;
    net_cfg.channels = cfg.channels;
    net_cfg.hidden = cfg.train.hidden;
    const VelocityNet fresh = VelocityNet::init(net_cfg, split_seed(Seed{cfg.seed}, 0, kTagInit));

    const TrainResult trained = train_toy(dataset, cfg);
    CHECK((trained.net.w1 - fresh.w1).cwiseAbs().maxCoeff() == 0.0);
    CHECK((trained.net.w3 - fresh.w3).cwiseAbs().maxCoeff() == 0.0);
    CHECK((trained.net.b2 - fresh.b2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dropout p=1 trains exactly like the unconditional configuration") {
    RunConfig forced = tiny_config();
    forced.dropout_p = 1.0;
    forced.train.conditioned = true;

    RunConfig uncond = tiny_config();
    uncond.dropout_p = 0.0;
    uncond.train.conditioned = false;

    const std::vector<SyntheticScene> dataset = make_dataset(forced, 64, Seed{forced.seed});
    const TrainResult a = train_toy(dataset, forced);
    const TrainResult b = train_toy(dataset, uncond);

    REQUIRE(a.curve.size() == b.curve.size());
    for (std::size_t s = 0; s < a.curve.size(); ++s) {
        CHECK(a.curve[s].l_video == b.curve[s].l_video);
        CHECK(a.curve[s].l_traj == b.curve[s].l_traj);
    }
    CHECK((a.net.w1 - b.net.w1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training is reproducible and the loss moves") {
    const RunConfig cfg = tiny_config();
    const std::vector<SyntheticScene> dataset = make_dataset(cfg, 64, Seed{cfg.seed});
    const TrainResult a = train_toy(dataset, cfg);
    const TrainResult b = train_toy(dataset, cfg);
    REQUIRE(a.curve.size() == 10);
    for (std::size_t s = 0; s < a.curve.size(); ++s) {
        CHECK(a.curve[s].l_final == b.curve[s].l_final);
    }
    CHECK(a.curve.back().l_video < a.curve.front().l_video);
}

TEST_CASE("diverging training reports the step") {
    RunConfig cfg = tiny_config();
    cfg.optimizer.lr = 1e300;  // guaranteed blow-up
    cfg.optimizer.grad_clip = 0.0;
    const std::vector<SyntheticScene> dataset = make_dataset(cfg, 64, Seed{cfg.seed});
    CHECK_THROWS_AS(train_toy(dataset, cfg), TrainingError);
    try {
        train_toy(dataset, cfg);
    } catch (const TrainingError& e) {
        CHECK(e.step >= 0);
        CHECK(e.step < 10);
    }
}

TEST_CASE("train_toy requires a minimum dataset") {
    const RunConfig cfg = tiny_config();
    const std::vector<SyntheticScene> dataset = make_dataset(cfg, 8, Seed{cfg.seed});
    CHECK_THROWS_AS(train_toy(dataset, cfg), std::invalid_argument);
}

TEST_CASE("velocity net gradients match finite differences") {
    VelocityNetConfig net_cfg;
    net_cfg.frames = 3;
    net_cfg.height = 4;
    net_cfg.width = 4;
    net_cfg.channels = 1;
    net_cfg.hidden = 12;
    VelocityNet net = VelocityNet::init(net_cfg, Seed{44});
    // make the time gates active so their gradients are exercised
    for (Index i = 0; i < net.wt1.size(); ++i) {
        net.wt1.data()[i] = 0.1 * normal_at(Seed{45}, kTagScene, static_cast<std::uint64_t>(i));
        net.wt2.data()[i] = 0.1 * normal_at(Seed{46}, kTagScene, static_cast<std::uint64_t>(i));
    }

    const Tensor x = gaussian_noise({3, 4, 4, 1}, Seed{47});
    const Tensor cond = gaussian_noise({3, 4, 4, 1}, Seed{48});
    const Tensor upstream = gaussian_noise({3, 4, 4, 1}, Seed{49});
    const double t = 0.37;

    VNetCache cache;
    vnet_forward(net, x, t, &cond, &cache);
    const VNetGrads grads = vnet_backward(net, cache, upstream);

    auto loss = [&](const VelocityNet& n) {
        const Tensor v = vnet_forward(n, x, t, &cond);
        return (v.flat() * upstream.flat()).sum();
    };
    const double h = 1e-5;
    double max_rel = 0.0;
    auto probe = [&](Eigen::MatrixXd VelocityNet::* member, const Eigen::MatrixXd& analytic) {
        for (Index i = 0; i < (net.*member).size(); ++i) {
            VelocityNet plus = net, minus = net;
            (plus.*member).data()[i] += h;
            (minus.*member).data()[i] -= h;
            const double numeric = (loss(plus) - loss(minus)) / (2.0 * h);
            const double denom = std::max({std::abs(numeric), std::abs(analytic.data()[i]), 1e-4});
            max_rel = std::max(max_rel, std::abs(numeric - analytic.data()[i]) / denom);
        }
    };
    probe(&VelocityNet::w2, grads.w2);
    probe(&VelocityNet::w3, grads.w3);
    probe(&VelocityNet::wt1, grads.wt1);
    probe(&VelocityNet::wt2, grads.wt2);

    auto probe_vec = [&](Eigen::VectorXd VelocityNet::* member, const Eigen::VectorXd& analytic) {
        for (Index i = 0; i < (net.*member).size(); ++i) {
            VelocityNet plus = net, minus = net;
            (plus.*member)[i] += h;
            (minus.*member)[i] -= h;
            const double numeric = (loss(plus) - loss(minus)) / (2.0 * h);
            const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-4});
            max_rel = std::max(max_rel, std::abs(numeric - analytic[i]) / denom);
        }
    };
    probe_vec(&VelocityNet::b1, grads.b1);
    probe_vec(&VelocityNet::b3, grads.b3);

    // w1 is large; spot-check a slice
    for (Index i = 0; i < 200; ++i) {
        const Index idx = i * (net.w1.size() / 200);
        VelocityNet plus = net, minus = net;
        plus.w1.data()[idx] += h;
        minus.w1.data()[idx] -= h;
        const double numeric = (loss(plus) - loss(minus)) / (2.0 * h);
        const double denom =
            std::max({std::abs(numeric), std::abs(grads.w1.data()[idx]), 1e-4});
        max_rel = std::max(max_rel, std::abs(numeric - grads.w1.data()[idx]) / denom);
    }
    CHECK(max_rel < 1e-4);
}

TEST_CASE("velocity net checkpoint round-trip") {
    const RunConfig cfg = tiny_config();
    VelocityNetConfig net_cfg;
    net_cfg.frames = cfg.frames;
    net_cfg.height = cfg.height;
    net_cfg.width = cfg.width;
    net_cfg.channels = 1;
    net_cfg.hidden = 24;
    net_cfg.conditioned = false;
    const VelocityNet net = VelocityNet::init(net_cfg, Seed{5});

    const std::string dir = (std::filesystem::temp_directory_path() / "kf_vnet_ckpt").string();
    save_velocity_net(dir, net);
    const VelocityNet back = load_velocity_net(dir);
    CHECK(back.cfg.hidden == 24);
    CHECK(back.cfg.conditioned == false);
    CHECK((back.w1 - net.w1).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.b3 - net.b3).cwiseAbs().maxCoeff() == 0.0);

    // forwards agree bitwise
    const Tensor x = gaussian_noise({cfg.frames, cfg.height, cfg.width, 1}, Seed{6});
    const Tensor va = vnet_forward(net, x, 0.37, nullptr);
    const Tensor vb = vnet_forward(back, x, 0.37, nullptr);
    for (Index i = 0; i < va.size(); ++i) {
        CHECK(va.data()[i] == vb.data()[i]);
    }
}

TEST_CASE("synthesized audio matches its envelope profile") {
    Eigen::ArrayXd env(8);
    env << 0.0, 0.1, 0.3, 0.6, 1.0, 0.6, 0.3, 0.1;
    const double tau = 0.125;
    const Eigen::ArrayXd wave = synth_audio(env, tau, 16000, Seed{8});
    CHECK(wave.size() == 16000);
    CHECK(wave.abs().maxCoeff() <= 1.0);

    // the amplitude ramps linearly between frames, peaking at frame 4
    auto frame_rms = [&](Index frame) {
        const Index start = frame * 2000;
        double acc = 0.0;
        for (Index i = start; i < start + 2000; ++i) {
            acc += wave[i] * wave[i];
        }
        return std::sqrt(acc / 2000.0);
    };
    CHECK(wave[0] == 0.0);
    CHECK(frame_rms(0) < frame_rms(2));
    CHECK(frame_rms(2) < frame_rms(4));
    CHECK(frame_rms(4) > frame_rms(6));
}

TEST_CASE("dataset generation is deterministic and parallel-order free") {
    const RunConfig cfg = tiny_config();
    const std::vector<SyntheticScene> a = make_dataset(cfg, 8, Seed{31});
    const std::vector<SyntheticScene> b = make_dataset(cfg, 8, Seed{31});
    for (std::size_t s = 0; s < a.size(); ++s) {
        for (Index i = 0; i < a[s].x0.size(); ++i) {
            CHECK(a[s].x0.data()[i] == b[s].x0.data()[i]);
        }
    }
    // scene i alone reproduces scene i of the batch (index-keyed streams)
    const SceneSpec spec5 = random_scene_spec(cfg, Seed{31}, 5);
    for (Index i = 0; i < cfg.frames; ++i) {
        CHECK(spec5.path.x(i, 0) == a[5].path.x(i, 0));
    }
}

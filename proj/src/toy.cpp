#include "kinflow/toy.hpp"

#include "kinflow/checkpoint.hpp"
#include "kinflow/kinematics.hpp"
#include "kinflow/metrics.hpp"
#include "kinflow/optimizer.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace kinflow {

namespace {

void validate_path_in_bounds(const PooledTrajectory& path, Index height, Index width) {
    for (Index i = 0; i < path.frames(); ++i) {
        for (Index n = 0; n < path.objects(); ++n) {
            require(path.x(i, n) >= 0.0 && path.x(i, n) < static_cast<double>(width) &&
                        path.y(i, n) >= 0.0 && path.y(i, n) < static_cast<double>(height),
                    "make_scene: path out of grid bounds");
        }
    }
}

Eigen::ArrayXd envelope_from_path(const PooledTrajectory& path, double gain,
                                  const std::vector<Index>& impact_frames) {
    const KinematicTrack kt = derive_kinematics(path);
    // normalized |v| is per longer-side units; rescale to grid cells/s
    const double longer = static_cast<double>(std::max(path.image_width, path.image_height));
    Eigen::ArrayXd env =
        (kt.vmag.rowwise().mean() * longer * gain / path.fps_effective).min(1.0).max(0.0);
    for (Index i : impact_frames) {
        if (i >= 0 && i < env.size()) {
            env[i] = 1.0;
        }
    }
    return env;
}

}  // namespace

Tensor encode_average_pool(const Tensor& video, Index s) {
    require(video.rank() == 4, "encode_average_pool: expected [f,h,w,c]");
    require(s >= 1, "encode_average_pool: downsample must be at least 1");
    if (s == 1) {
        return video;
    }
    const Index f = video.dim(0), hp = video.dim(1), wp = video.dim(2), c = video.dim(3);
    require(hp % s == 0 && wp % s == 0, "encode_average_pool: dims must divide by the factor");

    Tensor out({f, hp / s, wp / s, c});
    const double inv = 1.0 / static_cast<double>(s * s);
    for (Index i = 0; i < f; ++i) {
        for (Index p = 0; p < hp / s; ++p) {
            for (Index q = 0; q < wp / s; ++q) {
                for (Index ch = 0; ch < c; ++ch) {
                    double acc = 0.0;
                    for (Index dp = 0; dp < s; ++dp) {
                        for (Index dq = 0; dq < s; ++dq) {
                            acc += video(i, p * s + dp, q * s + dq, ch);
                        }
                    }
                    out(i, p, q, ch) = acc * inv;
                }
            }
        }
    }
    return out;
}

SyntheticScene make_scene(const SceneSpec& spec, Seed seed, Index downsample, double blur_sigma) {
    require(spec.radius > 0.0, "make_scene: blob radius must be positive");
    require(spec.path.frames() >= 2, "make_scene: path needs at least 2 frames");
    validate_path_in_bounds(spec.path, spec.height, spec.width);

    const Index f = spec.path.frames();
    SyntheticScene scene;
    scene.path = spec.path;
    scene.path.image_width = static_cast<int>(spec.width);
    scene.path.image_height = static_cast<int>(spec.height);
    scene.impact_frames = spec.impact_frames;

    scene.video = Tensor({f, spec.height, spec.width, 1});
    const double denom = 2.0 * spec.radius * spec.radius;
    for (Index i = 0; i < f; ++i) {
        for (Index r = 0; r < spec.height; ++r) {
            for (Index ccol = 0; ccol < spec.width; ++ccol) {
                double val = 0.0;
                for (Index n = 0; n < spec.path.objects(); ++n) {
                    const double dx = static_cast<double>(ccol) - scene.path.x(i, n);
                    const double dy = static_cast<double>(r) - scene.path.y(i, n);
                    val += spec.amplitude * std::exp(-(dx * dx + dy * dy) / denom);
                }
                scene.video(i, r, ccol, 0) = val;
            }
        }
    }

    scene.audio_env = envelope_from_path(scene.path, spec.envelope_gain, spec.impact_frames);

    scene.x0 = encode_average_pool(scene.video, downsample);
    const Index h = scene.x0.dim(1), w = scene.x0.dim(2);
    scene.z = Tensor({h, w, 1});
    for (Index i = 0; i < h * w; ++i) {
        scene.z.data()[i] = scene.x0.data()[i];
    }

    scene.lt = to_latent_grid(scene.path, downsample, h, w);
    scene.mask = build_mask(scene.lt, f, h, w, blur_sigma, seed);
    scene.xtraj = inject(scene.z, scene.lt, scene.mask);
    return scene;
}

SceneSpec random_scene_spec(const RunConfig& cfg, Seed seed, std::uint64_t index) {
    const Seed scene_seed = split_seed(seed, index, kTagScene);
    std::uint64_t at = 0;
    auto unit = [&]() { return random_unit(scene_seed, kTagScene, at++); };

    const Index h = cfg.height * cfg.vae_downsample;
    const Index w = cfg.width * cfg.vae_downsample;
    const Index f = cfg.frames;

    const double lo_x = 2.5, hi_x = static_cast<double>(w) - 3.5;
    const double lo_y = 2.5, hi_y = static_cast<double>(h) - 3.5;

    double x = lo_x + unit() * (hi_x - lo_x);
    double y = lo_y + unit() * (hi_y - lo_y);
    const double angle = unit() * 2.0 * M_PI;
    const double cell_scale = static_cast<double>(cfg.vae_downsample);
    double speed = (0.4 + 0.7 * unit()) * cell_scale;
    double vx = speed * std::cos(angle);
    double vy = speed * std::sin(angle);

    const bool ballistic = unit() < 0.5;
    const double gravity = ballistic ? (0.08 + 0.12 * unit()) * cell_scale : 0.0;
    const double restitution = ballistic ? 0.85 : 1.0;

    SceneSpec spec;
    spec.height = h;
    spec.width = w;
    spec.amplitude = cfg.scene.blob_amplitude;
    spec.radius = cfg.scene.blob_radius * cell_scale;
    spec.envelope_gain = cfg.scene.envelope_gain;
    spec.path.image_width = static_cast<int>(w);
    spec.path.image_height = static_cast<int>(h);
    spec.path.fps_effective = cfg.scene.fps;
    spec.path.x.resize(f, 1);
    spec.path.y.resize(f, 1);

    const double bound_lo_x = 1.5, bound_hi_x = static_cast<double>(w) - 2.5;
    const double bound_lo_y = 1.5, bound_hi_y = static_cast<double>(h) - 2.5;
    for (Index i = 0; i < f; ++i) {
        spec.path.x(i, 0) = x;
        spec.path.y(i, 0) = y;
        vy += gravity;
        x += vx;
        y += vy;
        bool bounced = false;
        if (x < bound_lo_x) {
            x = 2.0 * bound_lo_x - x;
            vx = -vx;
            bounced = true;
        } else if (x > bound_hi_x) {
            x = 2.0 * bound_hi_x - x;
            vx = -vx;
            bounced = true;
        }
        if (y < bound_lo_y) {
            y = 2.0 * bound_lo_y - y;
            vy = -vy * restitution;
            bounced = true;
        } else if (y > bound_hi_y) {
            y = 2.0 * bound_hi_y - y;
            vy = -vy * restitution;
            bounced = true;
        }
        if (bounced && i + 1 < f) {
            spec.impact_frames.push_back(i + 1);
        }
    }
    return spec;
}

std::vector<SyntheticScene> make_dataset(const RunConfig& cfg, Index count, Seed seed) {
    require(cfg.channels == 1, "make_dataset: the toy latent map is single-channel");
    std::vector<SyntheticScene> scenes;
    scenes.reserve(static_cast<std::size_t>(count));
    for (Index i = 0; i < count; ++i) {
        const SceneSpec spec = random_scene_spec(cfg, seed, static_cast<std::uint64_t>(i));
        scenes.push_back(make_scene(spec, split_seed(seed, static_cast<std::uint64_t>(i), kTagOwner),
                                    cfg.vae_downsample, cfg.blur_sigma));
    }
    return scenes;
}

VelocityNet VelocityNet::init(const VelocityNetConfig& cfg, Seed seed) {
    require(cfg.frames >= 1 && cfg.height >= 1 && cfg.width >= 1 && cfg.channels >= 1 &&
                cfg.hidden >= 1,
            "VelocityNet: dims must be positive");
    VelocityNet net;
    net.cfg = cfg;
    const Index in = net.in_dim();
    const Index out = net.frame_size();
    net.w1.resize(cfg.hidden, in);
    net.w2.resize(cfg.hidden, cfg.hidden);
    net.w3.resize(out, cfg.hidden);
    net.b1 = Eigen::VectorXd::Zero(cfg.hidden);
    net.b2 = Eigen::VectorXd::Zero(cfg.hidden);
    net.b3 = Eigen::VectorXd::Zero(out);
    // zero gate projections: the net opens as a plain MLP
    net.wt1 = Eigen::MatrixXd::Zero(cfg.hidden, kTimeEmbWidth);
    net.wt2 = Eigen::MatrixXd::Zero(cfg.hidden, kTimeEmbWidth);

    std::uint64_t at = 0;
    auto fill = [&](Eigen::MatrixXd& w, double scale) {
        for (Index c = 0; c < w.cols(); ++c) {
            for (Index r = 0; r < w.rows(); ++r) {
                w(r, c) = scale * normal_at(seed, kTagInit, at++);
            }
        }
    };
    fill(net.w1, 1.0 / std::sqrt(static_cast<double>(in)));
    fill(net.w2, 1.0 / std::sqrt(static_cast<double>(cfg.hidden)));
    fill(net.w3, 1.0 / std::sqrt(static_cast<double>(cfg.hidden)));
    return net;
}

namespace {

void fill_time_embedding(double t, double* dst) {
    for (Index j = 0; j < kTimeEmbWidth / 2; ++j) {
        const double angle = t * std::pow(2.0, static_cast<double>(j));
        dst[2 * j] = std::sin(angle);
        dst[2 * j + 1] = std::cos(angle);
    }
}

void fill_frame_embedding(Index i, Index f, double* dst) {
    const double u = static_cast<double>(i) / static_cast<double>(f);
    for (Index j = 0; j < kFrameEmbWidth / 2; ++j) {
        const double angle = u * M_PI * std::pow(2.0, static_cast<double>(j));
        dst[2 * j] = std::sin(angle);
        dst[2 * j + 1] = std::cos(angle);
    }
}

}  // namespace

Tensor vnet_forward(const VelocityNet& net, const Tensor& x, double t, const Tensor* cond,
                    VNetCache* cache) {
    const Index f = net.cfg.frames;
    const Index fs = net.frame_size();
    require(x.rank() == 4 && x.dim(0) == f && x.size() == f * fs,
            "vnet_forward: latent shape mismatch");
    if (cond != nullptr) {
        require_same_shape(x, *cond, "vnet_forward");
    }

    Eigen::MatrixXd in(net.in_dim(), f);
    Eigen::VectorXd t_emb(kTimeEmbWidth);
    fill_time_embedding(t, t_emb.data());
    for (Index i = 0; i < f; ++i) {
        for (Index e = 0; e < fs; ++e) {
            in(e, i) = x.data()[i * fs + e];
            in(fs + e, i) = cond != nullptr ? cond->data()[i * fs + e] : 0.0;
        }
        in.col(i).segment(2 * fs, kTimeEmbWidth) = t_emb;
        fill_frame_embedding(i, f, in.col(i).data() + 2 * fs + kTimeEmbWidth);
    }

    // the time gates are shared by every frame column of the sample
    const Eigen::VectorXd m1 = net.wt1 * t_emb;
    const Eigen::VectorXd m2 = net.wt2 * t_emb;

    Eigen::MatrixXd z1 = (net.w1 * in).colwise() + net.b1;
    Eigen::MatrixXd g1 = z1.unaryExpr([](double v) { return gelu(v); });
    Eigen::MatrixXd h1 = g1.array().colwise() * (1.0 + m1.array());
    Eigen::MatrixXd z2 = (net.w2 * h1).colwise() + net.b2;
    Eigen::MatrixXd g2 = z2.unaryExpr([](double v) { return gelu(v); });
    Eigen::MatrixXd h2 = h1 + (g2.array().colwise() * (1.0 + m2.array())).matrix();
    Eigen::MatrixXd out = (net.w3 * h2).colwise() + net.b3;

    Tensor v_hat(x.dims());
    for (Index i = 0; i < f; ++i) {
        for (Index e = 0; e < fs; ++e) {
            v_hat.data()[i * fs + e] = out(e, i);
        }
    }

    if (cache != nullptr) {
        cache->in = std::move(in);
        cache->t_emb = t_emb;
        cache->m1 = m1;
        cache->m2 = m2;
        cache->z1 = std::move(z1);
        cache->g1 = std::move(g1);
        cache->h1 = std::move(h1);
        cache->z2 = std::move(z2);
        cache->g2 = std::move(g2);
        cache->h2 = std::move(h2);
    }
    return v_hat;
}

void VNetGrads::add(const VNetGrads& other) {
    w1 += other.w1;
    w2 += other.w2;
    w3 += other.w3;
    b1 += other.b1;
    b2 += other.b2;
    b3 += other.b3;
    wt1 += other.wt1;
    wt2 += other.wt2;
}

VNetGrads vnet_backward(const VelocityNet& net, const VNetCache& cache, const Tensor& d_out) {
    const Index f = net.cfg.frames;
    const Index fs = net.frame_size();
    require(d_out.size() == f * fs, "vnet_backward: upstream gradient shape mismatch");

    Eigen::MatrixXd dout(fs, f);
    for (Index i = 0; i < f; ++i) {
        for (Index e = 0; e < fs; ++e) {
            dout(e, i) = d_out.data()[i * fs + e];
        }
    }

    VNetGrads g;
    g.w3 = dout * cache.h2.transpose();
    g.b3 = dout.rowwise().sum();

    Eigen::MatrixXd dh2 = net.w3.transpose() * dout;
    const Eigen::VectorXd dm2 = dh2.cwiseProduct(cache.g2).rowwise().sum();
    Eigen::MatrixXd dg2 = dh2.array().colwise() * (1.0 + cache.m2.array());
    Eigen::MatrixXd dz2 =
        dg2.cwiseProduct(cache.z2.unaryExpr([](double v) { return gelu_grad(v); }));
    g.w2 = dz2 * cache.h1.transpose();
    g.b2 = dz2.rowwise().sum();
    g.wt2 = dm2 * cache.t_emb.transpose();

    Eigen::MatrixXd dh1 = dh2 + net.w2.transpose() * dz2;  // residual skip
    const Eigen::VectorXd dm1 = dh1.cwiseProduct(cache.g1).rowwise().sum();
    Eigen::MatrixXd dg1 = dh1.array().colwise() * (1.0 + cache.m1.array());
    Eigen::MatrixXd dz1 =
        dg1.cwiseProduct(cache.z1.unaryExpr([](double v) { return gelu_grad(v); }));
    g.w1 = dz1 * cache.in.transpose();
    g.b1 = dz1.rowwise().sum();
    g.wt1 = dm1 * cache.t_emb.transpose();
    return g;
}

void save_velocity_net(const std::string& dir, const VelocityNet& net) {
    nlohmann::json meta;
    meta["frames"] = net.cfg.frames;
    meta["height"] = net.cfg.height;
    meta["width"] = net.cfg.width;
    meta["channels"] = net.cfg.channels;
    meta["hidden"] = net.cfg.hidden;
    meta["conditioned"] = net.cfg.conditioned;

    ParamMap params;
    params.emplace("w1", to_tensor(net.w1));
    params.emplace("w2", to_tensor(net.w2));
    params.emplace("w3", to_tensor(net.w3));
    params.emplace("b1", to_tensor(net.b1));
    params.emplace("b2", to_tensor(net.b2));
    params.emplace("b3", to_tensor(net.b3));
    params.emplace("wt1", to_tensor(net.wt1));
    params.emplace("wt2", to_tensor(net.wt2));
    save_params(dir, params, meta.dump());
}

VelocityNet load_velocity_net(const std::string& dir) {
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(load_checkpoint_meta(dir));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("checkpoint '" + dir + "': bad meta: " + e.what());
    }

    VelocityNetConfig cfg;
    cfg.frames = meta.at("frames").get<Index>();
    cfg.height = meta.at("height").get<Index>();
    cfg.width = meta.at("width").get<Index>();
    cfg.channels = meta.at("channels").get<Index>();
    cfg.hidden = meta.at("hidden").get<Index>();
    cfg.conditioned = meta.at("conditioned").get<bool>();

    ParamMap params = load_params(dir);
    VelocityNet net;
    net.cfg = cfg;
    net.w1 = to_matrix(params.at("w1"));
    net.w2 = to_matrix(params.at("w2"));
    net.w3 = to_matrix(params.at("w3"));
    net.b1 = to_vector(params.at("b1"));
    net.b2 = to_vector(params.at("b2"));
    net.b3 = to_vector(params.at("b3"));
    net.wt1 = to_matrix(params.at("wt1"));
    net.wt2 = to_matrix(params.at("wt2"));
    require(net.w1.rows() == cfg.hidden && net.w1.cols() == net.in_dim() &&
                net.w3.rows() == net.frame_size(),
            "checkpoint: parameter shapes do not match the net config");
    return net;
}

namespace {

ConditionBundle unconditional_bundle(const SyntheticScene& scene) {
    ConditionBundle full{scene.xtraj, scene.mask};
    return traj_dropout(full, 1.0, Seed{0}, 0);
}

double draw_time(const RunConfig& cfg, std::uint64_t k) {
    const Seed seed{cfg.seed};
    if (cfg.train.t_schedule == "logit-normal") {
        const double z = normal_at(seed, kTagTime, k) * cfg.train.logit_normal_std +
                         cfg.train.logit_normal_mean;
        return 1.0 / (1.0 + std::exp(-z));
    }
    return random_unit(seed, kTagTime, k);
}

}  // namespace

TrainResult train_toy(const std::vector<SyntheticScene>& dataset, const RunConfig& cfg) {
    require(dataset.size() >= 64, "train_toy: need at least 64 scenes");

    const Seed seed{cfg.seed};
    VelocityNetConfig net_cfg;
    net_cfg.frames = cfg.frames;
    net_cfg.height = cfg.height;
    net_cfg.width = cfg.width;
    net_cfg.channels = cfg.channels;
    net_cfg.hidden = cfg.train.hidden;
    net_cfg.conditioned = cfg.train.conditioned;

    TrainResult result;
    result.net = VelocityNet::init(net_cfg, split_seed(seed, 0, kTagInit));
    VelocityNet& net = result.net;

    AdamW opt(cfg.optimizer, {net.w1.size(), net.b1.size(), net.w2.size(), net.b2.size(),
                              net.w3.size(), net.b3.size(), net.wt1.size(), net.wt2.size()});
    const std::vector<double*> params = {net.w1.data(), net.b1.data(), net.w2.data(),
                                         net.b2.data(), net.w3.data(), net.b3.data(),
                                         net.wt1.data(), net.wt2.data()};

    const Index batch = cfg.train.batch;
    const auto n_scenes = static_cast<std::uint32_t>(dataset.size());

    for (Index step = 0; step < cfg.train.steps; ++step) {
        VNetGrads grads;
        grads.w1.setZero(net.w1.rows(), net.w1.cols());
        grads.w2.setZero(net.w2.rows(), net.w2.cols());
        grads.w3.setZero(net.w3.rows(), net.w3.cols());
        grads.b1 = Eigen::VectorXd::Zero(net.b1.size());
        grads.b2 = Eigen::VectorXd::Zero(net.b2.size());
        grads.b3 = Eigen::VectorXd::Zero(net.b3.size());
        grads.wt1.setZero(net.wt1.rows(), net.wt1.cols());
        grads.wt2.setZero(net.wt2.rows(), net.wt2.cols());

        LossBreakdown step_loss;
        for (Index j = 0; j < batch; ++j) {
            const auto k = static_cast<std::uint64_t>(step * batch + j);
            const SyntheticScene& scene = dataset[pick_uniform(seed, kTagShuffle, k, 0, n_scenes)];

            ConditionBundle bundle =
                cfg.train.conditioned
                    ? traj_dropout({scene.xtraj, scene.mask}, cfg.dropout_p, seed, k)
                    : unconditional_bundle(scene);

            const double t = draw_time(cfg, k);
            const Tensor eps = gaussian_noise(scene.x0.dims(), split_seed(seed, k, kTagNoise));
            const FlowSample fs = hybrid_interpolant(scene.x0, eps, bundle.xtraj, bundle.mask, t);

            VNetCache cache;
            const Tensor v_hat = vnet_forward(net, fs.x_t, t, &bundle.xtraj, &cache);

            const LossBreakdown lb = region_losses(v_hat, fs.v_target, bundle.mask.soft,
                                                   cfg.lambda_out, cfg.lambda_traj, cfg.delta);
            if (!std::isfinite(lb.l_video)) {
                throw TrainingError(static_cast<int>(step),
                                    "train_toy: loss diverged at step " + std::to_string(step));
            }
            const double l_final = final_loss(lb.l_video, 0.0, cfg.video_weight, cfg.audio_weight);
            step_loss.l_out += lb.l_out;
            step_loss.l_traj += lb.l_traj;
            step_loss.l_video += lb.l_video;
            step_loss.l_final += l_final;

            Tensor d_vhat = region_loss_grad(v_hat, fs.v_target, bundle.mask.soft, cfg.lambda_out,
                                             cfg.lambda_traj, cfg.delta);
            d_vhat.flat() *= cfg.video_weight / static_cast<double>(batch);
            grads.add(vnet_backward(net, cache, d_vhat));
        }

        const double inv_batch = 1.0 / static_cast<double>(batch);
        step_loss.l_out *= inv_batch;
        step_loss.l_traj *= inv_batch;
        step_loss.l_video *= inv_batch;
        step_loss.l_final *= inv_batch;
        result.curve.push_back(step_loss);

        const std::vector<double*> grad_ptrs = {
            grads.w1.data(), grads.b1.data(),  grads.w2.data(), grads.b2.data(),
            grads.w3.data(), grads.b3.data(), grads.wt1.data(), grads.wt2.data()};
        opt.step(params, grad_ptrs);
    }
    return result;
}

void write_loss_curve(const std::string& path, const std::vector<LossBreakdown>& curve) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw FormatError("loss curve '" + path + "': cannot open for writing");
    }
    f << "step,l_out,l_traj,l_video,l_final\n";
    char line[256];
    for (std::size_t i = 0; i < curve.size(); ++i) {
        std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g,%.17g,%.17g\n", i, curve[i].l_out,
                      curve[i].l_traj, curve[i].l_video, curve[i].l_final);
        f << line;
    }
}

Tensor euler_sample(const VelocityField& field, const Tensor& eps, const Tensor& xtraj,
                    const TrajMask& mask, Index steps) {
    require(steps >= 1, "euler_sample: need at least one step");

    Tensor x = inference_init(eps, xtraj, mask);
    const double dt = 1.0 / static_cast<double>(steps);
    for (Index k = 0; k < steps; ++k) {
        const double t = 1.0 - static_cast<double>(k) * dt;
        const Tensor v = field(x, t);
        require_same_shape(x, v, "euler_sample");
        x.flat() -= dt * v.flat();
    }
    return x;
}

Tensor sample(const VelocityNet& net, const Tensor& z, const LatentTrajectory& lt,
              const TrajMask& mask, Index steps, Seed seed) {
    const Tensor xtraj_full = inject(z, lt, mask);

    ConditionBundle bundle{xtraj_full, mask};
    if (!net.cfg.conditioned) {
        bundle = traj_dropout(bundle, 1.0, seed, 0);
    }

    const Tensor eps = gaussian_noise(xtraj_full.dims(), seed);
    const Tensor* cond = &bundle.xtraj;
    return euler_sample(
        [&](const Tensor& x, double t) { return vnet_forward(net, x, t, cond); }, eps,
        bundle.xtraj, bundle.mask, steps);
}

PooledTrajectory centroid_track(const Tensor& latents, Index downsample, int image_width,
                                int image_height, double fps_effective) {
    require(latents.rank() == 4, "centroid_track: expected [f,h,w,c]");
    const Index f = latents.dim(0), h = latents.dim(1), w = latents.dim(2), c = latents.dim(3);

    PooledTrajectory track;
    track.image_width = image_width;
    track.image_height = image_height;
    track.fps_effective = fps_effective;
    track.x.resize(f, 1);
    track.y.resize(f, 1);

    const double half = static_cast<double>(downsample - 1) / 2.0;
    for (Index i = 0; i < f; ++i) {
        double mass = 0.0, mx = 0.0, my = 0.0;
        for (Index p = 0; p < h; ++p) {
            for (Index q = 0; q < w; ++q) {
                double weight = 0.0;
                for (Index ch = 0; ch < c; ++ch) {
                    weight += std::max(latents(i, p, q, ch), 0.0);
                }
                mass += weight;
                mx += weight * static_cast<double>(q);
                my += weight * static_cast<double>(p);
            }
        }
        if (mass > 0.0) {
            track.x(i, 0) = (mx / mass) * static_cast<double>(downsample) + half;
            track.y(i, 0) = (my / mass) * static_cast<double>(downsample) + half;
        } else {
            track.x(i, 0) = static_cast<double>(image_width - 1) / 2.0;
            track.y(i, 0) = static_cast<double>(image_height - 1) / 2.0;
        }
    }
    return track;
}

Eigen::ArrayXd synth_audio(const Eigen::ArrayXd& envelope, double tau, int sample_rate,
                           Seed seed, const std::vector<Index>& impact_frames) {
    require(envelope.size() >= 1 && tau > 0.0 && sample_rate > 0, "synth_audio: bad inputs");

    const auto n = static_cast<Index>(
        std::lround(static_cast<double>(envelope.size()) * tau * sample_rate));
    Eigen::ArrayXd times(n);
    for (Index i = 0; i < n; ++i) {
        times[i] = static_cast<double>(i) / sample_rate;
    }
    const Eigen::ArrayXd amp = resample_to_times(envelope, tau, times);

    Eigen::ArrayXd out(n);
    for (Index i = 0; i < n; ++i) {
        const double noise =
            2.0 * random_unit(seed, kTagCarrier, static_cast<std::uint64_t>(i)) - 1.0;
        out[i] = amp[i] * noise;
    }

    // full-scale square bursts; RMS 1.0 stands clear of any noise bed
    const auto click_len = static_cast<Index>(std::lround(0.02 * sample_rate));
    for (Index frame : impact_frames) {
        if (frame < 0 || frame >= envelope.size()) continue;
        const auto start = static_cast<Index>(
            std::lround(static_cast<double>(frame) * tau * sample_rate));
        for (Index i = start; i < std::min(n, start + click_len); ++i) {
            out[i] = (i - start) % 2 == 0 ? 1.0 : -1.0;
        }
    }
    return out;
}

}  // namespace kinflow

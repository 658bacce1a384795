#include "kinflow/trajectory.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace kinflow {

namespace {

void validate_trajectory(const Trajectory& traj) {
    require(traj.image_width > 0 && traj.image_height > 0, "trajectory: image dims must be positive");
    require(traj.fps > 0.0, "trajectory: fps must be positive");
    require(traj.frames() >= 2, "trajectory: need at least 2 frames");
    require(traj.objects() >= 1, "trajectory: need at least 1 object");
    for (Index i = 0; i < traj.frames(); ++i) {
        for (Index n = 0; n < traj.objects(); ++n) {
            const double x = traj.x(i, n), y = traj.y(i, n);
            require(std::isfinite(x) && std::isfinite(y), "trajectory: points must be finite");
            require(x >= 0.0 && x < traj.image_width && y >= 0.0 && y < traj.image_height,
                    "trajectory: point out of image bounds");
        }
    }
}

double round_half_away(double v) {
    return std::round(v);  // std::round rounds half away from zero
}

}  // namespace

Trajectory parse_trajectory_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("trajectory json: ") + e.what());
    }

    Trajectory traj;
    try {
        traj.image_width = j.at("image_width").get<int>();
        traj.image_height = j.at("image_height").get<int>();
        traj.fps = j.at("fps").get<double>();
        const auto& objects = j.at("objects");
        require(objects.is_array() && !objects.empty(), "trajectory json: objects must be a non-empty array");

        const Index n_obj = static_cast<Index>(objects.size());
        Index n_frames = -1;
        for (Index n = 0; n < n_obj; ++n) {
            const auto& pts = objects[static_cast<std::size_t>(n)].at("points");
            if (n_frames < 0) {
                n_frames = static_cast<Index>(pts.size());
                traj.x.resize(n_frames, n_obj);
                traj.y.resize(n_frames, n_obj);
            }
            require(static_cast<Index>(pts.size()) == n_frames,
                    "trajectory json: all objects must share the frame count");
            for (Index i = 0; i < n_frames; ++i) {
                const auto& pt = pts[static_cast<std::size_t>(i)];
                require(pt.is_array() && pt.size() == 2, "trajectory json: point must be [x,y]");
                traj.x(i, n) = pt[0].get<double>();
                traj.y(i, n) = pt[1].get<double>();
            }
            traj.ids.push_back(objects[static_cast<std::size_t>(n)].value("id", std::to_string(n)));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("trajectory json: ") + e.what());
    }

    validate_trajectory(traj);
    return traj;
}

Trajectory load_trajectory(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw FormatError("trajectory file '" + path + "': cannot open");
    }
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_trajectory_json(ss.str());
}

std::string trajectory_to_json(const Trajectory& traj) {
    nlohmann::json j;
    j["image_width"] = traj.image_width;
    j["image_height"] = traj.image_height;
    j["fps"] = traj.fps;
    j["objects"] = nlohmann::json::array();
    for (Index n = 0; n < traj.objects(); ++n) {
        nlohmann::json obj;
        obj["id"] = n < static_cast<Index>(traj.ids.size()) ? traj.ids[static_cast<std::size_t>(n)]
                                                            : std::to_string(n);
        auto pts = nlohmann::json::array();
        for (Index i = 0; i < traj.frames(); ++i) {
            pts.push_back({traj.x(i, n), traj.y(i, n)});
        }
        obj["points"] = pts;
        j["objects"].push_back(obj);
    }
    return j.dump(2);
}

PooledTrajectory pool_temporal(const Trajectory& traj, Index f) {
    const Index f_raw = traj.frames();
    require(f >= 2, "pool_temporal: f must be at least 2");
    require(f <= f_raw, "pool_temporal: f must not exceed the raw frame count");

    PooledTrajectory out;
    out.image_width = traj.image_width;
    out.image_height = traj.image_height;
    out.fps_effective = traj.fps * static_cast<double>(f) / static_cast<double>(f_raw);
    out.x.resize(f, traj.objects());
    out.y.resize(f, traj.objects());

    for (Index k = 0; k < f; ++k) {
        const Index begin = k * f_raw / f;
        const Index end = (k + 1) * f_raw / f;
        const double count = static_cast<double>(end - begin);
        for (Index n = 0; n < traj.objects(); ++n) {
            double sx = 0.0, sy = 0.0;
            for (Index i = begin; i < end; ++i) {
                sx += traj.x(i, n);
                sy += traj.y(i, n);
            }
            out.x(k, n) = sx / count;
            out.y(k, n) = sy / count;
        }
    }
    return out;
}

LatentTrajectory to_latent_grid(const PooledTrajectory& pt, Index s, Index h, Index w) {
    require(s >= 1, "to_latent_grid: downsample factor must be at least 1");
    require(h >= 1 && w >= 1, "to_latent_grid: grid dims must be positive");

    LatentTrajectory lt;
    lt.downsample = s;
    lt.grid_h = h;
    lt.grid_w = w;
    lt.p.resize(pt.frames(), pt.objects());
    lt.q.resize(pt.frames(), pt.objects());
    const double sd = static_cast<double>(s);
    for (Index i = 0; i < pt.frames(); ++i) {
        for (Index n = 0; n < pt.objects(); ++n) {
            const auto p = static_cast<Index>(round_half_away(pt.y(i, n) / sd));
            const auto q = static_cast<Index>(round_half_away(pt.x(i, n) / sd));
            lt.p(i, n) = static_cast<int>(std::clamp<Index>(p, 0, h - 1));
            lt.q(i, n) = static_cast<int>(std::clamp<Index>(q, 0, w - 1));
        }
    }
    return lt;
}

TrajMask build_mask(const LatentTrajectory& lt, Index f, Index h, Index w, double blur_sigma,
                    Seed seed) {
    require(f == lt.frames(), "build_mask: frame count mismatch");
    require(h == lt.grid_h && w == lt.grid_w, "build_mask: grid mismatch");
    require(blur_sigma >= 0.0, "build_mask: blur sigma must be nonnegative");

    TrajMask mask;
    mask.f = f;
    mask.h = h;
    mask.w = w;
    mask.binary = Tensor({f, h, w});
    mask.owner.assign(static_cast<std::size_t>(f * h * w), -1);

    for (Index i = 0; i < f; ++i) {
        for (Index p = 0; p < h; ++p) {
            for (Index q = 0; q < w; ++q) {
                std::vector<std::int32_t> candidates;
                for (Index n = 0; n < lt.objects(); ++n) {
                    if (lt.p(i, n) == p && lt.q(i, n) == q) {
                        candidates.push_back(static_cast<std::int32_t>(n));
                    }
                }
                if (candidates.empty()) continue;
                mask.binary(i, p, q) = 1.0;
                const auto cell = static_cast<std::uint64_t>(p * w + q);
                const auto pick = candidates.size() == 1
                                      ? 0u
                                      : pick_uniform(seed, kTagOwner, cell, static_cast<std::uint32_t>(i),
                                                     static_cast<std::uint32_t>(candidates.size()));
                mask.owner_at(i, p, q) = candidates[pick];
            }
        }
    }

    mask.soft = gaussian_blur_frames(mask.binary, blur_sigma);
    return mask;
}

Tensor gaussian_blur_frames(const Tensor& frames, double sigma) {
    require(frames.rank() == 3, "gaussian_blur_frames: expected [f,h,w]");
    require(sigma >= 0.0, "gaussian_blur_frames: sigma must be nonnegative");
    if (sigma == 0.0) {
        return frames;
    }

    const Index f = frames.dim(0), h = frames.dim(1), w = frames.dim(2);
    const Index radius = std::max<Index>(1, static_cast<Index>(std::ceil(3.0 * sigma)));
    Eigen::ArrayXd kernel(2 * radius + 1);
    for (Index k = -radius; k <= radius; ++k) {
        kernel[k + radius] = std::exp(-static_cast<double>(k * k) / (2.0 * sigma * sigma));
    }
    kernel /= kernel.sum();

    // Separable passes with zero padding; the product of two normalized 1-D
    // kernels is the normalized 2-D kernel.
    Tensor rows({f, h, w});
    for (Index i = 0; i < f; ++i) {
        for (Index p = 0; p < h; ++p) {
            for (Index q = 0; q < w; ++q) {
                double acc = 0.0;
                for (Index k = -radius; k <= radius; ++k) {
                    const Index qq = q + k;
                    if (qq < 0 || qq >= w) continue;
                    acc += kernel[k + radius] * frames(i, p, qq);
                }
                rows(i, p, q) = acc;
            }
        }
    }
    Tensor out({f, h, w});
    for (Index i = 0; i < f; ++i) {
        for (Index p = 0; p < h; ++p) {
            for (Index q = 0; q < w; ++q) {
                double acc = 0.0;
                for (Index k = -radius; k <= radius; ++k) {
                    const Index pp = p + k;
                    if (pp < 0 || pp >= h) continue;
                    acc += kernel[k + radius] * rows(i, pp, q);
                }
                out(i, p, q) = std::clamp(acc, 0.0, 1.0);
            }
        }
    }
    return out;
}

Tensor pack_mask(const TrajMask& mask) {
    Tensor packed({3, mask.f, mask.h, mask.w});
    const Index n = mask.f * mask.h * mask.w;
    for (Index i = 0; i < n; ++i) {
        packed.data()[i] = mask.binary.data()[i];
        packed.data()[n + i] = mask.soft.data()[i];
        packed.data()[2 * n + i] = static_cast<double>(mask.owner[static_cast<std::size_t>(i)]);
    }
    return packed;
}

TrajMask unpack_mask(const Tensor& packed) {
    require(packed.rank() == 4 && packed.dim(0) == 3, "unpack_mask: expected [3,f,h,w]");
    TrajMask mask;
    mask.f = packed.dim(1);
    mask.h = packed.dim(2);
    mask.w = packed.dim(3);
    mask.binary = Tensor({mask.f, mask.h, mask.w});
    mask.soft = Tensor({mask.f, mask.h, mask.w});
    const Index n = mask.f * mask.h * mask.w;
    mask.owner.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        mask.binary.data()[i] = packed.data()[i];
        mask.soft.data()[i] = packed.data()[n + i];
        mask.owner[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(packed.data()[2 * n + i]);
    }
    return mask;
}

Tensor latent_trajectory_to_tensor(const LatentTrajectory& lt) {
    Tensor t({lt.frames(), lt.objects(), 2});
    for (Index i = 0; i < lt.frames(); ++i) {
        for (Index n = 0; n < lt.objects(); ++n) {
            t(i, n, 0) = static_cast<double>(lt.p(i, n));
            t(i, n, 1) = static_cast<double>(lt.q(i, n));
        }
    }
    return t;
}

LatentTrajectory latent_trajectory_from_tensor(const Tensor& t, Index s, Index h, Index w) {
    require(t.rank() == 3 && t.dim(2) == 2, "latent trajectory tensor: expected [f,N,2]");
    LatentTrajectory lt;
    lt.downsample = s;
    lt.grid_h = h;
    lt.grid_w = w;
    lt.p.resize(t.dim(0), t.dim(1));
    lt.q.resize(t.dim(0), t.dim(1));
    for (Index i = 0; i < t.dim(0); ++i) {
        for (Index n = 0; n < t.dim(1); ++n) {
            const auto p = static_cast<Index>(t(i, n, 0));
            const auto q = static_cast<Index>(t(i, n, 1));
            require(p >= 0 && p < h && q >= 0 && q < w, "latent trajectory tensor: cell out of grid");
            lt.p(i, n) = static_cast<int>(p);
            lt.q(i, n) = static_cast<int>(q);
        }
    }
    return lt;
}

}  // namespace kinflow

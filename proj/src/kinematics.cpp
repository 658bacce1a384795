#include "kinflow/kinematics.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace kinflow {

KinematicTrack derive_kinematics(const PooledTrajectory& pt, BoundaryAccel boundary) {
    const Index f = pt.frames(), n_obj = pt.objects();
    require(f >= 2, "derive_kinematics: need at least 2 frames");
    require(pt.fps_effective > 0.0, "derive_kinematics: fps must be positive");

    const double longer = static_cast<double>(std::max(pt.image_width, pt.image_height));
    require(longer > 0.0, "derive_kinematics: image dims must be positive");
    const double tau = 1.0 / pt.fps_effective;

    KinematicTrack kt;
    kt.tau = tau;
    kt.rx = pt.x / longer;
    kt.ry = pt.y / longer;
    kt.vx.setZero(f, n_obj);
    kt.vy.setZero(f, n_obj);
    kt.ax.setZero(f, n_obj);
    kt.ay.setZero(f, n_obj);

    for (Index n = 0; n < n_obj; ++n) {
        for (Index i = 1; i + 1 < f; ++i) {
            kt.vx(i, n) = (kt.rx(i + 1, n) - kt.rx(i - 1, n)) / (2.0 * tau);
            kt.vy(i, n) = (kt.ry(i + 1, n) - kt.ry(i - 1, n)) / (2.0 * tau);
            kt.ax(i, n) = (kt.rx(i + 1, n) - 2.0 * kt.rx(i, n) + kt.rx(i - 1, n)) / (tau * tau);
            kt.ay(i, n) = (kt.ry(i + 1, n) - 2.0 * kt.ry(i, n) + kt.ry(i - 1, n)) / (tau * tau);
        }
        kt.vx(0, n) = (kt.rx(1, n) - kt.rx(0, n)) / tau;
        kt.vy(0, n) = (kt.ry(1, n) - kt.ry(0, n)) / tau;
        kt.vx(f - 1, n) = (kt.rx(f - 1, n) - kt.rx(f - 2, n)) / tau;
        kt.vy(f - 1, n) = (kt.ry(f - 1, n) - kt.ry(f - 2, n)) / tau;

        if (f >= 3) {
            if (boundary == BoundaryAccel::replicate) {
                kt.ax(0, n) = kt.ax(1, n);
                kt.ay(0, n) = kt.ay(1, n);
                kt.ax(f - 1, n) = kt.ax(f - 2, n);
                kt.ay(f - 1, n) = kt.ay(f - 2, n);
            } else {
                kt.ax(0, n) = (kt.rx(2, n) - 2.0 * kt.rx(1, n) + kt.rx(0, n)) / (tau * tau);
                kt.ay(0, n) = (kt.ry(2, n) - 2.0 * kt.ry(1, n) + kt.ry(0, n)) / (tau * tau);
                kt.ax(f - 1, n) =
                    (kt.rx(f - 1, n) - 2.0 * kt.rx(f - 2, n) + kt.rx(f - 3, n)) / (tau * tau);
                kt.ay(f - 1, n) =
                    (kt.ry(f - 1, n) - 2.0 * kt.ry(f - 2, n) + kt.ry(f - 3, n)) / (tau * tau);
            }
        }
    }

    kt.vmag = (kt.vx.square() + kt.vy.square()).sqrt();
    kt.amag = (kt.ax.square() + kt.ay.square()).sqrt();
    return kt;
}

double log_compress(double d) {
    const double mag = std::log10(1.0 + std::abs(d));
    return d < 0.0 ? -mag : mag;
}

Eigen::ArrayXd log_compress(const Eigen::ArrayXd& d) {
    return d.unaryExpr([](double v) { return log_compress(v); });
}

Eigen::ArrayXXd log_compress(const Eigen::ArrayXXd& d) {
    return d.unaryExpr([](double v) { return log_compress(v); });
}

std::string feature_stats_to_json(const FeatureStats& stats) {
    nlohmann::json j;
    j["version"] = kStatsVersion;
    j["mean"] = std::vector<double>(stats.mean.data(), stats.mean.data() + kFeatureWidth);
    j["std"] = std::vector<double>(stats.std.data(), stats.std.data() + kFeatureWidth);
    return j.dump(2);
}

FeatureStats feature_stats_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("stats json: ") + e.what());
    }
    FeatureStats stats;
    try {
        const auto mean = j.at("mean").get<std::vector<double>>();
        const auto std_ = j.at("std").get<std::vector<double>>();
        require(mean.size() == kFeatureWidth && std_.size() == kFeatureWidth,
                "stats json: mean/std must have 8 components");
        for (Index k = 0; k < kFeatureWidth; ++k) {
            stats.mean[k] = mean[static_cast<std::size_t>(k)];
            stats.std[k] = std_[static_cast<std::size_t>(k)];
            require(stats.std[k] > 0.0, "stats json: std must be positive");
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("stats json: ") + e.what());
    }
    return stats;
}

void save_feature_stats(const std::string& path, const FeatureStats& stats) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw FormatError("stats file '" + path + "': cannot open for writing");
    }
    f << feature_stats_to_json(stats) << "\n";
}

FeatureStats load_feature_stats(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw FormatError("stats file '" + path + "': cannot open");
    }
    std::stringstream ss;
    ss << f.rdbuf();
    return feature_stats_from_json(ss.str());
}

Tensor raw_features(const KinematicTrack& kt) {
    const Index f = kt.frames(), n_obj = kt.objects();
    Tensor phi({f, n_obj, kFeatureWidth});
    for (Index i = 0; i < f; ++i) {
        for (Index n = 0; n < n_obj; ++n) {
            phi(i, n, 0) = kt.rx(i, n);
            phi(i, n, 1) = kt.ry(i, n);
            phi(i, n, 2) = kt.vx(i, n);
            phi(i, n, 3) = kt.vy(i, n);
            phi(i, n, 4) = kt.ax(i, n);
            phi(i, n, 5) = kt.ay(i, n);
            phi(i, n, 6) = kt.vmag(i, n);
            phi(i, n, 7) = kt.amag(i, n);
        }
    }
    return phi;
}

KinematicFeature assemble_features(const KinematicTrack& kt, const FeatureStats& stats) {
    for (Index k = 0; k < kFeatureWidth; ++k) {
        require(stats.std[k] > 0.0, "assemble_features: stats std must be positive");
    }

    KinematicFeature feat;
    feat.phi = raw_features(kt);
    feat.phi_tilde = Tensor(feat.phi.dims());
    const Index rows = kt.frames() * kt.objects();
    for (Index r = 0; r < rows; ++r) {
        for (Index k = 0; k < kFeatureWidth; ++k) {
            const double raw = feat.phi.data()[r * kFeatureWidth + k];
            const double compressed = k < 2 ? raw : log_compress(raw);
            feat.phi_tilde.data()[r * kFeatureWidth + k] = (compressed - stats.mean[k]) / stats.std[k];
        }
    }
    return feat;
}

FeatureStats fit_stats(const std::vector<Tensor>& raw_phi) {
    require(!raw_phi.empty(), "fit_stats: corpus must not be empty");

    Index rows = 0;
    for (const Tensor& phi : raw_phi) {
        require(phi.rank() >= 2 && phi.dim(phi.rank() - 1) == kFeatureWidth,
                "fit_stats: features must have width 8");
        rows += phi.size() / kFeatureWidth;
    }
    require(rows >= 2, "fit_stats: need at least 2 feature rows");

    Eigen::Array<double, 8, 1> sum = Eigen::Array<double, 8, 1>::Zero();
    Eigen::Array<double, 8, 1> sum_sq = Eigen::Array<double, 8, 1>::Zero();
    for (const Tensor& phi : raw_phi) {
        const Index r_count = phi.size() / kFeatureWidth;
        for (Index r = 0; r < r_count; ++r) {
            for (Index k = 0; k < kFeatureWidth; ++k) {
                const double raw = phi.data()[r * kFeatureWidth + k];
                const double compressed = k < 2 ? raw : log_compress(raw);
                sum[k] += compressed;
                sum_sq[k] += compressed * compressed;
            }
        }
    }

    FeatureStats stats;
    const double count = static_cast<double>(rows);
    stats.mean = sum / count;
    // population variance; tiny negatives from cancellation are clamped
    const Eigen::Array<double, 8, 1> var = (sum_sq / count - stats.mean.square()).max(0.0);
    stats.std = var.sqrt().max(kStdFloor);
    return stats;
}

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return cdf + x * pdf;
}

KinEncoder KinEncoder::init(Index hidden, Index d, Seed seed) {
    require(hidden >= 1 && d >= 1, "KinEncoder: dims must be positive");
    KinEncoder enc;
    enc.w1.resize(hidden, kFeatureWidth);
    enc.w2.resize(hidden, hidden);
    enc.w3.resize(d, hidden);
    enc.b1 = Eigen::VectorXd::Zero(hidden);
    enc.b2 = Eigen::VectorXd::Zero(hidden);
    enc.b3 = Eigen::VectorXd::Zero(d);

    std::uint64_t at = 0;
    auto fill = [&](Eigen::MatrixXd& w, double scale) {
        for (Index c = 0; c < w.cols(); ++c) {
            for (Index r = 0; r < w.rows(); ++r) {
                w(r, c) = scale * normal_at(seed, kTagInit, at++);
            }
        }
    };
    fill(enc.w1, 1.0 / std::sqrt(static_cast<double>(kFeatureWidth)));
    fill(enc.w2, 1.0 / std::sqrt(static_cast<double>(hidden)));
    fill(enc.w3, 1.0 / std::sqrt(static_cast<double>(hidden)));
    return enc;
}

Eigen::MatrixXd encoder_forward(const KinEncoder& enc, const Eigen::MatrixXd& x,
                                KinEncoderCache* cache) {
    require(x.cols() == kFeatureWidth, "encoder_forward: input width must be 8");

    // Rows are tokens; layers act on transposed blocks.
    Eigen::MatrixXd z1 = (enc.w1 * x.transpose()).colwise() + enc.b1;
    Eigen::MatrixXd h1 = z1.unaryExpr([](double v) { return gelu(v); });
    Eigen::MatrixXd z2 = (enc.w2 * h1).colwise() + enc.b2;
    Eigen::MatrixXd h2 = z2.unaryExpr([](double v) { return gelu(v); });
    Eigen::MatrixXd out = ((enc.w3 * h2).colwise() + enc.b3).transpose();

    if (cache != nullptr) {
        cache->x = x;
        cache->z1 = std::move(z1);
        cache->h1 = std::move(h1);
        cache->z2 = std::move(z2);
        cache->h2 = std::move(h2);
    }
    return out;
}

KinEncoderGrads encoder_backward(const KinEncoder& enc, const KinEncoderCache& cache,
                                 const Eigen::MatrixXd& d_out) {
    require(d_out.rows() == cache.x.rows() && d_out.cols() == enc.out_dim(),
            "encoder_backward: upstream gradient shape mismatch");

    KinEncoderGrads g;
    const Eigen::MatrixXd d3 = d_out.transpose();  // [d x rows]
    g.w3 = d3 * cache.h2.transpose();
    g.b3 = d3.rowwise().sum();

    Eigen::MatrixXd dh2 = enc.w3.transpose() * d3;
    Eigen::MatrixXd dz2 =
        dh2.cwiseProduct(cache.z2.unaryExpr([](double v) { return gelu_grad(v); }));
    g.w2 = dz2 * cache.h1.transpose();
    g.b2 = dz2.rowwise().sum();

    Eigen::MatrixXd dh1 = enc.w2.transpose() * dz2;
    Eigen::MatrixXd dz1 =
        dh1.cwiseProduct(cache.z1.unaryExpr([](double v) { return gelu_grad(v); }));
    g.w1 = dz1 * cache.x;
    g.b1 = dz1.rowwise().sum();

    g.x = (enc.w1.transpose() * dz1).transpose();
    return g;
}

Tensor encode(const KinematicFeature& feat, const KinEncoder& enc) {
    require(feat.phi_tilde.rank() == 3 && feat.phi_tilde.dim(2) == kFeatureWidth,
            "encode: features must be [f,N,8]");

    const Index f = feat.phi_tilde.dim(0), n_obj = feat.phi_tilde.dim(1);
    const Index rows = f * n_obj;
    Eigen::MatrixXd x(rows, kFeatureWidth);
    for (Index r = 0; r < rows; ++r) {
        for (Index k = 0; k < kFeatureWidth; ++k) {
            x(r, k) = feat.phi_tilde.data()[r * kFeatureWidth + k];
        }
    }
    const Eigen::MatrixXd y = encoder_forward(enc, x);

    Tensor tokens({f, n_obj, enc.out_dim()});
    for (Index r = 0; r < rows; ++r) {
        for (Index k = 0; k < enc.out_dim(); ++k) {
            tokens.data()[r * enc.out_dim() + k] = y(r, k);
        }
    }
    return tokens;
}

}  // namespace kinflow

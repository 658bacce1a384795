#include "kinflow/hybrid_flow.hpp"

namespace kinflow {

namespace {

void check_latent_shapes(const Tensor& x0, const Tensor& eps, const Tensor& xtraj,
                         const TrajMask& mask, const char* what) {
    require(x0.rank() == 4, std::string(what) + ": latents must be [f,h,w,c]");
    require_same_shape(x0, eps, what);
    require_same_shape(x0, xtraj, what);
    require(mask.f == x0.dim(0) && mask.h == x0.dim(1) && mask.w == x0.dim(2),
            std::string(what) + ": mask grid mismatch");
}

}  // namespace

FlowSample hybrid_interpolant(const Tensor& x0, const Tensor& eps, const Tensor& xtraj,
                              const TrajMask& mask, double t) {
    check_latent_shapes(x0, eps, xtraj, mask, "hybrid_interpolant");
    require(t >= 0.0 && t <= 1.0, "hybrid_interpolant: t must lie in [0,1]");

    const Index cells = mask.f * mask.h * mask.w;
    const Index c = x0.dim(3);

    FlowSample s;
    s.t = t;
    s.x_t = Tensor(x0.dims());
    s.v_target = Tensor(x0.dims());
    for (Index cell = 0; cell < cells; ++cell) {
        const bool on = mask.binary.data()[cell] != 0.0;
        const Index base = cell * c;
        for (Index ch = 0; ch < c; ++ch) {
            const double a = x0.data()[base + ch];
            const double e = on ? xtraj.data()[base + ch] : eps.data()[base + ch];
            s.x_t.data()[base + ch] = (1.0 - t) * a + t * e;
            s.v_target.data()[base + ch] = e - a;
        }
    }
    return s;
}

LossBreakdown region_losses(const Tensor& v_hat, const Tensor& v_target, const Tensor& soft,
                            double lambda_out, double lambda_traj, double delta) {
    require(v_hat.rank() == 4, "region_losses: velocities must be [f,h,w,c]");
    require_same_shape(v_hat, v_target, "region_losses");
    require(soft.rank() == 3 && soft.dim(0) == v_hat.dim(0) && soft.dim(1) == v_hat.dim(1) &&
                soft.dim(2) == v_hat.dim(2),
            "region_losses: soft mask must be [f,h,w]");

    const Index cells = soft.size();
    const Index c = v_hat.dim(3);

    double num_out = 0.0, num_traj = 0.0, den_out = 0.0, den_traj = 0.0;
    for (Index cell = 0; cell < cells; ++cell) {
        const double s = soft.data()[cell];
        const Index base = cell * c;
        for (Index ch = 0; ch < c; ++ch) {
            const double d = v_hat.data()[base + ch] - v_target.data()[base + ch];
            const double sq = d * d;
            num_out += (1.0 - s) * sq;
            num_traj += s * sq;
            den_out += 1.0 - s;
            den_traj += s;
        }
    }

    LossBreakdown out;
    out.l_out = num_out / (den_out + delta);
    out.l_traj = num_traj / (den_traj + delta);
    out.l_video = lambda_out * out.l_out + lambda_traj * out.l_traj;
    return out;
}

Tensor region_loss_grad(const Tensor& v_hat, const Tensor& v_target, const Tensor& soft,
                        double lambda_out, double lambda_traj, double delta) {
    require(v_hat.rank() == 4, "region_loss_grad: velocities must be [f,h,w,c]");
    require_same_shape(v_hat, v_target, "region_loss_grad");

    const Index cells = soft.size();
    const Index c = v_hat.dim(3);

    double den_out = 0.0, den_traj = 0.0;
    for (Index cell = 0; cell < cells; ++cell) {
        den_out += (1.0 - soft.data()[cell]) * static_cast<double>(c);
        den_traj += soft.data()[cell] * static_cast<double>(c);
    }
    const double scale_out = lambda_out / (den_out + delta);
    const double scale_traj = lambda_traj / (den_traj + delta);

    Tensor grad(v_hat.dims());
    for (Index cell = 0; cell < cells; ++cell) {
        const double s = soft.data()[cell];
        const double coeff = 2.0 * ((1.0 - s) * scale_out + s * scale_traj);
        const Index base = cell * c;
        for (Index ch = 0; ch < c; ++ch) {
            grad.data()[base + ch] = coeff * (v_hat.data()[base + ch] - v_target.data()[base + ch]);
        }
    }
    return grad;
}

double final_loss(double l_video, double l_audio, double video_weight, double audio_weight) {
    require(std::isfinite(l_video) && std::isfinite(l_audio), "final_loss: losses must be finite");
    return video_weight * l_video + audio_weight * l_audio;
}

Tensor inference_init(const Tensor& eps, const Tensor& xtraj, const TrajMask& mask) {
    check_latent_shapes(eps, eps, xtraj, mask, "inference_init");

    const Index cells = mask.f * mask.h * mask.w;
    const Index c = eps.dim(3);
    Tensor x1(eps.dims());
    for (Index cell = 0; cell < cells; ++cell) {
        const bool on = mask.binary.data()[cell] != 0.0;
        const Index base = cell * c;
        for (Index ch = 0; ch < c; ++ch) {
            x1.data()[base + ch] = on ? xtraj.data()[base + ch] : eps.data()[base + ch];
        }
    }
    return x1;
}

bool dropout_decision(Seed seed, std::uint64_t sample_index, double p) {
    require(p >= 0.0 && p <= 1.0, "traj_dropout: p must lie in [0,1]");
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return random_unit(seed, kTagDropout, sample_index) < p;
}

ConditionBundle traj_dropout(const ConditionBundle& bundle, double p, Seed seed,
                             std::uint64_t sample_index) {
    if (!dropout_decision(seed, sample_index, p)) {
        return bundle;
    }
    ConditionBundle dropped;
    dropped.mask.f = bundle.mask.f;
    dropped.mask.h = bundle.mask.h;
    dropped.mask.w = bundle.mask.w;
    dropped.mask.binary = Tensor({bundle.mask.f, bundle.mask.h, bundle.mask.w});
    dropped.mask.soft = Tensor({bundle.mask.f, bundle.mask.h, bundle.mask.w});
    dropped.mask.owner.assign(static_cast<std::size_t>(bundle.mask.f * bundle.mask.h * bundle.mask.w),
                              -1);
    dropped.xtraj = Tensor(bundle.xtraj.dims());
    const Index frame = bundle.xtraj.size() / bundle.xtraj.dim(0);
    for (Index i = 0; i < frame; ++i) {
        dropped.xtraj.data()[i] = bundle.xtraj.data()[i];  // keep frame 0 only
    }
    return dropped;
}

}  // namespace kinflow

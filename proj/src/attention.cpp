#include "kinflow/attention.hpp"

#include <cmath>

namespace kinflow {

namespace {

constexpr double kNormEps = 1e-6;

Eigen::VectorXd row_rms(const Eigen::MatrixXd& x, double eps) {
    return (x.array().square().rowwise().mean() + eps).sqrt().matrix();
}

// d(rms_norm)/dx given upstream dy; returns dx and accumulates dgain.
Eigen::MatrixXd rms_norm_backward(const Eigen::MatrixXd& x, const Eigen::VectorXd& gain,
                                  const Eigen::MatrixXd& dy, Eigen::VectorXd& d_gain,
                                  double eps) {
    const Index n = x.cols();
    const Eigen::VectorXd r = row_rms(x, eps);
    Eigen::MatrixXd dx(x.rows(), x.cols());
    for (Index row = 0; row < x.rows(); ++row) {
        const double rr = r[row];
        const Eigen::VectorXd xr = x.row(row);
        const Eigen::VectorXd dyr = dy.row(row);
        const double inner = (dyr.array() * gain.array() * xr.array()).sum();
        dx.row(row) = (gain.array() * dyr.array() / rr -
                       xr.array() * inner / (static_cast<double>(n) * rr * rr * rr))
                          .matrix()
                          .transpose();
        d_gain.array() += dyr.array() * xr.array() / rr;
    }
    return dx;
}

// Rotation applied pairwise; sign = -1 reverses it (used in the backward
// pass: the transpose of a rotation is the opposite rotation).
Eigen::MatrixXd rope_signed(const Eigen::MatrixXd& x, const Eigen::VectorXd& positions,
                            double base, double sign) {
    require(x.cols() % 2 == 0, "rope: pair width must be even");
    require(positions.size() == x.rows(), "rope: one position per row required");

    const Index pairs = x.cols() / 2;
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Index row = 0; row < x.rows(); ++row) {
        for (Index k = 0; k < pairs; ++k) {
            const double freq =
                std::pow(base, -2.0 * static_cast<double>(k) / static_cast<double>(x.cols()));
            const double theta = sign * positions[row] * freq;
            const double c = std::cos(theta), s = std::sin(theta);
            const double a = x(row, 2 * k), b = x(row, 2 * k + 1);
            out(row, 2 * k) = a * c - b * s;
            out(row, 2 * k + 1) = a * s + b * c;
        }
    }
    return out;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd out(logits.rows(), logits.cols());
    for (Index row = 0; row < logits.rows(); ++row) {
        const double m = logits.row(row).maxCoeff();
        Eigen::ArrayXd e = (logits.row(row).array() - m).exp();
        out.row(row) = (e / e.sum()).matrix();
    }
    return out;
}

struct FuseContext {
    Eigen::MatrixXd kin_flat;          // [T x d]
    Eigen::VectorXd q_pos, k_pos;      // rotary positions
    Eigen::MatrixXd q_proj, k_proj;    // pre-norm projections
    Eigen::MatrixXd q, k, v;           // normed+roped q/k, plain v
    std::vector<Eigen::MatrixXd> att;  // per head
    Eigen::MatrixXd delta;             // attention output before gating
};

Eigen::MatrixXd flatten_tokens(const Tensor& kin_tokens) {
    const Index f = kin_tokens.dim(0), n_obj = kin_tokens.dim(1), d = kin_tokens.dim(2);
    Eigen::MatrixXd flat(f * n_obj, d);
    for (Index r = 0; r < f * n_obj; ++r) {
        for (Index c = 0; c < d; ++c) {
            flat(r, c) = kin_tokens.data()[r * d + c];
        }
    }
    return flat;
}

FuseContext fuse_forward_ctx(const Eigen::MatrixXd& audio, const Tensor& kin_tokens,
                             const FusionBlock& block, double position_offset) {
    const Index d = block.dim();
    const Index f = kin_tokens.dim(0), n_obj = kin_tokens.dim(1);
    const Index t_count = f * n_obj;
    const Index l_a = audio.rows();
    const Index dh = block.head_dim();

    FuseContext ctx;
    ctx.kin_flat = flatten_tokens(kin_tokens);

    ctx.q_pos.resize(l_a);
    for (Index l = 0; l < l_a; ++l) {
        ctx.q_pos[l] = static_cast<double>(l) * static_cast<double>(f) / static_cast<double>(l_a) +
                       position_offset;
    }
    ctx.k_pos.resize(t_count);
    for (Index i = 0; i < f; ++i) {
        for (Index n = 0; n < n_obj; ++n) {
            ctx.k_pos[i * n_obj + n] = static_cast<double>(i) + position_offset;
        }
    }

    ctx.q_proj = audio * block.w_q;
    ctx.k_proj = ctx.kin_flat * block.w_k;
    Eigen::MatrixXd q_norm = rms_norm(ctx.q_proj, block.q_gain, kNormEps);
    Eigen::MatrixXd k_norm = rms_norm(ctx.k_proj, block.k_gain, kNormEps);
    ctx.v = ctx.kin_flat * block.w_v;

    // rotary encoding per head
    ctx.q.resize(l_a, d);
    ctx.k.resize(t_count, d);
    for (Index head = 0; head < block.n_heads; ++head) {
        ctx.q.middleCols(head * dh, dh) =
            rope_signed(q_norm.middleCols(head * dh, dh), ctx.q_pos, block.rope_base, 1.0);
        ctx.k.middleCols(head * dh, dh) =
            rope_signed(k_norm.middleCols(head * dh, dh), ctx.k_pos, block.rope_base, 1.0);
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    ctx.delta.setZero(l_a, d);
    ctx.att.resize(static_cast<std::size_t>(block.n_heads));
    for (Index head = 0; head < block.n_heads; ++head) {
        const Eigen::MatrixXd logits =
            ctx.q.middleCols(head * dh, dh) * ctx.k.middleCols(head * dh, dh).transpose() * scale;
        ctx.att[static_cast<std::size_t>(head)] = softmax_rows(logits);
        ctx.delta.middleCols(head * dh, dh) =
            ctx.att[static_cast<std::size_t>(head)] * ctx.v.middleCols(head * dh, dh);
    }
    return ctx;
}

void check_fuse_args(const Eigen::MatrixXd& audio, const Tensor& kin_tokens,
                     const FusionBlock& block) {
    require(kin_tokens.rank() == 3, "fuse: kinematic tokens must be [f,N,d]");
    require(audio.rows() >= 1, "fuse: need at least one audio token");
    require(audio.cols() == block.dim(), "fuse: audio width mismatch");
    require(kin_tokens.dim(2) == block.dim(), "fuse: kinematic token width mismatch");
    require(block.n_heads >= 1 && block.dim() % (2 * block.n_heads) == 0,
            "fuse: width must be divisible by 2*n_heads");
}

}  // namespace

Eigen::MatrixXd rms_norm(const Eigen::MatrixXd& x, const Eigen::VectorXd& gain, double eps) {
    require(gain.size() == x.cols(), "rms_norm: gain width mismatch");
    const Eigen::VectorXd r = row_rms(x, eps);
    return (x.array().colwise() / r.array()).rowwise() * gain.transpose().array();
}

Eigen::MatrixXd rope(const Eigen::MatrixXd& x, const Eigen::VectorXd& positions, double base) {
    return rope_signed(x, positions, base, 1.0);
}

double sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

FusionBlock FusionBlock::init(Index d, Index n_heads, Seed seed, double gamma_init,
                              double rope_base) {
    require(d >= 2 && n_heads >= 1 && d % (2 * n_heads) == 0,
            "FusionBlock: width must be divisible by 2*n_heads");
    FusionBlock block;
    block.n_heads = n_heads;
    block.gamma = gamma_init;
    block.rope_base = rope_base;
    block.q_gain = Eigen::VectorXd::Ones(d);
    block.k_gain = Eigen::VectorXd::Ones(d);

    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    std::uint64_t at = 0;
    auto fill = [&](Eigen::MatrixXd& w) {
        w.resize(d, d);
        for (Index c = 0; c < d; ++c) {
            for (Index r = 0; r < d; ++r) {
                w(r, c) = scale * normal_at(seed, kTagInit, at++);
            }
        }
    };
    fill(block.w_q);
    fill(block.w_k);
    fill(block.w_v);
    return block;
}

Eigen::MatrixXd fuse(const Eigen::MatrixXd& audio, const Tensor& kin_tokens,
                     const FusionBlock& block, FuseTrace* trace, double position_offset) {
    check_fuse_args(audio, kin_tokens, block);
    if (kin_tokens.dim(1) == 0) {
        return audio;  // no kinematic tokens: block is a no-op
    }

    FuseContext ctx = fuse_forward_ctx(audio, kin_tokens, block, position_offset);
    if (trace != nullptr) {
        trace->weights = ctx.att;
        trace->logits.clear();
        const double scale = 1.0 / std::sqrt(static_cast<double>(block.head_dim()));
        const Index dh = block.head_dim();
        for (Index head = 0; head < block.n_heads; ++head) {
            trace->logits.push_back(ctx.q.middleCols(head * dh, dh) *
                                    ctx.k.middleCols(head * dh, dh).transpose() * scale);
        }
    }
    return audio + sigmoid(block.gamma) * ctx.delta;
}

FusionGrads fuse_backward(const Eigen::MatrixXd& audio, const Tensor& kin_tokens,
                          const FusionBlock& block, const Eigen::MatrixXd& d_out,
                          double position_offset) {
    check_fuse_args(audio, kin_tokens, block);
    require(d_out.rows() == audio.rows() && d_out.cols() == audio.cols(),
            "fuse_backward: upstream gradient shape mismatch");

    FusionGrads g;
    g.w_q.setZero(block.dim(), block.dim());
    g.w_k.setZero(block.dim(), block.dim());
    g.w_v.setZero(block.dim(), block.dim());
    g.q_gain = Eigen::VectorXd::Zero(block.dim());
    g.k_gain = Eigen::VectorXd::Zero(block.dim());
    g.d_audio = d_out;  // residual path
    g.d_kin = Tensor(kin_tokens.dims().empty() ? std::vector<Index>{1} : kin_tokens.dims());

    if (kin_tokens.dim(1) == 0) {
        return g;
    }

    FuseContext ctx = fuse_forward_ctx(audio, kin_tokens, block, position_offset);
    const Index dh = block.head_dim();
    const double gate = sigmoid(block.gamma);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    g.gamma = gate * (1.0 - gate) * (d_out.array() * ctx.delta.array()).sum();

    const Eigen::MatrixXd d_delta = gate * d_out;
    Eigen::MatrixXd dq_roped(ctx.q.rows(), ctx.q.cols());
    Eigen::MatrixXd dk_roped(ctx.k.rows(), ctx.k.cols());
    Eigen::MatrixXd dv(ctx.v.rows(), ctx.v.cols());
    for (Index head = 0; head < block.n_heads; ++head) {
        const auto& att = ctx.att[static_cast<std::size_t>(head)];
        const Eigen::MatrixXd d_head = d_delta.middleCols(head * dh, dh);

        dv.middleCols(head * dh, dh) = att.transpose() * d_head;

        Eigen::MatrixXd d_att = d_head * ctx.v.middleCols(head * dh, dh).transpose();
        Eigen::MatrixXd d_logits(att.rows(), att.cols());
        for (Index row = 0; row < att.rows(); ++row) {
            const double dot = (d_att.row(row).array() * att.row(row).array()).sum();
            d_logits.row(row) = (att.row(row).array() * (d_att.row(row).array() - dot)).matrix();
        }
        d_logits *= scale;

        dq_roped.middleCols(head * dh, dh) = d_logits * ctx.k.middleCols(head * dh, dh);
        dk_roped.middleCols(head * dh, dh) = d_logits.transpose() * ctx.q.middleCols(head * dh, dh);
    }

    // undo the rotations, then the norms
    Eigen::MatrixXd dq_norm(dq_roped.rows(), dq_roped.cols());
    Eigen::MatrixXd dk_norm(dk_roped.rows(), dk_roped.cols());
    for (Index head = 0; head < block.n_heads; ++head) {
        dq_norm.middleCols(head * dh, dh) =
            rope_signed(dq_roped.middleCols(head * dh, dh), ctx.q_pos, block.rope_base, -1.0);
        dk_norm.middleCols(head * dh, dh) =
            rope_signed(dk_roped.middleCols(head * dh, dh), ctx.k_pos, block.rope_base, -1.0);
    }

    const Eigen::MatrixXd dq_proj =
        rms_norm_backward(ctx.q_proj, block.q_gain, dq_norm, g.q_gain, kNormEps);
    const Eigen::MatrixXd dk_proj =
        rms_norm_backward(ctx.k_proj, block.k_gain, dk_norm, g.k_gain, kNormEps);

    g.w_q = audio.transpose() * dq_proj;
    g.w_k = ctx.kin_flat.transpose() * dk_proj;
    g.w_v = ctx.kin_flat.transpose() * dv;
    g.d_audio += dq_proj * block.w_q.transpose();

    const Eigen::MatrixXd d_kin_flat =
        dk_proj * block.w_k.transpose() + dv * block.w_v.transpose();
    for (Index r = 0; r < d_kin_flat.rows(); ++r) {
        for (Index c = 0; c < d_kin_flat.cols(); ++c) {
            g.d_kin.data()[r * d_kin_flat.cols() + c] = d_kin_flat(r, c);
        }
    }
    return g;
}

}  // namespace kinflow

#include "kinflow/latent_inject.hpp"

namespace kinflow {

Tensor inject(const Tensor& z, const LatentTrajectory& lt, const TrajMask& mask) {
    require(z.rank() == 3, "inject: z must be [h,w,c]");
    const Index h = z.dim(0), w = z.dim(1), c = z.dim(2);
    require(lt.grid_h == h && lt.grid_w == w, "inject: grid mismatch between z and trajectory");
    require(mask.f == lt.frames() && mask.h == h && mask.w == w,
            "inject: mask does not match trajectory grid");

    const Index f = lt.frames();
    Tensor out({f, h, w, c});

    // frame 0 is the conditioning frame itself
    for (Index i = 0; i < h * w * c; ++i) {
        out.data()[i] = z.data()[i];
    }

    for (Index i = 1; i < f; ++i) {
        for (Index p = 0; p < h; ++p) {
            for (Index q = 0; q < w; ++q) {
                if (mask.binary(i, p, q) == 0.0) continue;
                const std::int32_t n = mask.owner_at(i, p, q);
                require(n >= 0 && n < lt.objects(), "inject: owner index out of range");
                const Index src_p = lt.p(0, n), src_q = lt.q(0, n);
                for (Index ch = 0; ch < c; ++ch) {
                    out(i, p, q, ch) = z(src_p, src_q, ch);
                }
            }
        }
    }
    return out;
}

}  // namespace kinflow

#include <doctest.h>

#include "kinflow/trajectory.hpp"

#include <cmath>

using namespace kinflow;

namespace {

Trajectory line_trajectory(Index frames, double x0, double dx, double y0, double dy,
                           int width = 64, int height = 48, double fps = 24.0) {
    Trajectory traj;
    traj.image_width = width;
    traj.image_height = height;
    traj.fps = fps;
    traj.x.resize(frames, 1);
    traj.y.resize(frames, 1);
    for (Index i = 0; i < frames; ++i) {
        traj.x(i, 0) = x0 + dx * static_cast<double>(i);
        traj.y(i, 0) = y0 + dy * static_cast<double>(i);
    }
    traj.ids = {"obj"};
    return traj;
}

}  // namespace

TEST_CASE("trajectory json parse and validation") {
    const std::string good = R"({
        "image_width": 32, "image_height": 24, "fps": 12.0,
        "objects": [
            {"id": "a", "points": [[1,2],[3,4],[5,6]]},
            {"id": "b", "points": [[0,0],[1,1],[2,2]]}
        ]})";
    const Trajectory traj = parse_trajectory_json(good);
    CHECK(traj.frames() == 3);
    CHECK(traj.objects() == 2);
    CHECK(traj.x(1, 0) == 3.0);
    CHECK(traj.y(2, 1) == 2.0);
    CHECK(traj.ids[1] == "b");

    // round-trip through the writer
    const Trajectory again = parse_trajectory_json(trajectory_to_json(traj));
    CHECK(again.x(2, 0) == traj.x(2, 0));

    SUBCASE("mismatched frame counts") {
        const std::string bad = R"({"image_width":32,"image_height":24,"fps":12,
            "objects":[{"id":"a","points":[[1,2],[3,4]]},{"id":"b","points":[[0,0]]}]})";
        CHECK_THROWS(parse_trajectory_json(bad));
    }
    SUBCASE("point out of bounds") {
        const std::string bad = R"({"image_width":32,"image_height":24,"fps":12,
            "objects":[{"id":"a","points":[[1,2],[32,4]]}]})";
        CHECK_THROWS_AS(parse_trajectory_json(bad), std::invalid_argument);
    }
    SUBCASE("bad fps") {
        const std::string bad = R"({"image_width":32,"image_height":24,"fps":0,
            "objects":[{"id":"a","points":[[1,2],[3,4]]}]})";
        CHECK_THROWS_AS(parse_trajectory_json(bad), std::invalid_argument);
    }
    SUBCASE("single frame") {
        const std::string bad = R"({"image_width":32,"image_height":24,"fps":12,
            "objects":[{"id":"a","points":[[1,2]]}]})";
        CHECK_THROWS_AS(parse_trajectory_json(bad), std::invalid_argument);
    }
    SUBCASE("not json") {
        CHECK_THROWS_AS(parse_trajectory_json("not json at all"), FormatError);
    }
}

TEST_CASE("pool_temporal") {
    SUBCASE("identity when f equals the raw count") {
        const Trajectory traj = line_trajectory(5, 1.0, 2.0, 3.0, 0.5);
        const PooledTrajectory pooled = pool_temporal(traj, 5);
        for (Index i = 0; i < 5; ++i) {
            CHECK(pooled.x(i, 0) == traj.x(i, 0));
            CHECK(pooled.y(i, 0) == traj.y(i, 0));
        }
        CHECK(pooled.fps_effective == traj.fps);
    }

    SUBCASE("window means, four raw frames into two") {
        Trajectory traj = line_trajectory(4, 0.0, 2.0, 0.0, 0.0);
        // x positions are 0,2,4,6
        const PooledTrajectory pooled = pool_temporal(traj, 2);
        CHECK(pooled.x(0, 0) == 1.0);
        CHECK(pooled.x(1, 0) == 5.0);
        CHECK(pooled.y(0, 0) == 0.0);
        CHECK(pooled.fps_effective == doctest::Approx(12.0));
    }

    SUBCASE("uneven split covers every raw frame once") {
        const Trajectory traj = line_trajectory(7, 0.0, 1.0, 0.0, 0.0);
        const PooledTrajectory pooled = pool_temporal(traj, 3);
        // windows [0,2) [2,4) [4,7)
        CHECK(pooled.x(0, 0) == doctest::Approx(0.5));
        CHECK(pooled.x(1, 0) == doctest::Approx(2.5));
        CHECK(pooled.x(2, 0) == doctest::Approx(5.0));
    }

    SUBCASE("preconditions") {
        const Trajectory traj = line_trajectory(4, 0.0, 1.0, 0.0, 0.0);
        CHECK_THROWS_AS(pool_temporal(traj, 0), std::invalid_argument);
        CHECK_THROWS_AS(pool_temporal(traj, 1), std::invalid_argument);
        CHECK_THROWS_AS(pool_temporal(traj, 5), std::invalid_argument);
    }
}

TEST_CASE("to_latent_grid") {
    SUBCASE("identity at s=1 on integer coordinates") {
        const Trajectory traj = line_trajectory(4, 3.0, 1.0, 5.0, 0.0, 16, 16, 8.0);
        const PooledTrajectory pooled = pool_temporal(traj, 4);
        const LatentTrajectory lt = to_latent_grid(pooled, 1, 16, 16);
        for (Index i = 0; i < 4; ++i) {
            CHECK(lt.q(i, 0) == static_cast<int>(pooled.x(i, 0)));
            CHECK(lt.p(i, 0) == static_cast<int>(pooled.y(i, 0)));
        }
        // idempotence: mapping the mapped integer cells again changes nothing
        PooledTrajectory cells = pooled;
        for (Index i = 0; i < 4; ++i) {
            cells.x(i, 0) = lt.q(i, 0);
            cells.y(i, 0) = lt.p(i, 0);
        }
        const LatentTrajectory lt2 = to_latent_grid(cells, 1, 16, 16);
        CHECK((lt2.p == lt.p).all());
        CHECK((lt2.q == lt.q).all());
    }

    SUBCASE("rounds half away from zero at s=8") {
        PooledTrajectory pooled;
        pooled.image_width = 64;
        pooled.image_height = 64;
        pooled.fps_effective = 8.0;
        pooled.x.resize(2, 1);
        pooled.y.resize(2, 1);
        pooled.x(0, 0) = 20.0;  // 20/8 = 2.5 -> 3
        pooled.y(0, 0) = 36.0;  // 36/8 = 4.5 -> 5
        pooled.x(1, 0) = 20.0;
        pooled.y(1, 0) = 36.0;
        const LatentTrajectory lt = to_latent_grid(pooled, 8, 8, 8);
        CHECK(lt.p(0, 0) == 5);
        CHECK(lt.q(0, 0) == 3);
    }

    SUBCASE("clamps at the image edge") {
        PooledTrajectory pooled;
        pooled.image_width = 64;
        pooled.image_height = 64;
        pooled.fps_effective = 8.0;
        pooled.x.resize(2, 1);
        pooled.y.resize(2, 1);
        pooled.x(0, 0) = 63.0;  // 63/8 rounds to 8, clamped to 7
        pooled.y(0, 0) = 0.0;
        pooled.x(1, 0) = 63.0;
        pooled.y(1, 0) = 63.0;
        const LatentTrajectory lt = to_latent_grid(pooled, 8, 8, 8);
        CHECK(lt.q(0, 0) == 7);
        CHECK(lt.p(0, 0) == 0);
        CHECK(lt.p(1, 0) == 7);
    }
}

TEST_CASE("build_mask basics") {
    const Trajectory traj = line_trajectory(6, 3.0, 1.6, 4.0, 0.0, 16, 16, 8.0);
    const PooledTrajectory pooled = pool_temporal(traj, 6);
    const LatentTrajectory lt = to_latent_grid(pooled, 1, 16, 16);
    const TrajMask mask = build_mask(lt, 6, 16, 16, 0.5, Seed{11});

    SUBCASE("one occupied cell per frame for a single object") {
        CHECK(mask.binary.flat().sum() == 6.0);
        for (Index i = 0; i < 6; ++i) {
            CHECK(mask.binary(i, lt.p(i, 0), lt.q(i, 0)) == 1.0);
        }
    }

    SUBCASE("owner set exactly on occupied cells") {
        for (Index i = 0; i < 6; ++i) {
            for (Index p = 0; p < 16; ++p) {
                for (Index q = 0; q < 16; ++q) {
                    if (mask.binary(i, p, q) == 1.0) {
                        CHECK(mask.owner_at(i, p, q) == 0);
                    } else {
                        CHECK(mask.owner_at(i, p, q) == -1);
                    }
                }
            }
        }
    }

    SUBCASE("soft stays in [0,1] and matches binary mass away from edges") {
        CHECK(mask.soft.flat().minCoeff() >= 0.0);
        CHECK(mask.soft.flat().maxCoeff() <= 1.0);
        // all cells are at least 2 cells from the boundary, kernel radius 2
        for (Index i = 0; i < 6; ++i) {
            double bin_mass = 0.0, soft_mass = 0.0;
            for (Index p = 0; p < 16; ++p) {
                for (Index q = 0; q < 16; ++q) {
                    bin_mass += mask.binary(i, p, q);
                    soft_mass += mask.soft(i, p, q);
                }
            }
            CHECK(soft_mass == doctest::Approx(bin_mass).epsilon(1e-9));
        }
    }

    SUBCASE("zero sigma degenerates to the binary mask") {
        const TrajMask hard = build_mask(lt, 6, 16, 16, 0.0, Seed{11});
        for (Index i = 0; i < hard.binary.size(); ++i) {
            CHECK(hard.soft.data()[i] == hard.binary.data()[i]);
        }
    }

    SUBCASE("pack/unpack round-trip") {
        const Tensor packed = pack_mask(mask);
        const TrajMask back = unpack_mask(packed);
        CHECK(back.f == mask.f);
        for (Index i = 0; i < mask.binary.size(); ++i) {
            CHECK(back.binary.data()[i] == mask.binary.data()[i]);
            CHECK(back.soft.data()[i] == mask.soft.data()[i]);
        }
        CHECK(back.owner == mask.owner);
    }
}

TEST_CASE("build_mask collision handling") {
    // two objects that share a cell in every frame
    PooledTrajectory pooled;
    pooled.image_width = 8;
    pooled.image_height = 8;
    pooled.fps_effective = 8.0;
    pooled.x.resize(3, 2);
    pooled.y.resize(3, 2);
    for (Index i = 0; i < 3; ++i) {
        pooled.x(i, 0) = 4.0;
        pooled.y(i, 0) = 4.0;
        pooled.x(i, 1) = 4.0;
        pooled.y(i, 1) = 4.0;
    }
    const LatentTrajectory lt = to_latent_grid(pooled, 1, 8, 8);

    const TrajMask a = build_mask(lt, 3, 8, 8, 0.5, Seed{5});
    const TrajMask b = build_mask(lt, 3, 8, 8, 0.5, Seed{5});
    CHECK(a.owner == b.owner);  // same seed, same choice
    for (Index i = 0; i < 3; ++i) {
        const std::int32_t owner = a.owner_at(i, 4, 4);
        CHECK((owner == 0 || owner == 1));
    }
    CHECK(a.binary.flat().sum() == 3.0);  // shared cell counted once

    // across many seeds both objects must win sometimes
    bool saw0 = false, saw1 = false;
    for (std::uint64_t s = 0; s < 64; ++s) {
        const TrajMask m = build_mask(lt, 3, 8, 8, 0.0, Seed{s});
        saw0 = saw0 || m.owner_at(0, 4, 4) == 0;
        saw1 = saw1 || m.owner_at(0, 4, 4) == 1;
    }
    CHECK(saw0);
    CHECK(saw1);
}

TEST_CASE("mask occupancy bound over random multi-object tracks") {
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        const Seed seed{trial + 99};
        const Index f = 4 + static_cast<Index>(random_u64(seed, kTagScene, 0) % 5);
        const Index n_obj = 1 + static_cast<Index>(random_u64(seed, kTagScene, 1) % 4);
        PooledTrajectory pooled;
        pooled.image_width = 12;
        pooled.image_height = 12;
        pooled.fps_effective = 8.0;
        pooled.x.resize(f, n_obj);
        pooled.y.resize(f, n_obj);
        std::uint64_t at = 2;
        for (Index i = 0; i < f; ++i) {
            for (Index n = 0; n < n_obj; ++n) {
                pooled.x(i, n) = random_unit(seed, kTagScene, at++) * 11.0;
                pooled.y(i, n) = random_unit(seed, kTagScene, at++) * 11.0;
            }
        }
        const LatentTrajectory lt = to_latent_grid(pooled, 1, 12, 12);
        const TrajMask mask = build_mask(lt, f, 12, 12, 0.5, seed);

        const double occupied = mask.binary.flat().sum();
        CHECK(occupied <= static_cast<double>(f * n_obj));
        CHECK(occupied >= static_cast<double>(f));
    }
}

TEST_CASE("latent trajectory tensor round-trip") {
    const Trajectory traj = line_trajectory(4, 1.0, 2.0, 3.0, 1.0, 16, 16, 8.0);
    const PooledTrajectory pooled = pool_temporal(traj, 4);
    const LatentTrajectory lt = to_latent_grid(pooled, 1, 16, 16);
    const LatentTrajectory back = latent_trajectory_from_tensor(latent_trajectory_to_tensor(lt),
                                                                1, 16, 16);
    CHECK((back.p == lt.p).all());
    CHECK((back.q == lt.q).all());
}

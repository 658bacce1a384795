#include <doctest.h>

#include "kinflow/attention.hpp"
#include "kinflow/checkpoint.hpp"

#include <cmath>
#include <filesystem>

using namespace kinflow;

namespace {

Eigen::MatrixXd random_matrix(Index rows, Index cols, Seed seed) {
    Eigen::MatrixXd m(rows, cols);
    std::uint64_t at = 0;
    for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) {
            m(r, c) = normal_at(seed, kTagScene, at++);
        }
    }
    return m;
}

Tensor random_tokens(Index f, Index n, Index d, Seed seed) {
    Tensor t({f, n, d});
    for (Index i = 0; i < t.size(); ++i) {
        t.data()[i] = normal_at(seed, kTagScene, static_cast<std::uint64_t>(i));
    }
    return t;
}

}  // namespace

TEST_CASE("rope basics") {
    const Eigen::MatrixXd x = random_matrix(4, 6, Seed{1});

    SUBCASE("position zero is the identity") {
        const Eigen::MatrixXd y = rope(x, Eigen::VectorXd::Zero(4), 10000.0);
        CHECK((y - x).cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("rotation preserves pair norms") {
        Eigen::VectorXd pos(4);
        pos << 0.3, 1.7, 2.0, 5.25;
        const Eigen::MatrixXd y = rope(x, pos, 10000.0);
        for (Index r = 0; r < 4; ++r) {
            for (Index k = 0; k < 3; ++k) {
                const double before = std::hypot(x(r, 2 * k), x(r, 2 * k + 1));
                const double after = std::hypot(y(r, 2 * k), y(r, 2 * k + 1));
                CHECK(std::abs(before - after) < 1e-12);
            }
        }
    }

    SUBCASE("inner products depend only on the position difference") {
        const Eigen::MatrixXd q = random_matrix(1, 8, Seed{2});
        const Eigen::MatrixXd k = random_matrix(1, 8, Seed{3});
        for (std::uint64_t trial = 0; trial < 40; ++trial) {
            const Seed seed{trial + 60};
            const double m = 10.0 * random_unit(seed, kTagScene, 0);
            const double n = 10.0 * random_unit(seed, kTagScene, 1);
            const double shift = 20.0 * random_unit(seed, kTagScene, 2) - 10.0;

            Eigen::VectorXd pm(1), pn(1), pm2(1), pn2(1);
            pm << m;
            pn << n;
            pm2 << m + shift;
            pn2 << n + shift;
            const double base_dot = (rope(q, pm, 10000.0) * rope(k, pn, 10000.0).transpose())(0, 0);
            const double shifted_dot =
                (rope(q, pm2, 10000.0) * rope(k, pn2, 10000.0).transpose())(0, 0);
            CHECK(std::abs(base_dot - shifted_dot) < 1e-9);
        }
    }

    SUBCASE("odd width is rejected") {
        const Eigen::MatrixXd odd = random_matrix(2, 5, Seed{4});
        CHECK_THROWS_AS(rope(odd, Eigen::VectorXd::Zero(2), 10000.0), std::invalid_argument);
    }
}

TEST_CASE("rms_norm normalizes rows") {
    const Eigen::MatrixXd x = 3.0 * random_matrix(5, 8, Seed{6});
    const Eigen::VectorXd gain = Eigen::VectorXd::Ones(8);
    const Eigen::MatrixXd y = rms_norm(x, gain);
    for (Index r = 0; r < 5; ++r) {
        const double ms = y.row(r).squaredNorm() / 8.0;
        CHECK(ms == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("fuse: near-identity at strongly negative gate") {
    const Index d = 16;
    FusionBlock block = FusionBlock::init(d, 2, Seed{7});
    CHECK(block.gamma == -10.0);

    const Eigen::MatrixXd audio = random_matrix(6, d, Seed{8});
    const Tensor kin = random_tokens(3, 2, d, Seed{9});
    const Eigen::MatrixXd out = fuse(audio, kin, block);

    // sigmoid(-10) ~ 4.54e-5 bounds the update
    const double gate = sigmoid(-10.0);
    CHECK(gate == doctest::Approx(4.5398e-5).epsilon(1e-4));
    const double rel = (out - audio).norm() / audio.norm();
    CHECK(rel < 1e-3);
}

TEST_CASE("fuse: single kinematic token attends with weight one") {
    const Index d = 8;
    FusionBlock block = FusionBlock::init(d, 2, Seed{10});
    block.gamma = 0.0;  // gate 0.5 so the update is visible

    const Eigen::MatrixXd audio = random_matrix(5, d, Seed{11});
    const Tensor kin = random_tokens(1, 1, d, Seed{12});

    FuseTrace trace;
    const Eigen::MatrixXd out = fuse(audio, kin, block, &trace);

    for (const auto& att : trace.weights) {
        CHECK(att.cols() == 1);
        for (Index r = 0; r < att.rows(); ++r) {
            CHECK(att(r, 0) == doctest::Approx(1.0).epsilon(1e-12));
        }
    }

    // every audio row receives the same value projection
    Eigen::MatrixXd kin_row(1, d);
    for (Index c = 0; c < d; ++c) {
        kin_row(0, c) = kin(0, 0, c);
    }
    const Eigen::MatrixXd v = kin_row * block.w_v;
    for (Index r = 0; r < 5; ++r) {
        const Eigen::MatrixXd delta = (out.row(r) - audio.row(r)) / sigmoid(block.gamma);
        CHECK((delta - v).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("fuse: attention rows sum to one") {
    const Index d = 24;
    FusionBlock block = FusionBlock::init(d, 3, Seed{13});
    const Eigen::MatrixXd audio = random_matrix(7, d, Seed{14});
    const Tensor kin = random_tokens(4, 2, d, Seed{15});

    FuseTrace trace;
    fuse(audio, kin, block, &trace);
    REQUIRE(trace.weights.size() == 3);
    for (const auto& att : trace.weights) {
        for (Index r = 0; r < att.rows(); ++r) {
            CHECK(std::abs(att.row(r).sum() - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("fuse: joint index shift leaves logits unchanged") {
    const Index d = 16;
    FusionBlock block = FusionBlock::init(d, 2, Seed{16});
    const Eigen::MatrixXd audio = random_matrix(6, d, Seed{17});
    const Tensor kin = random_tokens(3, 2, d, Seed{18});

    FuseTrace base, shifted;
    fuse(audio, kin, block, &base, 0.0);
    fuse(audio, kin, block, &shifted, 13.75);
    for (std::size_t head = 0; head < base.logits.size(); ++head) {
        const double diff =
            (base.logits[head] - shifted.logits[head]).cwiseAbs().maxCoeff();
        CHECK(diff < 1e-9);
    }
}

TEST_CASE("fuse: zero kinematic tokens bypass the block") {
    const Index d = 8;
    const FusionBlock block = FusionBlock::init(d, 1, Seed{19});
    const Eigen::MatrixXd audio = random_matrix(4, d, Seed{20});
    const Tensor no_tokens({3, 0, d});
    const Eigen::MatrixXd out = fuse(audio, no_tokens, block);
    CHECK((out - audio).cwiseAbs().maxCoeff() == 0.0);

    const FusionGrads grads = fuse_backward(audio, no_tokens, block, audio);
    CHECK(grads.w_q.cwiseAbs().maxCoeff() == 0.0);
    CHECK(grads.gamma == 0.0);
    CHECK((grads.d_audio - audio).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fuse gradients match finite differences") {
    const Index d = 8;
    FusionBlock block = FusionBlock::init(d, 2, Seed{21});
    block.gamma = -1.0;

    const Eigen::MatrixXd audio = random_matrix(4, d, Seed{22});
    const Tensor kin = random_tokens(2, 2, d, Seed{23});
    const Eigen::MatrixXd upstream = random_matrix(4, d, Seed{24});

    const FusionGrads grads = fuse_backward(audio, kin, block, upstream);
    auto loss = [&](const FusionBlock& b) {
        return (fuse(audio, kin, b).array() * upstream.array()).sum();
    };

    const double h = 1e-5;
    double max_rel = 0.0;
    auto relcheck = [&](double numeric, double analytic) {
        const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-4});
        max_rel = std::max(max_rel, std::abs(numeric - analytic) / denom);
    };

    auto check_matrix = [&](Eigen::MatrixXd FusionBlock::* member, const Eigen::MatrixXd& analytic) {
        for (Index c = 0; c < d; ++c) {
            for (Index r = 0; r < d; ++r) {
                FusionBlock plus = block, minus = block;
                (plus.*member)(r, c) += h;
                (minus.*member)(r, c) -= h;
                relcheck((loss(plus) - loss(minus)) / (2.0 * h), analytic(r, c));
            }
        }
    };
    check_matrix(&FusionBlock::w_q, grads.w_q);
    check_matrix(&FusionBlock::w_k, grads.w_k);
    check_matrix(&FusionBlock::w_v, grads.w_v);

    {
        FusionBlock plus = block, minus = block;
        plus.gamma += h;
        minus.gamma -= h;
        relcheck((loss(plus) - loss(minus)) / (2.0 * h), grads.gamma);
    }

    for (Index r = 0; r < d; ++r) {
        FusionBlock plus = block, minus = block;
        plus.q_gain[r] += h;
        minus.q_gain[r] -= h;
        relcheck((loss(plus) - loss(minus)) / (2.0 * h), grads.q_gain[r]);

        FusionBlock plus_k = block, minus_k = block;
        plus_k.k_gain[r] += h;
        minus_k.k_gain[r] -= h;
        relcheck((loss(plus_k) - loss(minus_k)) / (2.0 * h), grads.k_gain[r]);
    }

    CHECK(max_rel < 1e-4);
}

TEST_CASE("fusion block width constraints") {
    CHECK_THROWS_AS(FusionBlock::init(6, 2, Seed{1}), std::invalid_argument);  // 6 % 4 != 0
    FusionBlock block = FusionBlock::init(8, 2, Seed{1});
    const Eigen::MatrixXd audio = random_matrix(3, 8, Seed{2});
    CHECK_THROWS_AS(fuse(random_matrix(3, 6, Seed{3}), random_tokens(2, 1, 8, Seed{4}), block),
                    std::invalid_argument);
    CHECK_THROWS_AS(fuse(audio, random_tokens(2, 1, 6, Seed{5}), block), std::invalid_argument);
}

TEST_CASE("checkpoint round-trip for block parameters") {
    const std::string dir =
        (std::filesystem::temp_directory_path() / "kf_fusion_ckpt").string();
    FusionBlock block = FusionBlock::init(8, 2, Seed{25});
    block.gamma = -3.5;

    ParamMap params;
    params.emplace("w_q", to_tensor(block.w_q));
    params.emplace("w_k", to_tensor(block.w_k));
    params.emplace("w_v", to_tensor(block.w_v));
    params.emplace("q_gain", to_tensor(block.q_gain));
    params.emplace("k_gain", to_tensor(block.k_gain));
    Tensor gamma({1});
    gamma(0) = block.gamma;
    params.emplace("gamma", gamma);
    save_params(dir, params, R"({"n_heads":2,"rope_base":10000.0})");

    const ParamMap loaded = load_params(dir);
    CHECK(loaded.size() == 6);
    CHECK(to_matrix(loaded.at("w_q")).isApprox(block.w_q, 0.0));
    CHECK(loaded.at("gamma")(0) == -3.5);
    CHECK(load_checkpoint_meta(dir).find("rope_base") != std::string::npos);
}

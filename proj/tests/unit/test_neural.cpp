#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "helpers.hpp"
#include "platont/errors.hpp"
#include "platont/neural.hpp"
#include "platont/rng.hpp"

using namespace platont;

namespace {

Mat random_batch(int n, int d, std::uint64_t seed) {
    Rng rng(seed);
    Mat x(n, d);
    for (double& v : x.a) v = rng.uniform(-2.0, 2.0);
    return x;
}

} // namespace

TEST_CASE("mlp forward basics") {
    SUBCASE("zero parameters give zero latents") {
        Mlp mlp = Mlp::build({4, 6, 3}, 0.1, 1);
        for (Dense& l : mlp.layers) std::fill(l.w.a.begin(), l.w.a.end(), 0.0);
        const Mat z = encode(mlp, random_batch(5, 4, 2), false, 0);
        for (double v : z.a) CHECK(v == 0.0);
    }
    SUBCASE("eval mode is bitwise deterministic") {
        Mlp mlp = Mlp::build({4, 8, 3}, 0.1, 3);
        const Mat x = random_batch(6, 4, 4);
        const Mat a = encode(mlp, x, false, 1);
        const Mat b = encode(mlp, x, false, 99);
        CHECK(a.a == b.a);
    }
    SUBCASE("train mode replays masks per seed") {
        Mlp mlp = Mlp::build({4, 8, 3}, 0.5, 3);
        const Mat x = random_batch(6, 4, 4);
        const Mat a = encode(mlp, x, true, 42);
        const Mat b = encode(mlp, x, true, 42);
        const Mat c = encode(mlp, x, true, 43);
        CHECK(a.a == b.a);
        CHECK(a.a != c.a);
    }
    SUBCASE("shape mismatch names dimensions") {
        Mlp mlp = Mlp::build({4, 6, 3}, 0.1, 1);
        try {
            encode(mlp, random_batch(5, 7, 2), false, 0);
            FAIL("expected ShapeError");
        } catch (const ShapeError& e) {
            CHECK(std::string(e.what()).find("4") != std::string::npos);
            CHECK(std::string(e.what()).find("7") != std::string::npos);
        }
    }
    SUBCASE("row permutation permutes outputs identically") {
        Mlp mlp = Mlp::build({4, 6, 3}, 0.1, 7);
        Mat x = random_batch(5, 4, 8);
        const Mat y = encode(mlp, x, false, 0);
        Mat xp(5, 4);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 4; ++j) xp(i, j) = x(4 - i, j);
        const Mat yp = encode(mlp, xp, false, 0);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 3; ++j) CHECK(yp(i, j) == y(4 - i, j));
    }
}

TEST_CASE("mlp gradients against finite differences") {
    Mlp mlp = Mlp::build({3, 5, 4, 2}, 0.0, 11);
    const Mat x = random_batch(4, 3, 12);

    SUBCASE("input Jacobian rows") {
        // loss = sum of outputs; dL/dx via backward vs central differences
        MlpCache cache;
        const Mat y = mlp_forward(mlp, x, false, 0, &cache);
        Mat upstream(y.rows, y.cols, 1.0);
        Mlp grads = Mlp::build({3, 5, 4, 2}, 0.0, 11);
        for (Dense& l : grads.layers) {
            std::fill(l.w.a.begin(), l.w.a.end(), 0.0);
            std::fill(l.b.begin(), l.b.end(), 0.0);
        }
        const Mat dx = mlp_backward(mlp, cache, upstream, grads);
        for (int i = 0; i < x.rows; ++i)
            for (int j = 0; j < x.cols; ++j) {
                Mat xp = x, xm = x;
                xp(i, j) += 1e-5;
                xm(i, j) -= 1e-5;
                double up = 0.0, dn = 0.0;
                for (double v : mlp_forward(mlp, xp, false, 0).a) up += v;
                for (double v : mlp_forward(mlp, xm, false, 0).a) dn += v;
                const double fd = (up - dn) / 2e-5;
                CHECK(testing::rel_err(dx(i, j), fd) < 1e-4);
            }
    }
    SUBCASE("parameter gradients, including train-mode dropout with a fixed mask") {
        for (bool train : {false, true}) {
            Mlp net = Mlp::build({3, 5, 4, 2}, train ? 0.25 : 0.0, 13);
            const std::uint64_t mask_seed = 5;
            auto loss = [&](const Mlp& m) {
                const Mat y = mlp_forward(m, x, train, mask_seed);
                double s = 0.0;
                for (double v : y.a) s += v * v;
                return 0.5 * s;
            };
            MlpCache cache;
            const Mat y = mlp_forward(net, x, train, mask_seed, &cache);
            Mlp grads = net;
            for (Dense& l : grads.layers) {
                std::fill(l.w.a.begin(), l.w.a.end(), 0.0);
                std::fill(l.b.begin(), l.b.end(), 0.0);
            }
            mlp_backward(net, cache, y, grads);
            for (std::size_t li = 0; li < net.layers.size(); ++li) {
                for (std::size_t k = 0; k < net.layers[li].w.a.size(); k += 3) {
                    Mlp pert = net;
                    pert.layers[li].w.a[k] += 1e-5;
                    const double up = loss(pert);
                    pert.layers[li].w.a[k] -= 2e-5;
                    const double dn = loss(pert);
                    const double fd = (up - dn) / 2e-5;
                    CHECK(testing::rel_err(grads.layers[li].w.a[k], fd) < 1e-4);
                }
            }
        }
    }
    SUBCASE("backward without cache is a state error") {
        MlpCache cache;
        Mlp grads = mlp;
        CHECK_THROWS_AS(mlp_backward(mlp, cache, Mat(4, 2), grads), StateError);
    }
    SUBCASE("zero upstream gradient gives zero parameter gradients") {
        MlpCache cache;
        mlp_forward(mlp, x, false, 0, &cache);
        Mlp grads = mlp;
        for (Dense& l : grads.layers) {
            std::fill(l.w.a.begin(), l.w.a.end(), 0.0);
            std::fill(l.b.begin(), l.b.end(), 0.0);
        }
        mlp_backward(mlp, cache, Mat(4, 2), grads);
        for (const Dense& l : grads.layers) {
            for (double v : l.w.a) CHECK(v == 0.0);
            for (double v : l.b) CHECK(v == 0.0);
        }
    }
    SUBCASE("linear network matches the closed form") {
        // single linear layer: y = x w; dL/dw for L = sum(y) is sum_i x_i
        Mlp lin;
        lin.dropout = 0.0;
        Dense l;
        l.w = Mat(3, 2);
        Rng rng(21);
        for (double& v : l.w.a) v = rng.uniform(0.1, 1.0);
        l.b.assign(2, 0.0);
        lin.layers.push_back(l);
        MlpCache cache;
        const Mat y = mlp_forward(lin, x, false, 0, &cache);
        Mlp grads = lin;
        std::fill(grads.layers[0].w.a.begin(), grads.layers[0].w.a.end(), 0.0);
        std::fill(grads.layers[0].b.begin(), grads.layers[0].b.end(), 0.0);
        mlp_backward(lin, cache, Mat(y.rows, y.cols, 1.0), grads);
        for (int i = 0; i < 3; ++i) {
            double col_sum = 0.0;
            for (int r = 0; r < x.rows; ++r) col_sum += x(r, i);
            for (int j = 0; j < 2; ++j)
                CHECK(grads.layers[0].w(i, j) == doctest::Approx(col_sum).epsilon(1e-12));
        }
    }
}

TEST_CASE("aggregate_latents") {
    const int n = 6, d = 4;
    const Mat z0 = random_batch(n, d, 31);
    const Mat z1 = random_batch(n, d, 32);
    const Mat z2 = random_batch(n, d, 33);

    SUBCASE("zero attention weights average the channels") {
        Attention att = Attention::build(d, 7);
        std::fill(att.w.a.begin(), att.w.a.end(), 0.0);
        const Aggregated agg = aggregate_latents(att, z0, z1, z2);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < 3; ++k)
                CHECK(agg.weights(i, k) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j)
                CHECK(agg.z_agg(i, j) ==
                      doctest::Approx((z0(i, j) + z1(i, j) + z2(i, j)) / 3.0).epsilon(1e-12));
    }
    SUBCASE("saturated logits select one channel") {
        Attention att = Attention::build(d, 7);
        std::fill(att.w.a.begin(), att.w.a.end(), 0.0);
        att.b = {50.0, -50.0, -50.0};
        const Aggregated agg = aggregate_latents(att, z0, z1, z2);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j)
                CHECK(std::abs(agg.z_agg(i, j) - z0(i, j)) < 1e-10);
    }
    SUBCASE("weights lie on the simplex") {
        const Attention att = Attention::build(d, 8);
        const Aggregated agg = aggregate_latents(att, z0, z1, z2);
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) {
                CHECK(agg.weights(i, k) >= 0.0);
                s += agg.weights(i, k);
            }
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
    }
    SUBCASE("row count mismatch rejected") {
        const Attention att = Attention::build(d, 9);
        CHECK_THROWS_AS(aggregate_latents(att, z0, z1, random_batch(n + 1, d, 3)), ShapeError);
    }
    SUBCASE("backward matches finite differences through softmax and mix") {
        Attention att = Attention::build(d, 10);
        auto loss = [&](const Attention& a, const Mat& za, const Mat& zb, const Mat& zc) {
            const Aggregated agg = aggregate_latents(a, za, zb, zc);
            double s = 0.0;
            for (double v : agg.z_agg.a) s += v * v;
            return 0.5 * s;
        };
        AttentionCache cache;
        const Aggregated agg = aggregate_latents(att, z0, z1, z2, &cache);
        std::array<Mat, 3> d_z{Mat(n, d), Mat(n, d), Mat(n, d)};
        Attention grads = att;
        std::fill(grads.w.a.begin(), grads.w.a.end(), 0.0);
        std::fill(grads.b.begin(), grads.b.end(), 0.0);
        aggregate_backward(att, cache, {&z0, &z1, &z2}, agg.z_agg, d_z, grads);
        for (std::size_t k = 0; k < att.w.a.size(); k += 5) {
            Attention pert = att;
            pert.w.a[k] += 1e-5;
            const double up = loss(pert, z0, z1, z2);
            pert.w.a[k] -= 2e-5;
            const double dn = loss(pert, z0, z1, z2);
            CHECK(testing::rel_err(grads.w.a[k], (up - dn) / 2e-5) < 1e-4);
        }
        Mat z0p = z0;
        for (int j = 0; j < d; ++j) {
            z0p(2, j) += 1e-5;
            const double up = loss(att, z0p, z1, z2);
            z0p(2, j) -= 2e-5;
            const double dn = loss(att, z0p, z1, z2);
            z0p(2, j) += 1e-5;
            CHECK(testing::rel_err(d_z[0](2, j), (up - dn) / 2e-5) < 1e-4);
        }
    }
}

TEST_CASE("decoder") {
    SUBCASE("zero decoder parameters give zero reconstruction") {
        Mlp dec = Mlp::build({3, 5, 4}, 0.1, 2);
        for (Dense& l : dec.layers) std::fill(l.w.a.begin(), l.w.a.end(), 0.0);
        const Mat out = decode(dec, random_batch(4, 3, 5), false, 0);
        for (double v : out.a) CHECK(v == 0.0);
    }
}

TEST_CASE("model checkpoint round trip") {
    ModelConfig cfg;
    cfg.input_dim = 7;
    cfg.hidden = {6, 5};
    cfg.latent_dim = 4;
    PlatontModel m = PlatontModel::build(cfg, 77);
    Rng rng(3);
    for (int c = 0; c < 3; ++c) {
        for (double& v : m.scaler[c].mean) v = rng.uniform(-1.0, 1.0);
        for (double& v : m.scaler[c].scale) v = rng.uniform(0.5, 2.0);
    }
    const std::string path = (std::filesystem::temp_directory_path() / "model.ckpt").string();
    save_checkpoint(m, path);
    const PlatontModel back = load_checkpoint(path);
    CHECK(back.cfg.input_dim == 7);
    CHECK(back.to_flat() == m.to_flat());
    for (int c = 0; c < 3; ++c) {
        CHECK(back.scaler[c].mean == m.scaler[c].mean);
        CHECK(back.scaler[c].scale == m.scaler[c].scale);
    }
    // eval outputs identical through the round trip
    const std::array<Mat, 3> x{random_batch(3, 7, 1), random_batch(3, 7, 2),
                               random_batch(3, 7, 3)};
    const ModelForward fa = model_forward(m, x, false, 0);
    const ModelForward fb = model_forward(back, x, false, 0);
    for (int c = 0; c < 3; ++c) CHECK(fa.recon[c].a == fb.recon[c].a);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>

#include "hyplan/net.hpp"

using namespace hyplan;

namespace {

struct RandomCase {
    NetworkParams params;
    std::vector<float> image;
    FeatureVector features;
    LstmState state;
};

RandomCase draw_case(Rng& rng, const NetConfig& cfg) {
    RandomCase c{init_params(cfg, rng), {}, {}, zero_state(cfg)};
    // Extra jitter so biases and norm affines are generic.
    for (auto& t : c.params.tensors)
        for (auto& w : t.w) w = static_cast<float>(w + 0.05 * rng.normal());
    c.image.resize(static_cast<std::size_t>(cfg.image_channels) * cfg.image_size *
                   cfg.image_size);
    for (auto& v : c.image) v = static_cast<float>(rng.uniform());
    for (auto& f : c.features) f = rng.uniform(-1.0, 1.0);
    for (auto& h : c.state.h) h = rng.uniform(-0.5, 0.5);
    for (auto& cc : c.state.c) cc = rng.uniform(-0.5, 0.5);
    return c;
}

using LossFn = std::function<double(const NetworkParams&)>;

double fd_grad(NetworkParams& p, int tensor, int idx, const LossFn& loss, double h = 1e-4) {
    const float orig = p.tensors[tensor].w[idx];
    const float wp = static_cast<float>(static_cast<double>(orig) + h);
    const float wm = static_cast<float>(static_cast<double>(orig) - h);
    p.tensors[tensor].w[idx] = wp;
    const double lp = loss(p);
    p.tensors[tensor].w[idx] = wm;
    const double lm = loss(p);
    p.tensors[tensor].w[idx] = orig;
    return (lp - lm) / (static_cast<double>(wp) - static_cast<double>(wm));
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace

TEST_CASE("affine collapse: zero weights leave only the head biases") {
    const NetConfig cfg = tiny_net_config();
    NetworkParams p = zero_params(cfg);
    p.find("policy.b").w = {0.3f, -0.2f, 0.1f};
    p.find("value.b").w = {0.7f};
    std::vector<float> image(cfg.image_channels * cfg.image_size * cfg.image_size, 0.0f);
    const auto out = net_forward(p, image.data(), FeatureVector{}, zero_state(cfg), nullptr);
    CHECK(out.logits[0] == doctest::Approx(0.3));
    CHECK(out.logits[1] == doctest::Approx(-0.2));
    CHECK(out.logits[2] == doctest::Approx(0.1));
    CHECK(out.value == doctest::Approx(0.7));
}

TEST_CASE("deterministic forward without a mask") {
    Rng rng(10);
    const NetConfig cfg = tiny_net_config();
    const RandomCase c = draw_case(rng, cfg);
    const auto a = net_forward(c.params, c.image.data(), c.features, c.state, nullptr);
    const auto b = net_forward(c.params, c.image.data(), c.features, c.state, nullptr);
    CHECK(a.value == b.value);
    CHECK(a.logits == b.logits);
    for (int i = 0; i < cfg.lstm_hidden; ++i) {
        CHECK(a.state.h[i] == b.state.h[i]);
        CHECK(a.state.c[i] == b.state.c[i]);
    }
}

TEST_CASE("softmax of logits is a probability vector") {
    Rng rng(11);
    const NetConfig cfg = tiny_net_config();
    for (int i = 0; i < 20; ++i) {
        const RandomCase c = draw_case(rng, cfg);
        const auto out = net_forward(c.params, c.image.data(), c.features, c.state, nullptr);
        const double m = std::max({out.logits[0], out.logits[1], out.logits[2]});
        double sum = 0;
        for (const double l : out.logits) sum += std::exp(l - m);
        double total = 0;
        for (const double l : out.logits) {
            const double pr = std::exp(l - m) / sum;
            CHECK(pr >= 0.0);
            total += pr;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("value gradients match central finite differences") {
    Rng rng(12);
    const NetConfig cfg = tiny_net_config();
    int checked = 0;
    int draws = 0;
    while (draws < 12) {
        RandomCase c = draw_case(rng, cfg);
        ForwardTrace trace;
        net_forward(c.params, c.image.data(), c.features, c.state, nullptr, &trace);
        if (trace.min_abs_relu_pre < 5e-3) continue;  // finite differences invalid at kinks
        ++draws;
        GradBuffer grads = GradBuffer::zeros_like(c.params);
        net_backward(c.params, trace, {0, 0, 0}, 1.0, {}, {}, grads, nullptr, nullptr);

        const LossFn loss = [&](const NetworkParams& p) {
            return net_forward(p, c.image.data(), c.features, c.state, nullptr).value;
        };
        for (std::size_t t = 0; t < c.params.tensors.size(); ++t) {
            for (int rep = 0; rep < 3; ++rep) {
                const std::size_t idx = rng.uniform_int(c.params.tensors[t].size());
                const double fd = fd_grad(c.params, static_cast<int>(t), static_cast<int>(idx),
                                          loss);
                const double an = grads.g[t][idx];
                if (std::abs(fd) < 1e-10 && std::abs(an) < 1e-10) continue;
                CHECK_MESSAGE(rel_err(an, fd) <= 1e-3,
                              "tensor " << c.params.tensors[t].name << " idx " << idx << " an "
                                        << an << " fd " << fd);
                ++checked;
            }
        }
    }
    CHECK(checked > 300);
}

TEST_CASE("policy gradients match central finite differences") {
    Rng rng(13);
    const NetConfig cfg = tiny_net_config();
    int draws = 0;
    while (draws < 12) {
        RandomCase c = draw_case(rng, cfg);
        ForwardTrace trace;
        const auto out =
            net_forward(c.params, c.image.data(), c.features, c.state, nullptr, &trace);
        if (trace.min_abs_relu_pre < 5e-3) continue;
        ++draws;
        const int k = static_cast<int>(rng.uniform_int(3));

        auto log_pi = [&](const std::array<double, 3>& logits) {
            const double m = std::max({logits[0], logits[1], logits[2]});
            double sum = 0;
            for (const double l : logits) sum += std::exp(l - m);
            return logits[k] - m - std::log(sum);
        };
        // d log pi_k / d logits = e_k - softmax(logits).
        std::array<double, 3> dlogits{};
        {
            const double m = std::max({out.logits[0], out.logits[1], out.logits[2]});
            double sum = 0;
            for (const double l : out.logits) sum += std::exp(l - m);
            for (int j = 0; j < 3; ++j)
                dlogits[j] = (j == k ? 1.0 : 0.0) - std::exp(out.logits[j] - m) / sum;
        }
        GradBuffer grads = GradBuffer::zeros_like(c.params);
        net_backward(c.params, trace, dlogits, 0.0, {}, {}, grads, nullptr, nullptr);

        const LossFn loss = [&](const NetworkParams& p) {
            return log_pi(net_forward(p, c.image.data(), c.features, c.state, nullptr).logits);
        };
        for (std::size_t t = 0; t < c.params.tensors.size(); ++t) {
            for (int rep = 0; rep < 2; ++rep) {
                const std::size_t idx = rng.uniform_int(c.params.tensors[t].size());
                const double fd = fd_grad(c.params, static_cast<int>(t), static_cast<int>(idx),
                                          loss);
                const double an = grads.g[t][idx];
                if (std::abs(fd) < 1e-10 && std::abs(an) < 1e-10) continue;
                CHECK_MESSAGE(rel_err(an, fd) <= 1e-3,
                              "tensor " << c.params.tensors[t].name << " idx " << idx << " an "
                                        << an << " fd " << fd);
            }
        }
    }
}

TEST_CASE("recurrent gradients chain across steps") {
    Rng rng(14);
    const NetConfig cfg = tiny_net_config();
    int draws = 0;
    int attempts = 0;
    while (draws < 6 && attempts < 100) {
        ++attempts;
        RandomCase c = draw_case(rng, cfg);
        std::vector<std::vector<float>> images(3);
        std::vector<FeatureVector> feats(3);
        Rng jitter(100 + attempts);
        for (int s = 0; s < 3; ++s) {
            images[s] = c.image;
            for (auto& v : images[s]) v = static_cast<float>(v + 0.1 * jitter.uniform());
            feats[s] = c.features;
            feats[s][0] = jitter.uniform(-1, 1);
        }
        const std::array<double, 3> alpha{0.7, -1.3, 0.4};

        auto chain_loss = [&](const NetworkParams& p) {
            LstmState st = c.state;
            double loss = 0;
            for (int s = 0; s < 3; ++s) {
                const auto out = net_forward(p, images[s].data(), feats[s], st, nullptr);
                loss += alpha[s] * out.value;
                st = out.state;
            }
            return loss;
        };

        std::vector<ForwardTrace> traces(3);
        {
            LstmState st = c.state;
            double min_pre = 1e300;
            for (int s = 0; s < 3; ++s) {
                const auto out =
                    net_forward(c.params, images[s].data(), feats[s], st, nullptr, &traces[s]);
                st = out.state;
                min_pre = std::min(min_pre, traces[s].min_abs_relu_pre);
            }
            if (min_pre < 5e-3) continue;
        }
        ++draws;
        GradBuffer grads = GradBuffer::zeros_like(c.params);
        std::vector<double> dh, dc;
        for (int s = 2; s >= 0; --s) {
            std::vector<double> dh_prev, dc_prev;
            net_backward(c.params, traces[s], {0, 0, 0}, alpha[s], dh, dc, grads, &dh_prev,
                         &dc_prev);
            dh = std::move(dh_prev);
            dc = std::move(dc_prev);
        }
        for (std::size_t t = 0; t < c.params.tensors.size(); ++t) {
            for (int rep = 0; rep < 2; ++rep) {
                const std::size_t idx = rng.uniform_int(c.params.tensors[t].size());
                const double fd =
                    fd_grad(c.params, static_cast<int>(t), static_cast<int>(idx), chain_loss);
                const double an = grads.g[t][idx];
                if (std::abs(fd) < 1e-10 && std::abs(an) < 1e-10) continue;
                CHECK_MESSAGE(rel_err(an, fd) <= 1e-3,
                              "tensor " << c.params.tensors[t].name << " idx " << idx << " an "
                                        << an << " fd " << fd);
            }
        }
    }
    CHECK(draws == 6);
}

TEST_CASE("mc_forward_stats") {
    Rng rng(15);
    NetConfig cfg = tiny_net_config();

    SUBCASE("dropout rate 0 gives zero variance") {
        cfg.dropout_rate = 0.0;
        const RandomCase c = draw_case(rng, cfg);
        const FloatNet net(c.params);
        Rng mc(1);
        const auto stats = mc_forward_stats(net, c.image.data(), c.features, c.state, 10, mc);
        CHECK(stats.var == doctest::Approx(0.0));
        const auto ref = net_forward(c.params, c.image.data(), c.features, c.state, nullptr);
        CHECK(stats.mean == doctest::Approx(ref.value).epsilon(1e-4));
    }

    SUBCASE("hand arithmetic and agreement with a direct two-pass computation") {
        // {1, 3}: mean 2, unbiased variance 2.
        const double sum = 1.0 + 3.0, sum_sq = 1.0 + 9.0;
        CHECK(sum / 2.0 == doctest::Approx(2.0));
        CHECK((sum_sq - sum * sum / 2.0) / 1.0 == doctest::Approx(2.0));

        const RandomCase c = draw_case(rng, cfg);
        const FloatNet net(c.params);
        Rng mc1(77), mc2(77);
        const auto stats = mc_forward_stats(net, c.image.data(), c.features, c.state, 10, mc1);
        std::vector<double> vals;
        for (int i = 0; i < 10; ++i) {
            const auto mask = draw_dropout_mask(cfg.lstm_hidden, 1.0 - cfg.dropout_rate, mc2);
            vals.push_back(net.forward(c.image.data(), c.features, c.state, &mask).value);
        }
        double m = 0;
        for (const double v : vals) m += v;
        m /= static_cast<double>(vals.size());
        double ss = 0;
        for (const double v : vals) ss += (v - m) * (v - m);
        CHECK(stats.mean == doctest::Approx(m).epsilon(1e-9));
        CHECK(stats.var == doctest::Approx(ss / 9.0).epsilon(1e-6));
    }

    SUBCASE("seeded reproducibility and positive variance under dropout") {
        const RandomCase c = draw_case(rng, cfg);
        const FloatNet net(c.params);
        Rng a(123), b(123), d(124);
        const auto s1 = mc_forward_stats(net, c.image.data(), c.features, c.state, 10, a);
        const auto s2 = mc_forward_stats(net, c.image.data(), c.features, c.state, 10, b);
        CHECK(s1.mean == s2.mean);
        CHECK(s1.var == s2.var);
        CHECK(s1.var > 0.0);
        const auto s3 = mc_forward_stats(net, c.image.data(), c.features, c.state, 10, d);
        CHECK(s1.mean != s3.mean);
    }
}

TEST_CASE("float inference path tracks the double path") {
    Rng rng(16);
    const NetConfig cfg = tiny_net_config();
    for (int i = 0; i < 10; ++i) {
        const RandomCase c = draw_case(rng, cfg);
        const FloatNet net(c.params);
        const auto a = net_forward(c.params, c.image.data(), c.features, c.state, nullptr);
        const auto b = net.forward(c.image.data(), c.features, c.state, nullptr);
        CHECK(a.value == doctest::Approx(b.value).epsilon(1e-4));
        for (int j = 0; j < 3; ++j)
            CHECK(a.logits[j] == doctest::Approx(b.logits[j]).epsilon(1e-4));
    }
}

TEST_CASE("shape mismatches throw") {
    Rng rng(17);
    const NetConfig cfg = tiny_net_config();
    const RandomCase c = draw_case(rng, cfg);
    LstmState bad = c.state;
    bad.h.resize(3);
    CHECK_THROWS_AS(net_forward(c.params, c.image.data(), c.features, bad, nullptr),
                    ShapeMismatch);
    std::vector<std::uint8_t> bad_mask(2, 1);
    CHECK_THROWS_AS(net_forward(c.params, c.image.data(), c.features, c.state, &bad_mask),
                    ShapeMismatch);
}

TEST_CASE("save/load round trip and error paths") {
    Rng rng(18);
    const NetConfig cfg = tiny_net_config();
    RandomCase c = draw_case(rng, cfg);
    c.params.training_seconds = 1234.5;
    const std::string path = "/tmp/hyplan_test_model.bin";
    save_params(c.params, path);
    const NetworkParams loaded = load_params(path);
    CHECK(loaded.cfg == c.params.cfg);
    CHECK(loaded.training_seconds == doctest::Approx(1234.5));
    REQUIRE(loaded.tensors.size() == c.params.tensors.size());
    for (std::size_t t = 0; t < loaded.tensors.size(); ++t) {
        CHECK(loaded.tensors[t].name == c.params.tensors[t].name);
        REQUIRE(loaded.tensors[t].w.size() == c.params.tensors[t].w.size());
        bool all_equal = true;
        for (std::size_t i = 0; i < loaded.tensors[t].w.size(); ++i)
            if (loaded.tensors[t].w[i] != c.params.tensors[t].w[i]) all_equal = false;
        CHECK(all_equal);  // bitwise
    }

    SUBCASE("truncated file is corrupt") {
        const auto full = std::filesystem::file_size(path);
        std::filesystem::resize_file(path, full / 2);
        CHECK_THROWS_AS(load_params(path), CorruptFile);
    }
    SUBCASE("bad magic is corrupt") {
        std::FILE* f = std::fopen(path.c_str(), "r+b");
        std::fputc('X', f);
        std::fclose(f);
        CHECK_THROWS_AS(load_params(path), CorruptFile);
    }
    SUBCASE("architecture mismatch is a version error") {
        CHECK_THROWS_AS(load_params(path, NetConfig{}), VersionMismatch);
        CHECK_NOTHROW(load_params(path, cfg));
    }
}

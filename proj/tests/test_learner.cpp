#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hyplan/learner.hpp"

using namespace hyplan;

namespace {

// Direct-summation oracle for the GAE series, truncating at terminals.
std::vector<double> gae_direct(const std::vector<double>& r, const std::vector<double>& v,
                               const std::vector<std::uint8_t>& term, double gamma,
                               double lambda) {
    const std::size_t n = r.size();
    std::vector<double> out(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        double acc = 0.0;
        double scale = 1.0;
        for (std::size_t l = t; l < n; ++l) {
            const double v_next = term[l] ? 0.0 : v[l + 1];
            const double delta = r[l] + gamma * v_next - v[l];
            acc += scale * delta;
            if (term[l]) break;
            scale *= gamma * lambda;
        }
        out[t] = acc;
    }
    return out;
}

TransitionBuffer make_buffer(const NetworkParams& params, Rng& rng, int n, bool end_terminal) {
    const NetConfig& cfg = params.cfg;
    TransitionBuffer buf;
    LstmState st = zero_state(cfg);
    for (int t = 0; t < n; ++t) {
        TransitionStep step;
        step.image.resize(static_cast<std::size_t>(cfg.image_channels) * cfg.image_size *
                          cfg.image_size);
        for (auto& v : step.image) v = static_cast<float>(rng.uniform());
        for (auto& f : step.features) f = rng.uniform(-1, 1);
        step.lstm_in = st;
        double sum = 0.0;
        for (auto& p : step.planner_policy) {
            p = 0.05 + rng.uniform();
            sum += p;
        }
        for (auto& p : step.planner_policy) p /= sum;
        step.acc_taken = static_cast<int>(rng.uniform_int(3));
        step.reward = rng.uniform(-3, 3);
        step.terminal = end_terminal && t == n - 1;
        const auto fwd = net_forward(params, step.image.data(), step.features, st, nullptr);
        step.value = fwd.value;
        st = fwd.state;
        buf.steps.push_back(std::move(step));
    }
    buf.bootstrap_value = end_terminal ? 0.0 : rng.uniform(-2, 2);
    return buf;
}

std::vector<ChunkSpan> all_chunks(const TransitionBuffer& buf, int chunk) {
    std::vector<ChunkSpan> out;
    const int n = static_cast<int>(buf.steps.size());
    for (int b = 0; b < n; b += chunk) out.emplace_back(b, std::min(n, b + chunk));
    return out;
}

}  // namespace

TEST_CASE("gae reductions and the hand example") {
    SUBCASE("lambda = 0 collapses to one-step deltas") {
        Rng rng(1);
        for (int i = 0; i < 50; ++i) {
            const int n = 1 + static_cast<int>(rng.uniform_int(10));
            std::vector<double> r(n), v(n + 1);
            std::vector<std::uint8_t> term(n, 0);
            for (auto& x : r) x = rng.uniform(-5, 5);
            for (auto& x : v) x = rng.uniform(-5, 5);
            const auto adv = gae(r, v, term, 0.98, 0.0);
            for (int t = 0; t < n; ++t)
                CHECK(adv[t] == doctest::Approx(r[t] + 0.98 * v[t + 1] - v[t]).epsilon(1e-12));
        }
    }
    SUBCASE("single step equals delta") {
        const auto adv = gae({2.0}, {1.0, 3.0}, {0}, 0.98, 0.95);
        CHECK(adv[0] == doctest::Approx(2.0 + 0.98 * 3.0 - 1.0));
    }
    SUBCASE("worked example") {
        const auto adv = gae({1.0, 1.0}, {0.0, 0.0, 0.0}, {0, 0}, 0.98, 0.95);
        CHECK(adv[1] == doctest::Approx(1.0));
        CHECK(adv[0] == doctest::Approx(1.0 + 0.98 * 0.95 * 1.0).epsilon(1e-12));
        CHECK(adv[0] == doctest::Approx(1.931).epsilon(1e-6));
    }
    SUBCASE("length mismatch throws") {
        CHECK_THROWS_AS(gae({1.0}, {1.0}, {0}, 0.98, 0.95), LengthMismatch);
    }
}

TEST_CASE("gae backward recursion equals direct summation") {
    Rng rng(2);
    for (int i = 0; i < 1000; ++i) {
        const int n = 1 + static_cast<int>(rng.uniform_int(12));
        std::vector<double> r(n), v(n + 1);
        std::vector<std::uint8_t> term(n, 0);
        for (auto& x : r) x = rng.uniform(-10, 10);
        for (auto& x : v) x = rng.uniform(-10, 10);
        for (auto& t : term) t = rng.bernoulli(0.15) ? 1 : 0;
        const double gamma = rng.uniform(0.9, 0.999);
        const double lambda = rng.uniform(0.0, 1.0);
        const auto fast = gae(r, v, term, gamma, lambda);
        const auto slow = gae_direct(r, v, term, gamma, lambda);
        for (int t = 0; t < n; ++t) CHECK(std::abs(fast[t] - slow[t]) <= 1e-10);
    }
}

TEST_CASE("ppo_loss clip arithmetic on a crafted single sample") {
    Rng rng(3);
    const NetConfig cfg = tiny_net_config();
    NetworkParams params = init_params(cfg, rng);
    PpoConfig pc;
    pc.lambda_reg = 0.0;
    pc.value_weight = 0.0;  // isolate the policy term

    TransitionBuffer buf = make_buffer(params, rng, 1, true);
    auto& step = buf.steps[0];
    const auto fwd = net_forward(params, step.image.data(), step.features, step.lstm_in, nullptr);
    const auto pi = softmax3(fwd.logits);

    SUBCASE("rho = 1.5 with advantage 2 clips to 2.4") {
        step.planner_policy = {pi[0] / 1.5, pi[1] / 1.5, pi[2] / 1.5};
        step.acc_taken = 0;
        step.reward = fwd.value + 2.0;  // terminal: adv* = r - V = 2
        const auto prep = prepare_buffer(buf, pc);
        CHECK(prep.adv_star[0] == doctest::Approx(2.0).epsilon(1e-9));
        const auto res = ppo_loss(params, prep, all_chunks(buf, 8), pc);
        CHECK(res.j_pi == doctest::Approx(std::min(1.5 * 2.0, 1.2 * 2.0)).epsilon(1e-9));
        CHECK(res.j_pi == doctest::Approx(2.4).epsilon(1e-9));
    }
    SUBCASE("rho = 1 leaves J_pi = mean advantage") {
        step.planner_policy = pi;
        step.acc_taken = 1;
        const auto prep = prepare_buffer(buf, pc);
        const auto res = ppo_loss(params, prep, all_chunks(buf, 8), pc);
        CHECK(res.j_pi == doctest::Approx(prep.adv_star[0]).epsilon(1e-9));
    }
    SUBCASE("clip identity inside the trust region") {
        for (const double rho : {0.85, 0.95, 1.0, 1.1, 1.19}) {
            step.planner_policy = {pi[0] / rho, pi[1] / rho, pi[2] / rho};
            step.acc_taken = 2;
            const auto prep = prepare_buffer(buf, pc);
            const auto res = ppo_loss(params, prep, all_chunks(buf, 8), pc);
            CHECK(res.j_pi == doctest::Approx(rho * prep.adv_star[0]).epsilon(1e-9));
        }
    }
    SUBCASE("degenerate planner policy throws") {
        step.planner_policy = {0.0, 0.5, 0.5};
        step.acc_taken = 0;
        const auto prep = prepare_buffer(buf, pc);
        CHECK_THROWS_AS(ppo_loss(params, prep, all_chunks(buf, 8), pc), DegeneratePolicy);
    }
}

TEST_CASE("full ppo loss gradient matches finite differences") {
    Rng rng(4);
    const NetConfig cfg = tiny_net_config();
    PpoConfig pc;
    pc.bptt_chunk = 4;

    int draws = 0, attempts = 0, checked = 0;
    while (draws < 8 && attempts < 200) {
        ++attempts;
        NetworkParams params = init_params(cfg, rng);
        for (auto& t : params.tensors)
            for (auto& w : t.w) w = static_cast<float>(w + 0.05 * rng.normal());
        TransitionBuffer buf = make_buffer(params, rng, 6, rng.bernoulli(0.5));

        // Reject draws where finite differences straddle a kink: ReLU
        // preactivations near zero or ratios near the clip boundary.
        bool valid = true;
        {
            LstmState st = buf.steps[0].lstm_in;
            for (std::size_t t = 0; t < buf.steps.size(); ++t) {
                if (t % pc.bptt_chunk == 0) st = buf.steps[t].lstm_in;
                ForwardTrace trace;
                const auto out = net_forward(params, buf.steps[t].image.data(),
                                             buf.steps[t].features, st, nullptr, &trace);
                st = out.state;
                if (trace.min_abs_relu_pre < 5e-3) valid = false;
                const auto pi = softmax3(out.logits);
                const double rho = pi[buf.steps[t].acc_taken] /
                                   buf.steps[t].planner_policy[buf.steps[t].acc_taken];
                if (std::abs(rho - (1 - pc.clip_eps)) < 2e-3 ||
                    std::abs(rho - (1 + pc.clip_eps)) < 2e-3)
                    valid = false;
            }
        }
        if (!valid) continue;
        ++draws;

        const auto prep = prepare_buffer(buf, pc);
        const auto chunks = all_chunks(buf, pc.bptt_chunk);
        const auto res = ppo_loss(params, prep, chunks, pc);

        for (std::size_t t = 0; t < params.tensors.size(); ++t) {
            for (int rep = 0; rep < 2; ++rep) {
                const std::size_t idx = rng.uniform_int(params.tensors[t].size());
                const float orig = params.tensors[t].w[idx];
                const double h = 1e-4;
                const float wp = static_cast<float>(static_cast<double>(orig) + h);
                const float wm = static_cast<float>(static_cast<double>(orig) - h);
                params.tensors[t].w[idx] = wp;
                const double lp = ppo_loss(params, prep, chunks, pc).loss;
                params.tensors[t].w[idx] = wm;
                const double lm = ppo_loss(params, prep, chunks, pc).loss;
                params.tensors[t].w[idx] = orig;
                const double fd =
                    (lp - lm) / (static_cast<double>(wp) - static_cast<double>(wm));
                const double an = res.grads.g[t][idx];
                if (std::abs(fd) < 1e-9 && std::abs(an) < 1e-9) continue;
                const double err =
                    std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
                CHECK_MESSAGE(err <= 1e-3, "tensor " << params.tensors[t].name << " idx " << idx
                                                     << " an " << an << " fd " << fd);
                ++checked;
            }
        }
    }
    CHECK(draws == 8);
    CHECK(checked > 200);
}

TEST_CASE("zero-advantage buffer moves only value and regularizer") {
    Rng rng(5);
    const NetConfig cfg = tiny_net_config();
    NetworkParams params = init_params(cfg, rng);
    PpoConfig pc;

    TransitionBuffer buf = make_buffer(params, rng, 4, true);
    // Stored values match realized returns exactly, so adv* = 0 everywhere.
    for (int t = 3; t >= 0; --t) {
        const double future = t == 3 ? 0.0 : buf.steps[t + 1].value;
        buf.steps[t].reward = buf.steps[t].value - pc.gamma * future;
    }
    const auto prep = prepare_buffer(buf, pc);
    for (const double a : prep.adv_star) CHECK(a == doctest::Approx(0.0).epsilon(1e-9));

    const auto res = ppo_loss(params, prep, all_chunks(buf, 8), pc);
    // Policy head gradients reduce to the regularizer contribution.
    for (std::size_t t = 0; t < params.tensors.size(); ++t) {
        if (params.tensors[t].name != "policy.w" && params.tensors[t].name != "policy.b")
            continue;
        for (std::size_t i = 0; i < params.tensors[t].w.size(); ++i)
            CHECK(res.grads.g[t][i] ==
                  doctest::Approx(2.0 * pc.lambda_reg *
                                  static_cast<double>(params.tensors[t].w[i]))
                      .epsilon(1e-9));
    }
}

TEST_CASE("train_update with zero learning rate is a no-op") {
    Rng rng(6);
    const NetConfig cfg = tiny_net_config();
    NetworkParams params = init_params(cfg, rng);
    const auto snapshot = params.tensors;
    PpoConfig pc;
    pc.lr = 0.0;
    AdamOptimizer opt(params, pc.lr);
    TransitionBuffer buf = make_buffer(params, rng, 8, true);
    Rng update_rng(1);
    const auto stats = train_update(params, opt, buf, pc, update_rng);
    CHECK(stats.updates > 0);
    bool identical = true;
    for (std::size_t t = 0; t < params.tensors.size(); ++t)
        for (std::size_t i = 0; i < params.tensors[t].w.size(); ++i)
            if (params.tensors[t].w[i] != snapshot[t].w[i]) identical = false;
    CHECK(identical);
}

TEST_CASE("repeated single transition: value head overfits to the return") {
    Rng rng(7);
    const NetConfig cfg = tiny_net_config();
    NetworkParams params = init_params(cfg, rng);
    PpoConfig pc;
    pc.lr = 0.01;
    pc.epochs = 1;

    TransitionBuffer buf = make_buffer(params, rng, 1, true);
    buf.steps[0].reward = 5.0;  // terminal: lambda-return target = 5
    buf.steps[0].planner_policy = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    AdamOptimizer opt(params, pc.lr);
    Rng update_rng(2);
    for (int i = 0; i < 200; ++i) {
        // Refresh the stored value so the advantage tracks the current critic.
        buf.steps[0].value = net_forward(params, buf.steps[0].image.data(),
                                         buf.steps[0].features, buf.steps[0].lstm_in, nullptr)
                                 .value;
        train_update(params, opt, buf, pc, update_rng);
    }
    const double v = net_forward(params, buf.steps[0].image.data(), buf.steps[0].features,
                                 buf.steps[0].lstm_in, nullptr)
                         .value;
    CHECK(std::abs(v - 5.0) <= 0.05 * 5.0);
}

TEST_CASE("loss decreases after an update on most random buffers") {
    Rng rng(8);
    const NetConfig cfg = tiny_net_config();
    PpoConfig pc;
    pc.lr = 3e-4;
    int improved = 0;
    const int total = 20;
    for (int trial = 0; trial < total; ++trial) {
        NetworkParams params = init_params(cfg, rng);
        TransitionBuffer buf = make_buffer(params, rng, 8, rng.bernoulli(0.5));
        const auto prep = prepare_buffer(buf, pc);
        const auto chunks = all_chunks(buf, pc.bptt_chunk);
        const double before = ppo_loss(params, prep, chunks, pc).loss;
        AdamOptimizer opt(params, pc.lr);
        Rng update_rng(static_cast<std::uint64_t>(trial));
        train_update(params, opt, buf, pc, update_rng);
        const double after = ppo_loss(params, prep, chunks, pc).loss;
        if (after <= before) ++improved;
    }
    CHECK(improved >= 0.8 * total);
}

TEST_CASE("make_features stays within bounds") {
    RewardConfig cfg;
    const auto f = make_features(-1500.0, Acc::Decelerate, 12.0, cfg);
    CHECK(f[0] == doctest::Approx(-1.0));
    CHECK(f[1] == 0.0);
    CHECK(f[2] == 1.0);
    CHECK(f[3] == 0.0);
    CHECK(f[4] == doctest::Approx(1.0));
    const auto g = make_features(-1.1, Acc::Maintain, 4.0, cfg);
    CHECK(g[0] == doctest::Approx(-0.0011));
    CHECK(g[3] == 1.0);
    CHECK(g[4] == doctest::Approx(4.0 / 8.33));
}

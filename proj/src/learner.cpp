#include "hyplan/learner.hpp"

#include <algorithm>
#include <cmath>

namespace hyplan {

FeatureVector make_features(double prev_reward, Acc prev_acc, double speed,
                            const RewardConfig& cfg) {
    FeatureVector f{};
    f[0] = std::clamp(prev_reward / 1000.0, -1.0, 1.0);
    f[1] = prev_acc == Acc::Accelerate ? 1.0 : 0.0;
    f[2] = prev_acc == Acc::Decelerate ? 1.0 : 0.0;
    f[3] = prev_acc == Acc::Maintain ? 1.0 : 0.0;
    f[4] = std::clamp(speed / cfg.v_max_ego, 0.0, 1.0);
    return f;
}

std::array<double, 3> softmax3(const std::array<double, 3>& logits) {
    const double m = std::max({logits[0], logits[1], logits[2]});
    std::array<double, 3> e{};
    double sum = 0.0;
    for (int i = 0; i < 3; ++i) {
        e[i] = std::exp(logits[i] - m);
        sum += e[i];
    }
    for (auto& v : e) v /= sum;
    return e;
}

std::vector<double> gae(const std::vector<double>& rewards, const std::vector<double>& values,
                        const std::vector<std::uint8_t>& terminals, double gamma, double lambda) {
    const std::size_t n = rewards.size();
    if (values.size() != n + 1 || terminals.size() != n)
        throw LengthMismatch("gae: values must have rewards.size()+1 entries");
    std::vector<double> adv(n, 0.0);
    double carry = 0.0;
    for (std::size_t i = n; i-- > 0;) {
        const double not_term = terminals[i] ? 0.0 : 1.0;
        const double delta = rewards[i] + gamma * values[i + 1] * not_term - values[i];
        carry = delta + gamma * lambda * not_term * carry;
        adv[i] = carry;
    }
    return adv;
}

PreparedBuffer prepare_buffer(const TransitionBuffer& buf, const PpoConfig& cfg) {
    PreparedBuffer prep;
    prep.buf = &buf;
    const std::size_t n = buf.steps.size();
    std::vector<double> rewards(n), values(n + 1);
    std::vector<std::uint8_t> terminals(n);
    for (std::size_t i = 0; i < n; ++i) {
        rewards[i] = buf.steps[i].reward;
        values[i] = buf.steps[i].value;
        terminals[i] = buf.steps[i].terminal ? 1 : 0;
    }
    values[n] = buf.bootstrap_value;
    prep.adv_star = gae(rewards, values, terminals, cfg.gamma, cfg.gae_lambda);
    return prep;
}

LossResult ppo_loss(const NetworkParams& params, const PreparedBuffer& prep,
                    const std::vector<ChunkSpan>& chunks, const PpoConfig& cfg) {
    const TransitionBuffer& buf = *prep.buf;
    const int n_total = [&] {
        int n = 0;
        for (const auto& [b, e] : chunks) n += e - b;
        return n;
    }();
    if (n_total == 0) throw LengthMismatch("ppo_loss: empty batch");

    LossResult out;
    out.grads = GradBuffer::zeros_like(params);
    double j_pi_sum = 0.0, j_v_sum = 0.0;

    for (const auto& [cb, ce] : chunks) {
        const int len = ce - cb;
        std::vector<ForwardTrace> traces(len);
        std::vector<double> v(len);
        std::vector<std::array<double, 3>> pi(len);
        std::vector<std::array<double, 3>> logits(len);

        LstmState state = buf.steps[cb].lstm_in;
        for (int i = 0; i < len; ++i) {
            const auto& step = buf.steps[cb + i];
            const auto res =
                net_forward(params, step.image.data(), step.features, state, nullptr, &traces[i]);
            v[i] = res.value;
            logits[i] = res.logits;
            pi[i] = softmax3(res.logits);
            state = res.state;
        }

        // Value targets: lambda-return advantages re-derived from the current
        // critic inside the chunk; detached tail beyond the chunk boundary.
        std::vector<double> delta(len);
        for (int i = 0; i < len; ++i) {
            const auto& step = buf.steps[cb + i];
            double v_next;
            if (step.terminal) v_next = 0.0;
            else if (i + 1 < len) v_next = v[i + 1];
            else if (ce < static_cast<int>(buf.steps.size())) v_next = buf.steps[ce].value;
            else v_next = buf.bootstrap_value;
            delta[i] = step.reward + cfg.gamma * v_next - v[i];
        }
        double tail_adv = 0.0;
        if (ce < static_cast<int>(buf.steps.size()) && !buf.steps[ce - 1].terminal)
            tail_adv = prep.adv_star[ce];
        std::vector<double> adv(len);
        double carry = tail_adv;
        for (int i = len; i-- > 0;) {
            const double not_term = buf.steps[cb + i].terminal ? 0.0 : 1.0;
            carry = delta[i] + cfg.gamma * cfg.gae_lambda * not_term *
                                   (i == len - 1 ? tail_adv : adv[i + 1]);
            adv[i] = carry;
        }

        // Per-step loss pieces and output gradients.
        std::vector<std::array<double, 3>> dlogits(len, {0.0, 0.0, 0.0});
        std::vector<double> dv(len, 0.0);
        for (int i = 0; i < len; ++i) {
            const auto& step = buf.steps[cb + i];
            const double a_star = prep.adv_star[cb + i];
            const double denom = step.planner_policy[step.acc_taken];
            if (denom <= 0.0)
                throw DegeneratePolicy("planner probability of taken action is zero");
            const double rho = pi[i][step.acc_taken] / denom;
            const double clipped = std::clamp(rho, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
            const double u = rho * a_star;
            const double w = clipped * a_star;
            j_pi_sum += std::min(u, w);
            j_v_sum += adv[i] * adv[i];

            if (u <= w) {
                // Unclipped branch active: d obj / d rho = a_star.
                const double drho = -a_star / n_total;  // loss = -J_pi + ...
                for (int j = 0; j < 3; ++j) {
                    const double ind = j == step.acc_taken ? 1.0 : 0.0;
                    dlogits[i][j] += drho * rho * (ind - pi[i][j]);
                }
            }
        }
        // d loss / d delta via the advantage recursion, then to values.
        std::vector<double> a_coef(len);
        for (int i = 0; i < len; ++i)
            a_coef[i] = cfg.value_weight * 2.0 * adv[i] / n_total;
        std::vector<double> g_delta(len);
        for (int i = 0; i < len; ++i) {
            const double prev_ok =
                i > 0 && !buf.steps[cb + i - 1].terminal ? 1.0 : 0.0;
            g_delta[i] = a_coef[i] +
                         cfg.gamma * cfg.gae_lambda * prev_ok * (i > 0 ? g_delta[i - 1] : 0.0);
        }
        for (int i = 0; i < len; ++i) {
            dv[i] -= g_delta[i];
            if (i + 1 < len && !buf.steps[cb + i].terminal)
                dv[i + 1] += cfg.gamma * g_delta[i];
        }

        // BPTT through the chunk.
        std::vector<double> dh, dc;
        for (int i = len - 1; i >= 0; --i) {
            std::vector<double> dh_prev, dc_prev;
            net_backward(params, traces[i], dlogits[i], dv[i], dh, dc, out.grads, &dh_prev,
                         &dc_prev);
            dh = std::move(dh_prev);
            dc = std::move(dc_prev);
        }
    }

    // L2 regularizer over all parameters.
    double reg = 0.0;
    for (std::size_t t = 0; t < params.tensors.size(); ++t) {
        const auto& w = params.tensors[t].w;
        auto& g = out.grads.g[t];
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double wv = static_cast<double>(w[i]);
            reg += wv * wv;
            g[i] += 2.0 * cfg.lambda_reg * wv;
        }
    }

    out.j_pi = j_pi_sum / n_total;
    out.j_v = j_v_sum / n_total;
    out.loss = -out.j_pi + cfg.value_weight * out.j_v + cfg.lambda_reg * reg;
    return out;
}

AdamOptimizer::AdamOptimizer(const NetworkParams& p, double lr) : lr_(lr) {
    m_.reserve(p.tensors.size());
    v_.reserve(p.tensors.size());
    for (const auto& t : p.tensors) {
        m_.emplace_back(t.size(), 0.0);
        v_.emplace_back(t.size(), 0.0);
    }
}

void AdamOptimizer::step(NetworkParams& p, const GradBuffer& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t t = 0; t < p.tensors.size(); ++t) {
        auto& w = p.tensors[t].w;
        const auto& g = grads.g[t];
        auto& m = m_[t];
        auto& v = v_[t];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            // Parameters stay 32-bit; the update itself runs in double.
            w[i] = static_cast<float>(static_cast<double>(w[i]) -
                                      lr_ * mhat / (std::sqrt(vhat) + eps_));
        }
    }
}

TrainStats train_update(NetworkParams& params, AdamOptimizer& opt, const TransitionBuffer& buf,
                        const PpoConfig& cfg, Rng& rng) {
    TrainStats stats;
    if (buf.steps.empty()) return stats;
    const auto snapshot = params.tensors;

    const int n = static_cast<int>(buf.steps.size());
    std::vector<ChunkSpan> chunks;
    for (int b = 0; b < n; b += cfg.bptt_chunk)
        chunks.emplace_back(b, std::min(n, b + cfg.bptt_chunk));
    const int chunks_per_batch =
        std::max(1, (cfg.minibatch + cfg.bptt_chunk - 1) / cfg.bptt_chunk);

    // Imitation weights are fixed at collection time, once per buffer.
    const auto prep = prepare_buffer(buf, cfg);

    bool first = true;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with our deterministic stream.
        for (int i = static_cast<int>(chunks.size()) - 1; i > 0; --i)
            std::swap(chunks[i], chunks[rng.uniform_int(static_cast<std::uint64_t>(i + 1))]);
        for (std::size_t b = 0; b < chunks.size(); b += chunks_per_batch) {
            std::vector<ChunkSpan> batch(
                chunks.begin() + b,
                chunks.begin() + std::min(chunks.size(), b + chunks_per_batch));
            const auto res = ppo_loss(params, prep, batch, cfg);
            if (!std::isfinite(res.loss)) {
                params.tensors = snapshot;
                stats.aborted_non_finite = true;
                return stats;
            }
            if (first) {
                stats.first_loss = res.loss;
                first = false;
            }
            stats.last_loss = res.loss;
            opt.step(params, res.grads);
            ++stats.updates;
        }
    }
    return stats;
}

}  // namespace hyplan

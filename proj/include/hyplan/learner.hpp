#pragma once

#include <array>
#include <optional>
#include <vector>

#include "hyplan/net.hpp"
#include "hyplan/world.hpp"

namespace hyplan {

struct DegeneratePolicy : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct LengthMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PpoConfig {
    double clip_eps = 0.2;
    double value_weight = 0.5;  // c
    double lambda_reg = 1e-5;
    double gae_lambda = 0.95;
    double gamma = 0.98;
    double lr = 3e-4;
    int minibatch = 32;
    int epochs = 4;
    int bptt_chunk = 8;
    double t_soft = 0.5;  // planner-policy softmax temperature
};

FeatureVector make_features(double prev_reward, Acc prev_acc, double speed,
                            const RewardConfig& cfg);

std::array<double, 3> softmax3(const std::array<double, 3>& logits);

// Backward-recursion GAE. values has one more entry than rewards (bootstrap
// last, 0 if the episode ended terminally).
std::vector<double> gae(const std::vector<double>& rewards, const std::vector<double>& values,
                        const std::vector<std::uint8_t>& terminals, double gamma, double lambda);

struct TransitionStep {
    std::vector<float> image;  // intention image at t
    FeatureVector features{};
    LstmState lstm_in;  // recurrent state entering step t
    std::array<double, 3> planner_policy{};
    int acc_taken = 0;
    double reward = 0.0;
    bool terminal = false;
    double value = 0.0;  // collection-time V (no dropout)
};

struct TransitionBuffer {
    std::vector<TransitionStep> steps;
    double bootstrap_value = 0.0;  // V of the state after the last step; 0 if terminal
};

// Collection-time advantages: fixed imitation weights for the policy term.
struct PreparedBuffer {
    const TransitionBuffer* buf = nullptr;
    std::vector<double> adv_star;
};

PreparedBuffer prepare_buffer(const TransitionBuffer& buf, const PpoConfig& cfg);

using ChunkSpan = std::pair<int, int>;  // [begin, end) into buffer steps

struct LossResult {
    double loss = 0.0;
    double j_pi = 0.0;
    double j_v = 0.0;
    GradBuffer grads;
};

// PPO planner-imitation loss over contiguous chunks. The policy term holds
// the collection-time advantages fixed; the value term re-derives the GAE
// from the current critic so its gradient flows through every delta.
LossResult ppo_loss(const NetworkParams& params, const PreparedBuffer& prep,
                    const std::vector<ChunkSpan>& chunks, const PpoConfig& cfg);

class AdamOptimizer {
public:
    AdamOptimizer(const NetworkParams& p, double lr);
    void step(NetworkParams& p, const GradBuffer& grads);
    void set_lr(double lr) { lr_ = lr; }

private:
    double lr_;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

struct TrainStats {
    int updates = 0;
    double first_loss = 0.0;
    double last_loss = 0.0;
    bool aborted_non_finite = false;
};

// 4 epochs of shuffled minibatch updates with truncated BPTT chunks.
// A non-finite loss aborts the scene's update and restores the parameters.
TrainStats train_update(NetworkParams& params, AdamOptimizer& opt, const TransitionBuffer& buf,
                        const PpoConfig& cfg, Rng& rng);

}  // namespace hyplan

#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hyplan/rng.hpp"

namespace hyplan {

struct ShapeMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CorruptFile : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct VersionMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConvSpec {
    int out_ch = 0;
    int kernel = 0;
    int stride = 1;
    bool operator==(const ConvSpec&) const = default;
};

// Conv stack -> layer norm + ReLU -> dense -> concat features -> LSTM ->
// dropout -> policy/value heads. The default matches the deployed network;
// tests use a small variant of the same code paths.
struct NetConfig {
    int image_size = 84;
    int image_channels = 3;
    std::vector<ConvSpec> convs = {{16, 8, 4}, {32, 4, 2}, {32, 3, 1}};
    int dense_out = 128;
    int feature_dim = 5;
    int lstm_hidden = 128;
    double dropout_rate = 0.2;
    int policy_out = 3;

    bool operator==(const NetConfig&) const = default;

    int conv_out_size(int layer) const;  // spatial side after `layer` convs
    int flat_size() const;
    int lstm_input() const { return dense_out + feature_dim; }
};

NetConfig tiny_net_config();

struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::vector<float> w;  // parameters are 32-bit, math runs in double

    std::size_t size() const { return w.size(); }
};

struct NetworkParams {
    NetConfig cfg;
    std::vector<Tensor> tensors;
    double training_seconds = 0.0;  // persisted metadata

    std::size_t total_params() const;
    Tensor& find(const std::string& name);
    const Tensor& find(const std::string& name) const;
};

NetworkParams init_params(const NetConfig& cfg, Rng& rng);
NetworkParams zero_params(const NetConfig& cfg);

struct LstmState {
    std::vector<double> h;
    std::vector<double> c;
};

LstmState zero_state(const NetConfig& cfg);

using FeatureVector = std::array<double, 5>;

struct ForwardResult {
    std::array<double, 3> logits{};
    double value = 0.0;
    LstmState state;  // pre-dropout recurrent carry
};

// All intermediates of one traced forward pass, consumed by net_backward.
struct ForwardTrace {
    const float* image = nullptr;
    FeatureVector features{};
    std::vector<double> h_prev, c_prev;
    struct ConvTrace {
        std::vector<double> pre;     // post-conv
        std::vector<double> xhat;    // normalized
        std::vector<double> act;     // post-ReLU
        double mean = 0.0, invstd = 0.0;
    };
    std::vector<ConvTrace> convs;
    std::vector<double> dense_pre, dense_act;
    std::vector<double> lstm_x, gates_pre, gi, gf, gg, go, c_new, tanh_c, h_new, h_drop;
    std::vector<std::uint8_t> mask;  // empty = no dropout
    double min_abs_relu_pre = 1e300;  // finite-difference validity guard
};

// Gradient accumulator parallel to NetworkParams::tensors.
struct GradBuffer {
    std::vector<std::vector<double>> g;

    static GradBuffer zeros_like(const NetworkParams& p);
    void add_scaled(const GradBuffer& other, double s);
    void scale(double s);
};

ForwardResult net_forward(const NetworkParams& p, const float* image,
                          const FeatureVector& features, const LstmState& state,
                          const std::vector<std::uint8_t>* dropout_mask,
                          ForwardTrace* trace = nullptr);

// Accumulates parameter gradients into `grads`; returns gradients w.r.t. the
// incoming recurrent state for BPTT chaining.
void net_backward(const NetworkParams& p, const ForwardTrace& trace,
                  const std::array<double, 3>& dlogits, double dvalue,
                  const std::vector<double>& dh_next, const std::vector<double>& dc_next,
                  GradBuffer& grads, std::vector<double>* dh_prev, std::vector<double>* dc_prev);

// Single-precision inference path for the planner's bound evaluations.
class FloatNet {
public:
    explicit FloatNet(const NetworkParams& p);
    ForwardResult forward(const float* image, const FeatureVector& features,
                          const LstmState& state,
                          const std::vector<std::uint8_t>* dropout_mask) const;
    const NetConfig& config() const { return cfg_; }

private:
    NetConfig cfg_;
    std::vector<std::vector<float>> w_;
};

struct McStats {
    double mean = 0.0;
    double var = 0.0;  // unbiased
};

std::vector<std::uint8_t> draw_dropout_mask(int n, double keep_prob, Rng& rng);

McStats mc_forward_stats(const FloatNet& net, const float* image, const FeatureVector& features,
                         const LstmState& state, int f_passes, Rng& rng);

void save_params(const NetworkParams& p, const std::string& path);
NetworkParams load_params(const std::string& path);
NetworkParams load_params(const std::string& path, const NetConfig& expected);

}  // namespace hyplan

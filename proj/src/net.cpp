#include "hyplan/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace hyplan {

using nlohmann::json;

int NetConfig::conv_out_size(int layer) const {
    int side = image_size;
    for (int i = 0; i <= layer; ++i) side = (side - convs[i].kernel) / convs[i].stride + 1;
    return side;
}

int NetConfig::flat_size() const {
    const int L = static_cast<int>(convs.size());
    const int side = conv_out_size(L - 1);
    return convs.back().out_ch * side * side;
}

NetConfig tiny_net_config() {
    NetConfig cfg;
    cfg.image_size = 8;
    cfg.convs = {{4, 4, 2}, {4, 2, 1}};
    cfg.dense_out = 8;
    cfg.lstm_hidden = 8;
    return cfg;
}

namespace {

constexpr double kLnEps = 1e-5;

// Canonical tensor order: 4 per conv layer, then dense/lstm/heads.
enum TensorSlot {
    kDenseW = 0,
    kDenseB,
    kLstmWx,
    kLstmWh,
    kLstmB,
    kPolicyW,
    kPolicyB,
    kValueW,
    kValueB,
    kTailCount,
};

int conv_w(int l) { return 4 * l; }
int conv_b(int l) { return 4 * l + 1; }
int ln_g(int l) { return 4 * l + 2; }
int ln_b(int l) { return 4 * l + 3; }
int tail(const NetConfig& cfg, TensorSlot s) {
    return 4 * static_cast<int>(cfg.convs.size()) + static_cast<int>(s);
}

}  // namespace

std::size_t NetworkParams::total_params() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
}

Tensor& NetworkParams::find(const std::string& name) {
    for (auto& t : tensors)
        if (t.name == name) return t;
    throw std::runtime_error("no tensor named " + name);
}

const Tensor& NetworkParams::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t;
    throw std::runtime_error("no tensor named " + name);
}

static NetworkParams build_tensors(const NetConfig& cfg) {
    NetworkParams p;
    p.cfg = cfg;
    int in_ch = cfg.image_channels;
    for (std::size_t l = 0; l < cfg.convs.size(); ++l) {
        const auto& c = cfg.convs[l];
        const std::string i = std::to_string(l);
        p.tensors.push_back(
            Tensor{"conv" + i + ".w", {c.out_ch, in_ch, c.kernel, c.kernel},
                   std::vector<float>(static_cast<std::size_t>(c.out_ch) * in_ch * c.kernel *
                                      c.kernel)});
        p.tensors.push_back(Tensor{"conv" + i + ".b", {c.out_ch},
                                   std::vector<float>(static_cast<std::size_t>(c.out_ch))});
        p.tensors.push_back(Tensor{"ln" + i + ".g", {c.out_ch},
                                   std::vector<float>(static_cast<std::size_t>(c.out_ch))});
        p.tensors.push_back(Tensor{"ln" + i + ".b", {c.out_ch},
                                   std::vector<float>(static_cast<std::size_t>(c.out_ch))});
        in_ch = c.out_ch;
    }
    const int flat = cfg.flat_size();
    const int D = cfg.dense_out;
    const int H = cfg.lstm_hidden;
    const int X = cfg.lstm_input();
    p.tensors.push_back(Tensor{"dense.w", {D, flat},
                               std::vector<float>(static_cast<std::size_t>(D) * flat)});
    p.tensors.push_back(Tensor{"dense.b", {D}, std::vector<float>(static_cast<std::size_t>(D))});
    p.tensors.push_back(Tensor{"lstm.wx", {4 * H, X},
                               std::vector<float>(static_cast<std::size_t>(4 * H) * X)});
    p.tensors.push_back(Tensor{"lstm.wh", {4 * H, H},
                               std::vector<float>(static_cast<std::size_t>(4 * H) * H)});
    p.tensors.push_back(
        Tensor{"lstm.b", {4 * H}, std::vector<float>(static_cast<std::size_t>(4 * H))});
    p.tensors.push_back(Tensor{"policy.w", {cfg.policy_out, H},
                               std::vector<float>(static_cast<std::size_t>(cfg.policy_out) * H)});
    p.tensors.push_back(Tensor{"policy.b", {cfg.policy_out},
                               std::vector<float>(static_cast<std::size_t>(cfg.policy_out))});
    p.tensors.push_back(
        Tensor{"value.w", {1, H}, std::vector<float>(static_cast<std::size_t>(H))});
    p.tensors.push_back(Tensor{"value.b", {1}, std::vector<float>(1)});
    return p;
}

NetworkParams zero_params(const NetConfig& cfg) { return build_tensors(cfg); }

NetworkParams init_params(const NetConfig& cfg, Rng& rng) {
    NetworkParams p = build_tensors(cfg);
    auto fill_uniform = [&rng](Tensor& t, double s) {
        for (auto& w : t.w) w = static_cast<float>(rng.uniform(-s, s));
    };
    int in_ch = cfg.image_channels;
    for (std::size_t l = 0; l < cfg.convs.size(); ++l) {
        const auto& c = cfg.convs[l];
        const double fan_in = static_cast<double>(in_ch) * c.kernel * c.kernel;
        const double fan_out = static_cast<double>(c.out_ch) * c.kernel * c.kernel;
        fill_uniform(p.tensors[conv_w(static_cast<int>(l))], std::sqrt(6.0 / (fan_in + fan_out)));
        for (auto& w : p.tensors[ln_g(static_cast<int>(l))].w) w = 1.0f;
        in_ch = c.out_ch;
    }
    const int flat = cfg.flat_size();
    const int H = cfg.lstm_hidden;
    const int X = cfg.lstm_input();
    fill_uniform(p.tensors[tail(cfg, kDenseW)], std::sqrt(6.0 / (flat + cfg.dense_out)));
    fill_uniform(p.tensors[tail(cfg, kLstmWx)], std::sqrt(1.0 / X));
    fill_uniform(p.tensors[tail(cfg, kLstmWh)], std::sqrt(1.0 / H));
    fill_uniform(p.tensors[tail(cfg, kPolicyW)], std::sqrt(6.0 / (H + cfg.policy_out)));
    fill_uniform(p.tensors[tail(cfg, kValueW)], std::sqrt(6.0 / (H + 1)));
    // Forget-gate bias starts at 1 to keep early memory.
    auto& lb = p.tensors[tail(cfg, kLstmB)];
    for (int k = 0; k < H; ++k) lb.w[H + k] = 1.0f;
    return p;
}

LstmState zero_state(const NetConfig& cfg) {
    return LstmState{std::vector<double>(cfg.lstm_hidden, 0.0),
                     std::vector<double>(cfg.lstm_hidden, 0.0)};
}

GradBuffer GradBuffer::zeros_like(const NetworkParams& p) {
    GradBuffer g;
    g.g.reserve(p.tensors.size());
    for (const auto& t : p.tensors) g.g.emplace_back(t.size(), 0.0);
    return g;
}

void GradBuffer::add_scaled(const GradBuffer& other, double s) {
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = 0; j < g[i].size(); ++j) g[i][j] += s * other.g[i][j];
}

void GradBuffer::scale(double s) {
    for (auto& t : g)
        for (auto& v : t) v *= s;
}

namespace {

// Blocked dot product with a fixed summation tree: deterministic and wide
// enough for the compiler to vectorize.
template <typename T, typename U>
T blocked_dot(const U* w, const T* x, int n) {
    T acc[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
    int i = 0;
    for (; i + 8 <= n; i += 8)
        for (int j = 0; j < 8; ++j) acc[j] += static_cast<T>(w[i + j]) * x[i + j];
    T tail = T(0);
    for (; i < n; ++i) tail += static_cast<T>(w[i]) * x[i];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) +
           tail;
}

// Shared forward over float weights with accumulator type T. The double
// instantiation optionally records the trace used by net_backward.
template <typename T>
ForwardResult forward_impl(const NetConfig& cfg, const std::vector<const float*>& W,
                           const float* image, const FeatureVector& features,
                           const LstmState& state, const std::vector<std::uint8_t>* mask,
                           ForwardTrace* trace) {
    constexpr bool kTraced = std::is_same_v<T, double>;
    if (!kTraced && trace)
        throw std::runtime_error("traced forward requires the double path");
    if (static_cast<int>(state.h.size()) != cfg.lstm_hidden ||
        static_cast<int>(state.c.size()) != cfg.lstm_hidden)
        throw ShapeMismatch("lstm state size");
    if (cfg.feature_dim != 5) throw ShapeMismatch("feature dim");

    const int L = static_cast<int>(cfg.convs.size());
    if (trace) {
        trace->image = image;
        trace->features = features;
        trace->h_prev = state.h;
        trace->c_prev = state.c;
        trace->convs.assign(L, {});
        trace->min_abs_relu_pre = 1e300;
    }

    // Convolution stack.
    std::vector<T> in_buf;
    int in_side = cfg.image_size;
    int in_ch = cfg.image_channels;
    in_buf.resize(static_cast<std::size_t>(in_ch) * in_side * in_side);
    for (std::size_t i = 0; i < in_buf.size(); ++i) in_buf[i] = static_cast<T>(image[i]);

    std::vector<T> out_buf;
    std::vector<T> col;  // im2col scratch: [in_ch*k*k][os*os]
    for (int l = 0; l < L; ++l) {
        const auto& c = cfg.convs[l];
        const int os = (in_side - c.kernel) / c.stride + 1;
        const int n_pix = os * os;
        const int ckk = in_ch * c.kernel * c.kernel;
        const std::size_t n_out = static_cast<std::size_t>(c.out_ch) * n_pix;
        const float* w = W[conv_w(l)];
        const float* b = W[conv_b(l)];

        col.assign(static_cast<std::size_t>(ckk) * n_pix, T(0));
        for (int ch = 0; ch < in_ch; ++ch) {
            const T* in_plane = in_buf.data() + static_cast<std::size_t>(ch) * in_side * in_side;
            for (int ky = 0; ky < c.kernel; ++ky) {
                for (int kx = 0; kx < c.kernel; ++kx) {
                    T* dst = col.data() +
                             (static_cast<std::size_t>(ch) * c.kernel * c.kernel +
                              static_cast<std::size_t>(ky) * c.kernel + kx) *
                                 n_pix;
                    for (int oy = 0; oy < os; ++oy) {
                        const T* src = in_plane +
                                       static_cast<std::size_t>(oy * c.stride + ky) * in_side +
                                       kx;
                        T* drow = dst + static_cast<std::size_t>(oy) * os;
                        for (int ox = 0; ox < os; ++ox) drow[ox] = src[ox * c.stride];
                    }
                }
            }
        }

        out_buf.assign(n_out, T(0));
        for (int f = 0; f < c.out_ch; ++f) {
            T* out_row = out_buf.data() + static_cast<std::size_t>(f) * n_pix;
            const T bias = static_cast<T>(b[f]);
            for (int p = 0; p < n_pix; ++p) out_row[p] = bias;
            const float* wf = w + static_cast<std::size_t>(f) * ckk;
            for (int i = 0; i < ckk; ++i) {
                const T wv = static_cast<T>(wf[i]);
                const T* crow = col.data() + static_cast<std::size_t>(i) * n_pix;
                for (int p = 0; p < n_pix; ++p) out_row[p] += wv * crow[p];
            }
        }

        // Layer norm over all activations, per-channel affine, then ReLU.
        T mean = T(0);
        for (const T v : out_buf) mean += v;
        mean /= static_cast<T>(n_out);
        T var = T(0);
        for (const T v : out_buf) var += (v - mean) * (v - mean);
        var /= static_cast<T>(n_out);
        const T invstd = T(1) / std::sqrt(var + static_cast<T>(kLnEps));
        const float* g = W[ln_g(l)];
        const float* beta = W[ln_b(l)];

        if (trace) {
            auto& ct = trace->convs[l];
            ct.pre.assign(out_buf.begin(), out_buf.end());
            ct.mean = static_cast<double>(mean);
            ct.invstd = static_cast<double>(invstd);
            ct.xhat.resize(n_out);
        }

        const std::size_t plane = static_cast<std::size_t>(os) * os;
        for (int f = 0; f < c.out_ch; ++f) {
            for (std::size_t i = 0; i < plane; ++i) {
                const std::size_t idx = static_cast<std::size_t>(f) * plane + i;
                const T xhat = (out_buf[idx] - mean) * invstd;
                const T z = static_cast<T>(g[f]) * xhat + static_cast<T>(beta[f]);
                if (trace) {
                    trace->convs[l].xhat[idx] = static_cast<double>(xhat);
                    trace->min_abs_relu_pre =
                        std::min(trace->min_abs_relu_pre, std::abs(static_cast<double>(z)));
                }
                out_buf[idx] = z > T(0) ? z : T(0);
            }
        }
        if (trace) trace->convs[l].act.assign(out_buf.begin(), out_buf.end());

        in_buf.swap(out_buf);
        in_side = os;
        in_ch = c.out_ch;
    }

    // Dense + ReLU.
    const int flat = cfg.flat_size();
    const int D = cfg.dense_out;
    std::vector<T> dense(D);
    {
        const float* w = W[tail(cfg, kDenseW)];
        const float* b = W[tail(cfg, kDenseB)];
        if (trace) trace->dense_pre.resize(D);
        for (int j = 0; j < D; ++j) {
            const T acc = static_cast<T>(b[j]) +
                          blocked_dot(w + static_cast<std::size_t>(j) * flat, in_buf.data(),
                                      flat);
            if (trace) {
                trace->dense_pre[j] = static_cast<double>(acc);
                trace->min_abs_relu_pre =
                    std::min(trace->min_abs_relu_pre, std::abs(static_cast<double>(acc)));
            }
            dense[j] = acc > T(0) ? acc : T(0);
        }
    }
    if (trace) trace->dense_act.assign(dense.begin(), dense.end());

    // LSTM cell.
    const int H = cfg.lstm_hidden;
    const int X = cfg.lstm_input();
    std::vector<T> x(X);
    for (int i = 0; i < D; ++i) x[i] = dense[i];
    for (int i = 0; i < cfg.feature_dim; ++i) x[D + i] = static_cast<T>(features[i]);

    std::vector<T> h_prev_t(H);
    for (int i = 0; i < H; ++i) h_prev_t[i] = static_cast<T>(state.h[i]);
    std::vector<T> gates(4 * H);
    {
        const float* wx = W[tail(cfg, kLstmWx)];
        const float* wh = W[tail(cfg, kLstmWh)];
        const float* b = W[tail(cfg, kLstmB)];
        for (int j = 0; j < 4 * H; ++j) {
            gates[j] = static_cast<T>(b[j]) +
                       blocked_dot(wx + static_cast<std::size_t>(j) * X, x.data(), X) +
                       blocked_dot(wh + static_cast<std::size_t>(j) * H, h_prev_t.data(), H);
        }
    }

    ForwardResult out;
    out.state.h.resize(H);
    out.state.c.resize(H);
    std::vector<T> h_drop(H);
    if (trace) {
        trace->lstm_x.assign(x.begin(), x.end());
        trace->gates_pre.assign(gates.begin(), gates.end());
        trace->gi.resize(H);
        trace->gf.resize(H);
        trace->gg.resize(H);
        trace->go.resize(H);
        trace->c_new.resize(H);
        trace->tanh_c.resize(H);
        trace->h_new.resize(H);
        trace->mask = mask ? *mask : std::vector<std::uint8_t>{};
    }
    const double keep = 1.0 - cfg.dropout_rate;
    if (mask && static_cast<int>(mask->size()) != H) throw ShapeMismatch("dropout mask size");
    for (int k = 0; k < H; ++k) {
        const T i_g = T(1) / (T(1) + std::exp(-gates[k]));
        const T f_g = T(1) / (T(1) + std::exp(-gates[H + k]));
        const T g_g = std::tanh(gates[2 * H + k]);
        const T o_g = T(1) / (T(1) + std::exp(-gates[3 * H + k]));
        const T c_new = f_g * static_cast<T>(state.c[k]) + i_g * g_g;
        const T tc = std::tanh(c_new);
        const T h_new = o_g * tc;
        out.state.c[k] = static_cast<double>(c_new);
        out.state.h[k] = static_cast<double>(h_new);
        T hd = h_new;
        if (mask) hd = (*mask)[k] ? h_new / static_cast<T>(keep) : T(0);
        h_drop[k] = hd;
        if (trace) {
            trace->gi[k] = static_cast<double>(i_g);
            trace->gf[k] = static_cast<double>(f_g);
            trace->gg[k] = static_cast<double>(g_g);
            trace->go[k] = static_cast<double>(o_g);
            trace->c_new[k] = static_cast<double>(c_new);
            trace->tanh_c[k] = static_cast<double>(tc);
            trace->h_new[k] = static_cast<double>(h_new);
        }
    }
    if (trace) trace->h_drop.assign(h_drop.begin(), h_drop.end());

    // Heads.
    {
        const float* wp = W[tail(cfg, kPolicyW)];
        const float* bp = W[tail(cfg, kPolicyB)];
        for (int j = 0; j < cfg.policy_out; ++j) {
            T acc = static_cast<T>(bp[j]);
            const float* wr = wp + static_cast<std::size_t>(j) * H;
            for (int i = 0; i < H; ++i) acc += static_cast<T>(wr[i]) * h_drop[i];
            out.logits[j] = static_cast<double>(acc);
        }
        const float* wv = W[tail(cfg, kValueW)];
        const float* bv = W[tail(cfg, kValueB)];
        T acc = static_cast<T>(bv[0]);
        for (int i = 0; i < H; ++i) acc += static_cast<T>(wv[i]) * h_drop[i];
        out.value = static_cast<double>(acc);
    }
    return out;
}

std::vector<const float*> weight_views(const NetworkParams& p) {
    std::vector<const float*> W;
    W.reserve(p.tensors.size());
    for (const auto& t : p.tensors) W.push_back(t.w.data());
    return W;
}

}  // namespace

ForwardResult net_forward(const NetworkParams& p, const float* image,
                          const FeatureVector& features, const LstmState& state,
                          const std::vector<std::uint8_t>* dropout_mask, ForwardTrace* trace) {
    return forward_impl<double>(p.cfg, weight_views(p), image, features, state, dropout_mask,
                                trace);
}

void net_backward(const NetworkParams& p, const ForwardTrace& trace,
                  const std::array<double, 3>& dlogits, double dvalue,
                  const std::vector<double>& dh_next, const std::vector<double>& dc_next,
                  GradBuffer& grads, std::vector<double>* dh_prev, std::vector<double>* dc_prev) {
    const NetConfig& cfg = p.cfg;
    const int H = cfg.lstm_hidden;
    const int D = cfg.dense_out;
    const int X = cfg.lstm_input();
    const auto W = weight_views(p);
    const double keep = 1.0 - cfg.dropout_rate;

    // Heads.
    std::vector<double> dhd(H, 0.0);
    {
        auto& gw = grads.g[tail(cfg, kPolicyW)];
        auto& gb = grads.g[tail(cfg, kPolicyB)];
        const float* wp = W[tail(cfg, kPolicyW)];
        for (int j = 0; j < cfg.policy_out; ++j) {
            gb[j] += dlogits[j];
            for (int i = 0; i < H; ++i) {
                gw[static_cast<std::size_t>(j) * H + i] += dlogits[j] * trace.h_drop[i];
                dhd[i] += static_cast<double>(wp[static_cast<std::size_t>(j) * H + i]) *
                          dlogits[j];
            }
        }
        auto& gvw = grads.g[tail(cfg, kValueW)];
        grads.g[tail(cfg, kValueB)][0] += dvalue;
        const float* wv = W[tail(cfg, kValueW)];
        for (int i = 0; i < H; ++i) {
            gvw[i] += dvalue * trace.h_drop[i];
            dhd[i] += static_cast<double>(wv[i]) * dvalue;
        }
    }

    // Dropout and recurrent carry.
    std::vector<double> dh(H);
    for (int i = 0; i < H; ++i) {
        double v = dhd[i];
        if (!trace.mask.empty()) v = trace.mask[i] ? v / keep : 0.0;
        dh[i] = v + (dh_next.empty() ? 0.0 : dh_next[i]);
    }

    // LSTM cell backward.
    std::vector<double> dgates(4 * H);
    std::vector<double> dc(H);
    for (int k = 0; k < H; ++k) {
        const double do_ = dh[k] * trace.tanh_c[k];
        dc[k] = dh[k] * trace.go[k] * (1.0 - trace.tanh_c[k] * trace.tanh_c[k]) +
                (dc_next.empty() ? 0.0 : dc_next[k]);
        const double dgi = dc[k] * trace.gg[k];
        const double dgf = dc[k] * trace.c_prev[k];
        const double dgg = dc[k] * trace.gi[k];
        dgates[k] = dgi * trace.gi[k] * (1.0 - trace.gi[k]);
        dgates[H + k] = dgf * trace.gf[k] * (1.0 - trace.gf[k]);
        dgates[2 * H + k] = dgg * (1.0 - trace.gg[k] * trace.gg[k]);
        dgates[3 * H + k] = do_ * trace.go[k] * (1.0 - trace.go[k]);
    }
    if (dc_prev) {
        dc_prev->assign(H, 0.0);
        for (int k = 0; k < H; ++k) (*dc_prev)[k] = dc[k] * trace.gf[k];
    }

    std::vector<double> dx(X, 0.0);
    {
        auto& gwx = grads.g[tail(cfg, kLstmWx)];
        auto& gwh = grads.g[tail(cfg, kLstmWh)];
        auto& gb = grads.g[tail(cfg, kLstmB)];
        const float* wx = W[tail(cfg, kLstmWx)];
        const float* wh = W[tail(cfg, kLstmWh)];
        if (dh_prev) dh_prev->assign(H, 0.0);
        for (int j = 0; j < 4 * H; ++j) {
            const double d = dgates[j];
            gb[j] += d;
            const std::size_t rx = static_cast<std::size_t>(j) * X;
            for (int i = 0; i < X; ++i) {
                gwx[rx + i] += d * trace.lstm_x[i];
                dx[i] += static_cast<double>(wx[rx + i]) * d;
            }
            const std::size_t rh = static_cast<std::size_t>(j) * H;
            for (int i = 0; i < H; ++i) {
                gwh[rh + i] += d * trace.h_prev[i];
                if (dh_prev) (*dh_prev)[i] += static_cast<double>(wh[rh + i]) * d;
            }
        }
    }

    // Dense backward.
    const int flat = cfg.flat_size();
    std::vector<double> dflat(flat, 0.0);
    {
        auto& gw = grads.g[tail(cfg, kDenseW)];
        auto& gb = grads.g[tail(cfg, kDenseB)];
        const float* w = W[tail(cfg, kDenseW)];
        const auto& last_act = trace.convs.back().act;
        for (int j = 0; j < D; ++j) {
            const double dact = dx[j];
            if (trace.dense_pre[j] <= 0.0) continue;
            gb[j] += dact;
            const std::size_t r = static_cast<std::size_t>(j) * flat;
            for (int i = 0; i < flat; ++i) {
                gw[r + i] += dact * last_act[i];
                dflat[i] += static_cast<double>(w[r + i]) * dact;
            }
        }
    }

    // Conv stack backward.
    const int L = static_cast<int>(cfg.convs.size());
    std::vector<double> dact = std::move(dflat);
    for (int l = L - 1; l >= 0; --l) {
        const auto& c = cfg.convs[l];
        const auto& ct = trace.convs[l];
        const int os = cfg.conv_out_size(l);
        const std::size_t plane = static_cast<std::size_t>(os) * os;
        const std::size_t n_out = static_cast<std::size_t>(c.out_ch) * plane;
        const float* g = W[ln_g(l)];

        // ReLU + affine: z = g*xhat + beta, act = relu(z).
        std::vector<double> gvec(n_out, 0.0);
        auto& ggamma = grads.g[ln_g(l)];
        auto& gbeta = grads.g[ln_b(l)];
        for (int f = 0; f < c.out_ch; ++f) {
            for (std::size_t i = 0; i < plane; ++i) {
                const std::size_t idx = static_cast<std::size_t>(f) * plane + i;
                if (ct.act[idx] <= 0.0) continue;  // z <= 0
                const double dz = dact[idx];
                gbeta[f] += dz;
                ggamma[f] += dz * ct.xhat[idx];
                gvec[idx] = dz * static_cast<double>(g[f]);
            }
        }
        double mean_g = 0.0, mean_gx = 0.0;
        for (std::size_t i = 0; i < n_out; ++i) {
            mean_g += gvec[i];
            mean_gx += gvec[i] * ct.xhat[i];
        }
        mean_g /= static_cast<double>(n_out);
        mean_gx /= static_cast<double>(n_out);
        std::vector<double> dpre(n_out);
        for (std::size_t i = 0; i < n_out; ++i)
            dpre[i] = ct.invstd * (gvec[i] - mean_g - ct.xhat[i] * mean_gx);

        // Conv backward to filters and the previous layer's activations.
        const int in_side = l == 0 ? cfg.image_size : cfg.conv_out_size(l - 1);
        const int in_ch = l == 0 ? cfg.image_channels : cfg.convs[l - 1].out_ch;
        std::vector<double> din;
        if (l > 0) din.assign(static_cast<std::size_t>(in_ch) * in_side * in_side, 0.0);
        auto in_at = [&](int ch, int iy, int ix) -> double {
            const std::size_t idx =
                (static_cast<std::size_t>(ch) * in_side + iy) * in_side + ix;
            if (l == 0) return static_cast<double>(trace.image[idx]);
            return trace.convs[l - 1].act[idx];
        };
        auto& gw = grads.g[conv_w(l)];
        auto& gb = grads.g[conv_b(l)];
        const float* w = W[conv_w(l)];
        for (int f = 0; f < c.out_ch; ++f) {
            for (int oy = 0; oy < os; ++oy) {
                for (int ox = 0; ox < os; ++ox) {
                    const double d = dpre[(static_cast<std::size_t>(f) * os + oy) * os + ox];
                    if (d == 0.0) continue;
                    gb[f] += d;
                    const int iy0 = oy * c.stride;
                    const int ix0 = ox * c.stride;
                    for (int ch = 0; ch < in_ch; ++ch) {
                        const std::size_t wbase =
                            (static_cast<std::size_t>(f) * in_ch + ch) *
                            static_cast<std::size_t>(c.kernel) * c.kernel;
                        for (int ky = 0; ky < c.kernel; ++ky) {
                            for (int kx = 0; kx < c.kernel; ++kx) {
                                const std::size_t wi =
                                    wbase + static_cast<std::size_t>(ky) * c.kernel + kx;
                                gw[wi] += d * in_at(ch, iy0 + ky, ix0 + kx);
                                if (l > 0)
                                    din[(static_cast<std::size_t>(ch) * in_side + iy0 + ky) *
                                            in_side +
                                        ix0 + kx] += d * static_cast<double>(w[wi]);
                            }
                        }
                    }
                }
            }
        }
        dact = std::move(din);
    }
}

FloatNet::FloatNet(const NetworkParams& p) : cfg_(p.cfg) {
    w_.reserve(p.tensors.size());
    for (const auto& t : p.tensors) w_.push_back(t.w);
}

ForwardResult FloatNet::forward(const float* image, const FeatureVector& features,
                                const LstmState& state,
                                const std::vector<std::uint8_t>* dropout_mask) const {
    std::vector<const float*> W;
    W.reserve(w_.size());
    for (const auto& t : w_) W.push_back(t.data());
    return forward_impl<float>(cfg_, W, image, features, state, dropout_mask, nullptr);
}

std::vector<std::uint8_t> draw_dropout_mask(int n, double keep_prob, Rng& rng) {
    std::vector<std::uint8_t> mask(n);
    for (auto& m : mask) m = rng.bernoulli(keep_prob) ? 1 : 0;
    return mask;
}

McStats mc_forward_stats(const FloatNet& net, const float* image, const FeatureVector& features,
                         const LstmState& state, int f_passes, Rng& rng) {
    if (f_passes < 2) throw std::invalid_argument("mc_forward_stats requires F >= 2");
    const double keep = 1.0 - net.config().dropout_rate;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < f_passes; ++i) {
        const auto mask = draw_dropout_mask(net.config().lstm_hidden, keep, rng);
        const double v = net.forward(image, features, state, &mask).value;
        sum += v;
        sum_sq += v * v;
    }
    McStats s;
    s.mean = sum / f_passes;
    s.var = std::max(0.0, (sum_sq - sum * sum / f_passes) / (f_passes - 1));
    return s;
}

namespace {

void put_u32(std::string& s, std::uint32_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
    s.push_back(static_cast<char>((v >> 16) & 0xff));
    s.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const std::string& s, std::size_t& off) {
    if (off + 4 > s.size()) throw CorruptFile("truncated file");
    const auto b = [&](int i) {
        return static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + i]));
    };
    const std::uint32_t v = b(0) | (b(1) << 8) | (b(2) << 16) | (b(3) << 24);
    off += 4;
    return v;
}

json arch_json(const NetConfig& cfg) {
    json convs = json::array();
    for (const auto& c : cfg.convs) convs.push_back({c.out_ch, c.kernel, c.stride});
    return json{{"image_size", cfg.image_size},
                {"image_channels", cfg.image_channels},
                {"convs", convs},
                {"dense_out", cfg.dense_out},
                {"feature_dim", cfg.feature_dim},
                {"lstm_hidden", cfg.lstm_hidden},
                {"dropout_rate", cfg.dropout_rate},
                {"policy_out", cfg.policy_out}};
}

NetConfig arch_from_json(const json& j) {
    NetConfig cfg;
    cfg.image_size = j.at("image_size").get<int>();
    cfg.image_channels = j.at("image_channels").get<int>();
    cfg.convs.clear();
    for (const auto& c : j.at("convs"))
        cfg.convs.push_back(ConvSpec{c.at(0).get<int>(), c.at(1).get<int>(), c.at(2).get<int>()});
    cfg.dense_out = j.at("dense_out").get<int>();
    cfg.feature_dim = j.at("feature_dim").get<int>();
    cfg.lstm_hidden = j.at("lstm_hidden").get<int>();
    cfg.dropout_rate = j.at("dropout_rate").get<double>();
    cfg.policy_out = j.at("policy_out").get<int>();
    return cfg;
}

constexpr std::uint32_t kMagic = 0x4e505948;  // "HYPN"
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_params(const NetworkParams& p, const std::string& path) {
    std::string out;
    put_u32(out, kMagic);
    put_u32(out, kVersion);
    const std::string header =
        json{{"arch", arch_json(p.cfg)}, {"training_seconds", p.training_seconds}}.dump();
    put_u32(out, static_cast<std::uint32_t>(header.size()));
    out += header;
    put_u32(out, static_cast<std::uint32_t>(p.tensors.size()));
    for (const auto& t : p.tensors) {
        put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out += t.name;
        put_u32(out, static_cast<std::uint32_t>(t.size()));
    }
    for (const auto& t : p.tensors) {
        for (const float v : t.w) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            put_u32(out, bits);
        }
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

NetworkParams load_params(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CorruptFile("cannot open: " + path);
    std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    std::size_t off = 0;
    if (get_u32(data, off) != kMagic) throw CorruptFile("bad magic");
    const auto version = get_u32(data, off);
    if (version != kVersion)
        throw VersionMismatch("model version " + std::to_string(version));
    const auto hlen = get_u32(data, off);
    if (off + hlen > data.size()) throw CorruptFile("truncated header");
    json header;
    try {
        header = json::parse(data.substr(off, hlen));
    } catch (const json::exception&) {
        throw CorruptFile("unparseable header");
    }
    off += hlen;

    NetworkParams p = build_tensors(arch_from_json(header.at("arch")));
    p.training_seconds = header.value("training_seconds", 0.0);
    const auto n_tensors = get_u32(data, off);
    if (n_tensors != p.tensors.size()) throw CorruptFile("tensor count mismatch");
    for (auto& t : p.tensors) {
        const auto nlen = get_u32(data, off);
        if (off + nlen > data.size()) throw CorruptFile("truncated tensor name");
        const std::string name = data.substr(off, nlen);
        off += nlen;
        if (name != t.name) throw CorruptFile("unexpected tensor " + name);
        const auto numel = get_u32(data, off);
        if (numel != t.size()) throw CorruptFile("tensor size mismatch for " + name);
    }
    for (auto& t : p.tensors) {
        for (auto& v : t.w) {
            const std::uint32_t bits = get_u32(data, off);
            std::memcpy(&v, &bits, 4);
        }
    }
    return p;
}

NetworkParams load_params(const std::string& path, const NetConfig& expected) {
    NetworkParams p = load_params(path);
    if (!(p.cfg == expected)) throw VersionMismatch("model architecture mismatch");
    return p;
}

}  // namespace hyplan

#include "fdf/nn_core.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "fdf/rng.hpp"
#include "fdf/version.hpp"

namespace fdf {

int conv_channels_for_arch(int arch_id) {
    switch (arch_id) {
        case 1: return 1;
        case 2: return 3;
        case 3: return 8;
        default: throw ConfigError("unknown architecture id: " + std::to_string(arch_id));
    }
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (epochs < 1) throw ConfigError("epochs must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
}

template <typename T>
void Network<T>::validate() const {
    conv.filter.validate();
    if (conv.stride < 1) throw DimensionError("conv stride must be >= 1");
    if (conv.in_channels != input_c) throw DimensionError("conv input channels mismatch");
    const std::size_t cw = static_cast<std::size_t>(conv.out_channels) * conv.in_channels *
                           conv.filter.offsets.size();
    if (conv.weights.size() != cw || conv.bias.size() != static_cast<std::size_t>(conv.out_channels))
        throw DimensionError("conv parameter arrays do not match layer dims");
    if (hidden.in != conv_flat() || hidden.out != hidden_units)
        throw DimensionError("hidden layer dims do not chain from conv output");
    if (output.in != hidden_units || output.out != classes)
        throw DimensionError("output layer dims do not chain from hidden layer");
    if (hidden.weights.size() != static_cast<std::size_t>(hidden.in) * hidden.out ||
        hidden.bias.size() != static_cast<std::size_t>(hidden.out) ||
        output.weights.size() != static_cast<std::size_t>(output.in) * output.out ||
        output.bias.size() != static_cast<std::size_t>(output.out))
        throw DimensionError("dense parameter arrays do not match layer dims");
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
    return conv.weights.size() + conv.bias.size() + hidden.weights.size() +
           hidden.bias.size() + output.weights.size() + output.bias.size();
}

template <typename T>
static void glorot_fill(std::vector<T>& w, std::size_t count, int fan_in, int fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    w.resize(count);
    for (auto& v : w) v = static_cast<T>(rng.uniform(-limit, limit));
}

template <typename T>
Network<T> make_network(int arch_id, const FilterSpec& filter, std::uint64_t seed, int input_h,
                        int input_w, int input_c, int hidden_units, int classes, int stride) {
    filter.validate();
    Network<T> net;
    net.arch_id = arch_id;
    net.input_h = input_h;
    net.input_w = input_w;
    net.input_c = input_c;
    net.hidden_units = hidden_units;
    net.classes = classes;

    net.conv.filter = filter;
    net.conv.in_channels = input_c;
    net.conv.out_channels = conv_channels_for_arch(arch_id);
    net.conv.stride = stride;

    Rng rng(seed);
    const int cells = net.conv.cell_count();
    glorot_fill(net.conv.weights,
                static_cast<std::size_t>(net.conv.out_channels) * input_c * cells,
                input_c * cells, net.conv.out_channels * cells, rng);
    net.conv.bias.assign(net.conv.out_channels, T(0));

    net.hidden.in = net.conv_flat();
    net.hidden.out = hidden_units;
    glorot_fill(net.hidden.weights, static_cast<std::size_t>(net.hidden.in) * hidden_units,
                net.hidden.in, hidden_units, rng);
    net.hidden.bias.assign(hidden_units, T(0));

    net.output.in = hidden_units;
    net.output.out = classes;
    glorot_fill(net.output.weights, static_cast<std::size_t>(hidden_units) * classes,
                hidden_units, classes, rng);
    net.output.bias.assign(classes, T(0));

    net.validate();
    return net;
}

// ---------------------------------------------------------------------------
// Forward primitives
// ---------------------------------------------------------------------------

// out[y][x][o] = bias[o] + sum_{cell,i} w[o][i][cell] * in[y*s+dr][x*s+dc][i],
// zero outside the input (same-padding).
template <typename T>
static void sparse_conv_into(const Tensor<T>& input, const SparseConvLayer<T>& layer, T* out,
                             int out_h, int out_w) {
    const int in_h = input.shape[0];
    const int in_w = input.shape[1];
    const int in_c = input.shape[2];
    const int oc = layer.out_channels;
    const int cells = layer.cell_count();
    const int stride = layer.stride;

    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            T* cell_out = out + (static_cast<std::size_t>(y) * out_w + x) * oc;
            for (int o = 0; o < oc; ++o) cell_out[o] = layer.bias[o];
            for (int c = 0; c < cells; ++c) {
                const int iy = y * stride + layer.filter.offsets[c].row;
                const int ix = x * stride + layer.filter.offsets[c].col;
                if (iy < 0 || iy >= in_h || ix < 0 || ix >= in_w) continue;
                const T* px = &input.data[(static_cast<std::size_t>(iy) * in_w + ix) * in_c];
                for (int i = 0; i < in_c; ++i) {
                    const T v = px[i];
                    for (int o = 0; o < oc; ++o)
                        cell_out[o] += layer.weights[(static_cast<std::size_t>(o) * in_c + i) *
                                                         cells + c] * v;
                }
            }
        }
    }
}

template <typename T>
Tensor<T> sparse_conv_forward(const Tensor<T>& input_hwc, const SparseConvLayer<T>& layer) {
    if (input_hwc.shape.size() != 3) throw DimensionError("conv input must be H x W x C");
    if (input_hwc.shape[2] != layer.in_channels)
        throw DimensionError("conv input channel count mismatch: got " +
                             std::to_string(input_hwc.shape[2]) + ", layer expects " +
                             std::to_string(layer.in_channels));
    const int out_h = (input_hwc.shape[0] + layer.stride - 1) / layer.stride;
    const int out_w = (input_hwc.shape[1] + layer.stride - 1) / layer.stride;
    Tensor<T> out({out_h, out_w, layer.out_channels});
    sparse_conv_into(input_hwc, layer, out.data.data(), out_h, out_w);
    return out;
}

template <typename T>
static void softmax_row(const T* logits, T* probs, int n) {
    T peak = logits[0];
    for (int i = 1; i < n; ++i) peak = std::max(peak, logits[i]);
    T total = T(0);
    for (int i = 0; i < n; ++i) {
        probs[i] = std::exp(logits[i] - peak);
        total += probs[i];
    }
    for (int i = 0; i < n; ++i) probs[i] /= total;
}

// y = W x + b for row-major W[out][in]. Bias is added after the reduction so
// the batched GEMM path produces bit-identical activations.
template <typename T>
static void dense_into(const DenseLayer<T>& layer, const T* in, T* out) {
    for (int o = 0; o < layer.out; ++o) {
        const T* row = &layer.weights[static_cast<std::size_t>(o) * layer.in];
        T acc = T(0);
        for (int i = 0; i < layer.in; ++i) acc += row[i] * in[i];
        out[o] = acc + layer.bias[o];
    }
}

template <typename T>
ForwardCache<T> forward_cached(const Network<T>& net, const Tensor<T>& input) {
    if (input.shape.size() != 3 || input.shape[0] != net.input_h ||
        input.shape[1] != net.input_w || input.shape[2] != net.input_c)
        throw DimensionError("network input shape mismatch");

    ForwardCache<T> cache;
    cache.conv_pre = sparse_conv_forward(input, net.conv);
    cache.conv_act = cache.conv_pre;
    for (auto& v : cache.conv_act.data) v = std::max(v, T(0));

    cache.hidden_pre.resize(net.hidden_units);
    dense_into(net.hidden, cache.conv_act.data.data(), cache.hidden_pre.data());
    cache.hidden_act = cache.hidden_pre;
    for (auto& v : cache.hidden_act) v = std::max(v, T(0));

    cache.logits.resize(net.classes);
    dense_into(net.output, cache.hidden_act.data(), cache.logits.data());
    cache.probs.resize(net.classes);
    softmax_row(cache.logits.data(), cache.probs.data(), net.classes);
    return cache;
}

template <typename T>
std::vector<T> forward(const Network<T>& net, const Tensor<T>& input) {
    return forward_cached(net, input).probs;
}

template <typename T>
std::pair<int, std::vector<T>> predict(const Network<T>& net, const Tensor<T>& input) {
    std::vector<T> probs = forward(net, input);
    int best = 0;
    for (int i = 1; i < static_cast<int>(probs.size()); ++i)
        if (probs[i] > probs[best]) best = i;  // ties keep the lowest index
    return {best, std::move(probs)};
}

// ---------------------------------------------------------------------------
// Loss and gradients
// ---------------------------------------------------------------------------

inline constexpr double kLogClamp = -50.0;

template <typename T>
T loss_value(std::span<const T> probs, std::span<const T> target, LossKind kind) {
    if (probs.size() != target.size()) throw DimensionError("loss: size mismatch");
    if (kind == LossKind::sum_squared_error) {
        T acc = T(0);
        for (std::size_t i = 0; i < probs.size(); ++i) {
            const T d = target[i] - probs[i];
            acc += d * d;
        }
        return acc;
    }
    T acc = T(0);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (target[i] == T(0)) continue;
        const double lg = std::max(std::log(static_cast<double>(probs[i])), kLogClamp);
        acc -= target[i] * static_cast<T>(lg);
    }
    return acc;
}

// dL/dprobs for the configured loss.
template <typename T>
static void loss_grad(const T* probs, const T* target, T* grad, int n, LossKind kind) {
    if (kind == LossKind::sum_squared_error) {
        for (int i = 0; i < n; ++i) grad[i] = T(2) * (probs[i] - target[i]);
        return;
    }
    const T floor = static_cast<T>(std::exp(kLogClamp));
    for (int i = 0; i < n; ++i)
        grad[i] = (target[i] != T(0) && probs[i] > floor) ? -target[i] / probs[i] : T(0);
}

// dL/dlogits = p .* (g - <g, p>) for g = dL/dprobs.
template <typename T>
static void softmax_backward_row(const T* probs, const T* dprobs, T* dlogits, int n) {
    T dot = T(0);
    for (int i = 0; i < n; ++i) dot += dprobs[i] * probs[i];
    for (int i = 0; i < n; ++i) dlogits[i] = probs[i] * (dprobs[i] - dot);
}

template <typename T>
static Gradients<T> zero_gradients(const Network<T>& net) {
    Gradients<T> g;
    g.conv_w.assign(net.conv.weights.size(), T(0));
    g.conv_b.assign(net.conv.bias.size(), T(0));
    g.hidden_w.assign(net.hidden.weights.size(), T(0));
    g.hidden_b.assign(net.hidden.bias.size(), T(0));
    g.out_w.assign(net.output.weights.size(), T(0));
    g.out_b.assign(net.output.bias.size(), T(0));
    return g;
}

// Accumulates conv weight/bias gradients for one sample given dL/dconv_pre.
template <typename T>
static void conv_backward_sample(const Network<T>& net, const Tensor<T>& input, const T* dpre,
                                 T* dconv_w, T* dconv_b) {
    const int out_h = net.conv_out_h();
    const int out_w = net.conv_out_w();
    const int oc = net.conv.out_channels;
    const int in_c = net.input_c;
    const int cells = net.conv.cell_count();
    const int stride = net.conv.stride;
    const int in_h = net.input_h;
    const int in_w = net.input_w;

    for (int o = 0; o < oc; ++o) {
        T acc_b = T(0);
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x)
                acc_b += dpre[(static_cast<std::size_t>(y) * out_w + x) * oc + o];
        dconv_b[o] += acc_b;
    }
    for (int o = 0; o < oc; ++o) {
        for (int i = 0; i < in_c; ++i) {
            for (int c = 0; c < cells; ++c) {
                const int dr = net.conv.filter.offsets[c].row;
                const int dc = net.conv.filter.offsets[c].col;
                T acc = T(0);
                for (int y = 0; y < out_h; ++y) {
                    const int iy = y * stride + dr;
                    if (iy < 0 || iy >= in_h) continue;
                    for (int x = 0; x < out_w; ++x) {
                        const int ix = x * stride + dc;
                        if (ix < 0 || ix >= in_w) continue;
                        acc += dpre[(static_cast<std::size_t>(y) * out_w + x) * oc + o] *
                               input.data[(static_cast<std::size_t>(iy) * in_w + ix) * in_c + i];
                    }
                }
                dconv_w[(static_cast<std::size_t>(o) * in_c + i) * cells + c] += acc;
            }
        }
    }
}

template <typename T>
Gradients<T> backward(const Network<T>& net, const Tensor<T>& input,
                      std::span<const T> target, LossKind kind) {
    const ForwardCache<T> cache = forward_cached(net, input);
    Gradients<T> g = zero_gradients(net);

    const int k = net.classes;
    std::vector<T> dprobs(k), dlogits(k);
    loss_grad(cache.probs.data(), target.data(), dprobs.data(), k, kind);
    softmax_backward_row(cache.probs.data(), dprobs.data(), dlogits.data(), k);

    // output layer
    for (int o = 0; o < k; ++o) {
        g.out_b[o] += dlogits[o];
        T* row = &g.out_w[static_cast<std::size_t>(o) * net.hidden_units];
        for (int h = 0; h < net.hidden_units; ++h) row[h] += dlogits[o] * cache.hidden_act[h];
    }

    // hidden layer
    std::vector<T> dhidden(net.hidden_units);
    for (int h = 0; h < net.hidden_units; ++h) {
        T acc = T(0);
        for (int o = 0; o < k; ++o)
            acc += dlogits[o] * net.output.weights[static_cast<std::size_t>(o) * net.hidden_units + h];
        dhidden[h] = cache.hidden_pre[h] > T(0) ? acc : T(0);
    }
    const int flat = net.conv_flat();
    for (int h = 0; h < net.hidden_units; ++h) {
        g.hidden_b[h] += dhidden[h];
        T* row = &g.hidden_w[static_cast<std::size_t>(h) * flat];
        for (int f = 0; f < flat; ++f) row[f] += dhidden[h] * cache.conv_act.data[f];
    }

    // conv layer
    std::vector<T> dconv(flat);
    for (int f = 0; f < flat; ++f) {
        T acc = T(0);
        for (int h = 0; h < net.hidden_units; ++h)
            acc += dhidden[h] * net.hidden.weights[static_cast<std::size_t>(h) * flat + f];
        dconv[f] = cache.conv_pre.data[f] > T(0) ? acc : T(0);
    }
    conv_backward_sample(net, input, dconv.data(), g.conv_w.data(), g.conv_b.data());
    return g;
}

// ---------------------------------------------------------------------------
// Batched training
// ---------------------------------------------------------------------------

// c[i][j] = sum_p a[i][p] * b[j][p]; every output cell reduces p in order,
// so results do not depend on the thread count.
template <typename T>
static void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const T* ai = a + static_cast<std::size_t>(i) * k;
        T* ci = c + static_cast<std::size_t>(i) * n;
        int j = 0;
        for (; j + 4 <= n; j += 4) {
            const T* b0 = b + static_cast<std::size_t>(j) * k;
            const T* b1 = b0 + k;
            const T* b2 = b1 + k;
            const T* b3 = b2 + k;
            T s0 = T(0), s1 = T(0), s2 = T(0), s3 = T(0);
            for (int p = 0; p < k; ++p) {
                const T av = ai[p];
                s0 += av * b0[p];
                s1 += av * b1[p];
                s2 += av * b2[p];
                s3 += av * b3[p];
            }
            ci[j] = s0;
            ci[j + 1] = s1;
            ci[j + 2] = s2;
            ci[j + 3] = s3;
        }
        for (; j < n; ++j) {
            const T* bj = b + static_cast<std::size_t>(j) * k;
            T s = T(0);
            for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
            ci[j] = s;
        }
    }
}

// c[i][j] = sum_p a[i][p] * b[p][j], row-axpy form.
template <typename T>
static void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const T* ai = a + static_cast<std::size_t>(i) * k;
        T* ci = c + static_cast<std::size_t>(i) * n;
        std::fill(ci, ci + n, T(0));
        for (int p = 0; p < k; ++p) {
            const T av = ai[p];
            const T* bp = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

template <typename T>
static void transpose(int rows, int cols, const T* in, T* out) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out[static_cast<std::size_t>(c) * rows + r] = in[static_cast<std::size_t>(r) * cols + c];
}

template <typename T>
std::vector<double> train(Network<T>& net, const std::vector<Tensor<T>>& images,
                          const std::vector<int>& labels, const TrainConfig& config) {
    config.validate();
    net.validate();
    if (images.empty()) throw ConfigError("train: dataset is empty");
    if (images.size() != labels.size()) throw DimensionError("train: image/label count mismatch");

    const int n = static_cast<int>(images.size());
    const int bmax = std::min(config.batch_size, n);
    const int flat = net.conv_flat();
    const int hid = net.hidden_units;
    const int k = net.classes;
    const int out_h = net.conv_out_h();
    const int out_w = net.conv_out_w();

    std::vector<T> conv_pre(static_cast<std::size_t>(bmax) * flat);
    std::vector<T> conv_act(static_cast<std::size_t>(bmax) * flat);
    std::vector<T> hid_pre(static_cast<std::size_t>(bmax) * hid);
    std::vector<T> hid_act(static_cast<std::size_t>(bmax) * hid);
    std::vector<T> logits(static_cast<std::size_t>(bmax) * k);
    std::vector<T> probs(static_cast<std::size_t>(bmax) * k);
    std::vector<T> dprobs(static_cast<std::size_t>(bmax) * k);
    std::vector<T> dlogits(static_cast<std::size_t>(bmax) * k);
    std::vector<T> dhidden(static_cast<std::size_t>(bmax) * hid);
    std::vector<T> dconv(static_cast<std::size_t>(bmax) * flat);
    std::vector<T> dhidden_t(static_cast<std::size_t>(bmax) * hid);
    std::vector<T> conv_act_t(static_cast<std::size_t>(bmax) * flat);
    std::vector<T> dlogits_t(static_cast<std::size_t>(bmax) * k);
    std::vector<T> hid_act_t(static_cast<std::size_t>(bmax) * hid);
    std::vector<T> target(static_cast<std::size_t>(bmax) * k);
    Gradients<T> g = zero_gradients(net);

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(config.seed);

    std::vector<double> history;
    history.reserve(config.epochs);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;

        for (int start = 0; start < n; start += bmax) {
            const int bsz = std::min(bmax, n - start);

            // forward
#pragma omp parallel for schedule(static)
            for (int b = 0; b < bsz; ++b) {
                const Tensor<T>& img = images[order[start + b]];
                T* pre = conv_pre.data() + static_cast<std::size_t>(b) * flat;
                sparse_conv_into(img, net.conv, pre, out_h, out_w);
                T* act = conv_act.data() + static_cast<std::size_t>(b) * flat;
                for (int f = 0; f < flat; ++f) act[f] = std::max(pre[f], T(0));
            }
            gemm_nt(bsz, hid, flat, conv_act.data(), net.hidden.weights.data(), hid_pre.data());
#pragma omp parallel for schedule(static)
            for (int b = 0; b < bsz; ++b) {
                T* pre = hid_pre.data() + static_cast<std::size_t>(b) * hid;
                T* act = hid_act.data() + static_cast<std::size_t>(b) * hid;
                for (int h = 0; h < hid; ++h) {
                    pre[h] += net.hidden.bias[h];
                    act[h] = std::max(pre[h], T(0));
                }
            }
            gemm_nt(bsz, k, hid, hid_act.data(), net.output.weights.data(), logits.data());
#pragma omp parallel for schedule(static)
            for (int b = 0; b < bsz; ++b) {
                T* lg = logits.data() + static_cast<std::size_t>(b) * k;
                for (int o = 0; o < k; ++o) lg[o] += net.output.bias[o];
                softmax_row(lg, probs.data() + static_cast<std::size_t>(b) * k, k);
            }

            // loss bookkeeping and dL/dlogits
            for (int b = 0; b < bsz; ++b) {
                T* tg = target.data() + static_cast<std::size_t>(b) * k;
                std::fill(tg, tg + k, T(0));
                tg[labels[order[start + b]]] = T(1);
                const T* pr = probs.data() + static_cast<std::size_t>(b) * k;
                epoch_loss += static_cast<double>(
                    loss_value(std::span<const T>(pr, k), std::span<const T>(tg, k), config.loss));
            }
#pragma omp parallel for schedule(static)
            for (int b = 0; b < bsz; ++b) {
                const T* pr = probs.data() + static_cast<std::size_t>(b) * k;
                const T* tg = target.data() + static_cast<std::size_t>(b) * k;
                T* dp = dprobs.data() + static_cast<std::size_t>(b) * k;
                loss_grad(pr, tg, dp, k, config.loss);
                softmax_backward_row(pr, dp, dlogits.data() + static_cast<std::size_t>(b) * k, k);
            }

            // output layer grads: dWo[o][h] = sum_b dlogits[b][o] * hid_act[b][h]
            transpose(bsz, k, dlogits.data(), dlogits_t.data());
            transpose(bsz, hid, hid_act.data(), hid_act_t.data());
            gemm_nt(k, hid, bsz, dlogits_t.data(), hid_act_t.data(), g.out_w.data());
#pragma omp parallel for schedule(static)
            for (int o = 0; o < k; ++o) {
                T acc = T(0);
                for (int b = 0; b < bsz; ++b)
                    acc += dlogits[static_cast<std::size_t>(b) * k + o];
                g.out_b[o] = acc;
            }

            // hidden layer
            gemm_nn(bsz, hid, k, dlogits.data(), net.output.weights.data(), dhidden.data());
#pragma omp parallel for schedule(static)
            for (int b = 0; b < bsz; ++b) {
                T* dh = dhidden.data() + static_cast<std::size_t>(b) * hid;
                const T* pre = hid_pre.data() + static_cast<std::size_t>(b) * hid;
                for (int h = 0; h < hid; ++h)
                    if (pre[h] <= T(0)) dh[h] = T(0);
            }
            transpose(bsz, hid, dhidden.data(), dhidden_t.data());
            transpose(bsz, flat, conv_act.data(), conv_act_t.data());
            gemm_nt(hid, flat, bsz, dhidden_t.data(), conv_act_t.data(), g.hidden_w.data());
#pragma omp parallel for schedule(static)
            for (int h = 0; h < hid; ++h) {
                T acc = T(0);
                for (int b = 0; b < bsz; ++b)
                    acc += dhidden[static_cast<std::size_t>(b) * hid + h];
                g.hidden_b[h] = acc;
            }

            // conv layer
            gemm_nn(bsz, flat, hid, dhidden.data(), net.hidden.weights.data(), dconv.data());
#pragma omp parallel for schedule(static)
            for (int b = 0; b < bsz; ++b) {
                T* dc = dconv.data() + static_cast<std::size_t>(b) * flat;
                const T* pre = conv_pre.data() + static_cast<std::size_t>(b) * flat;
                for (int f = 0; f < flat; ++f)
                    if (pre[f] <= T(0)) dc[f] = T(0);
            }
            const int oc = net.conv.out_channels;
            const int in_c = net.input_c;
            const int cells = net.conv.cell_count();
#pragma omp parallel for schedule(static)
            for (int o = 0; o < oc; ++o) {
                T acc = T(0);
                for (int b = 0; b < bsz; ++b) {
                    const T* dc = dconv.data() + static_cast<std::size_t>(b) * flat;
                    for (int f = o; f < flat; f += oc) acc += dc[f];
                }
                g.conv_b[o] = acc;
            }
#pragma omp parallel for collapse(2) schedule(static)
            for (int o = 0; o < oc; ++o) {
                for (int i = 0; i < in_c; ++i) {
                    for (int c = 0; c < cells; ++c) {
                        const int dr = net.conv.filter.offsets[c].row;
                        const int dcol = net.conv.filter.offsets[c].col;
                        T acc = T(0);
                        for (int b = 0; b < bsz; ++b) {
                            const Tensor<T>& img = images[order[start + b]];
                            const T* dc = dconv.data() + static_cast<std::size_t>(b) * flat;
                            for (int y = 0; y < out_h; ++y) {
                                const int iy = y * net.conv.stride + dr;
                                if (iy < 0 || iy >= net.input_h) continue;
                                for (int x = 0; x < out_w; ++x) {
                                    const int ix = x * net.conv.stride + dcol;
                                    if (ix < 0 || ix >= net.input_w) continue;
                                    acc += dc[(static_cast<std::size_t>(y) * out_w + x) * oc + o] *
                                           img.data[(static_cast<std::size_t>(iy) * net.input_w +
                                                     ix) * in_c + i];
                                }
                            }
                        }
                        g.conv_w[(static_cast<std::size_t>(o) * in_c + i) * cells + c] = acc;
                    }
                }
            }

            // SGD step on the mean gradient
            const T scale = static_cast<T>(config.learning_rate / bsz);
            auto apply = [scale](std::vector<T>& w, const std::vector<T>& grad) {
#pragma omp parallel for schedule(static)
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(w.size()); ++i)
                    w[i] -= scale * grad[i];
            };
            apply(net.conv.weights, g.conv_w);
            apply(net.conv.bias, g.conv_b);
            apply(net.hidden.weights, g.hidden_w);
            apply(net.hidden.bias, g.hidden_b);
            apply(net.output.weights, g.out_w);
            apply(net.output.bias, g.out_b);
        }
        history.push_back(epoch_loss / n);
    }
    return history;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'F', 'D', 'F', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
    buf.push_back(static_cast<unsigned char>(v & 0xff));
    buf.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    buf.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    buf.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

void put_i32(std::vector<unsigned char>& buf, std::int32_t v) {
    put_u32(buf, static_cast<std::uint32_t>(v));
}

void put_f32_array(std::vector<unsigned char>& buf, const std::vector<float>& vals) {
    for (float f : vals) put_u32(buf, std::bit_cast<std::uint32_t>(f));
}

struct Cursor {
    const std::vector<unsigned char>& buf;
    std::size_t pos = 0;
    const std::string& path;

    void need(std::size_t bytes) const {
        if (pos + bytes > buf.size())
            throw DataFormatError("truncated checkpoint: " + path);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = buf[pos] | (buf[pos + 1] << 8) | (buf[pos + 2] << 16) |
                          (static_cast<std::uint32_t>(buf[pos + 3]) << 24);
        pos += 4;
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    void f32_array(std::vector<float>& out, std::size_t count) {
        out.resize(count);
        for (std::size_t i = 0; i < count; ++i) out[i] = std::bit_cast<float>(u32());
    }
};

}  // namespace

void save_checkpoint(const Network<float>& net, const std::string& path) {
    net.validate();
    std::vector<unsigned char> buf;
    buf.reserve(net.parameter_count() * 4 + 256);
    buf.insert(buf.end(), kMagic, kMagic + sizeof(kMagic));
    put_u32(buf, kCheckpointFormatVersion);
    put_u32(buf, static_cast<std::uint32_t>(net.arch_id));
    put_i32(buf, net.level_index());
    put_u32(buf, static_cast<std::uint32_t>(net.conv.stride));
    put_u32(buf, static_cast<std::uint32_t>(net.conv.filter.extent));
    put_u32(buf, static_cast<std::uint32_t>(net.conv.filter.offsets.size()));
    for (const auto& off : net.conv.filter.offsets) {
        put_i32(buf, off.row);
        put_i32(buf, off.col);
    }
    put_u32(buf, static_cast<std::uint32_t>(net.input_h));
    put_u32(buf, static_cast<std::uint32_t>(net.input_w));
    put_u32(buf, static_cast<std::uint32_t>(net.input_c));
    put_u32(buf, static_cast<std::uint32_t>(net.conv.out_channels));
    put_u32(buf, static_cast<std::uint32_t>(net.hidden_units));
    put_u32(buf, static_cast<std::uint32_t>(net.classes));
    put_f32_array(buf, net.conv.weights);
    put_f32_array(buf, net.conv.bias);
    put_f32_array(buf, net.hidden.weights);
    put_f32_array(buf, net.hidden.bias);
    put_f32_array(buf, net.output.weights);
    put_f32_array(buf, net.output.bias);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataFormatError("cannot open checkpoint for writing: " + path);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataFormatError("short write on checkpoint: " + path);
}

Network<float> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataFormatError("cannot open checkpoint: " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());

    Cursor cur{buf, 0, path};
    cur.need(sizeof(kMagic));
    if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
        throw DataFormatError("bad checkpoint magic: " + path);
    cur.pos = sizeof(kMagic);
    const std::uint32_t version = cur.u32();
    if (version != static_cast<std::uint32_t>(kCheckpointFormatVersion))
        throw DataFormatError("unsupported checkpoint format version " +
                              std::to_string(version) + ": " + path);

    Network<float> net;
    net.arch_id = static_cast<int>(cur.u32());
    const int level = cur.i32();
    const int stride = static_cast<int>(cur.u32());
    const int extent = static_cast<int>(cur.u32());
    const std::uint32_t cells = cur.u32();
    if (cells == 0 || cells > 4096) throw DataFormatError("implausible cell count: " + path);

    FilterSpec filter;
    filter.level = EquilibriumLevel::from_index(level);
    filter.extent = extent;
    for (std::uint32_t i = 0; i < cells; ++i) {
        const int r = cur.i32();
        const int c = cur.i32();
        filter.offsets.push_back({r, c});
    }
    net.input_h = static_cast<int>(cur.u32());
    net.input_w = static_cast<int>(cur.u32());
    net.input_c = static_cast<int>(cur.u32());
    const int oc = static_cast<int>(cur.u32());
    net.hidden_units = static_cast<int>(cur.u32());
    net.classes = static_cast<int>(cur.u32());

    net.conv.filter = std::move(filter);
    net.conv.in_channels = net.input_c;
    net.conv.out_channels = oc;
    net.conv.stride = stride;

    cur.f32_array(net.conv.weights, static_cast<std::size_t>(oc) * net.input_c * cells);
    cur.f32_array(net.conv.bias, static_cast<std::size_t>(oc));
    net.hidden.in = net.conv_flat();
    net.hidden.out = net.hidden_units;
    cur.f32_array(net.hidden.weights, static_cast<std::size_t>(net.hidden.in) * net.hidden.out);
    cur.f32_array(net.hidden.bias, static_cast<std::size_t>(net.hidden.out));
    net.output.in = net.hidden_units;
    net.output.out = net.classes;
    cur.f32_array(net.output.weights, static_cast<std::size_t>(net.output.in) * net.output.out);
    cur.f32_array(net.output.bias, static_cast<std::size_t>(net.output.out));
    if (cur.pos != buf.size())
        throw DataFormatError("trailing bytes in checkpoint: " + path);

    net.validate();
    return net;
}

Network<float> load_checkpoint(const std::string& path, int expected_arch_id) {
    Network<float> net = load_checkpoint(path);
    if (net.arch_id != expected_arch_id)
        throw DataFormatError("checkpoint architecture mismatch: " + path + " holds arch " +
                              std::to_string(net.arch_id) + ", expected " +
                              std::to_string(expected_arch_id));
    return net;
}

// ---------------------------------------------------------------------------
// Explicit instantiations
// ---------------------------------------------------------------------------

template struct Network<float>;
template struct Network<double>;

template Network<float> make_network<float>(int, const FilterSpec&, std::uint64_t, int, int, int,
                                            int, int, int);
template Network<double> make_network<double>(int, const FilterSpec&, std::uint64_t, int, int,
                                              int, int, int, int);
template Tensor<float> sparse_conv_forward<float>(const Tensor<float>&,
                                                  const SparseConvLayer<float>&);
template Tensor<double> sparse_conv_forward<double>(const Tensor<double>&,
                                                    const SparseConvLayer<double>&);
template ForwardCache<float> forward_cached<float>(const Network<float>&, const Tensor<float>&);
template ForwardCache<double> forward_cached<double>(const Network<double>&,
                                                     const Tensor<double>&);
template std::vector<float> forward<float>(const Network<float>&, const Tensor<float>&);
template std::vector<double> forward<double>(const Network<double>&, const Tensor<double>&);
template float loss_value<float>(std::span<const float>, std::span<const float>, LossKind);
template double loss_value<double>(std::span<const double>, std::span<const double>, LossKind);
template Gradients<float> backward<float>(const Network<float>&, const Tensor<float>&,
                                          std::span<const float>, LossKind);
template Gradients<double> backward<double>(const Network<double>&, const Tensor<double>&,
                                            std::span<const double>, LossKind);
template std::pair<int, std::vector<float>> predict<float>(const Network<float>&,
                                                           const Tensor<float>&);
template std::pair<int, std::vector<double>> predict<double>(const Network<double>&,
                                                             const Tensor<double>&);
template std::vector<double> train<float>(Network<float>&, const std::vector<Tensor<float>>&,
                                          const std::vector<int>&, const TrainConfig&);
template std::vector<double> train<double>(Network<double>&, const std::vector<Tensor<double>>&,
                                           const std::vector<int>&, const TrainConfig&);

}  // namespace fdf

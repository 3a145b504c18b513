#ifndef FDF_NN_CORE_HPP
#define FDF_NN_CORE_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fdf/kernel_geometry.hpp"
#include "fdf/tensor.hpp"

namespace fdf {

enum class LossKind { sum_squared_error, cross_entropy };

struct TrainConfig {
    double learning_rate = 0.01;
    int epochs = 15;
    int batch_size = 64;
    std::uint64_t seed = 1;
    LossKind loss = LossKind::cross_entropy;

    void validate() const;
};

// Convolution whose receptive field is the filter spec's offset list rather
// than a contiguous window. Zero same-padding: reads outside the input are
// zero, output spatial size is ceil(input / stride).
template <typename T>
struct SparseConvLayer {
    FilterSpec filter;
    int in_channels = 0;
    int out_channels = 0;
    int stride = 1;
    std::vector<T> weights;  // [out][in][cell]
    std::vector<T> bias;     // [out]

    int cell_count() const { return static_cast<int>(filter.offsets.size()); }
    T weight(int o, int i, int c) const {
        return weights[(static_cast<std::size_t>(o) * in_channels + i) * filter.offsets.size() + c];
    }
};

template <typename T>
struct DenseLayer {
    int in = 0;
    int out = 0;
    std::vector<T> weights;  // [out][in]
    std::vector<T> bias;     // [out]
};

// The paper's three architectures differ only in conv output channels:
// arch 1 -> 1, arch 2 -> 3, arch 3 -> 8. Then a 1024-unit ReLU layer and a
// 10-way softmax layer.
int conv_channels_for_arch(int arch_id);

template <typename T>
struct Network {
    int arch_id = 1;
    int input_h = 32;
    int input_w = 32;
    int input_c = 3;
    int hidden_units = 1024;
    int classes = 10;
    SparseConvLayer<T> conv;
    DenseLayer<T> hidden;  // ReLU
    DenseLayer<T> output;  // softmax

    int conv_out_h() const { return (input_h + conv.stride - 1) / conv.stride; }
    int conv_out_w() const { return (input_w + conv.stride - 1) / conv.stride; }
    int conv_flat() const { return conv_out_h() * conv_out_w() * conv.out_channels; }
    int level_index() const { return conv.filter.level.index; }

    void validate() const;
    std::size_t parameter_count() const;
};

// Seeded Glorot-uniform weights, zero biases. hidden_units/input dims are
// overridable so tests can build downsized networks.
template <typename T>
Network<T> make_network(int arch_id, const FilterSpec& filter, std::uint64_t seed,
                        int input_h = 32, int input_w = 32, int input_c = 3,
                        int hidden_units = 1024, int classes = 10, int stride = 1);

template <typename T>
Tensor<T> sparse_conv_forward(const Tensor<T>& input_hwc, const SparseConvLayer<T>& layer);

// Intermediate activations kept for backprop.
template <typename T>
struct ForwardCache {
    Tensor<T> conv_pre;          // before ReLU
    Tensor<T> conv_act;          // after ReLU, flattened view feeds hidden
    std::vector<T> hidden_pre;
    std::vector<T> hidden_act;
    std::vector<T> logits;
    std::vector<T> probs;
};

template <typename T>
std::vector<T> forward(const Network<T>& net, const Tensor<T>& input);

template <typename T>
ForwardCache<T> forward_cached(const Network<T>& net, const Tensor<T>& input);

template <typename T>
T loss_value(std::span<const T> probs, std::span<const T> one_hot_target, LossKind kind);

// Parameter gradients, same layout as the owning layers.
template <typename T>
struct Gradients {
    std::vector<T> conv_w, conv_b;
    std::vector<T> hidden_w, hidden_b;
    std::vector<T> out_w, out_b;
};

template <typename T>
Gradients<T> backward(const Network<T>& net, const Tensor<T>& input,
                      std::span<const T> one_hot_target, LossKind kind);

template <typename T>
std::pair<int, std::vector<T>> predict(const Network<T>& net, const Tensor<T>& input);

// Mini-batch SGD. Sample shuffling, and nothing else, consumes the config
// seed, so runs are bit-reproducible. Returns mean training loss per epoch.
template <typename T>
std::vector<double> train(Network<T>& net, const std::vector<Tensor<T>>& images,
                          const std::vector<int>& labels, const TrainConfig& config);

// Checkpoint file: magic, format version, architecture id, level index,
// filter spec, then float32 little-endian parameter arrays in declaration
// order (conv w, conv b, hidden w, hidden b, output w, output b).
void save_checkpoint(const Network<float>& net, const std::string& path);
Network<float> load_checkpoint(const std::string& path);
Network<float> load_checkpoint(const std::string& path, int expected_arch_id);

}  // namespace fdf

#endif

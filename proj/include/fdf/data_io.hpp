#ifndef FDF_DATA_IO_HPP
#define FDF_DATA_IO_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fdf/tensor.hpp"

namespace fdf {

// Images are [N, 32, 32, 3] interleaved HWC reals in [0, 1].
struct Dataset {
    Tensor<float> images;
    std::vector<std::uint8_t> labels;

    std::size_t size() const { return labels.size(); }
    // Copy of sample i as an H x W x C tensor.
    Tensor<float> image(std::size_t i) const;
    void validate() const;
};

struct DataSplits {
    Dataset train;
    Dataset validation;
    Dataset test;
};

inline constexpr int kCifarImageH = 32;
inline constexpr int kCifarImageW = 32;
inline constexpr int kCifarChannels = 3;
inline constexpr int kCifarRecordBytes = 1 + kCifarImageH * kCifarImageW * kCifarChannels;

// CIFAR-10 binary batches: 3073-byte records, one label byte then the three
// channel planes (R, G, B) row-major. Pixels map to [0,1] via /255.
Dataset load_cifar10_binary(const std::vector<std::string>& paths);

// Seeded uniform shuffle followed by contiguous slicing. Fractional
// remainders go to the training split, so 60000 records at (0.6, 0.2, 0.2)
// give 36000/12000/12000.
DataSplits split(const Dataset& dataset, const std::array<double, 3>& fractions,
                 std::uint64_t seed);

// Deterministic class-coded images: each class lights a class-indexed 5x5
// block; `noise` is the amplitude of additive uniform noise. Sample i has
// label i % class_count.
Dataset synthetic_dataset(int n, int class_count, std::uint64_t seed, double noise = 0.1);

}  // namespace fdf

#endif

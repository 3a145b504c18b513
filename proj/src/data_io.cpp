#include "fdf/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "fdf/rng.hpp"

namespace fdf {

Tensor<float> Dataset::image(std::size_t i) const {
    const int h = images.shape[1];
    const int w = images.shape[2];
    const int c = images.shape[3];
    Tensor<float> out({h, w, c});
    const std::size_t stride = static_cast<std::size_t>(h) * w * c;
    std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(i * stride), stride,
                out.data.begin());
    return out;
}

void Dataset::validate() const {
    if (images.shape.size() != 4) throw DimensionError("dataset images must be [N,H,W,C]");
    if (static_cast<std::size_t>(images.shape[0]) != labels.size())
        throw DimensionError("dataset image/label count mismatch");
    for (auto l : labels)
        if (l > 9) throw DataFormatError("dataset label out of range [0,9]");
}

Dataset load_cifar10_binary(const std::vector<std::string>& paths) {
    if (paths.empty()) throw ConfigError("no CIFAR-10 files given");

    std::size_t total_records = 0;
    std::vector<std::vector<unsigned char>> files;
    files.reserve(paths.size());
    for (const auto& path : paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataFormatError("cannot open CIFAR-10 file: " + path);
        std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
        if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0)
            throw DataFormatError(path + ": length " + std::to_string(bytes.size()) +
                                  " is not a multiple of " + std::to_string(kCifarRecordBytes));
        total_records += bytes.size() / kCifarRecordBytes;
        files.push_back(std::move(bytes));
    }

    Dataset ds;
    ds.images = Tensor<float>({static_cast<int>(total_records), kCifarImageH, kCifarImageW,
                               kCifarChannels});
    ds.labels.reserve(total_records);

    constexpr int plane = kCifarImageH * kCifarImageW;
    std::size_t rec_idx = 0;
    for (std::size_t f = 0; f < files.size(); ++f) {
        const auto& bytes = files[f];
        const std::size_t records = bytes.size() / kCifarRecordBytes;
        for (std::size_t r = 0; r < records; ++r, ++rec_idx) {
            const unsigned char* rec = bytes.data() + r * kCifarRecordBytes;
            if (rec[0] > 9)
                throw DataFormatError(paths[f] + ": record " + std::to_string(r) +
                                      " has label byte " + std::to_string(rec[0]) + " > 9");
            ds.labels.push_back(rec[0]);
            // channel-planar (R plane, G plane, B plane) -> interleaved HWC
            float* img = ds.images.data.data() +
                         rec_idx * static_cast<std::size_t>(plane) * kCifarChannels;
            const unsigned char* px = rec + 1;
            for (int c = 0; c < kCifarChannels; ++c)
                for (int p = 0; p < plane; ++p)
                    img[static_cast<std::size_t>(p) * kCifarChannels + c] =
                        static_cast<float>(px[c * plane + p]) / 255.0f;
        }
    }
    return ds;
}

static Dataset take(const Dataset& src, const std::vector<int>& indices, std::size_t begin,
                    std::size_t count) {
    const int h = src.images.shape[1];
    const int w = src.images.shape[2];
    const int c = src.images.shape[3];
    const std::size_t stride = static_cast<std::size_t>(h) * w * c;

    Dataset out;
    out.images = Tensor<float>({static_cast<int>(count), h, w, c});
    out.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t s = static_cast<std::size_t>(indices[begin + i]);
        std::copy_n(src.images.data.begin() + static_cast<std::ptrdiff_t>(s * stride), stride,
                    out.images.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
        out.labels[i] = src.labels[s];
    }
    return out;
}

DataSplits split(const Dataset& dataset, const std::array<double, 3>& fractions,
                 std::uint64_t seed) {
    const double total = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(total - 1.0) > 1e-9)
        throw ConfigError("split fractions must sum to 1");
    const std::size_t n = dataset.size();
    if (n == 0) throw ConfigError("cannot split an empty dataset");

    std::vector<int> indices(n);
    std::iota(indices.begin(), indices.end(), 0);
    Rng rng(seed);
    rng.shuffle(indices);

    // floor the validation/test sizes; the remainder goes to training
    const std::size_t n_val = static_cast<std::size_t>(fractions[1] * static_cast<double>(n));
    const std::size_t n_test = static_cast<std::size_t>(fractions[2] * static_cast<double>(n));
    const std::size_t n_train = n - n_val - n_test;

    DataSplits out;
    out.train = take(dataset, indices, 0, n_train);
    out.validation = take(dataset, indices, n_train, n_val);
    out.test = take(dataset, indices, n_train + n_val, n_test);
    return out;
}

Dataset synthetic_dataset(int n, int class_count, std::uint64_t seed, double noise) {
    if (class_count < 1 || class_count > 10)
        throw ConfigError("synthetic class_count must be in [1,10]");
    if (n < class_count) throw ConfigError("synthetic n must be >= class_count");

    constexpr int h = kCifarImageH;
    constexpr int w = kCifarImageW;
    constexpr int ch = kCifarChannels;
    constexpr int block = 5;

    Dataset ds;
    ds.images = Tensor<float>({n, h, w, ch});
    ds.labels.resize(n);

    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        const int label = i % class_count;
        ds.labels[i] = static_cast<std::uint8_t>(label);
        float* img = ds.images.data.data() +
                     static_cast<std::size_t>(i) * h * w * ch;
        for (int p = 0; p < h * w * ch; ++p)
            img[p] = static_cast<float>(rng.uniform(0.0, noise));
        // class-indexed bright block on a 2 x 5 grid of anchor positions
        const int r0 = 4 + 16 * (label / 5);
        const int c0 = 1 + 6 * (label % 5);
        for (int r = r0; r < r0 + block; ++r)
            for (int c = c0; c < c0 + block; ++c)
                for (int k = 0; k < ch; ++k) {
                    float& px = img[(static_cast<std::size_t>(r) * w + c) * ch + k];
                    px = std::min(1.0f, px + 0.9f);
                }
    }
    return ds;
}

}  // namespace fdf

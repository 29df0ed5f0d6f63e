#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "rocketnet/data.hpp"
#include "rocketnet/errors.hpp"
#include "rocketnet/tensor.hpp"

namespace rocket {

// CIFAR-10 binary layout: records of 3073 bytes, one label byte (0..9)
// followed by 3072 pixel bytes (three 1024-byte channel planes, red, green,
// blue, each 32x32 row-major).
inline constexpr std::size_t kCifarPixels = 3072;
inline constexpr std::size_t kCifarRecordBytes = kCifarPixels + 1;
inline constexpr std::size_t kCifarClasses = 10;

struct CifarRecord {
    std::uint8_t label = 0;
    std::array<std::uint8_t, kCifarPixels> pixels{};
};

// Raw parse, no scaling.  Rejects truncated files (reporting the byte offset
// where the partial record starts) and out-of-range labels (reporting the
// record index).
inline std::vector<CifarRecord> parse_cifar10_records(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cifar10: cannot open '" + path + "'");
    std::vector<CifarRecord> records;
    char buf[kCifarRecordBytes];
    std::size_t offset = 0;
    while (f.read(buf, kCifarRecordBytes)) {
        CifarRecord r;
        r.label = static_cast<std::uint8_t>(buf[0]);
        if (r.label >= kCifarClasses) {
            throw FormatError("cifar10: '" + path + "' record " +
                              std::to_string(records.size()) + ": label " +
                              std::to_string(r.label) + " out of range");
        }
        std::memcpy(r.pixels.data(), buf + 1, kCifarPixels);
        records.push_back(r);
        offset += kCifarRecordBytes;
    }
    if (f.gcount() != 0) {
        throw FormatError("cifar10: '" + path + "' truncated: partial record at byte offset " +
                          std::to_string(offset));
    }
    return records;
}

// Reverse of the parse, byte for byte.  Exists so tests (and fixture
// generation) can prove the reader loses nothing.
inline void write_cifar10_records(const std::vector<CifarRecord>& records,
                                  const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cifar10: cannot open '" + path + "' for writing");
    for (const CifarRecord& r : records) {
        const char label = static_cast<char>(r.label);
        f.write(&label, 1);
        f.write(reinterpret_cast<const char*>(r.pixels.data()), kCifarPixels);
    }
    if (!f) throw IoError("cifar10: write to '" + path + "' failed");
}

// Full load: parse, scale pixels to [0,1], then standardize each channel
// with the mean/std computed from this file's records.  A zero-variance
// channel (possible in tiny fixtures) is left centered rather than divided.
inline Dataset read_cifar10_binary(const std::string& path, const std::string& split_tag) {
    const std::vector<CifarRecord> records = parse_cifar10_records(path);
    if (records.empty()) throw FormatError("cifar10: '" + path + "' holds no records");
    const std::size_t m = records.size();
    const std::size_t plane = kCifarPixels / 3;
    Tensor x(m, kCifarPixels);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < kCifarPixels; ++j) {
            x.at(i, j) = static_cast<double>(records[i].pixels[j]) / 255.0;
        }
    }
    for (std::size_t c = 0; c < 3; ++c) {
        double sum = 0.0, sum_sq = 0.0;
        const std::size_t n = m * plane;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = c * plane; j < (c + 1) * plane; ++j) {
                const double v = x.at(i, j);
                sum += v;
                sum_sq += v * v;
            }
        }
        const double mean = sum / static_cast<double>(n);
        const double var = sum_sq / static_cast<double>(n) - mean * mean;
        const double stddev = var > 0.0 ? std::sqrt(var) : 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = c * plane; j < (c + 1) * plane; ++j) {
                x.at(i, j) = stddev > 0.0 ? (x.at(i, j) - mean) / stddev : x.at(i, j) - mean;
            }
        }
    }
    Dataset ds;
    ds.features = std::move(x);
    ds.labels.resize(m);
    for (std::size_t i = 0; i < m; ++i) ds.labels[i] = records[i].label;
    ds.classes = kCifarClasses;
    ds.split = split_tag;
    ds.validate();
    return ds;
}

}  // namespace rocket

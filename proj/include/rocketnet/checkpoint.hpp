#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "rocketnet/errors.hpp"
#include "rocketnet/model.hpp"

namespace rocket {

// Checkpoint container, one file per net:
//
//   "RCKT1"
//   u64 arch-text length, arch text (the ArchSpec canonical line)
//   per parameter, in canonical order:
//     u64 name length, name bytes ("S.0.W", "S.0.b", ...)
//     u64 rows, u64 cols
//     rows*cols doubles, row-major
//
// All integers and doubles little-endian.  Loading re-derives the expected
// parameter list from the arch text and demands an exact match, so a partial
// or reordered file never yields a usable net.
inline constexpr char kCheckpointMagic[5] = {'R', 'C', 'K', 'T', '1'};

namespace detail {

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f64(std::vector<std::uint8_t>& out, double d) {
    put_u64(out, std::bit_cast<std::uint64_t>(d));
}

class ByteReader {
  public:
    ByteReader(const std::uint8_t* data, std::size_t n, std::string origin)
        : data_(data), n_(n), origin_(std::move(origin)) {}

    std::uint64_t u64() {
        need(8, "integer");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == n_; }
    std::size_t pos() const { return pos_; }

  private:
    void need(std::size_t n, const char* what) {
        if (pos_ + n > n_) {
            throw FormatError("checkpoint: '" + origin_ + "' truncated reading " + what +
                              " at byte " + std::to_string(pos_));
        }
    }

    const std::uint8_t* data_;
    std::size_t pos_ = 0;
    std::size_t n_;
    std::string origin_;
};

}  // namespace detail

inline std::vector<std::uint8_t> checkpoint_to_bytes(const RocketNet& net) {
    net.arch.validate();
    std::vector<std::uint8_t> out;
    for (char c : kCheckpointMagic) out.push_back(static_cast<std::uint8_t>(c));
    const std::string arch = net.arch.serialize();
    detail::put_u64(out, arch.size());
    out.insert(out.end(), arch.begin(), arch.end());
    // named_params only mutates through the refs, which we do not use here.
    for (const ParamRef& p : named_params(const_cast<RocketNet&>(net))) {
        detail::put_u64(out, p.name.size());
        out.insert(out.end(), p.name.begin(), p.name.end());
        detail::put_u64(out, p.tensor->rows());
        detail::put_u64(out, p.tensor->cols());
        for (std::size_t i = 0; i < p.tensor->size(); ++i) {
            detail::put_f64(out, p.tensor->data()[i]);
        }
    }
    return out;
}

inline RocketNet checkpoint_from_bytes(const std::vector<std::uint8_t>& bytes,
                                       const std::string& origin) {
    detail::ByteReader r(bytes.data(), bytes.size(), origin);
    const std::string magic = r.bytes(sizeof kCheckpointMagic, "magic");
    if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic)) {
        throw FormatError("checkpoint: '" + origin + "' has wrong magic, not a checkpoint");
    }
    const std::uint64_t arch_len = r.u64();
    ArchSpec arch;
    try {
        arch = ArchSpec::parse(r.bytes(arch_len, "arch text"));
    } catch (const Error& e) {
        throw FormatError("checkpoint: '" + origin + "': " + e.what());
    }
    RocketNet net = init_rocket(arch, 0);  // layout template; every tensor overwritten below
    std::map<std::string, Tensor*> expected;
    for (const ParamRef& p : named_params(net)) expected[p.name] = p.tensor;
    std::map<std::string, bool> filled;
    while (!r.done()) {
        const std::uint64_t name_len = r.u64();
        const std::string name = r.bytes(name_len, "parameter name");
        const std::uint64_t rows = r.u64(), cols = r.u64();
        const auto it = expected.find(name);
        if (it == expected.end()) {
            throw FormatError("checkpoint: '" + origin + "' has unknown parameter '" + name +
                              "'");
        }
        if (filled[name]) {
            throw FormatError("checkpoint: '" + origin + "' repeats parameter '" + name + "'");
        }
        Tensor& dst = *it->second;
        if (rows != dst.rows() || cols != dst.cols()) {
            throw FormatError("checkpoint: '" + origin + "' parameter '" + name + "' is " +
                              std::to_string(rows) + "x" + std::to_string(cols) + ", arch wants " +
                              dst.shape_str());
        }
        std::vector<double> values(rows * cols);
        for (double& v : values) v = r.f64();
        dst = Tensor(rows, cols, std::move(values));
        filled[name] = true;
    }
    for (const auto& [name, _] : expected) {
        if (!filled[name]) {
            throw FormatError("checkpoint: '" + origin + "' is missing parameter '" + name + "'");
        }
    }
    return net;
}

inline void save_checkpoint(const RocketNet& net, const std::string& path) {
    const std::vector<std::uint8_t> bytes = checkpoint_to_bytes(net);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("checkpoint: write to '" + path + "' failed");
}

inline RocketNet load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return checkpoint_from_bytes(bytes, path);
}

// FNV-1a over the serialized form; used to assert that a frozen teacher
// really was left untouched.
inline std::uint64_t checkpoint_digest(const RocketNet& net) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : checkpoint_to_bytes(net)) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace rocket

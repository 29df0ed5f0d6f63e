#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "rocketnet/autodiff.hpp"
#include "rocketnet/errors.hpp"
#include "rocketnet/rng.hpp"
#include "rocketnet/tensor.hpp"

namespace rocket {

// How the light and booster paths overlap.
//
//   Bottom:   a shared trunk of hidden layers feeds two private heads.
//   Interval: a stack of equal-width residual blocks; the light path walks
//             only the shared blocks, the booster path additionally walks
//             booster-specific blocks spliced in after each shared one.
enum class Sharing { Bottom, Interval };

struct ArchSpec {
    std::size_t input_dim = 0;
    std::size_t classes = 0;
    std::vector<std::size_t> shared;
    std::vector<std::size_t> light;    // hidden widths of the light head (Bottom only)
    std::vector<std::size_t> booster;  // hidden widths / extra block widths of the booster
    Sharing sharing = Sharing::Bottom;
    bool residual = false;

    void validate() const {
        if (input_dim < 1) throw SpecError("arch: input_dim must be >= 1");
        if (classes < 2) throw SpecError("arch: classes must be >= 2");
        for (std::size_t w : shared)
            if (w < 1) throw SpecError("arch: zero-width shared layer");
        for (std::size_t w : light)
            if (w < 1) throw SpecError("arch: zero-width light layer");
        for (std::size_t w : booster)
            if (w < 1) throw SpecError("arch: zero-width booster layer");
        if (booster.size() < light.size()) {
            throw SpecError("arch: booster path (" + std::to_string(booster.size()) +
                            " hidden) is shallower than the light path (" +
                            std::to_string(light.size()) + " hidden)");
        }
        if (sharing == Sharing::Interval) {
            if (!residual) throw SpecError("arch: interval sharing requires residual blocks");
            if (shared.empty()) throw SpecError("arch: interval sharing needs >= 1 shared block");
            if (!light.empty()) {
                throw SpecError("arch: interval sharing puts all light layers in the shared "
                                "stack; light list must be empty");
            }
            for (std::size_t w : shared) {
                if (w != shared[0]) throw SpecError("arch: interval blocks must share one width");
            }
            for (std::size_t w : booster) {
                if (w != shared[0]) throw SpecError("arch: interval blocks must share one width");
            }
        }
    }

    // Canonical single-line text form, embedded in checkpoints.  Lists are
    // comma-joined, with "-" standing for an empty list.
    std::string serialize() const {
        std::ostringstream os;
        os << "v1 input=" << input_dim << " classes=" << classes
           << " sharing=" << (sharing == Sharing::Bottom ? "bottom" : "interval")
           << " residual=" << (residual ? 1 : 0) << " shared=" << join(shared)
           << " light=" << join(light) << " booster=" << join(booster);
        return os.str();
    }

    static ArchSpec parse(const std::string& text) {
        std::istringstream is(text);
        std::string tok;
        if (!(is >> tok) || tok != "v1") throw FormatError("arch text: expected leading 'v1'");
        ArchSpec a;
        bool seen[7] = {};
        while (is >> tok) {
            const auto eq = tok.find('=');
            if (eq == std::string::npos) throw FormatError("arch text: bad token '" + tok + "'");
            const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
            if (key == "input") { a.input_dim = parse_count(val, key); seen[0] = true; }
            else if (key == "classes") { a.classes = parse_count(val, key); seen[1] = true; }
            else if (key == "sharing") {
                if (val == "bottom") a.sharing = Sharing::Bottom;
                else if (val == "interval") a.sharing = Sharing::Interval;
                else throw FormatError("arch text: unknown sharing '" + val + "'");
                seen[2] = true;
            } else if (key == "residual") { a.residual = (val == "1"); seen[3] = true; }
            else if (key == "shared") { a.shared = parse_list(val); seen[4] = true; }
            else if (key == "light") { a.light = parse_list(val); seen[5] = true; }
            else if (key == "booster") { a.booster = parse_list(val); seen[6] = true; }
            else throw FormatError("arch text: unknown field '" + key + "'");
        }
        for (bool s : seen)
            if (!s) throw FormatError("arch text: missing field");
        a.validate();
        return a;
    }

    bool operator==(const ArchSpec& o) const {
        return input_dim == o.input_dim && classes == o.classes && shared == o.shared &&
               light == o.light && booster == o.booster && sharing == o.sharing &&
               residual == o.residual;
    }

  private:
    static std::string join(const std::vector<std::size_t>& v) {
        if (v.empty()) return "-";
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ',';
            s += std::to_string(v[i]);
        }
        return s;
    }

    static std::size_t parse_count(const std::string& s, const std::string& key) {
        try {
            const long long n = std::stoll(s);
            if (n < 0) throw FormatError("arch text: negative " + key);
            return static_cast<std::size_t>(n);
        } catch (const std::invalid_argument&) {
            throw FormatError("arch text: bad number '" + s + "' for " + key);
        } catch (const std::out_of_range&) {
            throw FormatError("arch text: bad number '" + s + "' for " + key);
        }
    }

    static std::vector<std::size_t> parse_list(const std::string& s) {
        std::vector<std::size_t> v;
        if (s == "-") return v;
        std::istringstream is(s);
        std::string item;
        while (std::getline(is, item, ',')) v.push_back(parse_count(item, "width"));
        return v;
    }
};

struct LinearLayer {
    Tensor w;  // fan_in x fan_out
    Tensor b;  // 1 x fan_out
};

// The three parameter groups of a rocket pair: W_S (shared), W_L (light
// head), W_B (booster head).  Every trainable tensor lives in exactly one
// group.
//
// Bottom sharing: `shared` is the trunk; `light`/`booster` are each head's
// hidden layers followed by its output layer.
// Interval sharing: shared[0] is the input stem, shared[1..] are the shared
// residual blocks; `booster` is the booster-specific blocks followed by its
// output layer; `light` is just the light output layer.
struct RocketNet {
    ArchSpec arch;
    std::vector<LinearLayer> shared;
    std::vector<LinearLayer> light;
    std::vector<LinearLayer> booster;
};

namespace detail {

inline LinearLayer make_layer(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w(fan_in, fan_out);
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
    return LinearLayer{std::move(w), Tensor(1, fan_out)};
}

// Widths walked by each part, used both to build layers and to count
// multiplications.  Returned as (fan_in, fan_out) pairs per linear layer.
inline std::vector<std::pair<std::size_t, std::size_t>> part_dims(const ArchSpec& a, int part) {
    std::vector<std::pair<std::size_t, std::size_t>> dims;
    if (a.sharing == Sharing::Bottom) {
        std::size_t cur = a.input_dim;
        if (part == 0) {
            for (std::size_t w : a.shared) {
                dims.emplace_back(cur, w);
                cur = w;
            }
            return dims;
        }
        cur = a.shared.empty() ? a.input_dim : a.shared.back();
        const auto& hidden = part == 1 ? a.light : a.booster;
        for (std::size_t w : hidden) {
            dims.emplace_back(cur, w);
            cur = w;
        }
        dims.emplace_back(cur, a.classes);
        return dims;
    }
    const std::size_t w = a.shared[0];
    if (part == 0) {
        dims.emplace_back(a.input_dim, w);  // stem projecting input to block width
        for (std::size_t i = 0; i < a.shared.size(); ++i) dims.emplace_back(w, w);
        return dims;
    }
    if (part == 1) {
        dims.emplace_back(w, a.classes);
        return dims;
    }
    for (std::size_t i = 0; i < a.booster.size(); ++i) dims.emplace_back(w, w);
    dims.emplace_back(w, a.classes);
    return dims;
}

}  // namespace detail

// Draws all parameters from one seeded stream in canonical order (shared,
// light, booster; weights row-major).  Weights are uniform in
// +-sqrt(6 / (fan_in + fan_out)), biases zero.  Same (arch, seed) gives a
// bitwise-identical net on every run.
inline RocketNet init_rocket(const ArchSpec& arch, std::uint64_t seed) {
    arch.validate();
    RocketNet net;
    net.arch = arch;
    Rng rng(seed);
    for (int part = 0; part < 3; ++part) {
        auto dims = detail::part_dims(arch, part);
        auto& dst = part == 0 ? net.shared : (part == 1 ? net.light : net.booster);
        for (auto [fi, fo] : dims) dst.push_back(detail::make_layer(fi, fo, rng));
    }
    return net;
}

// ---------------------------------------------------------------------------
// Parameter enumeration
// ---------------------------------------------------------------------------

struct ParamRef {
    std::string name;  // e.g. "S.0.W", "B.2.b"
    Tensor* tensor;
};

enum class ParamSet { All, LightPath, BoosterPath };

inline std::vector<ParamRef> named_params(RocketNet& net, ParamSet sel = ParamSet::All) {
    std::vector<ParamRef> out;
    auto push_part = [&out](const char* tag, std::vector<LinearLayer>& layers) {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const std::string stem = std::string(tag) + "." + std::to_string(i) + ".";
            out.push_back({stem + "W", &layers[i].w});
            out.push_back({stem + "b", &layers[i].b});
        }
    };
    push_part("S", net.shared);
    if (sel != ParamSet::BoosterPath) push_part("L", net.light);
    if (sel != ParamSet::LightPath) push_part("B", net.booster);
    return out;
}

// ---------------------------------------------------------------------------
// Forward passes
//
// The tape forward (for training) and the plain forward (for evaluation)
// both go through kernel::linear / kernel::relu / kernel::softmax in the
// same order, so their outputs agree bitwise.  light-path functions never
// touch the booster head's tensors, and vice versa.
// ---------------------------------------------------------------------------

// Leaf handles for a net's parameters, mirroring the RocketNet layout.
struct TapeNet {
    const RocketNet* net = nullptr;
    std::vector<std::array<Value, 2>> shared, light, booster;  // {W, b} per layer

    Value w(int part, std::size_t i) const { return layers(part)[i][0]; }
    Value b(int part, std::size_t i) const { return layers(part)[i][1]; }

  private:
    const std::vector<std::array<Value, 2>>& layers(int part) const {
        return part == 0 ? shared : (part == 1 ? light : booster);
    }
};

inline TapeNet stage_params(Tape& tape, const RocketNet& net) {
    TapeNet staged;
    staged.net = &net;
    auto stage = [&tape](const std::vector<LinearLayer>& src,
                         std::vector<std::array<Value, 2>>& dst) {
        for (const LinearLayer& l : src) dst.push_back({tape.leaf(l.w), tape.leaf(l.b)});
    };
    stage(net.shared, staged.shared);
    stage(net.light, staged.light);
    stage(net.booster, staged.booster);
    return staged;
}

namespace detail {

inline Value residual_block(Tape& t, Value x, Value w, Value b) {
    return t.add(x, t.relu(t.linear(x, w, b)));
}

// How many booster-specific blocks follow shared block g on the booster
// path (Interval sharing): distributed as evenly as possible with earlier
// groups taking the extras.
inline std::size_t interval_group_quota(std::size_t groups, std::size_t blocks, std::size_t g) {
    return blocks / groups + (g < blocks % groups ? 1 : 0);
}

// Shared part of the light path: the trunk (Bottom) or stem followed by the
// stacked shared blocks (Interval).
inline Value trunk_forward(Tape& t, const TapeNet& net, Value x) {
    const ArchSpec& a = net.net->arch;
    if (a.sharing == Sharing::Bottom) {
        Value h = x;
        for (std::size_t i = 0; i < net.shared.size(); ++i) {
            const bool skip = a.residual && net.net->shared[i].w.rows() ==
                                                net.net->shared[i].w.cols();
            h = skip ? residual_block(t, h, net.w(0, i), net.b(0, i))
                     : t.relu(t.linear(h, net.w(0, i), net.b(0, i)));
        }
        return h;
    }
    Value h = t.relu(t.linear(x, net.w(0, 0), net.b(0, 0)));
    for (std::size_t g = 0; g + 1 < net.shared.size(); ++g) {
        h = residual_block(t, h, net.w(0, g + 1), net.b(0, g + 1));
    }
    return h;
}

inline Value head_forward(Tape& t, const TapeNet& net, Value trunk_out, int part) {
    const std::size_t n = part == 1 ? net.light.size() : net.booster.size();
    Value h = trunk_out;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        h = t.relu(t.linear(h, net.w(part, i), net.b(part, i)));
    }
    return t.linear(h, net.w(part, n - 1), net.b(part, n - 1));
}

}  // namespace detail

struct RocketOutputs {
    Value l;  // light logits
    Value z;  // booster logits
    Value p;  // softmax(l)
    Value q;  // softmax(z)
};

// Light path only: never reads a booster tensor.
inline Value light_logits(Tape& t, const TapeNet& net, Value x) {
    const ArchSpec& a = net.net->arch;
    Value trunk = detail::trunk_forward(t, net, x);
    if (a.sharing == Sharing::Interval) {
        return t.linear(trunk, net.w(1, 0), net.b(1, 0));
    }
    return detail::head_forward(t, net, trunk, 1);
}

// Booster path only (used by the booster-alone training mode).
inline Value booster_logits(Tape& t, const TapeNet& net, Value x) {
    const ArchSpec& a = net.net->arch;
    if (a.sharing == Sharing::Bottom) {
        Value trunk = detail::trunk_forward(t, net, x);
        return detail::head_forward(t, net, trunk, 2);
    }
    Value h = t.relu(t.linear(x, net.w(0, 0), net.b(0, 0)));
    const std::size_t groups = a.shared.size();
    const std::size_t blocks = a.booster.size();
    std::size_t next = 0;
    for (std::size_t g = 0; g < groups; ++g) {
        h = detail::residual_block(t, h, net.w(0, g + 1), net.b(0, g + 1));
        const std::size_t quota = detail::interval_group_quota(groups, blocks, g);
        for (std::size_t j = 0; j < quota; ++j, ++next) {
            h = detail::residual_block(t, h, net.w(2, next), net.b(2, next));
        }
    }
    return t.linear(h, net.w(2, net.booster.size() - 1), net.b(2, net.booster.size() - 1));
}

// Both paths, with the shared part staged once.  The light logits come out
// bitwise identical to what light_logits alone produces: same kernels in the
// same order, the booster walk only appends nodes afterwards.
inline RocketOutputs forward_rocket(Tape& t, const TapeNet& net, Value x) {
    const ArchSpec& a = net.net->arch;
    RocketOutputs out;
    if (a.sharing == Sharing::Bottom) {
        Value trunk = detail::trunk_forward(t, net, x);
        out.l = detail::head_forward(t, net, trunk, 1);
        out.z = detail::head_forward(t, net, trunk, 2);
    } else {
        Value stem = t.relu(t.linear(x, net.w(0, 0), net.b(0, 0)));
        Value lh = stem;
        for (std::size_t g = 0; g + 1 < net.shared.size(); ++g) {
            lh = detail::residual_block(t, lh, net.w(0, g + 1), net.b(0, g + 1));
        }
        out.l = t.linear(lh, net.w(1, 0), net.b(1, 0));
        Value bh = stem;
        const std::size_t groups = a.shared.size();
        const std::size_t blocks = a.booster.size();
        std::size_t next = 0;
        for (std::size_t g = 0; g < groups; ++g) {
            bh = detail::residual_block(t, bh, net.w(0, g + 1), net.b(0, g + 1));
            const std::size_t quota = detail::interval_group_quota(groups, blocks, g);
            for (std::size_t j = 0; j < quota; ++j, ++next) {
                bh = detail::residual_block(t, bh, net.w(2, next), net.b(2, next));
            }
        }
        out.z = t.linear(bh, net.w(2, net.booster.size() - 1),
                         net.b(2, net.booster.size() - 1));
    }
    out.p = t.softmax(out.l);
    out.q = t.softmax(out.z);
    return out;
}

// ---------------------------------------------------------------------------
// Plain (no-tape) forwards for evaluation and frozen teachers.  Bitwise
// identical to the tape values for the same parameters and input, because
// they run the same kernels in the same order.
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor eval_residual_block(const Tensor& x, const LinearLayer& l) {
    Tensor r = kernel::relu(kernel::linear(x, l.w, l.b));
    for (std::size_t i = 0; i < r.size(); ++i) r.data()[i] = x.data()[i] + r.data()[i];
    return r;
}

inline Tensor eval_trunk(const RocketNet& net, const Tensor& x) {
    const ArchSpec& a = net.arch;
    if (a.sharing == Sharing::Bottom) {
        Tensor h = x;
        for (std::size_t i = 0; i < net.shared.size(); ++i) {
            const LinearLayer& l = net.shared[i];
            if (a.residual && l.w.rows() == l.w.cols()) {
                h = eval_residual_block(h, l);
            } else {
                h = kernel::relu(kernel::linear(h, l.w, l.b));
            }
        }
        return h;
    }
    Tensor h = kernel::relu(kernel::linear(x, net.shared[0].w, net.shared[0].b));
    for (std::size_t g = 0; g + 1 < net.shared.size(); ++g) {
        h = eval_residual_block(h, net.shared[g + 1]);
    }
    return h;
}

inline Tensor eval_head(const std::vector<LinearLayer>& head, const Tensor& trunk_out) {
    Tensor h = trunk_out;
    for (std::size_t i = 0; i + 1 < head.size(); ++i) {
        h = kernel::relu(kernel::linear(h, head[i].w, head[i].b));
    }
    return kernel::linear(h, head.back().w, head.back().b);
}

}  // namespace detail

// Logits of the light path.  Reads only W_S and W_L.
inline Tensor light_only_forward(const RocketNet& net, const Tensor& x) {
    Tensor trunk = detail::eval_trunk(net, x);
    if (net.arch.sharing == Sharing::Interval) {
        return kernel::linear(trunk, net.light[0].w, net.light[0].b);
    }
    return detail::eval_head(net.light, trunk);
}

// Logits of the booster path.  Reads only W_S and W_B.
inline Tensor booster_forward(const RocketNet& net, const Tensor& x) {
    const ArchSpec& a = net.arch;
    if (a.sharing == Sharing::Bottom) {
        return detail::eval_head(net.booster, detail::eval_trunk(net, x));
    }
    Tensor h = kernel::relu(kernel::linear(x, net.shared[0].w, net.shared[0].b));
    const std::size_t groups = a.shared.size();
    const std::size_t blocks = a.booster.size();
    std::size_t next = 0;
    for (std::size_t g = 0; g < groups; ++g) {
        h = detail::eval_residual_block(h, net.shared[g + 1]);
        const std::size_t quota = detail::interval_group_quota(groups, blocks, g);
        for (std::size_t j = 0; j < quota; ++j, ++next) {
            h = detail::eval_residual_block(h, net.booster[next]);
        }
    }
    return kernel::linear(h, net.booster.back().w, net.booster.back().b);
}

// ---------------------------------------------------------------------------
// Cost accounting
// ---------------------------------------------------------------------------

enum class Path { Light, Booster, Full };

// Exact scalar multiplications of a single-example forward along a path:
// sum of fan_in * fan_out over that path's linear layers.  Full counts the
// deployed co-training forward (trunk once, both heads).
inline std::uint64_t count_multiplications(const ArchSpec& arch, Path path) {
    arch.validate();
    auto part_cost = [&arch](int part) {
        std::uint64_t n = 0;
        for (auto [fi, fo] : detail::part_dims(arch, part)) {
            n += static_cast<std::uint64_t>(fi) * fo;
        }
        return n;
    };
    const std::uint64_t trunk = part_cost(0);
    switch (path) {
        case Path::Light: return trunk + part_cost(1);
        case Path::Booster: return trunk + part_cost(2);
        default: return trunk + part_cost(1) + part_cost(2);
    }
}

}  // namespace rocket

#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "rocketnet/autodiff.hpp"
#include "rocketnet/errors.hpp"
#include "rocketnet/gradcheck.hpp"
#include "rocketnet/model.hpp"
#include "rocketnet/objective.hpp"
#include "rocketnet/rng.hpp"
#include "rocketnet/tensor.hpp"

namespace rocket {

// One named verification: the worst disagreement it observed against its
// tolerance.  The gradcheck command prints these; tests assert on them.
struct CheckOutcome {
    std::string name;
    double worst = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string note;
};

struct CheckOptions {
    std::uint64_t seed = 1;
    std::size_t fd_nets = 50;         // random nets for the finite-difference sweep
    std::size_t oracle_cases = 1000;  // random rows for the closed-form comparisons
    // Negative control: nudges the softmax-MSE closed form so the comparison
    // must fail.  Proves the check can actually catch a wrong gradient.
    bool corrupt_mse_oracle = false;
};

namespace detail {

inline std::string format_sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

// Small bottom-sharing net within the finite-difference budget: at most
// three linear layers per path, widths at most eight.
inline ArchSpec random_small_arch(Rng& rng) {
    ArchSpec a;
    a.input_dim = 2 + rng.below(3);
    a.classes = 2 + rng.below(3);
    const std::size_t shared_depth = rng.below(2);
    const std::size_t light_depth = rng.below(2);
    for (std::size_t i = 0; i < shared_depth; ++i) a.shared.push_back(2 + rng.below(7));
    for (std::size_t i = 0; i < light_depth; ++i) a.light.push_back(2 + rng.below(7));
    const std::size_t booster_depth = light_depth + rng.below(3 - shared_depth - light_depth);
    for (std::size_t i = 0; i < booster_depth; ++i) a.booster.push_back(2 + rng.below(7));
    return a;
}

inline Tensor random_inputs(Rng& rng, std::size_t rows, std::size_t cols, double span) {
    Tensor x(rows, cols);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-span, span);
    return x;
}

// Fresh nets come with zero biases, which parks relu inputs of fully dead
// rows exactly on the kink where finite differences and the subgradient
// disagree by construction.  Probing at generic points needs nonzero biases.
inline void randomize_biases(RocketNet& net, Rng& rng) {
    for (auto* part : {&net.shared, &net.light, &net.booster}) {
        for (LinearLayer& layer : *part) {
            for (std::size_t i = 0; i < layer.b.size(); ++i) {
                layer.b.data()[i] = rng.uniform(-0.3, 0.3);
            }
        }
    }
}

inline Tensor one_hot_rows(Rng& rng, std::size_t rows, std::size_t classes) {
    Tensor y(rows, classes);
    for (std::size_t i = 0; i < rows; ++i) y.at(i, rng.below(classes)) = 1.0;
    return y;
}

inline double objective_total(const RocketNet& net, const Tensor& x, const Tensor& y,
                              const HintLossSpec& hint, double lambda, bool gradient_block) {
    Tape t;
    TapeNet tn = stage_params(t, net);
    const RocketOutputs out = forward_rocket(t, tn, t.constant(x));
    return rocket_objective(t, out, t.constant(y), hint, lambda, gradient_block).total_v();
}

inline std::vector<Tensor> tape_param_grads(const RocketNet& net, const Tensor& x,
                                            const Tensor& y, const HintLossSpec& hint,
                                            double lambda, bool gradient_block) {
    Tape t;
    TapeNet tn = stage_params(t, net);
    const RocketOutputs out = forward_rocket(t, tn, t.constant(x));
    const ObjectiveParts parts =
        rocket_objective(t, out, t.constant(y), hint, lambda, gradient_block);
    t.backward(parts.total);
    std::vector<Tensor> grads;
    for (const auto& part : {tn.shared, tn.light, tn.booster}) {
        for (const auto& layer : part) {
            grads.push_back(t.grad(layer[0]));
            grads.push_back(t.grad(layer[1]));
        }
    }
    return grads;
}

}  // namespace detail

// Every parameter gradient of the joint objective on random small nets,
// against central finite differences.  The hint kind, weight and batch size
// rotate per net; the booster stays in the differentiated graph (no gradient
// block), since blocked parameters deliberately diverge from the objective's
// true derivative.
inline CheckOutcome check_objective_fd(const CheckOptions& opts) {
    Rng rng(opts.seed);
    CheckOutcome out;
    out.name = "objective_vs_finite_diff";
    out.tolerance = 1e-4;
    for (std::size_t n = 0; n < opts.fd_nets; ++n) {
        const ArchSpec arch = detail::random_small_arch(rng);
        RocketNet net = init_rocket(arch, rng.bits());
        detail::randomize_biases(net, rng);
        const std::size_t rows = 1 + rng.below(3);
        const Tensor x = detail::random_inputs(rng, rows, arch.input_dim, 1.0);
        const Tensor y = detail::one_hot_rows(rng, rows, arch.classes);
        HintLossSpec hint;
        switch (n % 3) {
            case 0: hint.kind = HintKind::SoftmaxMSE; break;
            case 1: hint.kind = HintKind::LogitMimic; break;
            default: hint.kind = HintKind::Distill; hint.temperature = 3.0; break;
        }
        const double lambda = n % 5 == 4 ? 0.0 : 0.5 + 0.5 * static_cast<double>(n % 4);

        const std::vector<Tensor> analytic =
            detail::tape_param_grads(net, x, y, hint, lambda, false);
        std::vector<ParamRef> refs = named_params(net);
        for (std::size_t r = 0; r < refs.size(); ++r) {
            Tensor* param = refs[r].tensor;
            const Tensor saved = *param;
            const Tensor fd = finite_diff_grad(
                [&](const Tensor& probe) {
                    *param = probe;
                    const double v =
                        detail::objective_total(net, x, y, hint, lambda, false);
                    *param = saved;
                    return v;
                },
                saved, 1e-5);
            out.worst = std::max(out.worst, max_relative_error(analytic[r], fd));
        }
    }
    out.pass = out.worst < out.tolerance;
    return out;
}

namespace detail {

inline CheckOutcome oracle_comparison(const CheckOptions& opts, HintKind kind,
                                      const char* name) {
    Rng rng(opts.seed + (kind == HintKind::SoftmaxMSE ? 11 : 13));
    CheckOutcome out;
    out.name = name;
    out.tolerance = 1e-6;
    const HintLossSpec spec{kind};
    for (std::size_t c = 0; c < opts.oracle_cases; ++c) {
        const std::size_t n = 2 + rng.below(6);
        const Tensor l = random_inputs(rng, 1, n, 4.0);
        const Tensor z = random_inputs(rng, 1, n, 4.0);

        Tape t;
        const Value lv = t.leaf(l);
        const Value hint = hint_loss(t, spec, lv, Value{}, t.constant(z));
        t.backward(hint);
        const Tensor tape_grad = t.grad(lv);

        Tensor oracle = analytic_hint_gradient(spec, l, z);
        if (opts.corrupt_mse_oracle && kind == HintKind::SoftmaxMSE) {
            oracle.data()[0] += 1e-3;
        }
        out.worst = std::max(out.worst, max_relative_error(tape_grad, oracle));
    }
    out.pass = out.worst < out.tolerance;
    return out;
}

}  // namespace detail

// Reverse-mode gradient of the softmax-MSE hint against its closed form.
inline CheckOutcome check_mse_oracle(const CheckOptions& opts) {
    return detail::oracle_comparison(opts, HintKind::SoftmaxMSE, "softmax_mse_grad_vs_oracle");
}

// Reverse-mode gradient of the logit-mimic hint against its closed form.
inline CheckOutcome check_mimic_oracle(const CheckOptions& opts) {
    return detail::oracle_comparison(opts, HintKind::LogitMimic, "logit_mimic_grad_vs_oracle");
}

// High-temperature behaviour of the compensated distillation hint: as T
// grows, its gradient wrt the light logits approaches (1/N)(l - z) for
// centered logits.  Checked at T = 10, 100, 1000: within 5% at T = 100 and
// strictly improving along the sweep.
inline CheckOutcome check_distill_limit(const CheckOptions& opts) {
    Rng rng(opts.seed + 17);
    CheckOutcome out;
    out.name = "distill_high_temperature_limit";
    out.tolerance = 0.05;
    const double temps[3] = {10.0, 100.0, 1000.0};
    double worst[3] = {0.0, 0.0, 0.0};
    const std::size_t cases = 50;
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t n = 2 + rng.below(6);
        Tensor l = detail::random_inputs(rng, 1, n, 0.5);
        Tensor z = detail::random_inputs(rng, 1, n, 0.5);
        // The limit carries the mean offset (l_bar - z_bar) along; centering
        // removes it while keeping every logit inside [-1, 1].
        for (Tensor* v : {&l, &z}) {
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) mean += v->data()[i];
            mean /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) v->data()[i] -= mean;
        }
        Tensor target(1, n);
        double target_norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            target.data()[i] = (l.data()[i] - z.data()[i]) / static_cast<double>(n);
            target_norm += target.data()[i] * target.data()[i];
        }
        target_norm = std::sqrt(target_norm);
        if (target_norm < 1e-9) continue;

        for (int ti = 0; ti < 3; ++ti) {
            const HintLossSpec spec{HintKind::Distill, temps[ti]};
            Tape t;
            const Value lv = t.leaf(l);
            const Value hint = hint_loss(t, spec, lv, Value{}, t.constant(z));
            t.backward(hint);
            const Tensor g = t.grad(lv);
            double diff = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = g.data()[i] - target.data()[i];
                diff += d * d;
            }
            worst[ti] = std::max(worst[ti], std::sqrt(diff) / target_norm);
        }
    }
    out.worst = worst[1];
    out.pass = worst[1] < out.tolerance && worst[0] > worst[1] && worst[1] > worst[2];
    out.note = "T=10: " + detail::format_sci(worst[0]) + ", T=100: " +
               detail::format_sci(worst[1]) + ", T=1000: " + detail::format_sci(worst[2]);
    return out;
}

namespace detail {

// Finite differences through one forward path: d(mean of all logits)/dparam.
inline CheckOutcome path_fd_check(const ArchSpec& arch, Path which, const char* name,
                                  std::uint64_t seed) {
    CheckOutcome out;
    out.name = name;
    out.tolerance = 1e-4;
    Rng rng(seed);
    RocketNet net = init_rocket(arch, rng.bits());
    randomize_biases(net, rng);
    const std::size_t rows = 2;
    const Tensor x = random_inputs(rng, rows, arch.input_dim, 1.0);
    const double scale = 1.0 / static_cast<double>(rows * arch.classes);

    auto scalar = [&](const RocketNet& n) {
        const Tensor logits = which == Path::Light ? light_only_forward(n, x)
                                                   : booster_forward(n, x);
        double s = 0.0;
        for (std::size_t i = 0; i < logits.size(); ++i) s += logits.data()[i];
        return s * scale;
    };

    Tape t;
    TapeNet tn = stage_params(t, net);
    const Value logits = which == Path::Light ? light_logits(t, tn, t.constant(x))
                                              : booster_logits(t, tn, t.constant(x));
    t.backward(t.scale(t.sum_all(logits), scale));

    const ParamSet sel = which == Path::Light ? ParamSet::LightPath : ParamSet::BoosterPath;
    auto grads_for = [&t, &tn, sel] {
        std::vector<Tensor> g;
        auto take = [&](const std::vector<std::array<Value, 2>>& layers) {
            for (const auto& layer : layers) {
                g.push_back(t.grad(layer[0]));
                g.push_back(t.grad(layer[1]));
            }
        };
        take(tn.shared);
        if (sel == ParamSet::LightPath) take(tn.light);
        else take(tn.booster);
        return g;
    };
    const std::vector<Tensor> analytic = grads_for();

    std::vector<ParamRef> refs = named_params(net, sel);
    for (std::size_t r = 0; r < refs.size(); ++r) {
        Tensor* param = refs[r].tensor;
        const Tensor saved = *param;
        const Tensor fd = finite_diff_grad(
            [&](const Tensor& probe) {
                *param = probe;
                const double v = scalar(net);
                *param = saved;
                return v;
            },
            saved, 1e-5);
        out.worst = std::max(out.worst, max_relative_error(analytic[r], fd));
    }
    out.pass = out.worst < out.tolerance;
    return out;
}

}  // namespace detail

// Forward-path gradients through a residual trunk and an interval-sharing
// stack, the two topologies the random sweep does not cover.
inline std::vector<CheckOutcome> check_model_paths(const CheckOptions& opts) {
    ArchSpec residual;
    residual.input_dim = 3;
    residual.classes = 3;
    residual.shared = {4, 4};
    residual.light = {4};
    residual.booster = {4, 4};
    residual.residual = true;

    ArchSpec interval;
    interval.input_dim = 3;
    interval.classes = 3;
    interval.sharing = Sharing::Interval;
    interval.residual = true;
    interval.shared = {5, 5};
    interval.booster = {5};

    return {
        detail::path_fd_check(residual, Path::Light, "residual_light_path_vs_finite_diff",
                              opts.seed + 23),
        detail::path_fd_check(residual, Path::Booster, "residual_booster_path_vs_finite_diff",
                              opts.seed + 29),
        detail::path_fd_check(interval, Path::Light, "interval_light_path_vs_finite_diff",
                              opts.seed + 31),
        detail::path_fd_check(interval, Path::Booster, "interval_booster_path_vs_finite_diff",
                              opts.seed + 37),
    };
}

// scope: "all", or one of autodiff / objective / model.
inline std::vector<CheckOutcome> run_check_suite(const std::string& scope,
                                                 const CheckOptions& opts) {
    std::vector<CheckOutcome> outcomes;
    const bool all = scope == "all";
    if (!all && scope != "autodiff" && scope != "objective" && scope != "model") {
        throw SpecError("gradcheck: unknown scope '" + scope +
                        "' (expected all, autodiff, objective or model)");
    }
    if (all || scope == "autodiff") outcomes.push_back(check_objective_fd(opts));
    if (all || scope == "objective") {
        outcomes.push_back(check_mse_oracle(opts));
        outcomes.push_back(check_mimic_oracle(opts));
        outcomes.push_back(check_distill_limit(opts));
    }
    if (all || scope == "model") {
        for (CheckOutcome& c : check_model_paths(opts)) outcomes.push_back(std::move(c));
    }
    return outcomes;
}

}  // namespace rocket

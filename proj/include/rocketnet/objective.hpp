#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rocketnet/autodiff.hpp"
#include "rocketnet/errors.hpp"
#include "rocketnet/model.hpp"
#include "rocketnet/tensor.hpp"

namespace rocket {

// Which signal the light net mimics from the booster.
//
//   SoftmaxMSE: squared distance between the two softmax outputs.
//   LogitMimic: squared distance between the raw logits.  This is the
//     default; unlike SoftmaxMSE its gradient does not collapse when the
//     light net's softmax saturates.
//   Distill: temperature-softened cross-entropy, scaled by T^2 so the
//     gradient magnitude stays comparable across temperatures.
enum class HintKind { SoftmaxMSE, LogitMimic, Distill };

struct HintLossSpec {
    HintKind kind = HintKind::LogitMimic;
    double temperature = 4.0;        // Distill only
    bool swap_distill_target = false;  // Distill: treat the light net as target

    void validate() const {
        if (!(temperature > 0.0)) {
            throw SpecError("hint loss: temperature must be positive, got " +
                            std::to_string(temperature));
        }
    }
};

inline const char* hint_kind_name(HintKind k) {
    switch (k) {
        case HintKind::SoftmaxMSE: return "softmax_mse";
        case HintKind::LogitMimic: return "logit_mimic";
        default: return "distill";
    }
}

// Mean over the batch of -sum_i y_i * log(p_i), with the log floored (and
// capped, see kLogFloor) so the result is finite and never negative.  `y`
// must be a constant node of one-hot rows; `p` a probability node.
inline Value cross_entropy(Tape& t, Value y, Value p) {
    const Tensor& yt = t.value(y);
    const Tensor& pt = t.value(p);
    if (!yt.same_shape(pt)) {
        throw DimensionError("cross_entropy: labels " + yt.shape_str() + " vs probabilities " +
                             pt.shape_str());
    }
    const double inv_batch = -1.0 / static_cast<double>(pt.rows());
    return t.scale(t.sum_all(t.mul(y, t.log_eps(p))), inv_batch);
}

// Hint loss between the light net (live l and p nodes from the forward) and
// a booster logit node.  The caller chooses what `z_node` is:
//   - the live booster logits, for plain joint training,
//   - stop_gradient(z), for gradient-blocked joint training,
//   - a constant, for distilling against a frozen teacher.
// Everything the loss needs from the booster side (its softmax, its softened
// softmax) is derived from `z_node` on the tape, so gradient flow follows
// from that one choice.  All variants are means over the batch.
inline Value hint_loss(Tape& t, const HintLossSpec& spec, Value l, Value p, Value z_node) {
    spec.validate();
    const Tensor& lt = t.value(l);
    const Tensor& zt = t.value(z_node);
    if (!lt.same_shape(zt)) {
        throw DimensionError("hint_loss: light logits " + lt.shape_str() +
                             " vs booster logits " + zt.shape_str());
    }
    const double inv_batch = 1.0 / static_cast<double>(lt.rows());
    switch (spec.kind) {
        case HintKind::SoftmaxMSE: {
            if (!p.valid()) p = t.softmax(l);
            Value d = t.sub(p, t.softmax(z_node));
            return t.scale(t.sum_all(t.mul(d, d)), inv_batch);
        }
        case HintKind::LogitMimic: {
            Value d = t.sub(l, z_node);
            return t.scale(t.sum_all(t.mul(d, d)), inv_batch);
        }
        default: {
            const double T = spec.temperature;
            Value soft_l = t.softmax(t.scale(l, 1.0 / T));
            Value soft_z = t.softmax(t.scale(z_node, 1.0 / T));
            Value target = spec.swap_distill_target ? soft_l : soft_z;
            Value pred = spec.swap_distill_target ? soft_z : soft_l;
            return t.scale(t.sum_all(t.mul(target, t.log_eps(pred))), -T * T * inv_batch);
        }
    }
}

// The four scalars of one training step, all on the tape.  total drives
// backward(); the others are read for logging and decomposition checks.
struct ObjectiveParts {
    Value ce_light;
    Value ce_booster;
    Value hint;
    Value total;

    double ce_light_v() const { return ce_light.tensor().data()[0]; }
    double ce_booster_v() const { return ce_booster.tensor().data()[0]; }
    double hint_v() const { return hint.tensor().data()[0]; }
    double total_v() const { return total.tensor().data()[0]; }
};

// Joint co-training objective:
//
//     total = H(y, p) + H(y, q) + lambda * hint(l, z)
//
// With gradient_block on, the entire booster forward inside the hint term is
// detached: the hint can pull the light net (and the trunk through the light
// path) toward the booster, but contributes exactly nothing to W_B or to the
// trunk through the booster path.  The booster keeps learning from ground
// truth alone.
//
// With lambda == 0 the hint term is evaluated fully detached and left out of
// total, so total == ce_light + ce_booster exactly and the training
// trajectory is bit-for-bit what the hint-free run produces.
inline ObjectiveParts rocket_objective(Tape& t, const RocketOutputs& out, Value y,
                                       const HintLossSpec& spec, double lambda,
                                       bool gradient_block) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw SpecError("objective: lambda must be finite and >= 0");
    }
    ObjectiveParts parts;
    parts.ce_light = cross_entropy(t, y, out.p);
    parts.ce_booster = cross_entropy(t, y, out.q);
    if (lambda == 0.0) {
        parts.hint = hint_loss(t, spec, t.stop_gradient(out.l), t.stop_gradient(out.p),
                               t.stop_gradient(out.z));
        parts.total = t.add(parts.ce_light, parts.ce_booster);
        return parts;
    }
    Value z_for_hint = gradient_block ? t.stop_gradient(out.z) : out.z;
    parts.hint = hint_loss(t, spec, out.l, out.p, z_for_hint);
    parts.total = t.add(t.add(parts.ce_light, parts.ce_booster), t.scale(parts.hint, lambda));
    return parts;
}

// Extra distillation term against a frozen teacher's logits, used on top of
// the joint objective.  `z_star` is staged as a constant, so no gradient can
// reach the teacher.
inline Value frozen_distill_term(Tape& t, Value l, const Tensor& z_star, double temperature,
                                 bool swap_target = false) {
    HintLossSpec spec{HintKind::Distill, temperature, swap_target};
    return hint_loss(t, spec, l, Value{}, t.constant(z_star));
}

// ---------------------------------------------------------------------------
// Closed-form hint gradients (single row).
//
// These are the independent oracle route: the same quantities the tape
// computes by reverse sweep, written out analytically.  Tests require the
// two routes to agree; neither is ever replaced by the other.
//
// Conventions, fixed here once:
//   SoftmaxMSE: d/dl_i ||p - q||^2 = 2 p_i (p_i - q_i + sum_k p_k (q_k - p_k))
//   LogitMimic: d/dl_i ||l - z||^2 = 2 (l_i - z_i)   (true factor 2 kept)
//   Distill:    (1 / (N T^2)) (l_i - z_i), the high-temperature limit form
//               *without* the T^2 compensation the loss itself carries.
// ---------------------------------------------------------------------------
inline Tensor analytic_hint_gradient(const HintLossSpec& spec, const Tensor& l,
                                     const Tensor& z) {
    spec.validate();
    if (l.rows() != 1 || z.rows() != 1 || !l.same_shape(z)) {
        throw DimensionError("analytic_hint_gradient: want matching 1xN rows, got " +
                             l.shape_str() + " and " + z.shape_str());
    }
    const std::size_t n = l.cols();
    Tensor g(1, n);
    switch (spec.kind) {
        case HintKind::SoftmaxMSE: {
            const Tensor p = kernel::softmax(l);
            const Tensor q = kernel::softmax(z);
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                s += p.data()[k] * (q.data()[k] - p.data()[k]);
            }
            for (std::size_t i = 0; i < n; ++i) {
                g.data()[i] = 2.0 * p.data()[i] * (p.data()[i] - q.data()[i] + s);
            }
            return g;
        }
        case HintKind::LogitMimic: {
            for (std::size_t i = 0; i < n; ++i) {
                g.data()[i] = 2.0 * (l.data()[i] - z.data()[i]);
            }
            return g;
        }
        default: {
            const double c = 1.0 / (static_cast<double>(n) * spec.temperature * spec.temperature);
            for (std::size_t i = 0; i < n; ++i) {
                g.data()[i] = c * (l.data()[i] - z.data()[i]);
            }
            return g;
        }
    }
}

// Where the SoftmaxMSE hint goes numb: coordinates whose softmax-difference
// gradient is vanishingly small even though the logits disagree badly.  The
// logit-mimic gradient at the same coordinate stays proportional to the gap,
// which is the practical argument for mimicking logits.
struct ProbeCoord {
    double softmax_mse_mag = 0.0;
    double logit_mimic_mag = 0.0;
    bool flagged = false;
};

struct ProbeReport {
    std::vector<ProbeCoord> coords;
    bool any_flagged = false;
};

inline constexpr double kProbeTinyGradient = 1e-6;
inline constexpr double kProbeLogitGap = 1.0;

inline ProbeReport grad_vanishing_probe(const Tensor& l, const Tensor& z) {
    const Tensor g_mse = analytic_hint_gradient({HintKind::SoftmaxMSE}, l, z);
    const Tensor g_mimic = analytic_hint_gradient({HintKind::LogitMimic}, l, z);
    ProbeReport report;
    report.coords.resize(l.cols());
    for (std::size_t i = 0; i < l.cols(); ++i) {
        ProbeCoord& c = report.coords[i];
        c.softmax_mse_mag = std::fabs(g_mse.data()[i]);
        c.logit_mimic_mag = std::fabs(g_mimic.data()[i]);
        c.flagged = c.softmax_mse_mag < kProbeTinyGradient &&
                    std::fabs(l.data()[i] - z.data()[i]) > kProbeLogitGap;
        report.any_flagged = report.any_flagged || c.flagged;
    }
    return report;
}

}  // namespace rocket

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rocketnet/errors.hpp"
#include "rocketnet/tensor.hpp"

namespace rocket {

class Tape;

// Handle to a node on a tape.  Cheap to copy; the tape owns all storage.
struct Value {
    Tape* tape = nullptr;
    std::int32_t id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& tensor() const;
};

// Floor added inside log so that softmax outputs that underflow to 0 stay
// finite; the argument is also capped at 1 so cross-entropy of an exact
// one-hot match is exactly 0 and never negative.
inline constexpr double kLogFloor = 1e-12;

// ---------------------------------------------------------------------------
// Tape: reverse-mode autodiff over 2-D tensors.
//
// Nodes are appended in creation order, which is already a topological order,
// so backward() is a single reverse sweep.  A tape is built per forward pass
// and thrown away after the optimizer step.  Gradients of independent
// sub-expressions accumulate additively into each node's grad slot.
// ---------------------------------------------------------------------------
class Tape {
    enum class Op : std::uint8_t {
        Leaf,      // differentiable input (parameter or batch input)
        Constant,  // non-differentiable input (labels, frozen teacher logits)
        Linear,    // x @ w + b
        Relu,
        Softmax,
        StopGrad,  // forwards values untouched, blocks all gradient flow
        Add,
        Sub,
        Mul,       // elementwise
        Scale,     // by a compile-time-fixed scalar (aux)
        LogEps,    // log(min(x + kLogFloor, 1))
        SumAll,    // total sum -> 1x1
    };

    struct Node {
        Tensor value;
        Op op;
        std::array<std::int32_t, 3> parent{-1, -1, -1};
        double aux = 0.0;
        bool requires_grad = false;
        bool has_grad = false;
        Tensor grad;
    };

  public:
    std::size_t size() const { return nodes_.size(); }

    const Tensor& value(Value v) const { return node(v).value; }

    // Gradient accumulated into v by backward() calls since the last
    // clear_grads().  Nodes the loss never reached report exact zeros.
    const Tensor& grad(Value v) {
        Node& n = node(v);
        if (!n.has_grad) {
            n.grad = Tensor::zeros(n.value.rows(), n.value.cols());
            n.has_grad = true;
        }
        return n.grad;
    }

    void clear_grads() {
        for (Node& n : nodes_) {
            n.has_grad = false;
            n.grad = Tensor();
        }
    }

    Value leaf(Tensor t) { return push(std::move(t), Op::Leaf, {}, 0.0, true); }

    Value constant(Tensor t) { return push(std::move(t), Op::Constant, {}, 0.0, false); }

    Value linear(Value x, Value w, Value b) {
        Tensor out = kernel::linear(value(x), value(w), value(b));
        return push(std::move(out), Op::Linear, {x, w, b});
    }

    Value relu(Value x) { return push(kernel::relu(value(x)), Op::Relu, {x}); }

    Value softmax(Value x) { return push(kernel::softmax(value(x)), Op::Softmax, {x}); }

    // Identical forward values (bitwise), zero gradient flow: downstream
    // consumers treat the result as a constant.
    Value stop_gradient(Value x) { return push(value(x), Op::StopGrad, {x}); }

    Value add(Value a, Value b) { return binary(a, b, Op::Add, "add"); }
    Value sub(Value a, Value b) { return binary(a, b, Op::Sub, "sub"); }
    Value mul(Value a, Value b) { return binary(a, b, Op::Mul, "mul"); }

    Value scale(Value x, double c) {
        Tensor out = value(x);
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= c;
        out.check_finite("scale");
        return push(std::move(out), Op::Scale, {x}, c);
    }

    Value log_eps(Value x) {
        Tensor out = value(x);
        for (std::size_t i = 0; i < out.size(); ++i) {
            out.data()[i] = std::log(std::min(out.data()[i] + kLogFloor, 1.0));
        }
        out.check_finite("log_eps");
        return push(std::move(out), Op::LogEps, {x});
    }

    Value sum_all(Value x) {
        double s = 0.0;
        const Tensor& t = value(x);
        for (std::size_t i = 0; i < t.size(); ++i) s += t.data()[i];
        Tensor out = Tensor::scalar(s);
        out.check_finite("sum_all");
        return push(std::move(out), Op::SumAll, {x});
    }

    // Reverse sweep from `root`, which must be a 1x1 scalar.  Seeds the root
    // gradient with 1 and accumulates into every reachable differentiable
    // node.  May be called for several roots on one tape; gradients add up
    // until clear_grads().
    void backward(Value root) {
        Node& r = node(root);
        if (r.value.rows() != 1 || r.value.cols() != 1) {
            throw ContractError("backward: root node is " + r.value.shape_str() +
                                ", expected a 1x1 scalar");
        }
        accumulate(root.id, Tensor::scalar(1.0));
        for (std::int32_t id = root.id; id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (!n.has_grad || !n.requires_grad) continue;
            propagate(n);
        }
    }

  private:
    Value push(Tensor t, Op op, std::initializer_list<Value> parents, double aux = 0.0,
               bool rg = false) {
        Node n;
        n.value = std::move(t);
        n.op = op;
        n.aux = aux;
        n.requires_grad = rg;
        int i = 0;
        for (Value p : parents) {
            if (p.tape != this) {
                throw ContractError("tape op: operand lives on a different tape");
            }
            n.parent[i++] = p.id;
            if (node(p).requires_grad) n.requires_grad = true;
        }
        if (op == Op::Constant || op == Op::StopGrad) n.requires_grad = false;
        nodes_.push_back(std::move(n));
        return Value{this, static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    Value binary(Value a, Value b, Op op, const char* name) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        if (!ta.same_shape(tb)) {
            throw DimensionError(std::string(name) + ": " + ta.shape_str() + " vs " +
                                 tb.shape_str());
        }
        Tensor out(ta.rows(), ta.cols());
        for (std::size_t i = 0; i < out.size(); ++i) {
            switch (op) {
                case Op::Add: out.data()[i] = ta.data()[i] + tb.data()[i]; break;
                case Op::Sub: out.data()[i] = ta.data()[i] - tb.data()[i]; break;
                default: out.data()[i] = ta.data()[i] * tb.data()[i]; break;
            }
        }
        out.check_finite(name);
        return push(std::move(out), op, {a, b});
    }

    Node& node(Value v) { return nodes_[static_cast<std::size_t>(v.id)]; }
    const Node& node(Value v) const { return nodes_[static_cast<std::size_t>(v.id)]; }

    void accumulate(std::int32_t id, const Tensor& delta) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        // Constants and blocked nodes absorb nothing; their slots stay
        // exact zeros.
        if (n.op == Op::Constant || n.op == Op::StopGrad) return;
        if (!n.has_grad) {
            n.grad = Tensor::zeros(n.value.rows(), n.value.cols());
            n.has_grad = true;
        }
        for (std::size_t i = 0; i < delta.size(); ++i) n.grad.data()[i] += delta.data()[i];
    }

    const Tensor& pval(const Node& n, int slot) const {
        return nodes_[static_cast<std::size_t>(n.parent[slot])].value;
    }

    bool pneeds(const Node& n, int slot) const {
        return nodes_[static_cast<std::size_t>(n.parent[slot])].requires_grad;
    }

    void propagate(Node& n) {
        const Tensor& g = n.grad;
        switch (n.op) {
            case Op::Leaf:
            case Op::Constant:
            case Op::StopGrad:
                return;
            case Op::Linear: {
                const Tensor& x = pval(n, 0);
                const Tensor& w = pval(n, 1);
                const std::size_t bs = x.rows(), k = x.cols(), m = w.cols();
                if (pneeds(n, 0)) {
                    Tensor gx(bs, k);
                    for (std::size_t i = 0; i < bs; ++i) {
                        for (std::size_t p = 0; p < k; ++p) {
                            double s = 0.0;
                            const double* gi = g.data() + i * m;
                            const double* wp = w.data() + p * m;
                            for (std::size_t c = 0; c < m; ++c) s += gi[c] * wp[c];
                            gx.at(i, p) = s;
                        }
                    }
                    accumulate(n.parent[0], gx);
                }
                if (pneeds(n, 1)) {
                    Tensor gw(k, m);
                    for (std::size_t i = 0; i < bs; ++i) {
                        const double* xi = x.data() + i * k;
                        const double* gi = g.data() + i * m;
                        for (std::size_t p = 0; p < k; ++p) {
                            double* gwp = gw.data() + p * m;
                            const double xv = xi[p];
                            for (std::size_t c = 0; c < m; ++c) gwp[c] += xv * gi[c];
                        }
                    }
                    accumulate(n.parent[1], gw);
                }
                if (pneeds(n, 2)) {
                    Tensor gb(1, m);
                    for (std::size_t i = 0; i < bs; ++i) {
                        const double* gi = g.data() + i * m;
                        for (std::size_t c = 0; c < m; ++c) gb.data()[c] += gi[c];
                    }
                    accumulate(n.parent[2], gb);
                }
                return;
            }
            case Op::Relu: {
                if (!pneeds(n, 0)) return;
                const Tensor& x = pval(n, 0);
                Tensor gx(x.rows(), x.cols());
                // Subgradient 0 at exactly 0.
                for (std::size_t i = 0; i < gx.size(); ++i) {
                    gx.data()[i] = x.data()[i] > 0.0 ? g.data()[i] : 0.0;
                }
                accumulate(n.parent[0], gx);
                return;
            }
            case Op::Softmax: {
                if (!pneeds(n, 0)) return;
                const Tensor& p = n.value;
                Tensor gx(p.rows(), p.cols());
                for (std::size_t i = 0; i < p.rows(); ++i) {
                    const double* pi = p.data() + i * p.cols();
                    const double* gi = g.data() + i * p.cols();
                    double dot = 0.0;
                    for (std::size_t c = 0; c < p.cols(); ++c) dot += gi[c] * pi[c];
                    double* oi = gx.data() + i * p.cols();
                    for (std::size_t c = 0; c < p.cols(); ++c) oi[c] = pi[c] * (gi[c] - dot);
                }
                accumulate(n.parent[0], gx);
                return;
            }
            case Op::Add: {
                if (pneeds(n, 0)) accumulate(n.parent[0], g);
                if (pneeds(n, 1)) accumulate(n.parent[1], g);
                return;
            }
            case Op::Sub: {
                if (pneeds(n, 0)) accumulate(n.parent[0], g);
                if (pneeds(n, 1)) {
                    Tensor neg = g;
                    for (std::size_t i = 0; i < neg.size(); ++i) neg.data()[i] = -neg.data()[i];
                    accumulate(n.parent[1], neg);
                }
                return;
            }
            case Op::Mul: {
                for (int slot = 0; slot < 2; ++slot) {
                    if (!pneeds(n, slot)) continue;
                    const Tensor& other = pval(n, 1 - slot);
                    Tensor gp(other.rows(), other.cols());
                    for (std::size_t i = 0; i < gp.size(); ++i) {
                        gp.data()[i] = g.data()[i] * other.data()[i];
                    }
                    accumulate(n.parent[slot], gp);
                }
                return;
            }
            case Op::Scale: {
                if (!pneeds(n, 0)) return;
                Tensor gp = g;
                for (std::size_t i = 0; i < gp.size(); ++i) gp.data()[i] *= n.aux;
                accumulate(n.parent[0], gp);
                return;
            }
            case Op::LogEps: {
                if (!pneeds(n, 0)) return;
                const Tensor& x = pval(n, 0);
                Tensor gp(x.rows(), x.cols());
                for (std::size_t i = 0; i < gp.size(); ++i) {
                    const double shifted = x.data()[i] + kLogFloor;
                    gp.data()[i] = shifted < 1.0 ? g.data()[i] / shifted : 0.0;
                }
                accumulate(n.parent[0], gp);
                return;
            }
            case Op::SumAll: {
                if (!pneeds(n, 0)) return;
                const Tensor& x = pval(n, 0);
                accumulate(n.parent[0], Tensor(x.rows(), x.cols(), g.data()[0]));
                return;
            }
        }
    }

    std::vector<Node> nodes_;

    friend struct Value;
};

inline const Tensor& Value::tensor() const { return tape->value(*this); }

}  // namespace rocket

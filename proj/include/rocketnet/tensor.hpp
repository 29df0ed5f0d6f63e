#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "rocketnet/errors.hpp"

namespace rocket {

// Dense row-major matrix of doubles.  Every tensor in the library is 2-D;
// scalars are 1x1 and batches of vectors are batch x dim.  Construction and
// every mutation path that can introduce data from outside verify finiteness,
// so NaN/Inf never propagate silently through a forward pass.
class Tensor {
  public:
    Tensor() = default;

    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), v_(rows * cols, fill) {
        check_finite_value(fill, "Tensor fill");
    }

    Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
        : rows_(rows), cols_(cols), v_(std::move(values)) {
        if (v_.size() != rows_ * cols_) {
            throw DimensionError("Tensor: " + std::to_string(v_.size()) +
                                 " values for shape " + shape_str());
        }
        check_finite("Tensor construction");
    }

    static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor(rows, cols, 0.0); }

    static Tensor scalar(double v) { return Tensor(1, 1, std::vector<double>{v}); }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return v_.size(); }

    double& at(std::size_t r, std::size_t c) { return v_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return v_[r * cols_ + c]; }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }

    const std::vector<double>& values() const { return v_; }

    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    // Bitwise equality, used by determinism tests.
    bool bitwise_equal(const Tensor& o) const {
        if (!same_shape(o)) return false;
        for (std::size_t i = 0; i < v_.size(); ++i) {
            if (std::memcmp(&v_[i], &o.v_[i], sizeof(double)) != 0) return false;
        }
        return true;
    }

    void check_finite(const std::string& op) const {
        for (double x : v_) {
            if (!std::isfinite(x)) {
                throw NumericError(op + " produced a non-finite value on a " +
                                   shape_str() + " tensor");
            }
        }
    }

  private:
    static void check_finite_value(double x, const std::string& where) {
        if (!std::isfinite(x)) throw NumericError(where + ": non-finite value");
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> v_;
};

// ---------------------------------------------------------------------------
// Forward kernels.
//
// Both the autodiff tape and the plain evaluation forwards call these, which
// is what makes "training forward" and "inference forward" bitwise identical:
// the arithmetic and its order live in exactly one place.
// ---------------------------------------------------------------------------

// Running count of scalar multiplications performed by matmul kernels.
// Incremented analytically (rows * inner * cols per call), so reading it is
// exact and costs nothing per element.  Used to verify that the light path
// really is cheaper than the full forward.
inline std::uint64_t& multiplication_counter() {
    static std::uint64_t n = 0;
    return n;
}

namespace kernel {

// out = x @ w + b, with b a 1 x cols row broadcast over the batch.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.cols() != w.rows()) {
        throw DimensionError("linear: x is " + x.shape_str() + " but w is " + w.shape_str());
    }
    if (b.rows() != 1 || b.cols() != w.cols()) {
        throw DimensionError("linear: bias is " + b.shape_str() + ", want 1x" +
                             std::to_string(w.cols()));
    }
    const std::size_t n = x.rows(), k = x.cols(), m = w.cols();
    Tensor out(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        double* o = out.data() + i * m;
        for (std::size_t c = 0; c < m; ++c) o[c] = b.data()[c];
        const double* xi = x.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double xv = xi[p];
            const double* wp = w.data() + p * m;
            for (std::size_t c = 0; c < m; ++c) o[c] += xv * wp[c];
        }
    }
    multiplication_counter() += static_cast<std::uint64_t>(n) * k * m;
    out.check_finite("linear");
    return out;
}

inline Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out.data()[i] < 0.0) out.data()[i] = 0.0;
    }
    return out;
}

// Row-wise softmax with max subtraction, so arbitrarily large logits stay in
// range.  Each output row sums to 1 up to rounding.
inline Tensor softmax(const Tensor& x) {
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* xi = x.data() + i * x.cols();
        double* oi = out.data() + i * x.cols();
        double mx = xi[0];
        for (std::size_t c = 1; c < x.cols(); ++c) mx = std::max(mx, xi[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) {
            oi[c] = std::exp(xi[c] - mx);
            sum += oi[c];
        }
        for (std::size_t c = 0; c < x.cols(); ++c) oi[c] /= sum;
    }
    out.check_finite("softmax");
    return out;
}

}  // namespace kernel
}  // namespace rocket

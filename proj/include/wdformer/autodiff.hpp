/*
 * Copyright 2026 The WDformer Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wdformer/errors.hpp"
#include "wdformer/tensor.hpp"

namespace wdformer {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;
};

struct TensorNode {
    Tensor value;
    Tensor grad;  // allocated during backward for nodes that require it
    bool requires_grad = false;
};

/// Define-by-run reverse-mode tape.
///
/// Nodes are appended in evaluation order, so every record's inputs precede
/// it and a single reverse sweep visits each record exactly once.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad) {
        nodes_.push_back(TensorNode{std::move(value), Tensor{}, requires_grad});
        records_.push_back(Record{});
        return Var{this, nodes_.size() - 1};
    }
    Var constant(Tensor value) { return leaf(std::move(value), false); }
    Var parameter(Tensor value) { return leaf(std::move(value), true); }

    /// Appends an operation result. The backward closure is kept only when
    /// some input needs a gradient and recording is enabled.
    Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
        bool needs_grad = false;
        std::vector<std::size_t> ids;
        ids.reserve(inputs.size());
        for (const Var& in : inputs) {
            if (in.tape != this) throw PreconditionError("tape: operand belongs to a different tape");
            ids.push_back(in.id);
            needs_grad = needs_grad || nodes_[in.id].requires_grad;
        }
        needs_grad = needs_grad && grad_enabled_;
#ifdef WDFORMER_CHECK_FINITE
        if (!value.all_finite()) {
            bool inputs_finite = true;
            for (std::size_t id : ids) inputs_finite = inputs_finite && nodes_[id].value.all_finite();
            if (inputs_finite) throw NumericalError("tape: non-finite output from finite inputs");
        }
#endif
        nodes_.push_back(TensorNode{std::move(value), Tensor{}, needs_grad});
        records_.push_back(Record{std::move(ids), needs_grad ? std::move(backward) : BackwardFn{}});
        return Var{this, nodes_.size() - 1};
    }
    Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
        return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
    }

    const Tensor& value(Var v) const { return node(v).value; }
    const Tensor& value_at(std::size_t id) const { return nodes_[id].value; }
    /// Id the next recorded node will receive.
    std::size_t next_id() const noexcept { return nodes_.size(); }
    bool requires_grad(Var v) const { return node(v).requires_grad; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    /// Gradient of the last backward() target with respect to `v`.
    const Tensor& grad(Var v) const {
        const TensorNode& n = node(v);
        if (!n.requires_grad) throw PreconditionError("tape: gradient requested for a node without requires_grad");
        if (n.grad.empty()) throw PreconditionError("tape: backward() has not been run");
        return n.grad;
    }

    /// Zero-initialized on first use; backward closures add into it.
    Tensor& grad_accumulator(std::size_t id) {
        TensorNode& n = nodes_[id];
        if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
        return n.grad;
    }

    void backward(Var loss) {
        const TensorNode& target = node(loss);
        if (target.value.size() != 1) {
            throw PreconditionError("backward: loss must be scalar, got shape " + shape_string(target.value.shape()));
        }
        for (TensorNode& n : nodes_) n.grad = Tensor{};
        if (!target.requires_grad) throw PreconditionError("backward: loss does not depend on any parameter");
        grad_accumulator(loss.id).fill(1.0);
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            if (!records_[i].backward || nodes_[i].grad.empty()) continue;
            records_[i].backward(*this, nodes_[i].grad);
        }
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (nodes_[i].requires_grad) grad_accumulator(i);
        }
    }

    std::size_t size() const noexcept { return nodes_.size(); }
    const std::vector<std::size_t>& inputs(Var v) const { return records_.at(v.id).inputs; }

    void set_grad_enabled(bool enabled) noexcept { grad_enabled_ = enabled; }
    bool grad_enabled() const noexcept { return grad_enabled_; }

private:
    struct Record {
        std::vector<std::size_t> inputs;
        BackwardFn backward;
    };

    const TensorNode& node(Var v) const {
        if (v.tape != this || v.id >= nodes_.size()) throw PreconditionError("tape: variable is not on this tape");
        return nodes_[v.id];
    }

    std::vector<TensorNode> nodes_;
    std::vector<Record> records_;
    bool grad_enabled_ = true;
};

namespace kernels {

// C(m x n) += A(m x k) * B(k x n)
inline void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C(m x n) += A(m x k) * B(n x k)^T
inline void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            c[i * n + j] += s;
        }
    }
}

// C(m x n) += A(k x m)^T * B(k x n)
inline void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace kernels

namespace detail {

inline Tape& tape_of(Var a) {
    if (!a.tape) throw PreconditionError("autodiff: null variable");
    return *a.tape;
}

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

inline void require_matrix(const char* op, const Tensor& a) {
    if (a.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
}

inline Shape with_last_dim(Shape s, std::size_t last) {
    s.back() = last;
    return s;
}

}  // namespace detail

inline Var add(Var a, Var b) {
    Tape& t = detail::tape_of(a);
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(b);
    detail::require_same_shape("add", x, y);
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
    return t.record(std::move(out), {a, b}, [ia = a.id, ib = b.id](Tape& tp, const Tensor& g) {
        for (std::size_t id : {ia, ib}) {
            if (!tp.requires_grad(id)) continue;
            Tensor& acc = tp.grad_accumulator(id);
            for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
        }
    });
}

inline Var sub(Var a, Var b) {
    Tape& t = detail::tape_of(a);
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(b);
    detail::require_same_shape("sub", x, y);
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
    return t.record(std::move(out), {a, b}, [ia = a.id, ib = b.id](Tape& tp, const Tensor& g) {
        if (tp.requires_grad(ia)) {
            Tensor& acc = tp.grad_accumulator(ia);
            for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
        }
        if (tp.requires_grad(ib)) {
            Tensor& acc = tp.grad_accumulator(ib);
            for (std::size_t i = 0; i < g.size(); ++i) acc[i] -= g[i];
        }
    });
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
    Tape& t = detail::tape_of(a);
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(b);
    detail::require_same_shape("mul", x, y);
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
    return t.record(std::move(out), {a, b}, [ia = a.id, ib = b.id](Tape& tp, const Tensor& g) {
        const Tensor& xv = tp.value_at(ia);
        const Tensor& yv = tp.value_at(ib);
        if (tp.requires_grad(ia)) {
            Tensor& acc = tp.grad_accumulator(ia);
            for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * yv[i];
        }
        if (tp.requires_grad(ib)) {
            Tensor& acc = tp.grad_accumulator(ib);
            for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * xv[i];
        }
    });
}

inline Var scale(Var a, double factor) {
    Tape& t = detail::tape_of(a);
    Tensor out = t.value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor;
    return t.record(std::move(out), {a}, [ia = a.id, factor](Tape& tp, const Tensor& g) {
        Tensor& acc = tp.grad_accumulator(ia);
        for (std::size_t i = 0; i < g.size(); ++i) acc[i] += factor * g[i];
    });
}

inline Var add_scalar(Var a, double c) {
    Tape& t = detail::tape_of(a);
    Tensor out = t.value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c;
    return t.record(std::move(out), {a}, [ia = a.id](Tape& tp, const Tensor& g) {
        Tensor& acc = tp.grad_accumulator(ia);
        for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    });
}

/// `s * a` where `s` is a scalar node.
inline Var scale_by(Var a, Var s) {
    Tape& t = detail::tape_of(a);
    const Tensor& x = t.value(a);
    const Tensor& sv = t.value(s);
    if (sv.size() != 1) throw DimensionError("scale_by: factor must be scalar, got " + shape_string(sv.shape()));
    const double f = sv[0];
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= f;
    return t.record(std::move(out), {a, s}, [ia = a.id, is = s.id](Tape& tp, const Tensor& g) {
        const Tensor& xv = tp.value_at(ia);
        const double fv = tp.value_at(is)[0];
        if (tp.requires_grad(ia)) {
            Tensor& acc = tp.grad_accumulator(ia);
            for (std::size_t i = 0; i < g.size(); ++i) acc[i] += fv * g[i];
        }
        if (tp.requires_grad(is)) {
            double d = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) d += g[i] * xv[i];
            tp.grad_accumulator(is)[0] += d;
        }
    });
}

inline Var exp(Var a) {
    Tape& t = detail::tape_of(a);
    Tensor out = t.value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
    return t.record(std::move(out), {a}, [ia = a.id, iy = t.next_id()](Tape& tp, const Tensor& g) {
        const Tensor& yv = tp.value_at(iy);
        Tensor& acc = tp.grad_accumulator(ia);
        for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * yv[i];
    });
}

/// Sum of all elements, shape {1}.
inline Var sum(Var a) {
    Tape& t = detail::tape_of(a);
    const Tensor& x = t.value(a);
    double s = 0.0;
    for (double v : x.data()) s += v;
    return t.record(Tensor::scalar(s), {a}, [ia = a.id](Tape& tp, const Tensor& g) {
        Tensor& acc = tp.grad_accumulator(ia);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[0];
    });
}

inline Var mean(Var a) {
    const double n = static_cast<double>(detail::tape_of(a).value(a).size());
    return scale(sum(a), 1.0 / n);
}

/// Inner product of two equally sized tensors, shape {1}.
inline Var dot(Var a, Var b) {
    Tape& t = detail::tape_of(a);
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(b);
    if (x.size() != y.size()) {
        throw DimensionError("dot: size mismatch " + shape_string(x.shape()) + " vs " + shape_string(y.shape()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return t.record(Tensor::scalar(s), {a, b}, [ia = a.id, ib = b.id](Tape& tp, const Tensor& g) {
        const Tensor& xv = tp.value_at(ia);
        const Tensor& yv = tp.value_at(ib);
        if (tp.requires_grad(ia)) {
            Tensor& acc = tp.grad_accumulator(ia);
            for (std::size_t i = 0; i < xv.size(); ++i) acc[i] += g[0] * yv[i];
        }
        if (tp.requires_grad(ib)) {
            Tensor& acc = tp.grad_accumulator(ib);
            for (std::size_t i = 0; i < xv.size(); ++i) acc[i] += g[0] * xv[i];
        }
    });
}

inline Var matmul(Var a, Var b) {
    Tape& t = detail::tape_of(a);
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(b);
    detail::require_matrix("matmul", x);
    detail::require_matrix("matmul", y);
    if (x.cols() != y.rows()) {
        throw DimensionError("matmul: inner dimensions disagree, " + shape_string(x.shape()) + " * " +
                             shape_string(y.shape()));
    }
    const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
    Tensor out = Tensor::matrix(m, n);
    kernels::gemm_nn(m, k, n, x.data().data(), y.data().data(), out.data().data());
    return t.record(std::move(out), {a, b}, [ia = a.id, ib = b.id, m, k, n](Tape& tp, const Tensor& g) {
        const Tensor& xv = tp.value_at(ia);
        const Tensor& yv = tp.value_at(ib);
        if (tp.requires_grad(ia)) {
            kernels::gemm_nt(m, n, k, g.data().data(), yv.data().data(), tp.grad_accumulator(ia).data().data());
        }
        if (tp.requires_grad(ib)) {
            kernels::gemm_tn(k, m, n, xv.data().data(), g.data().data(), tp.grad_accumulator(ib).data().data());
        }
    });
}

inline Var transpose(Var a) {
    Tape& t = detail::tape_of(a);
    const Tensor& x = t.value(a);
    detail::require_matrix("transpose", x);
    return t.record(transposed(x), {a}, [ia = a.id](Tape& tp, const Tensor& g) {
        Tensor& acc = tp.grad_accumulator(ia);
        const std::size_t r = g.rows(), c = g.cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) acc[j * r + i] += g[i * c + j];
    });
}

/// Adds a length-n vector to every row of a (...)xn tensor.
inline Var add_bias(Var a, Var bias) {
    Tape& t = detail::tape_of(a);
    const Tensor& x = t.value(a);
    const Tensor& b = t.value(bias);
    if (b.size() != x.cols()) {
        throw DimensionError("add_bias: bias " + shape_string(b.shape()) + " does not match " + shape_string(x.shape()));
    }
    Tensor out = x;
    const std::size_t n = x.cols();
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < n; ++c) out[r * n + c] += b[c];
    return t.record(std::move(out), {a, bias}, [ia = a.id, ib = bias.id, n](Tape& tp, const Tensor& g) {
        if (tp.requires_grad(ia)) {
            Tensor& acc = tp.grad_accumulator(ia);
            for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
        }
        if (tp.requires_grad(ib)) {
            Tensor& acc = tp.grad_accumulator(ib);
            for (std::size_t i = 0; i < g.size(); ++i) acc[i % n] += g[i];
        }
    });
}

/// Affine map along the last dimension: x(...xin) * w(in x out) + b(out).
inline Var linear(Var x, Var w, Var b) {
    Tape& t = detail::tape_of(x);
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    const Tensor& bv = t.value(b);
    detail::require_matrix("linear", wv);
    if (xv.cols() != wv.rows() || bv.size() != wv.cols()) {
        throw DimensionError("linear: input " + shape_string(xv.shape()) + ", weight " + shape_string(wv.shape()) +
                             ", bias " + shape_string(bv.shape()));
    }
    const std::size_t m = xv.rows(), k = wv.rows(), n = wv.cols();
    Tensor out(detail::with_last_dim(xv.shape(), n));
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) out[r * n + c] = bv[c];
    kernels::gemm_nn(m, k, n, xv.data().data(), wv.data().data(), out.data().data());
    return t.record(std::move(out), {x, w, b},
                    [ix = x.id, iw = w.id, ib = b.id, m, k, n](Tape& tp, const Tensor& g) {
                        const Tensor& xv2 = tp.value_at(ix);
                        const Tensor& wv2 = tp.value_at(iw);
                        if (tp.requires_grad(ix)) {
                            kernels::gemm_nt(m, n, k, g.data().data(), wv2.data().data(),
                                             tp.grad_accumulator(ix).data().data());
                        }
                        if (tp.requires_grad(iw)) {
                            kernels::gemm_tn(k, m, n, xv2.data().data(), g.data().data(),
                                             tp.grad_accumulator(iw).data().data());
                        }
                        if (tp.requires_grad(ib)) {
                            Tensor& acc = tp.grad_accumulator(ib);
                            for (std::size_t i = 0; i < g.size(); ++i) acc[i % n] += g[i];
                        }
                    });
}

/// Row-wise softmax along the last dimension with max subtraction.
inline Var softmax_rows(Var a) {
    Tape& t = detail::tape_of(a);
    Tensor out = t.value(a);
    const std::size_t n = out.cols();
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        double mx = row[0];
        for (double v : row) mx = std::max(mx, v);
        double z = 0.0;
        for (double& v : row) {
            v = std::exp(v - mx);
            z += v;
        }
        for (double& v : row) v /= z;
    }
    return t.record(std::move(out), {a}, [ia = a.id, iy = t.next_id(), n](Tape& tp, const Tensor& g) {
        const Tensor& yv = tp.value_at(iy);
        Tensor& acc = tp.grad_accumulator(ia);
        for (std::size_t r = 0; r < yv.rows(); ++r) {
            const std::size_t off = r * n;
            double s = 0.0;
            for (std::size_t c = 0; c < n; ++c) s += g[off + c] * yv[off + c];
            for (std::size_t c = 0; c < n; ++c) acc[off + c] += yv[off + c] * (g[off + c] - s);
        }
    });
}

/// x / sqrt(mean(x^2) + eps) * gain along the last dimension.
inline Var rms_norm(Var x, Var gain, double eps) {
    Tape& t = detail::tape_of(x);
    const Tensor& xv = t.value(x);
    const Tensor& gv = t.value(gain);
    const std::size_t d = xv.cols();
    if (gv.size() != d) {
        throw DimensionError("rms_norm: gain " + shape_string(gv.shape()) + " does not match " + shape_string(xv.shape()));
    }
    const std::size_t rows = xv.rows();
    Tensor out(xv.shape());
    std::vector<double> inv_rms(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double ms = 0.0;
        for (std::size_t c = 0; c < d; ++c) ms += xv[r * d + c] * xv[r * d + c];
        ms /= static_cast<double>(d);
        inv_rms[r] = 1.0 / std::sqrt(ms + eps);
        for (std::size_t c = 0; c < d; ++c) out[r * d + c] = xv[r * d + c] * inv_rms[r] * gv[c];
    }
    return t.record(std::move(out), {x, gain},
                    [ix = x.id, ig = gain.id, d, rows, inv = std::move(inv_rms)](Tape& tp, const Tensor& g) {
                        const Tensor& xv2 = tp.value_at(ix);
                        const Tensor& gv2 = tp.value_at(ig);
                        const bool gx = tp.requires_grad(ix), gg = tp.requires_grad(ig);
                        Tensor* ax = gx ? &tp.grad_accumulator(ix) : nullptr;
                        Tensor* ag = gg ? &tp.grad_accumulator(ig) : nullptr;
                        for (std::size_t r = 0; r < rows; ++r) {
                            const std::size_t off = r * d;
                            double proj = 0.0;
                            for (std::size_t c = 0; c < d; ++c) {
                                const double xhat = xv2[off + c] * inv[r];
                                if (ag) (*ag)[c] += g[off + c] * xhat;
                                proj += g[off + c] * gv2[c] * xhat;
                            }
                            if (!ax) continue;
                            proj /= static_cast<double>(d);
                            for (std::size_t c = 0; c < d; ++c) {
                                const double xhat = xv2[off + c] * inv[r];
                                (*ax)[off + c] += (g[off + c] * gv2[c] - xhat * proj) * inv[r];
                            }
                        }
                    });
}

/// Standardizes each row (population variance) then applies gain and bias.
inline Var layer_norm(Var x, Var gain, Var bias, double eps) {
    Tape& t = detail::tape_of(x);
    const Tensor& xv = t.value(x);
    const Tensor& gv = t.value(gain);
    const Tensor& bv = t.value(bias);
    const std::size_t d = xv.cols();
    if (gv.size() != d || bv.size() != d) throw DimensionError("layer_norm: gain/bias do not match " + shape_string(xv.shape()));
    const std::size_t rows = xv.rows();
    Tensor out(xv.shape());
    Tensor xhat(xv.shape());
    std::vector<double> rstd(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t off = r * d;
        double mu = 0.0;
        for (std::size_t c = 0; c < d; ++c) mu += xv[off + c];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t c = 0; c < d; ++c) var += (xv[off + c] - mu) * (xv[off + c] - mu);
        var /= static_cast<double>(d);
        rstd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < d; ++c) {
            xhat[off + c] = (xv[off + c] - mu) * rstd[r];
            out[off + c] = xhat[off + c] * gv[c] + bv[c];
        }
    }
    return t.record(std::move(out), {x, gain, bias},
                    [ix = x.id, ig = gain.id, ib = bias.id, d, rows, xh = std::move(xhat), rs = std::move(rstd)](Tape& tp, const Tensor& g) {
                        const Tensor& gv2 = tp.value_at(ig);
                        Tensor* ax = tp.requires_grad(ix) ? &tp.grad_accumulator(ix) : nullptr;
                        Tensor* ag = tp.requires_grad(ig) ? &tp.grad_accumulator(ig) : nullptr;
                        Tensor* ab = tp.requires_grad(ib) ? &tp.grad_accumulator(ib) : nullptr;
                        const double inv_d = 1.0 / static_cast<double>(d);
                        for (std::size_t r = 0; r < rows; ++r) {
                            const std::size_t off = r * d;
                            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                            for (std::size_t c = 0; c < d; ++c) {
                                if (ag) (*ag)[c] += g[off + c] * xh[off + c];
                                if (ab) (*ab)[c] += g[off + c];
                                const double dxh = g[off + c] * gv2[c];
                                mean_dxhat += dxh;
                                mean_dxhat_xhat += dxh * xh[off + c];
                            }
                            if (!ax) continue;
                            mean_dxhat *= inv_d;
                            mean_dxhat_xhat *= inv_d;
                            for (std::size_t c = 0; c < d; ++c) {
                                const double dxh = g[off + c] * gv2[c];
                                (*ax)[off + c] += rs[r] * (dxh - mean_dxhat - xh[off + c] * mean_dxhat_xhat);
                            }
                        }
                    });
}

/// Exact (erf-based) GELU.
inline Var gelu(Var a) {
    Tape& t = detail::tape_of(a);
    Tensor out = t.value(a);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = out[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * (1.0 / std::numbers::sqrt2)));
    }
    return t.record(std::move(out), {a}, [ia = a.id](Tape& tp, const Tensor& g) {
        const Tensor& xv = tp.value_at(ia);
        Tensor& acc = tp.grad_accumulator(ia);
        constexpr double inv_sqrt_2pi = 0.3989422804014327;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = xv[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * (1.0 / std::numbers::sqrt2)));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
            acc[i] += g[i] * (cdf + x * pdf);
        }
    });
}

inline Var slice_cols(Var a, std::size_t start, std::size_t count) {
    Tape& t = detail::tape_of(a);
    const Tensor& x = t.value(a);
    detail::require_matrix("slice_cols", x);
    if (count == 0 || start + count > x.cols()) {
        throw DimensionError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                             ") out of range for " + shape_string(x.shape()));
    }
    const std::size_t rows = x.rows(), n = x.cols();
    Tensor out = Tensor::matrix(rows, count);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < count; ++c) out(r, c) = x[r * n + start + c];
    return t.record(std::move(out), {a}, [ia = a.id, start, count, rows, n](Tape& tp, const Tensor& g) {
        Tensor& acc = tp.grad_accumulator(ia);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < count; ++c) acc[r * n + start + c] += g[r * count + c];
    });
}

inline Var slice_rows(Var a, std::size_t start, std::size_t count) {
    Tape& t = detail::tape_of(a);
    const Tensor& x = t.value(a);
    detail::require_matrix("slice_rows", x);
    if (count == 0 || start + count > x.rows()) {
        throw DimensionError("slice_rows: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                             ") out of range for " + shape_string(x.shape()));
    }
    const std::size_t n = x.cols();
    std::vector<double> vals(x.data().begin() + static_cast<std::ptrdiff_t>(start * n),
                             x.data().begin() + static_cast<std::ptrdiff_t>((start + count) * n));
    return t.record(Tensor({count, n}, std::move(vals)), {a}, [ia = a.id, start, n](Tape& tp, const Tensor& g) {
        Tensor& acc = tp.grad_accumulator(ia);
        for (std::size_t i = 0; i < g.size(); ++i) acc[start * n + i] += g[i];
    });
}

inline Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
    Tape& t = detail::tape_of(parts[0]);
    const std::size_t rows = t.value(parts[0]).rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const Var& p : parts) {
        const Tensor& v = t.value(p);
        detail::require_matrix("concat_cols", v);
        if (v.rows() != rows) throw DimensionError("concat_cols: row count mismatch " + shape_string(v.shape()));
        widths.push_back(v.cols());
        total += v.cols();
    }
    Tensor out = Tensor::matrix(rows, total);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& v = t.value(parts[k]);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < widths[k]; ++c) out(r, off + c) = v(r, c);
        off += widths[k];
    }
    std::vector<std::size_t> ids;
    for (const Var& p : parts) ids.push_back(p.id);
    return t.record(std::move(out), parts, [ids, widths, rows, total](Tape& tp, const Tensor& g) {
        std::size_t o = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (tp.requires_grad(ids[k])) {
                Tensor& acc = tp.grad_accumulator(ids[k]);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < widths[k]; ++c) acc[r * widths[k] + c] += g[r * total + o + c];
            }
            o += widths[k];
        }
    });
}

inline Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("concat_rows: nothing to concatenate");
    Tape& t = detail::tape_of(parts[0]);
    const std::size_t n = t.value(parts[0]).cols();
    std::vector<double> vals;
    std::vector<std::size_t> sizes;
    for (const Var& p : parts) {
        const Tensor& v = t.value(p);
        detail::require_matrix("concat_rows", v);
        if (v.cols() != n) throw DimensionError("concat_rows: column count mismatch " + shape_string(v.shape()));
        vals.insert(vals.end(), v.data().begin(), v.data().end());
        sizes.push_back(v.size());
    }
    const std::size_t rows = vals.size() / n;
    std::vector<std::size_t> ids;
    for (const Var& p : parts) ids.push_back(p.id);
    return t.record(Tensor({rows, n}, std::move(vals)), parts, [ids, sizes](Tape& tp, const Tensor& g) {
        std::size_t o = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (tp.requires_grad(ids[k])) {
                Tensor& acc = tp.grad_accumulator(ids[k]);
                for (std::size_t i = 0; i < sizes[k]; ++i) acc[i] += g[o + i];
            }
            o += sizes[k];
        }
    });
}

/// A linear map applied independently to each row. `adjoint` must be the
/// transpose of `forward`; it carries gradients back through the map.
using RowMap = std::function<void(std::span<const double> in, std::span<double> out)>;

inline Var map_rows(Var a, std::size_t out_cols, RowMap forward, RowMap adjoint) {
    Tape& t = detail::tape_of(a);
    const Tensor& x = t.value(a);
    detail::require_matrix("map_rows", x);
    const std::size_t rows = x.rows(), in_cols = x.cols();
    Tensor out = Tensor::matrix(rows, out_cols);
    for (std::size_t r = 0; r < rows; ++r) forward(x.row(r), out.row(r));
    return t.record(std::move(out), {a},
                    [ia = a.id, rows, in_cols, out_cols, adj = std::move(adjoint)](Tape& tp, const Tensor& g) {
                        Tensor& acc = tp.grad_accumulator(ia);
                        std::vector<double> tmp(in_cols);
                        for (std::size_t r = 0; r < rows; ++r) {
                            adj(g.data().subspan(r * out_cols, out_cols), tmp);
                            for (std::size_t c = 0; c < in_cols; ++c) acc[r * in_cols + c] += tmp[c];
                        }
                    });
}

/// Mean squared error against a constant target, shape {1}.
inline Var mse_loss(Var pred, const Tensor& target) {
    Tape& t = detail::tape_of(pred);
    const Tensor& p = t.value(pred);
    detail::require_same_shape("mse_loss", p, target);
    const double n = static_cast<double>(p.size());
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - target[i]) * (p[i] - target[i]);
    Var tgt = t.constant(target);
    return t.record(Tensor::scalar(s / n), {pred, tgt}, [ip = pred.id, it = tgt.id, n](Tape& tp, const Tensor& g) {
        const Tensor& pv = tp.value_at(ip);
        const Tensor& tv = tp.value_at(it);
        Tensor& acc = tp.grad_accumulator(ip);
        for (std::size_t i = 0; i < pv.size(); ++i) acc[i] += g[0] * 2.0 * (pv[i] - tv[i]) / n;
    });
}

}  // namespace wdformer

// Copyright 2026 The ddit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ddit/common.hpp"

// Reverse-mode autodiff over double matrices, sized for desk-scale training.
// A node's value is a matrix; token sequences are stored sample-major, i.e. a
// batch of B sequences of T tokens of width D is one (B*T) x D matrix. Ops
// that need the sequence structure (attention, per-sample broadcasts) take B
// or T explicitly.

namespace ddit {

class Tape;

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class Tape {
  public:
    bool grad_enabled = true;

    Var leaf(Matrix value, bool requires_grad = false) {
        return push(std::move(value), requires_grad && grad_enabled, {});
    }

    const Matrix& val(Var v) const { return node(v).value; }

    /// Gradient accumulator, zero until backward() touches it. Reading the
    /// gradient of an unreached node yields exact zeros.
    Matrix grad_of(Var v) const {
        const NodeRec& n = node(v);
        if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

    bool requires_grad(Var v) const { return node(v).requires_grad; }
    size_t size() const { return nodes_.size(); }

    void backward(Var loss) {
        const NodeRec& l = node(loss);
        if (l.value.rows() != 1 || l.value.cols() != 1)
            throw std::invalid_argument("backward: loss must be a 1x1 node");
        grad(loss.id)(0, 0) += 1.0;
        for (int id = loss.id; id >= 0; --id) {
            NodeRec& n = nodes_[static_cast<size_t>(id)];
            if (n.grad.size() != 0 && n.back) {
                cursor_ = id;
                n.back(*this);
            }
        }
    }

    // ---- elementwise -----------------------------------------------------

    Var add(Var a, Var b) {
        check_same(a, b, "add");
        return unary_or_binary(a, b, val(a) + val(b), [](Tape& t, int a_, int b_, const Matrix& g) {
            t.acc(a_, g);
            t.acc(b_, g);
        });
    }

    Var sub(Var a, Var b) {
        check_same(a, b, "sub");
        return unary_or_binary(a, b, val(a) - val(b), [](Tape& t, int a_, int b_, const Matrix& g) {
            t.acc(a_, g);
            t.acc(b_, -g);
        });
    }

    Var mul(Var a, Var b) {
        check_same(a, b, "mul");
        return unary_or_binary(a, b, val(a).cwiseProduct(val(b)),
                               [](Tape& t, int a_, int b_, const Matrix& g) {
                                   if (t.wants(a_)) t.acc(a_, g.cwiseProduct(t.nodes_[b_].value));
                                   if (t.wants(b_)) t.acc(b_, g.cwiseProduct(t.nodes_[a_].value));
                               });
    }

    Var square(Var a) { return mul(a, a); }

    Var scale(Var a, double c) {
        return unary(a, c * val(a), [c](Tape& t, int a_, const Matrix& g) { t.acc(a_, c * g); });
    }

    Var add_scalar(Var a, double c) {
        return unary(a, (val(a).array() + c).matrix(),
                     [](Tape& t, int a_, const Matrix& g) { t.acc(a_, g); });
    }

    // ---- linear algebra ---------------------------------------------------

    Var matmul(Var a, Var b) {
        if (val(a).cols() != val(b).rows())
            throw std::invalid_argument("matmul: inner dimensions disagree");
        return unary_or_binary(a, b, val(a) * val(b), [](Tape& t, int a_, int b_, const Matrix& g) {
            if (t.wants(a_)) t.grad(a_).noalias() += g * t.nodes_[b_].value.transpose();
            if (t.wants(b_)) t.grad(b_).noalias() += t.nodes_[a_].value.transpose() * g;
        });
    }

    /// y = x + bias, bias a 1 x D row broadcast over all rows.
    Var add_row(Var x, Var bias) {
        if (val(bias).rows() != 1 || val(bias).cols() != val(x).cols())
            throw std::invalid_argument("add_row: bias must be 1 x cols(x)");
        return unary_or_binary(x, bias, val(x).rowwise() + val(bias).row(0),
                               [](Tape& t, int x_, int b_, const Matrix& g) {
                                   t.acc(x_, g);
                                   if (t.wants(b_)) t.grad(b_).row(0) += g.colwise().sum();
                               });
    }

    /// Per-sample broadcast product: row r of x times row (r / rows_per_sample)
    /// of s, where s is B x D.
    Var bcast_mul(Var x, Var s, Index rows_per_sample) {
        check_bcast(x, s, rows_per_sample, "bcast_mul");
        Matrix out = val(x);
        apply_bcast(out, val(s), rows_per_sample,
                    [](auto row, const auto& srow) { row.array() *= srow.array(); });
        return unary_or_binary(
            x, s, std::move(out), [rows_per_sample](Tape& t, int x_, int s_, const Matrix& g) {
                const Matrix& xv = t.nodes_[x_].value;
                const Matrix& sv = t.nodes_[s_].value;
                if (t.wants(x_)) {
                    Matrix gx = g;
                    apply_bcast(gx, sv, rows_per_sample,
                                [](auto row, const auto& srow) { row.array() *= srow.array(); });
                    t.acc(x_, gx);
                }
                if (t.wants(s_)) {
                    Matrix& gs = t.grad(s_);
                    for (Index r = 0; r < g.rows(); ++r)
                        gs.row(r / rows_per_sample).array() +=
                            g.row(r).array() * xv.row(r).array();
                }
            });
    }

    /// Per-sample broadcast add: row r of x plus row (r / rows_per_sample) of s.
    Var bcast_add(Var x, Var s, Index rows_per_sample) {
        check_bcast(x, s, rows_per_sample, "bcast_add");
        Matrix out = val(x);
        apply_bcast(out, val(s), rows_per_sample,
                    [](auto row, const auto& srow) { row += srow; });
        return unary_or_binary(x, s, std::move(out),
                               [rows_per_sample](Tape& t, int x_, int s_, const Matrix& g) {
                                   t.acc(x_, g);
                                   if (t.wants(s_)) {
                                       Matrix& gs = t.grad(s_);
                                       for (Index r = 0; r < g.rows(); ++r)
                                           gs.row(r / rows_per_sample) += g.row(r);
                                   }
                               });
    }

    // ---- nonlinearities ----------------------------------------------------

    Var gelu(Var a) {
        const Matrix& x = val(a);
        Matrix y = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)); });
        return unary(a, std::move(y), [](Tape& t, int a_, const Matrix& g) {
            const Matrix& x = t.nodes_[a_].value;
            Matrix d = x.unaryExpr([](double v) {
                double phi = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
                double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
                return phi + v * pdf;
            });
            t.acc(a_, g.cwiseProduct(d));
        });
    }

    Var silu(Var a) {
        const Matrix& x = val(a);
        Matrix y = x.unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); });
        return unary(a, std::move(y), [](Tape& t, int a_, const Matrix& g) {
            const Matrix& x = t.nodes_[a_].value;
            Matrix d = x.unaryExpr([](double v) {
                double s = 1.0 / (1.0 + std::exp(-v));
                return s * (1.0 + v * (1.0 - s));
            });
            t.acc(a_, g.cwiseProduct(d));
        });
    }

    /// Row-wise layer norm without affine parameters.
    Var layernorm(Var a, double eps = 1e-6) {
        const Matrix& x = val(a);
        Matrix y(x.rows(), x.cols());
        Vector inv_std(x.rows());
        for (Index r = 0; r < x.rows(); ++r) {
            double mu  = x.row(r).mean();
            double var = (x.row(r).array() - mu).square().mean();
            inv_std[r] = 1.0 / std::sqrt(var + eps);
            y.row(r)   = (x.row(r).array() - mu) * inv_std[r];
        }
        Matrix y_copy = y;
        return unary(a, std::move(y),
                     [inv_std = std::move(inv_std), y = std::move(y_copy)](Tape& t, int a_,
                                                                           const Matrix& g) {
                         Matrix dx(g.rows(), g.cols());
                         for (Index r = 0; r < g.rows(); ++r) {
                             double gm  = g.row(r).mean();
                             double gym = g.row(r).cwiseProduct(y.row(r)).mean();
                             dx.row(r) =
                                 ((g.row(r).array() - gm) - y.row(r).array() * gym) * inv_std[r];
                         }
                         t.acc(a_, dx);
                     });
    }

    // ---- row plumbing --------------------------------------------------------

    /// out.row(i) = x.row(idx[i]); indices may repeat (broadcast).
    Var gather_rows(Var x, std::vector<Index> idx) {
        const Matrix& xv = val(x);
        Matrix out(static_cast<Index>(idx.size()), xv.cols());
        for (size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] < 0 || idx[i] >= xv.rows())
                throw std::out_of_range("gather_rows: index out of range");
            out.row(static_cast<Index>(i)) = xv.row(idx[i]);
        }
        return unary(x, std::move(out), [idx = std::move(idx)](Tape& t, int x_, const Matrix& g) {
            Matrix& gx = t.grad(x_);
            for (size_t i = 0; i < idx.size(); ++i)
                gx.row(idx[i]) += g.row(static_cast<Index>(i));
        });
    }

    Var slice_cols(Var x, Index start, Index count) {
        const Matrix& xv = val(x);
        if (start < 0 || count < 1 || start + count > xv.cols())
            throw std::out_of_range("slice_cols: bad range");
        return unary(x, xv.middleCols(start, count),
                     [start, count](Tape& t, int x_, const Matrix& g) {
                         t.grad(x_).middleCols(start, count) += g;
                     });
    }

    /// Row-level assembly from two sources; plan[i] = (source 0/1, source row).
    Var assemble_rows(Var a, Var b, std::vector<std::pair<int, Index>> plan) {
        const Matrix& av = val(a);
        const Matrix& bv = val(b);
        if (av.cols() != bv.cols()) throw std::invalid_argument("assemble_rows: width mismatch");
        Matrix out(static_cast<Index>(plan.size()), av.cols());
        for (size_t i = 0; i < plan.size(); ++i) {
            const Matrix& src = plan[i].first == 0 ? av : bv;
            if (plan[i].second < 0 || plan[i].second >= src.rows())
                throw std::out_of_range("assemble_rows: row out of range");
            out.row(static_cast<Index>(i)) = src.row(plan[i].second);
        }
        return unary_or_binary(a, b, std::move(out),
                               [plan = std::move(plan)](Tape& t, int a_, int b_, const Matrix& g) {
                                   for (size_t i = 0; i < plan.size(); ++i) {
                                       int src = plan[i].first == 0 ? a_ : b_;
                                       if (t.wants(src))
                                           t.grad(src).row(plan[i].second) +=
                                               g.row(static_cast<Index>(i));
                                   }
                               });
    }

    // ---- attention -----------------------------------------------------------

    /// Multi-head scaled dot-product attention over B sequences of T tokens.
    /// q, k, v are (B*T) x D with D = heads * head_dim.
    Var attention(Var q, Var k, Var v, Index batch, Index tokens, Index heads) {
        const Matrix& qv = val(q);
        const Index d    = qv.cols();
        if (d % heads != 0) throw std::invalid_argument("attention: dim not divisible by heads");
        if (qv.rows() != batch * tokens || val(k).rows() != qv.rows() || val(v).rows() != qv.rows())
            throw std::invalid_argument("attention: bad row count");
        const Index dh     = d / heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

        std::vector<Matrix> probs(static_cast<size_t>(batch * heads));
        Matrix out(qv.rows(), d);
        for (Index b = 0; b < batch; ++b) {
            auto qb = qv.middleRows(b * tokens, tokens);
            auto kb = val(k).middleRows(b * tokens, tokens);
            auto vb = val(v).middleRows(b * tokens, tokens);
            for (Index h = 0; h < heads; ++h) {
                Matrix s = scale * qb.middleCols(h * dh, dh) *
                           kb.middleCols(h * dh, dh).transpose();
                for (Index r = 0; r < tokens; ++r) {
                    double m   = s.row(r).maxCoeff();
                    s.row(r)   = (s.row(r).array() - m).exp();
                    s.row(r)  /= s.row(r).sum();
                }
                out.block(b * tokens, h * dh, tokens, dh).noalias() =
                    s * vb.middleCols(h * dh, dh);
                probs[static_cast<size_t>(b * heads + h)] = std::move(s);
            }
        }

        int qi = q.id, ki = k.id, vi = v.id;
        bool rg = grad_enabled && (requires_grad(q) || requires_grad(k) || requires_grad(v));
        if (!rg) return push(std::move(out), false, {});
        return push(std::move(out), true,
                    [qi, ki, vi, batch, tokens, heads, dh, scale,
                     probs = std::move(probs)](Tape& t) {
                        const Matrix& g  = t.nodes_[t.cursor_].grad;
                        const Matrix& qv = t.nodes_[qi].value;
                        const Matrix& kv = t.nodes_[ki].value;
                        const Matrix& vv = t.nodes_[vi].value;
                        for (Index b = 0; b < batch; ++b)
                            for (Index h = 0; h < heads; ++h) {
                                const Matrix& p = probs[static_cast<size_t>(b * heads + h)];
                                auto go = g.block(b * tokens, h * dh, tokens, dh);
                                auto vb = vv.block(b * tokens, h * dh, tokens, dh);
                                Matrix dp = go * vb.transpose();
                                Matrix ds(tokens, tokens);
                                for (Index r = 0; r < tokens; ++r) {
                                    double dot = p.row(r).dot(dp.row(r));
                                    ds.row(r)  = p.row(r).cwiseProduct(
                                        (dp.row(r).array() - dot).matrix());
                                }
                                if (t.wants(vi))
                                    t.grad(vi).block(b * tokens, h * dh, tokens, dh).noalias() +=
                                        p.transpose() * go;
                                if (t.wants(qi))
                                    t.grad(qi).block(b * tokens, h * dh, tokens, dh).noalias() +=
                                        scale * ds * kv.block(b * tokens, h * dh, tokens, dh);
                                if (t.wants(ki))
                                    t.grad(ki).block(b * tokens, h * dh, tokens, dh).noalias() +=
                                        scale * ds.transpose() *
                                        qv.block(b * tokens, h * dh, tokens, dh);
                            }
                    });
    }

    // ---- losses ----------------------------------------------------------------

    /// Per-row cross-entropy against constant target rows:
    /// out[r] = -sum_k targets(r,k) * ln softmax(z(r,:)/tau)[k].
    /// Probabilities are floored at 1e-12 inside the log.
    Var softmax_xent(Var z, Matrix targets, double tau) {
        if (!(tau > 0.0)) throw std::invalid_argument("softmax_xent: tau must be > 0");
        const Matrix& zv = val(z);
        if (targets.rows() != zv.rows() || targets.cols() != zv.cols())
            throw std::invalid_argument("softmax_xent: target shape mismatch");
        constexpr double kFloor = 1e-12;
        Matrix probs(zv.rows(), zv.cols());
        Matrix ce(zv.rows(), 1);
        for (Index r = 0; r < zv.rows(); ++r) {
            Eigen::RowVectorXd y = zv.row(r) / tau;
            double m = y.maxCoeff();
            for (Index c = 0; c < y.size(); ++c) y[c] = std::exp(y[c] - m);
            y /= y.sum();
            probs.row(r) = y;
            ce(r, 0)     = -(targets.row(r).array() *
                         y.array().max(kFloor).log())
                            .sum();
        }
        return unary(z, std::move(ce),
                     [probs = std::move(probs), targets = std::move(targets), tau](
                         Tape& t, int z_, const Matrix& g) {
                         // d ce_r / d z(r,:) = (softmax * sum(targets) - targets) / tau
                         Matrix dz(probs.rows(), probs.cols());
                         for (Index r = 0; r < probs.rows(); ++r)
                             dz.row(r) = g(r, 0) / tau *
                                         (probs.row(r) * targets.row(r).sum() - targets.row(r));
                         t.acc(z_, dz);
                     });
    }

    Var mean_all(Var a) {
        const Matrix& x = val(a);
        const double n  = static_cast<double>(x.size());
        Matrix out(1, 1);
        out(0, 0) = x.sum() / n;
        return unary(a, std::move(out), [n](Tape& t, int a_, const Matrix& g) {
            t.grad(a_).array() += g(0, 0) / n;
        });
    }

    /// Value passes through; gradients do not.
    Var detach(Var a) { return push(val(a), false, {}); }

  private:
    struct NodeRec {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        std::function<void(Tape&)> back;
    };

    std::vector<NodeRec> nodes_;
    int cursor_ = -1;  // node whose backward closure is running

    const NodeRec& node(Var v) const {
        if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size())
            throw std::out_of_range("Tape: invalid var");
        return nodes_[static_cast<size_t>(v.id)];
    }

    bool wants(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

    Matrix& grad(int id) {
        NodeRec& n = nodes_[static_cast<size_t>(id)];
        if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

    void acc(int id, const Matrix& g) {
        if (wants(id)) grad(id) += g;
    }

    Var push(Matrix value, bool requires_grad, std::function<void(Tape&)> back) {
        nodes_.push_back({std::move(value), {}, requires_grad, std::move(back)});
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    template <typename F>
    Var unary(Var a, Matrix out, F&& f) {
        if (!grad_enabled || !requires_grad(a)) return push(std::move(out), false, {});
        int ai = a.id;
        return push(std::move(out), true, [ai, f = std::forward<F>(f)](Tape& t) {
            f(t, ai, t.nodes_[static_cast<size_t>(t.cursor_)].grad);
        });
    }

    template <typename F>
    Var unary_or_binary(Var a, Var b, Matrix out, F&& f) {
        bool rg = grad_enabled && (requires_grad(a) || requires_grad(b));
        if (!rg) return push(std::move(out), false, {});
        int ai = a.id, bi = b.id;
        return push(std::move(out), true, [ai, bi, f = std::forward<F>(f)](Tape& t) {
            f(t, ai, bi, t.nodes_[static_cast<size_t>(t.cursor_)].grad);
        });
    }

    void check_same(Var a, Var b, const char* op) const {
        if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
            throw std::invalid_argument(std::string(op) + ": shape mismatch");
    }

    void check_bcast(Var x, Var s, Index rows_per_sample, const char* op) const {
        if (rows_per_sample < 1 || val(x).rows() % rows_per_sample != 0 ||
            val(s).rows() != val(x).rows() / rows_per_sample || val(s).cols() != val(x).cols())
            throw std::invalid_argument(std::string(op) + ": bad broadcast shape");
    }

    template <typename F>
    static void apply_bcast(Matrix& x, const Matrix& s, Index rows_per_sample, F&& f) {
        for (Index r = 0; r < x.rows(); ++r) f(x.row(r), s.row(r / rows_per_sample));
    }
};

}  // namespace ddit

#include "desmil/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace desmil {

Var Tape::record(Matrix value, bool needs_grad,
                 std::function<void(Tape&, const Matrix&)> backprop) {
    nodes_.push_back(Node{std::move(value), Matrix(), needs_grad, std::move(backprop)});
    return Var{this, nodes_.size() - 1};
}

Var Tape::leaf(Matrix value) { return record(std::move(value), true, nullptr); }

Var Tape::constant(Matrix value) { return record(std::move(value), false, nullptr); }

void Tape::check_same_tape(const Var& v, const char* op) const {
    if (v.tape != this) {
        throw std::invalid_argument(std::string(op) + ": var belongs to a different tape");
    }
}

void Tape::accumulate(std::size_t id, Matrix delta) {
    Node& n = nodes_[id];
    if (n.adjoint.empty()) {
        n.adjoint = std::move(delta);
    } else {
        n.adjoint += delta;
    }
}

void Tape::backward(const Var& loss) {
    check_same_tape(loss, "backward");
    const Node& top = nodes_[loss.id];
    if (top.value.rows() != 1 || top.value.cols() != 1) {
        throw std::invalid_argument("backward: loss must be a 1x1 scalar node");
    }
    for (Node& n : nodes_) n.adjoint = Matrix();
    accumulate(loss.id, Matrix::full(1, 1, 1.0));
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.backprop && !n.adjoint.empty()) {
            n.backprop(*this, n.adjoint);
        }
    }
    backward_done_ = true;
    backward_loss_ = loss.id;
}

Matrix Tape::grad(const Var& loss, const Var& wrt) {
    if (wrt.tape != this) {
        // Documented behavior: a var that never touched this tape has zero gradient.
        return Matrix(wrt.value().rows(), wrt.value().cols());
    }
    if (!backward_done_ || backward_loss_ != loss.id) {
        backward(loss);
    }
    const Node& n = nodes_[wrt.id];
    if (n.adjoint.empty()) {
        return Matrix(n.value.rows(), n.value.cols());
    }
    return n.adjoint;
}

const Matrix& Tape::adjoint_of(const Var& v) const {
    check_same_tape(v, "adjoint_of");
    return nodes_[v.id].adjoint;
}

Var Tape::matmul(Var a, Var b) {
    check_same_tape(a, "matmul");
    check_same_tape(b, "matmul");
    Matrix out = desmil::matmul(a.value(), b.value());
    const bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    const std::size_t ia = a.id, ib = b.id;
    return record(std::move(out), ng,
                  ng ? std::function<void(Tape&, const Matrix&)>(
                           [ia, ib](Tape& t, const Matrix& g) {
                               if (t.nodes_[ia].needs_grad) {
                                   t.accumulate(ia, desmil::matmul(g, desmil::transpose(t.value(ib))));
                               }
                               if (t.nodes_[ib].needs_grad) {
                                   t.accumulate(ib, desmil::matmul(desmil::transpose(t.value(ia)), g));
                               }
                           })
                     : nullptr);
}

Var Tape::add(Var a, Var b) {
    check_same_tape(a, "add");
    check_same_tape(b, "add");
    Matrix out = desmil::add(a.value(), b.value());
    const bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    const std::size_t ia = a.id, ib = b.id;
    return record(std::move(out), ng,
                  ng ? std::function<void(Tape&, const Matrix&)>(
                           [ia, ib](Tape& t, const Matrix& g) {
                               if (t.nodes_[ia].needs_grad) t.accumulate(ia, g);
                               if (t.nodes_[ib].needs_grad) t.accumulate(ib, g);
                           })
                     : nullptr);
}

Var Tape::transpose(Var a) {
    check_same_tape(a, "transpose");
    Matrix out = desmil::transpose(a.value());
    const bool ng = nodes_[a.id].needs_grad;
    const std::size_t ia = a.id;
    return record(std::move(out), ng,
                  ng ? std::function<void(Tape&, const Matrix&)>(
                           [ia](Tape& t, const Matrix& g) {
                               t.accumulate(ia, desmil::transpose(g));
                           })
                     : nullptr);
}

Var Tape::tanh(Var a) {
    check_same_tape(a, "tanh");
    Matrix out = tanh_elementwise(a.value());
    const bool ng = nodes_[a.id].needs_grad;
    const std::size_t ia = a.id;
    Var v = record(std::move(out), ng, nullptr);
    if (ng) {
        const std::size_t iv = v.id;
        nodes_[iv].backprop = [ia, iv](Tape& t, const Matrix& g) {
            const Matrix& y = t.value(iv);
            Matrix d(g.rows(), g.cols());
            for (std::size_t i = 0; i < g.size(); ++i) {
                d.data()[i] = g.data()[i] * (1.0 - y.data()[i] * y.data()[i]);
            }
            t.accumulate(ia, std::move(d));
        };
    }
    return v;
}

Var Tape::softmax_rows(Var a) {
    check_same_tape(a, "softmax_rows");
    Matrix out = desmil::softmax_rows(a.value());
    const bool ng = nodes_[a.id].needs_grad;
    const std::size_t ia = a.id;
    Var v = record(std::move(out), ng, nullptr);
    if (ng) {
        const std::size_t iv = v.id;
        nodes_[iv].backprop = [ia, iv](Tape& t, const Matrix& g) {
            const Matrix& s = t.value(iv);
            Matrix d(g.rows(), g.cols());
            for (std::size_t r = 0; r < g.rows(); ++r) {
                double gs = 0.0;
                for (std::size_t c = 0; c < g.cols(); ++c) gs += g(r, c) * s(r, c);
                for (std::size_t c = 0; c < g.cols(); ++c) d(r, c) = s(r, c) * (g(r, c) - gs);
            }
            t.accumulate(ia, std::move(d));
        };
    }
    return v;
}

Var Tape::hadamard(Var a, Var b) {
    check_same_tape(a, "hadamard");
    check_same_tape(b, "hadamard");
    Matrix out = desmil::hadamard(a.value(), b.value());
    const bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    const std::size_t ia = a.id, ib = b.id;
    return record(std::move(out), ng,
                  ng ? std::function<void(Tape&, const Matrix&)>(
                           [ia, ib](Tape& t, const Matrix& g) {
                               if (t.nodes_[ia].needs_grad) {
                                   t.accumulate(ia, desmil::hadamard(g, t.value(ib)));
                               }
                               if (t.nodes_[ib].needs_grad) {
                                   t.accumulate(ib, desmil::hadamard(g, t.value(ia)));
                               }
                           })
                     : nullptr);
}

Var Tape::scale(Var a, double s) {
    check_same_tape(a, "scale");
    Matrix out = desmil::scale(a.value(), s);
    const bool ng = nodes_[a.id].needs_grad;
    const std::size_t ia = a.id;
    return record(std::move(out), ng,
                  ng ? std::function<void(Tape&, const Matrix&)>(
                           [ia, s](Tape& t, const Matrix& g) {
                               t.accumulate(ia, desmil::scale(g, s));
                           })
                     : nullptr);
}

Var Tape::sum(Var a) {
    check_same_tape(a, "sum");
    Matrix out = Matrix::full(1, 1, sum_all(a.value()));
    const bool ng = nodes_[a.id].needs_grad;
    const std::size_t ia = a.id;
    return record(std::move(out), ng,
                  ng ? std::function<void(Tape&, const Matrix&)>(
                           [ia](Tape& t, const Matrix& g) {
                               const Matrix& in = t.value(ia);
                               t.accumulate(ia, Matrix::full(in.rows(), in.cols(), g(0, 0)));
                           })
                     : nullptr);
}

Var Tape::gather_rows(Var a, std::vector<std::size_t> indices) {
    check_same_tape(a, "gather_rows");
    const Matrix& src = a.value();
    for (std::size_t idx : indices) {
        if (idx >= src.rows()) {
            throw std::out_of_range("gather_rows: row index " + std::to_string(idx) +
                                    " out of range for " + std::to_string(src.rows()) + " rows");
        }
    }
    Matrix out(indices.size(), src.cols());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        auto dst = out.row(r);
        auto s = src.row(indices[r]);
        std::copy(s.begin(), s.end(), dst.begin());
    }
    const bool ng = nodes_[a.id].needs_grad;
    const std::size_t ia = a.id;
    return record(std::move(out), ng,
                  ng ? std::function<void(Tape&, const Matrix&)>(
                           [ia, idx = std::move(indices)](Tape& t, const Matrix& g) {
                               const Matrix& in = t.value(ia);
                               Matrix d(in.rows(), in.cols());
                               for (std::size_t r = 0; r < idx.size(); ++r) {
                                   auto dst = d.row(idx[r]);
                                   auto s = g.row(r);
                                   for (std::size_t c = 0; c < s.size(); ++c) dst[c] += s[c];
                               }
                               t.accumulate(ia, std::move(d));
                           })
                     : nullptr);
}

Var Tape::neg_log_softmax_at(Var logits, std::size_t index) {
    check_same_tape(logits, "neg_log_softmax_at");
    const Matrix& row = logits.value();
    if (row.rows() != 1) {
        throw std::invalid_argument("neg_log_softmax_at: logits must be a 1xN row");
    }
    if (index >= row.cols()) {
        throw std::out_of_range("neg_log_softmax_at: index out of range");
    }
    const double mx = *std::max_element(row.row(0).begin(), row.row(0).end());
    double denom = 0.0;
    for (double v : row.row(0)) denom += std::exp(v - mx);
    const double loss = mx + std::log(denom) - row(0, index);
    const bool ng = nodes_[logits.id].needs_grad;
    const std::size_t ia = logits.id;
    return record(Matrix::full(1, 1, loss), ng,
                  ng ? std::function<void(Tape&, const Matrix&)>(
                           [ia, index](Tape& t, const Matrix& g) {
                               const Matrix& z = t.value(ia);
                               Matrix p = desmil::softmax_rows(z);
                               p(0, index) -= 1.0;
                               p *= g(0, 0);
                               t.accumulate(ia, std::move(p));
                           })
                     : nullptr);
}

} // namespace desmil

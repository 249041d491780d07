#include "tas/autodiff.hpp"

#include <algorithm>
#include <string>

#include "tas/errors.hpp"

namespace tas::ad {

namespace {

std::string shape_of(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Tape* require_tape(const Var& v, const char* op) {
    if (v.tape == nullptr) {
        throw Error(std::string(op) + ": variable has no tape");
    }
    return v.tape;
}

void check_same_tape(const Var& a, const Var& b, const char* op) {
    require_tape(a, op);
    if (a.tape != b.tape) {
        throw Error(std::string(op) + ": operands recorded on different tapes");
    }
}

}  // namespace

int Tape::push(Node node) {
    if (!node.value.allFinite()) {
        throw Error("tape: non-finite values produced by op kind " +
                    std::to_string(static_cast<int>(node.kind)));
    }
    nodes_.push_back(std::move(node));
    grads_ready_ = false;
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check_owns(const Var& v, const char* op) const {
    if (v.tape != this || v.id < 0 || v.id >= size()) {
        throw Error(std::string(op) + ": variable does not belong to this tape");
    }
}

Var Tape::leaf(Matrix value) {
    if (!value.allFinite()) {
        throw Error("tape: leaf holds non-finite values");
    }
    Node node;
    node.kind = OpKind::Leaf;
    node.value = std::move(value);
    nodes_.push_back(std::move(node));
    grads_ready_ = false;
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::value(const Var& v) const {
    check_owns(v, "value");
    return nodes_[v.id].value;
}

Matrix& Tape::grad_slot(int id) {
    if (grads_.size() != nodes_.size()) {
        grads_.resize(nodes_.size());
    }
    Matrix& g = grads_[id];
    if (g.rows() != nodes_[id].value.rows() || g.cols() != nodes_[id].value.cols()) {
        g = Matrix::Zero(nodes_[id].value.rows(), nodes_[id].value.cols());
    }
    return g;
}

void Tape::seed(const Var& v, const Matrix& adjoint) {
    check_owns(v, "seed");
    const Matrix& val = nodes_[v.id].value;
    if (adjoint.rows() != val.rows() || adjoint.cols() != val.cols()) {
        throw ShapeMismatchError("seed: adjoint " + shape_of(adjoint) + " vs value " +
                                 shape_of(val));
    }
    grad_slot(v.id) += adjoint;
}

void Tape::backward(const Var& loss) {
    check_owns(loss, "backward");
    const Matrix& val = nodes_[loss.id].value;
    if (val.rows() != 1 || val.cols() != 1) {
        throw NotScalarLossError("backward: loss node has shape " + shape_of(val));
    }
    seed(loss, Matrix::Ones(1, 1));
    backward();
}

void Tape::backward() {
    if (grads_.size() != nodes_.size()) {
        grads_.resize(nodes_.size());
    }
    for (int id = size() - 1; id >= 0; --id) {
        const Matrix& gy = grads_[id];
        if (gy.size() == 0) continue;  // node unreached by any adjoint
        const Node& node = nodes_[id];
        switch (node.kind) {
            case OpKind::Leaf:
                break;
            case OpKind::Conv1dDilated: {
                const Matrix& x = nodes_[node.input0].value;
                const Matrix& kernel = nodes_[node.input1].value;
                const int h_in = static_cast<int>(x.rows());
                const int frames = static_cast<int>(x.cols());
                const int taps = static_cast<int>(kernel.cols()) / h_in;
                const int center = (taps - 1) / 2;
                Matrix& gx = grad_slot(node.input0);
                Matrix& gk = grad_slot(node.input1);
                for (int k = 0; k < taps; ++k) {
                    const int offset = (k - center) * node.dilation;
                    const int t0 = std::max(0, -offset);
                    const int t1 = std::min(frames, frames - offset);
                    const int len = t1 - t0;
                    if (len <= 0) continue;
                    const auto w_k = kernel.middleCols(k * h_in, h_in);
                    gk.middleCols(k * h_in, h_in).noalias() +=
                        gy.middleCols(t0, len) * x.middleCols(t0 + offset, len).transpose();
                    gx.middleCols(t0 + offset, len).noalias() +=
                        w_k.transpose() * gy.middleCols(t0, len);
                }
                break;
            }
            case OpKind::Pointwise: {
                const Matrix& x = nodes_[node.input0].value;
                const Matrix& weights = nodes_[node.input1].value;
                grad_slot(node.input0).noalias() += weights.transpose() * gy;
                grad_slot(node.input1).noalias() += gy * x.transpose();
                grad_slot(node.input2) += gy.rowwise().sum();
                break;
            }
            case OpKind::Add:
                grad_slot(node.input0) += gy;
                grad_slot(node.input1) += gy;
                break;
            case OpKind::Mul: {
                const Matrix& a = nodes_[node.input0].value;
                const Matrix& b = nodes_[node.input1].value;
                grad_slot(node.input0).array() += gy.array() * b.array();
                grad_slot(node.input1).array() += gy.array() * a.array();
                break;
            }
            case OpKind::Scale:
                grad_slot(node.input0) += node.factor * gy;
                break;
            case OpKind::Relu: {
                // Subgradient 0 at the kink.
                const Matrix& y = node.value;
                grad_slot(node.input0).array() +=
                    gy.array() * (y.array() > 0.0).cast<double>();
                break;
            }
            case OpKind::Sigmoid: {
                const Matrix& y = node.value;
                grad_slot(node.input0).array() +=
                    gy.array() * y.array() * (1.0 - y.array());
                break;
            }
            case OpKind::SoftmaxColumns: {
                const Matrix& y = node.value;
                Matrix& gx = grad_slot(node.input0);
                for (int t = 0; t < y.cols(); ++t) {
                    const double dot = y.col(t).dot(gy.col(t));
                    gx.col(t).array() += y.col(t).array() * (gy.col(t).array() - dot);
                }
                break;
            }
            case OpKind::GatherRows: {
                Matrix& gx = grad_slot(node.input0);
                for (std::size_t i = 0; i < node.rows.size(); ++i) {
                    gx.row(node.rows[i]) += gy.row(static_cast<int>(i));
                }
                break;
            }
            case OpKind::Sum:
                grad_slot(node.input0).array() += gy(0, 0);
                break;
        }
    }
    // Materialize zero gradients for nodes no adjoint reached.
    for (int id = 0; id < size(); ++id) {
        grad_slot(id);
    }
    grads_ready_ = true;
}

const Matrix& Tape::grad(const Var& v) const {
    check_owns(v, "grad");
    if (!grads_ready_) {
        throw Error("grad: backward() has not run on this tape");
    }
    return grads_[v.id];
}

Var conv1d_dilated(const Var& x, const Var& kernel, int dilation) {
    check_same_tape(x, kernel, "conv1d_dilated");
    Tape* tape = require_tape(x, __func__);
    tape->check_owns(x, "conv1d_dilated");
    const Matrix& xv = tape->value(x);
    const Matrix& kv = tape->value(kernel);
    const int h_in = static_cast<int>(xv.rows());
    if (dilation < 1) {
        throw ConfigError("conv1d_dilated: dilation must be >= 1");
    }
    if (h_in == 0 || kv.cols() % h_in != 0) {
        throw ShapeMismatchError("conv1d_dilated: kernel " + shape_of(kv) +
                                 " does not pack taps of input height " +
                                 std::to_string(h_in));
    }
    const int taps = static_cast<int>(kv.cols()) / h_in;
    if (taps % 2 == 0) {
        throw ShapeMismatchError("conv1d_dilated: tap count must be odd, got " +
                                 std::to_string(taps));
    }
    const int frames = static_cast<int>(xv.cols());
    const int center = (taps - 1) / 2;
    Matrix out = Matrix::Zero(kv.rows(), frames);
    for (int k = 0; k < taps; ++k) {
        const int offset = (k - center) * dilation;
        const int t0 = std::max(0, -offset);
        const int t1 = std::min(frames, frames - offset);
        const int len = t1 - t0;
        if (len <= 0) continue;
        out.middleCols(t0, len).noalias() +=
            kv.middleCols(k * h_in, h_in) * xv.middleCols(t0 + offset, len);
    }
    Tape::Node node;
    node.kind = OpKind::Conv1dDilated;
    node.input0 = x.id;
    node.input1 = kernel.id;
    node.value = std::move(out);
    node.dilation = dilation;
    return Var{tape, tape->push(std::move(node))};
}

Var pointwise_conv(const Var& x, const Var& weights, const Var& bias) {
    check_same_tape(x, weights, "pointwise_conv");
    check_same_tape(x, bias, "pointwise_conv");
    Tape* tape = require_tape(x, __func__);
    const Matrix& xv = tape->value(x);
    const Matrix& wv = tape->value(weights);
    const Matrix& bv = tape->value(bias);
    if (wv.cols() != xv.rows() || bv.rows() != wv.rows() || bv.cols() != 1) {
        throw ShapeMismatchError("pointwise_conv: x " + shape_of(xv) + ", weights " +
                                 shape_of(wv) + ", bias " + shape_of(bv));
    }
    Matrix out = wv * xv;
    out.colwise() += bv.col(0);
    Tape::Node node;
    node.kind = OpKind::Pointwise;
    node.input0 = x.id;
    node.input1 = weights.id;
    node.input2 = bias.id;
    node.value = std::move(out);
    return Var{tape, tape->push(std::move(node))};
}

Var add(const Var& a, const Var& b) {
    check_same_tape(a, b, "add");
    Tape* tape = a.tape;
    const Matrix& av = tape->value(a);
    const Matrix& bv = tape->value(b);
    if (av.rows() != bv.rows() || av.cols() != bv.cols()) {
        throw ShapeMismatchError("add: " + shape_of(av) + " vs " + shape_of(bv));
    }
    Tape::Node node;
    node.kind = OpKind::Add;
    node.input0 = a.id;
    node.input1 = b.id;
    node.value = av + bv;
    return Var{tape, tape->push(std::move(node))};
}

Var mul(const Var& a, const Var& b) {
    check_same_tape(a, b, "mul");
    Tape* tape = a.tape;
    const Matrix& av = tape->value(a);
    const Matrix& bv = tape->value(b);
    if (av.rows() != bv.rows() || av.cols() != bv.cols()) {
        throw ShapeMismatchError("mul: " + shape_of(av) + " vs " + shape_of(bv));
    }
    Tape::Node node;
    node.kind = OpKind::Mul;
    node.input0 = a.id;
    node.input1 = b.id;
    node.value = av.cwiseProduct(bv);
    return Var{tape, tape->push(std::move(node))};
}

Var scale(const Var& x, double factor) {
    Tape* tape = require_tape(x, __func__);
    tape->check_owns(x, "scale");
    Tape::Node node;
    node.kind = OpKind::Scale;
    node.input0 = x.id;
    node.factor = factor;
    node.value = factor * tape->value(x);
    return Var{tape, tape->push(std::move(node))};
}

Var relu(const Var& x) {
    Tape* tape = require_tape(x, __func__);
    tape->check_owns(x, "relu");
    Tape::Node node;
    node.kind = OpKind::Relu;
    node.input0 = x.id;
    node.value = tape->value(x).cwiseMax(0.0);
    return Var{tape, tape->push(std::move(node))};
}

Var sigmoid(const Var& x) {
    Tape* tape = require_tape(x, __func__);
    tape->check_owns(x, "sigmoid");
    Tape::Node node;
    node.kind = OpKind::Sigmoid;
    node.input0 = x.id;
    node.value = (1.0 / (1.0 + (-tape->value(x).array()).exp())).matrix();
    return Var{tape, tape->push(std::move(node))};
}

Var softmax_columns(const Var& x) {
    Tape* tape = require_tape(x, __func__);
    tape->check_owns(x, "softmax_columns");
    const Matrix& xv = tape->value(x);
    Matrix out(xv.rows(), xv.cols());
    for (int t = 0; t < xv.cols(); ++t) {
        const Vector e = (xv.col(t).array() - xv.col(t).maxCoeff()).exp();
        out.col(t) = e / e.sum();
    }
    Tape::Node node;
    node.kind = OpKind::SoftmaxColumns;
    node.input0 = x.id;
    node.value = std::move(out);
    return Var{tape, tape->push(std::move(node))};
}

Var gather_rows(const Var& x, std::vector<int> rows) {
    Tape* tape = require_tape(x, __func__);
    tape->check_owns(x, "gather_rows");
    const Matrix& xv = tape->value(x);
    Matrix out(static_cast<int>(rows.size()), xv.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= xv.rows()) {
            throw ShapeMismatchError("gather_rows: row " + std::to_string(rows[i]) +
                                     " outside matrix with " + std::to_string(xv.rows()) +
                                     " rows");
        }
        out.row(static_cast<int>(i)) = xv.row(rows[i]);
    }
    Tape::Node node;
    node.kind = OpKind::GatherRows;
    node.input0 = x.id;
    node.rows = std::move(rows);
    node.value = std::move(out);
    return Var{tape, tape->push(std::move(node))};
}

Var sum(const Var& x) {
    Tape* tape = require_tape(x, __func__);
    tape->check_owns(x, "sum");
    Tape::Node node;
    node.kind = OpKind::Sum;
    node.input0 = x.id;
    node.value = Matrix::Constant(1, 1, tape->value(x).sum());
    return Var{tape, tape->push(std::move(node))};
}

}  // namespace tas::ad

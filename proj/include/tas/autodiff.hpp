#pragma once

#include <vector>

#include "tas/core.hpp"

namespace tas::ad {

using tas::Matrix;

class Tape;

// Handle to a recorded tensor; cheap to copy.
struct Var {
    Tape* tape = nullptr;
    int id = -1;
    bool valid() const { return tape != nullptr && id >= 0; }
};

enum class OpKind {
    Leaf,
    Conv1dDilated,
    Pointwise,
    Add,
    Mul,
    Scale,
    Relu,
    Sigmoid,
    SoftmaxColumns,
    GatherRows,
    Sum,
};

// Reverse-mode tape over dense double matrices. Nodes are appended in
// topological order by construction; backward() walks them in reverse.
// One tape serves one forward/backward evaluation and is not shared
// across threads.
class Tape {
  public:
    Var leaf(Matrix value);

    const Matrix& value(const Var& v) const;

    // Adjoint accumulation entry points. seed() adds an external adjoint
    // (e.g. an analytically computed loss gradient) at a node; backward()
    // then propagates everything in one reverse sweep. backward(loss)
    // is the scalar convenience form and requires a 1x1 node.
    void seed(const Var& v, const Matrix& adjoint);
    void backward(const Var& loss);
    void backward();

    // Valid after backward(); unreached nodes hold zeros.
    const Matrix& grad(const Var& v) const;

    int size() const { return static_cast<int>(nodes_.size()); }

  private:
    struct Node {
        OpKind kind = OpKind::Leaf;
        int input0 = -1;
        int input1 = -1;
        int input2 = -1;
        Matrix value;
        int dilation = 1;          // Conv1dDilated
        std::vector<int> rows;     // GatherRows
        double factor = 1.0;       // Scale
    };

    int push(Node node);
    void check_owns(const Var& v, const char* op) const;
    Matrix& grad_slot(int id);

    friend Var conv1d_dilated(const Var& x, const Var& kernel, int dilation);
    friend Var pointwise_conv(const Var& x, const Var& weights, const Var& bias);
    friend Var add(const Var& a, const Var& b);
    friend Var mul(const Var& a, const Var& b);
    friend Var scale(const Var& x, double factor);
    friend Var relu(const Var& x);
    friend Var sigmoid(const Var& x);
    friend Var softmax_columns(const Var& x);
    friend Var gather_rows(const Var& x, std::vector<int> rows);
    friend Var sum(const Var& x);

    std::vector<Node> nodes_;
    std::vector<Matrix> grads_;
    bool grads_ready_ = false;
};

// Dilated 1D convolution along columns with zero same-padding, so the
// temporal length is preserved. The kernel packs its taps side by side:
// shape H_out x (H_in * K) with K odd, tap k occupying columns
// [k*H_in, (k+1)*H_in).
Var conv1d_dilated(const Var& x, const Var& kernel, int dilation);

// weights * x + bias broadcast over columns (a 1x1 convolution).
Var pointwise_conv(const Var& x, const Var& weights, const Var& bias);

Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var softmax_columns(const Var& x);
Var gather_rows(const Var& x, std::vector<int> rows);
Var sum(const Var& x);

}  // namespace tas::ad

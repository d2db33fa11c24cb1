#pragma once

// Reverse-mode differentiable tensor engine. Tensors are dense row-major
// double arrays; a Tape records every differentiable op applied through it
// and replays the chain rule backwards on demand.
//
// Ops take the tape as a nullable first argument: passing nullptr runs the
// forward computation only, which is the inference path. A node is recorded
// only when the output actually depends on a requires_grad tensor.
//
// Gradients of interior (tape-produced) tensors live in scratch storage
// local to one backward call; leaves accumulate additively into
// Tensor::grad (or into a caller-supplied GradStore), so repeated backward
// calls sum their contributions until zero_grad.

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace dk::autodiff {

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad; // empty until first accumulation

    std::size_t size() const { return values.size(); }
    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? (shape.empty() ? 0 : 1) : shape[1]; }
    bool is_scalar() const { return size() == 1 && shape.size() == 1; }

    double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

    void ensure_grad();
    void zero_grad();
    std::string shape_str() const;
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(std::vector<std::size_t> shape, bool requires_grad = false);
TensorPtr make_tensor(std::vector<std::size_t> shape, std::vector<double> values,
                      bool requires_grad = false);
TensorPtr scalar_tensor(double v, bool requires_grad = false);

// Leaf gradient destination for Tape::backward_seeded. Maps leaf tensor ->
// gradient buffer of the same size.
using GradStore = std::unordered_map<const Tensor*, std::vector<double>>;

class Tape;

// Handed to a node's backward rule. out_grad is the gradient w.r.t. the node
// output; grad_for returns the accumulation buffer for an input tensor, or
// nullptr when no gradient is required along that edge.
class BackwardCtx {
  public:
    const double* out_grad = nullptr;
    double* grad_for(const TensorPtr& t);

  private:
    friend class Tape;
    BackwardCtx() = default;
    Tape* tape_ = nullptr;
    GradStore* store_ = nullptr;
    std::unordered_map<const Tensor*, std::vector<double>>* scratch_ = nullptr;
};

class Tape {
  public:
    void record(TensorPtr out, std::vector<TensorPtr> inputs,
                std::function<void(BackwardCtx&)> backward_fn);

    bool produced(const Tensor* t) const { return produced_.count(t) != 0; }
    std::size_t num_nodes() const { return nodes_.size(); }
    void clear();

    // Propagates `seed` (same size as root) from root to every leaf.
    // Leaves accumulate into Tensor::grad when store is null, into the
    // store otherwise. Interior gradients are scratch, discarded on return.
    void backward_seeded(const TensorPtr& root, const std::vector<double>& seed,
                         GradStore* store = nullptr);

  private:
    struct Node {
        TensorPtr out;
        std::vector<TensorPtr> inputs;
        std::function<void(BackwardCtx&)> backward_fn;
    };
    std::vector<Node> nodes_;
    std::unordered_set<const Tensor*> produced_;
};

// Spec entry point: seeds d(loss)/d(loss)=1. Errors on non-scalar loss.
void backward(Tape& tape, const TensorPtr& loss);

// --- primitives ------------------------------------------------------------

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(Tape* tape, const TensorPtr& a, double s);
TensorPtr add_scalar(Tape* tape, const TensorPtr& a, double c);

// out[m x n] = a[m x k] * b[k x n]
TensorPtr matmul(Tape* tape, const TensorPtr& a, const TensorPtr& b);

// Matrix transpose: [m x n] -> [n x m].
TensorPtr transpose(Tape* tape, const TensorPtr& x);

TensorPtr relu(Tape* tape, const TensorPtr& x);

// Softmax along the last axis; 1-D input treated as a single row.
TensorPtr softmax_rows(Tape* tape, const TensorPtr& x);

// Per-timestep affine map: out[t x co] = x[t x ci] * w[ci x co] + b[co].
TensorPtr conv1d_k1(Tape* tape, const TensorPtr& x, const TensorPtr& w, const TensorPtr& b);

// x[m x n] + b[n], broadcast over rows.
TensorPtr add_row_bias(Tape* tape, const TensorPtr& x, const TensorPtr& b);

// Mean over axis 0: [T x D] -> [D] (temporal pooling).
TensorPtr mean_rows(Tape* tape, const TensorPtr& x);

TensorPtr sum_all(Tape* tape, const TensorPtr& x);
TensorPtr mean_all(Tape* tape, const TensorPtr& x);

// Concatenate along the feature axis: [T x c1],[T x c2],... -> [T x sum(ci)].
TensorPtr concat_cols(Tape* tape, const std::vector<TensorPtr>& xs);

// Stack 1-D vectors [D] into a matrix [n x D].
TensorPtr stack_rows(Tape* tape, const std::vector<TensorPtr>& xs);

// out[i] = squared L2 distance between row i of a and row i of b.
TensorPtr rowwise_sqdist(Tape* tape, const TensorPtr& a, const TensorPtr& b);

// Per-row layer normalization with learned gain/bias of width D.
TensorPtr layer_norm_rows(Tape* tape, const TensorPtr& x, const TensorPtr& gain,
                          const TensorPtr& bias, double eps = 1e-5);

// Row lookup: out[i] = table[indices[i]], differentiable w.r.t. the table.
TensorPtr gather_rows(Tape* tape, const TensorPtr& table, const std::vector<std::size_t>& indices);

} // namespace dk::autodiff

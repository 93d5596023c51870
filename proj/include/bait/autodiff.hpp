#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "bait/errors.hpp"

namespace bait {

class Tape;

// Argument of every log in this library is clamped to at least this value;
// softmax outputs can underflow to 0 and the losses all take logs of them.
inline constexpr double kLogEps = 1e-12;

// Dense row-major 64-bit float array with an optional gradient buffer.
// Tensor is a cheap shared handle: copies refer to the same storage, which is
// how parameters stay live across the per-step tapes that capture them.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor from_values(std::vector<int> shape, std::vector<double> values,
                              bool requires_grad = false);
    // 1x1 tensor; scalars are what backward() seeds.
    static Tensor scalar(double value, bool requires_grad = false);
    // Build a [rows x cols] matrix from nested initializer data.
    static Tensor matrix(const std::vector<std::vector<double>>& rows,
                         bool requires_grad = false);

    bool defined() const { return d_ != nullptr; }
    const std::vector<int>& shape() const { return d_->shape; }
    int size() const { return static_cast<int>(d_->values.size()); }
    bool is_scalar() const { return size() == 1; }
    // 2-D accessors; shape checks live in the ops that need them.
    int rows() const { return d_->shape.at(0); }
    int cols() const { return d_->shape.at(1); }

    const std::vector<double>& values() const { return d_->values; }
    std::vector<double>& values() { return d_->values; }
    double value() const;  // scalar contents; throws on non-scalar
    double at(int i, int j) const { return d_->values[static_cast<std::size_t>(i) * cols() + j]; }
    double& at(int i, int j) { return d_->values[static_cast<std::size_t>(i) * cols() + j]; }

    bool requires_grad() const { return d_->requires_grad; }
    void set_requires_grad(bool v) { d_->requires_grad = v; }

    bool has_grad() const { return !d_->grad.empty(); }
    const std::vector<double>& grad() const;
    std::vector<double>& grad_buffer();  // allocates zeros on first use
    void clear_grad() { d_->grad.clear(); }

    // Stop-gradient copy: same values, requires_grad off, no producer tape.
    Tensor detach() const;
    // Deep copy (values + requires_grad flag, gradient not carried over).
    Tensor clone() const;

    // Identity of the underlying storage; used by optimizers to key state.
    const void* id() const { return d_.get(); }

    friend class Tape;

private:
    struct Data {
        std::vector<int> shape;
        std::vector<double> values;
        std::vector<double> grad;  // empty means "no gradient"
        bool requires_grad = false;
        const Tape* producer = nullptr;
    };
    std::shared_ptr<Data> d_;

    static Tensor make(std::vector<int> shape, std::vector<double> values, bool requires_grad);
};

std::string shape_str(const std::vector<int>& shape);

// Ordered record of executed operations. Each op that can influence a
// gradient pushes a backward closure; backward() replays them in reverse and
// accumulates into every requires_grad tensor reachable from the loss.
//
// A tape and the tensors it produced are confined to one thread. Dynamic by
// design: the certain/uncertain split changes the graph every batch, so each
// training step builds a fresh tape.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // a[m x k] . b[k x n] -> [m x n]
    Tensor matmul(const Tensor& a, const Tensor& b);
    // elementwise max(0, v); gradient at exactly 0 is defined as 0
    Tensor relu(const Tensor& a);
    // row-wise softmax with per-row max subtraction; needs >= 2 columns
    Tensor softmax_rows(const Tensor& logits);
    // each row scaled to unit Euclidean norm; zero rows are an error
    Tensor l2_normalize_rows(const Tensor& w);
    Tensor add(const Tensor& a, const Tensor& b);
    // a[n x d] + row vector b[1 x d] broadcast down the rows (bias add)
    Tensor add_rowvec(const Tensor& a, const Tensor& b);
    Tensor subtract(const Tensor& a, const Tensor& b);
    Tensor multiply(const Tensor& a, const Tensor& b);
    Tensor scale(const Tensor& a, double s);
    // log(max(v, kLogEps))
    Tensor log(const Tensor& a);
    Tensor sum(const Tensor& a);
    Tensor mean(const Tensor& a);
    Tensor concat_rows(const Tensor& a, const Tensor& b);
    Tensor transpose(const Tensor& a);

    // Seeds d(loss)/d(loss) = 1.0 and replays the tape in reverse. The loss
    // must be a scalar produced by this tape; calling twice without reset()
    // is an error. Gradients accumulate (+=) into leaves, so disjoint tapes
    // over shared parameters compose additively.
    void backward(const Tensor& loss);
    void reset();

    std::size_t num_ops() const { return ops_.size(); }

private:
    std::vector<std::function<void()>> ops_;
    bool backward_done_ = false;
};

}  // namespace bait

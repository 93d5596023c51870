#include "bait/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

namespace bait {

namespace {

std::size_t numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

void require_2d(const Tensor& t, const char* op) {
    if (t.shape().size() != 2) {
        throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor Tensor::make(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
    for (int d : shape) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (numel(shape) != values.size()) {
        throw ShapeError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
    }
    Tensor t;
    t.d_ = std::make_shared<Data>();
    t.d_->shape = std::move(shape);
    t.d_->values = std::move(values);
    t.d_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    std::vector<double> v(numel(shape), 0.0);
    return make(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    std::vector<double> v(numel(shape), value);
    return make(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
    return make(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return make({1, 1}, {value}, requires_grad);
}

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows, bool requires_grad) {
    if (rows.empty() || rows[0].empty()) throw ShapeError("matrix: no rows/columns given");
    const int r = static_cast<int>(rows.size());
    const int c = static_cast<int>(rows[0].size());
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(r) * c);
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != c) throw ShapeError("matrix: ragged rows");
        v.insert(v.end(), row.begin(), row.end());
    }
    return make({r, c}, std::move(v), requires_grad);
}

double Tensor::value() const {
    if (!is_scalar()) throw ShapeError("value(): tensor " + shape_str(shape()) + " is not scalar");
    return d_->values[0];
}

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) throw Error("grad(): no gradient present");
    return d_->grad;
}

std::vector<double>& Tensor::grad_buffer() {
    if (d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0);
    return d_->grad;
}

Tensor Tensor::detach() const {
    return make(d_->shape, d_->values, false);
}

Tensor Tensor::clone() const {
    return make(d_->shape, d_->values, d_->requires_grad);
}

// Every op follows the same pattern: compute values eagerly, and if any input
// requires a gradient, mark the output and record a backward closure. Closures
// skip themselves when the output never received a gradient (side branches
// not reachable from the loss).

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    const int m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> vals(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av = a.at(i, p);
            for (int j = 0; j < n; ++j) vals[static_cast<std::size_t>(i) * n + j] += av * b.at(p, j);
        }
    }
    Tensor out = Tensor::make({m, n}, std::move(vals), a.requires_grad() || b.requires_grad());
    if (out.requires_grad()) {
        out.d_->producer = this;
        Tensor ac = a, bc = b, oc = out;
        // d a = g . b^T    d b = a^T . g
        ops_.push_back([ac, bc, oc, m, k, n]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            if (ac.requires_grad()) {
                auto& ga = ac.grad_buffer();
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (int j = 0; j < n; ++j)
                            acc += g[static_cast<std::size_t>(i) * n + j] * bc.at(p, j);
                        ga[static_cast<std::size_t>(i) * k + p] += acc;
                    }
            }
            if (bc.requires_grad()) {
                auto& gb = bc.grad_buffer();
                for (int p = 0; p < k; ++p)
                    for (int j = 0; j < n; ++j) {
                        double acc = 0.0;
                        for (int i = 0; i < m; ++i)
                            acc += ac.at(i, p) * g[static_cast<std::size_t>(i) * n + j];
                        gb[static_cast<std::size_t>(p) * n + j] += acc;
                    }
            }
        });
    }
    return out;
}

Tensor Tape::relu(const Tensor& a) {
    std::vector<double> vals(a.values().size());
    for (std::size_t i = 0; i < vals.size(); ++i)
        vals[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
    Tensor out = Tensor::make(a.shape(), std::move(vals), a.requires_grad());
    if (out.requires_grad()) {
        out.d_->producer = this;
        Tensor ac = a, oc = out;
        // subgradient at exactly 0 is 0
        ops_.push_back([ac, oc]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            auto& ga = ac.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i)
                if (ac.values()[i] > 0.0) ga[i] += g[i];
        });
    }
    return out;
}

Tensor Tape::softmax_rows(const Tensor& logits) {
    require_2d(logits, "softmax_rows");
    if (logits.cols() < 2) {
        throw ShapeError("softmax_rows: need at least 2 columns, got " + shape_str(logits.shape()));
    }
    const int n = logits.rows(), K = logits.cols();
    std::vector<double> vals(static_cast<std::size_t>(n) * K);
    for (int i = 0; i < n; ++i) {
        double mx = logits.at(i, 0);
        for (int j = 1; j < K; ++j) mx = std::max(mx, logits.at(i, j));
        double denom = 0.0;
        for (int j = 0; j < K; ++j) {
            const double e = std::exp(logits.at(i, j) - mx);
            vals[static_cast<std::size_t>(i) * K + j] = e;
            denom += e;
        }
        for (int j = 0; j < K; ++j) vals[static_cast<std::size_t>(i) * K + j] /= denom;
    }
    Tensor out = Tensor::make({n, K}, std::move(vals), logits.requires_grad());
    if (out.requires_grad()) {
        out.d_->producer = this;
        Tensor ac = logits, oc = out;
        // d x_i = y_i * (g_i - sum_j g_j y_j) per row
        ops_.push_back([ac, oc, n, K]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            const auto& y = oc.values();
            auto& ga = ac.grad_buffer();
            for (int i = 0; i < n; ++i) {
                double dot = 0.0;
                for (int j = 0; j < K; ++j) {
                    const std::size_t idx = static_cast<std::size_t>(i) * K + j;
                    dot += g[idx] * y[idx];
                }
                for (int j = 0; j < K; ++j) {
                    const std::size_t idx = static_cast<std::size_t>(i) * K + j;
                    ga[idx] += y[idx] * (g[idx] - dot);
                }
            }
        });
    }
    return out;
}

Tensor Tape::l2_normalize_rows(const Tensor& w) {
    require_2d(w, "l2_normalize_rows");
    const int n = w.rows(), d = w.cols();
    std::vector<double> vals(static_cast<std::size_t>(n) * d);
    std::vector<double> norms(n);
    for (int i = 0; i < n; ++i) {
        double sq = 0.0;
        for (int j = 0; j < d; ++j) sq += w.at(i, j) * w.at(i, j);
        const double norm = std::sqrt(sq);
        if (norm == 0.0) {
            throw DomainError("l2_normalize_rows: row " + std::to_string(i) + " has zero norm");
        }
        norms[i] = norm;
        for (int j = 0; j < d; ++j) vals[static_cast<std::size_t>(i) * d + j] = w.at(i, j) / norm;
    }
    Tensor out = Tensor::make({n, d}, std::move(vals), w.requires_grad());
    if (out.requires_grad()) {
        out.d_->producer = this;
        Tensor ac = w, oc = out;
        // v/|v|: d v = (g - y * (g . y)) / |v| per row
        ops_.push_back([ac, oc, norms = std::move(norms), n, d]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            const auto& y = oc.values();
            auto& ga = ac.grad_buffer();
            for (int i = 0; i < n; ++i) {
                double dot = 0.0;
                for (int j = 0; j < d; ++j) {
                    const std::size_t idx = static_cast<std::size_t>(i) * d + j;
                    dot += g[idx] * y[idx];
                }
                for (int j = 0; j < d; ++j) {
                    const std::size_t idx = static_cast<std::size_t>(i) * d + j;
                    ga[idx] += (g[idx] - y[idx] * dot) / norms[i];
                }
            }
        });
    }
    return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> vals(a.values().size());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = a.values()[i] + b.values()[i];
    Tensor out = Tensor::make(a.shape(), std::move(vals), a.requires_grad() || b.requires_grad());
    if (out.requires_grad()) {
        out.d_->producer = this;
        Tensor ac = a, bc = b, oc = out;
        ops_.push_back([ac, bc, oc]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            if (ac.requires_grad()) {
                auto& ga = ac.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (bc.requires_grad()) {
                auto& gb = bc.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
    }
    return out;
}

Tensor Tape::add_rowvec(const Tensor& a, const Tensor& b) {
    require_2d(a, "add_rowvec");
    require_2d(b, "add_rowvec");
    if (b.rows() != 1 || b.cols() != a.cols()) {
        throw ShapeError("add_rowvec: expected [1x" + std::to_string(a.cols()) + "] row vector for " +
                         shape_str(a.shape()) + ", got " + shape_str(b.shape()));
    }
    const int n = a.rows(), d = a.cols();
    std::vector<double> vals(static_cast<std::size_t>(n) * d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            vals[static_cast<std::size_t>(i) * d + j] = a.at(i, j) + b.values()[j];
    Tensor out = Tensor::make({n, d}, std::move(vals), a.requires_grad() || b.requires_grad());
    if (out.requires_grad()) {
        out.d_->producer = this;
        Tensor ac = a, bc = b, oc = out;
        ops_.push_back([ac, bc, oc, n, d]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            if (ac.requires_grad()) {
                auto& ga = ac.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (bc.requires_grad()) {
                auto& gb = bc.grad_buffer();
                for (int j = 0; j < d; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < n; ++i) acc += g[static_cast<std::size_t>(i) * d + j];
                    gb[j] += acc;
                }
            }
        });
    }
    return out;
}

Tensor Tape::subtract(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "subtract");
    std::vector<double> vals(a.values().size());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = a.values()[i] - b.values()[i];
    Tensor out = Tensor::make(a.shape(), std::move(vals), a.requires_grad() || b.requires_grad());
    if (out.requires_grad()) {
        out.d_->producer = this;
        Tensor ac = a, bc = b, oc = out;
        ops_.push_back([ac, bc, oc]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            if (ac.requires_grad()) {
                auto& ga = ac.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (bc.requires_grad()) {
                auto& gb = bc.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        });
    }
    return out;
}

Tensor Tape::multiply(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "multiply");
    std::vector<double> vals(a.values().size());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = a.values()[i] * b.values()[i];
    Tensor out = Tensor::make(a.shape(), std::move(vals), a.requires_grad() || b.requires_grad());
    if (out.requires_grad()) {
        out.d_->producer = this;
        Tensor ac = a, bc = b, oc = out;
        ops_.push_back([ac, bc, oc]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            if (ac.requires_grad()) {
                auto& ga = ac.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bc.values()[i];
            }
            if (bc.requires_grad()) {
                auto& gb = bc.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ac.values()[i];
            }
        });
    }
    return out;
}

Tensor Tape::scale(const Tensor& a, double s) {
    std::vector<double> vals(a.values().size());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = a.values()[i] * s;
    Tensor out = Tensor::make(a.shape(), std::move(vals), a.requires_grad());
    if (out.requires_grad()) {
        out.d_->producer = this;
        Tensor ac = a, oc = out;
        ops_.push_back([ac, oc, s]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            auto& ga = ac.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
        });
    }
    return out;
}

Tensor Tape::log(const Tensor& a) {
    std::vector<double> vals(a.values().size());
    for (std::size_t i = 0; i < vals.size(); ++i)
        vals[i] = std::log(std::max(a.values()[i], kLogEps));
    Tensor out = Tensor::make(a.shape(), std::move(vals), a.requires_grad());
    if (out.requires_grad()) {
        out.d_->producer = this;
        Tensor ac = a, oc = out;
        ops_.push_back([ac, oc]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            auto& ga = ac.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i)
                ga[i] += g[i] / std::max(ac.values()[i], kLogEps);
        });
    }
    return out;
}

Tensor Tape::sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    Tensor out = Tensor::make({1, 1}, {acc}, a.requires_grad());
    if (out.requires_grad()) {
        out.d_->producer = this;
        Tensor ac = a, oc = out;
        ops_.push_back([ac, oc]() mutable {
            if (!oc.has_grad()) return;
            const double g = oc.grad()[0];
            auto& ga = ac.grad_buffer();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
        });
    }
    return out;
}

Tensor Tape::mean(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    const double inv_n = 1.0 / static_cast<double>(a.values().size());
    Tensor out = Tensor::make({1, 1}, {acc * inv_n}, a.requires_grad());
    if (out.requires_grad()) {
        out.d_->producer = this;
        Tensor ac = a, oc = out;
        ops_.push_back([ac, oc, inv_n]() mutable {
            if (!oc.has_grad()) return;
            const double g = oc.grad()[0] * inv_n;
            auto& ga = ac.grad_buffer();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
        });
    }
    return out;
}

Tensor Tape::concat_rows(const Tensor& a, const Tensor& b) {
    require_2d(a, "concat_rows");
    require_2d(b, "concat_rows");
    if (a.cols() != b.cols()) {
        throw ShapeError("concat_rows: column counts disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    std::vector<double> vals;
    vals.reserve(a.values().size() + b.values().size());
    vals.insert(vals.end(), a.values().begin(), a.values().end());
    vals.insert(vals.end(), b.values().begin(), b.values().end());
    Tensor out = Tensor::make({a.rows() + b.rows(), a.cols()}, std::move(vals),
                              a.requires_grad() || b.requires_grad());
    if (out.requires_grad()) {
        out.d_->producer = this;
        Tensor ac = a, bc = b, oc = out;
        ops_.push_back([ac, bc, oc]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            const std::size_t na = ac.values().size();
            if (ac.requires_grad()) {
                auto& ga = ac.grad_buffer();
                for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
            }
            if (bc.requires_grad()) {
                auto& gb = bc.grad_buffer();
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
            }
        });
    }
    return out;
}

Tensor Tape::transpose(const Tensor& a) {
    require_2d(a, "transpose");
    const int m = a.rows(), n = a.cols();
    std::vector<double> vals(static_cast<std::size_t>(m) * n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) vals[static_cast<std::size_t>(j) * m + i] = a.at(i, j);
    Tensor out = Tensor::make({n, m}, std::move(vals), a.requires_grad());
    if (out.requires_grad()) {
        out.d_->producer = this;
        Tensor ac = a, oc = out;
        ops_.push_back([ac, oc, m, n]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            auto& ga = ac.grad_buffer();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    ga[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j) * m + i];
        });
    }
    return out;
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined()) throw Error("backward: undefined loss tensor");
    if (!loss.is_scalar()) {
        throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    }
    if (loss.d_->producer != this) {
        throw Error("backward: loss is detached from this tape (no recorded producer)");
    }
    if (backward_done_) {
        throw Error("backward: tape already replayed; call reset() before reusing it");
    }
    backward_done_ = true;
    loss.d_->grad.assign(1, 1.0);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

void Tape::reset() {
    ops_.clear();
    backward_done_ = false;
}

}  // namespace bait

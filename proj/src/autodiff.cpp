#include "dk/autodiff.hpp"

#include "dk/error.hpp"
#include "dk/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace dk::autodiff {

void Tensor::ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
}

void Tensor::zero_grad() {
    std::fill(grad.begin(), grad.end(), 0.0);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

namespace {
std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}
} // namespace

TensorPtr make_tensor(std::vector<std::size_t> shape, bool requires_grad) {
    auto t = std::make_shared<Tensor>();
    t->values.assign(shape_product(shape), 0.0);
    t->shape = std::move(shape);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr make_tensor(std::vector<std::size_t> shape, std::vector<double> values,
                      bool requires_grad) {
    if (shape_product(shape) != values.size())
        throw Error("tensor shape does not match value count");
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->values = std::move(values);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr scalar_tensor(double v, bool requires_grad) {
    return make_tensor({1}, {v}, requires_grad);
}

// --- tape ------------------------------------------------------------------

double* BackwardCtx::grad_for(const TensorPtr& t) {
    if (tape_->produced(t.get())) {
        auto& buf = (*scratch_)[t.get()];
        if (buf.empty()) buf.assign(t->size(), 0.0);
        return buf.data();
    }
    if (!t->requires_grad) return nullptr;
    if (store_) {
        auto& buf = (*store_)[t.get()];
        if (buf.empty()) buf.assign(t->size(), 0.0);
        return buf.data();
    }
    t->ensure_grad();
    return t->grad.data();
}

void Tape::record(TensorPtr out, std::vector<TensorPtr> inputs,
                  std::function<void(BackwardCtx&)> backward_fn) {
    produced_.insert(out.get());
    nodes_.push_back({std::move(out), std::move(inputs), std::move(backward_fn)});
}

void Tape::clear() {
    nodes_.clear();
    produced_.clear();
}

void Tape::backward_seeded(const TensorPtr& root, const std::vector<double>& seed,
                           GradStore* store) {
    if (seed.size() != root->size())
        throw Error("backward seed size " + std::to_string(seed.size()) +
                    " does not match root size " + std::to_string(root->size()));

    std::unordered_map<const Tensor*, std::vector<double>> scratch;

    if (produced(root.get())) {
        scratch[root.get()] = seed;
    } else {
        // Root is itself a leaf; nothing to traverse.
        if (root->requires_grad) {
            if (store) {
                auto& buf = (*store)[root.get()];
                if (buf.empty()) buf.assign(root->size(), 0.0);
                for (std::size_t i = 0; i < seed.size(); ++i) buf[i] += seed[i];
            } else {
                root->ensure_grad();
                for (std::size_t i = 0; i < seed.size(); ++i) root->grad[i] += seed[i];
            }
        }
        return;
    }

    BackwardCtx ctx;
    ctx.tape_ = this;
    ctx.store_ = store;
    ctx.scratch_ = &scratch;

    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        auto found = scratch.find(it->out.get());
        if (found == scratch.end()) continue; // no gradient reached this node
        ctx.out_grad = found->second.data();
        it->backward_fn(ctx);
    }
}

void backward(Tape& tape, const TensorPtr& loss) {
    if (loss->size() != 1)
        throw Error("backward requires a scalar loss, got shape " + loss->shape_str());
    tape.backward_seeded(loss, {1.0});
}

// --- op helpers --------------------------------------------------------------

namespace {

bool wants_grad(std::initializer_list<const TensorPtr*> inputs) {
    for (auto* t : inputs)
        if ((*t)->requires_grad) return true;
    return false;
}

void check_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
    if (a->shape != b->shape)
        throw Error(std::string(op) + ": shape mismatch " + a->shape_str() + " vs " +
                    b->shape_str());
}

} // namespace

// --- elementwise -------------------------------------------------------------

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "add");
    auto out = make_tensor(a->shape);
    for (std::size_t i = 0; i < out->size(); ++i) out->values[i] = a->values[i] + b->values[i];
    out->requires_grad = wants_grad({&a, &b});
    if (tape && out->requires_grad) {
        std::size_t n = out->size();
        tape->record(out, {a, b}, [a, b, n](BackwardCtx& ctx) {
            if (double* ga = ctx.grad_for(a))
                for (std::size_t i = 0; i < n; ++i) ga[i] += ctx.out_grad[i];
            if (double* gb = ctx.grad_for(b))
                for (std::size_t i = 0; i < n; ++i) gb[i] += ctx.out_grad[i];
        });
    }
    return out;
}

TensorPtr sub(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "sub");
    auto out = make_tensor(a->shape);
    for (std::size_t i = 0; i < out->size(); ++i) out->values[i] = a->values[i] - b->values[i];
    out->requires_grad = wants_grad({&a, &b});
    if (tape && out->requires_grad) {
        std::size_t n = out->size();
        tape->record(out, {a, b}, [a, b, n](BackwardCtx& ctx) {
            if (double* ga = ctx.grad_for(a))
                for (std::size_t i = 0; i < n; ++i) ga[i] += ctx.out_grad[i];
            if (double* gb = ctx.grad_for(b))
                for (std::size_t i = 0; i < n; ++i) gb[i] -= ctx.out_grad[i];
        });
    }
    return out;
}

TensorPtr mul(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "mul");
    auto out = make_tensor(a->shape);
    for (std::size_t i = 0; i < out->size(); ++i) out->values[i] = a->values[i] * b->values[i];
    out->requires_grad = wants_grad({&a, &b});
    if (tape && out->requires_grad) {
        std::size_t n = out->size();
        tape->record(out, {a, b}, [a, b, n](BackwardCtx& ctx) {
            if (double* ga = ctx.grad_for(a))
                for (std::size_t i = 0; i < n; ++i) ga[i] += ctx.out_grad[i] * b->values[i];
            if (double* gb = ctx.grad_for(b))
                for (std::size_t i = 0; i < n; ++i) gb[i] += ctx.out_grad[i] * a->values[i];
        });
    }
    return out;
}

TensorPtr scale(Tape* tape, const TensorPtr& a, double s) {
    auto out = make_tensor(a->shape);
    for (std::size_t i = 0; i < out->size(); ++i) out->values[i] = a->values[i] * s;
    out->requires_grad = a->requires_grad;
    if (tape && out->requires_grad) {
        std::size_t n = out->size();
        tape->record(out, {a}, [a, s, n](BackwardCtx& ctx) {
            if (double* ga = ctx.grad_for(a))
                for (std::size_t i = 0; i < n; ++i) ga[i] += s * ctx.out_grad[i];
        });
    }
    return out;
}

TensorPtr add_scalar(Tape* tape, const TensorPtr& a, double c) {
    auto out = make_tensor(a->shape);
    for (std::size_t i = 0; i < out->size(); ++i) out->values[i] = a->values[i] + c;
    out->requires_grad = a->requires_grad;
    if (tape && out->requires_grad) {
        std::size_t n = out->size();
        tape->record(out, {a}, [a, n](BackwardCtx& ctx) {
            if (double* ga = ctx.grad_for(a))
                for (std::size_t i = 0; i < n; ++i) ga[i] += ctx.out_grad[i];
        });
    }
    return out;
}

// --- matmul ------------------------------------------------------------------

TensorPtr matmul(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
        throw Error("matmul: incompatible shapes " + a->shape_str() + " and " + b->shape_str());
    const int m = static_cast<int>(a->shape[0]);
    const int k = static_cast<int>(a->shape[1]);
    const int n = static_cast<int>(b->shape[1]);
    auto out = make_tensor({a->shape[0], b->shape[1]});
    kernels::matmul(a->values.data(), b->values.data(), out->values.data(), m, k, n);
    out->requires_grad = wants_grad({&a, &b});
    if (tape && out->requires_grad) {
        tape->record(out, {a, b}, [a, b, m, k, n](BackwardCtx& ctx) {
            if (double* ga = ctx.grad_for(a))
                kernels::matmul_abt(ctx.out_grad, b->values.data(), ga, m, n, k, /*acc=*/true);
            if (double* gb = ctx.grad_for(b))
                kernels::matmul_atb(a->values.data(), ctx.out_grad, gb, m, k, n, /*acc=*/true);
        });
    }
    return out;
}

TensorPtr transpose(Tape* tape, const TensorPtr& x) {
    if (x->shape.size() != 2) throw Error("transpose: expected matrix, got " + x->shape_str());
    const std::size_t m = x->shape[0], n = x->shape[1];
    auto out = make_tensor({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out->values[j * m + i] = x->values[i * n + j];
    out->requires_grad = x->requires_grad;
    if (tape && out->requires_grad) {
        tape->record(out, {x}, [x, m, n](BackwardCtx& ctx) {
            if (double* gx = ctx.grad_for(x))
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += ctx.out_grad[j * m + i];
        });
    }
    return out;
}

// --- activations ---------------------------------------------------------------

TensorPtr relu(Tape* tape, const TensorPtr& x) {
    auto out = make_tensor(x->shape);
    for (std::size_t i = 0; i < out->size(); ++i)
        out->values[i] = x->values[i] > 0.0 ? x->values[i] : 0.0;
    out->requires_grad = x->requires_grad;
    if (tape && out->requires_grad) {
        std::size_t n = out->size();
        tape->record(out, {x}, [x, n](BackwardCtx& ctx) {
            if (double* gx = ctx.grad_for(x))
                for (std::size_t i = 0; i < n; ++i)
                    if (x->values[i] > 0.0) gx[i] += ctx.out_grad[i];
        });
    }
    return out;
}

TensorPtr softmax_rows(Tape* tape, const TensorPtr& x) {
    const std::size_t rows = x->shape.size() == 1 ? 1 : x->shape[0];
    const std::size_t cols = x->shape.size() == 1 ? x->shape[0] : x->shape[1];
    if (cols == 0) throw Error("softmax: empty input");
    auto out = make_tensor(x->shape);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x->values.data() + r * cols;
        double* or_ = out->values.data() + r * cols;
        double mx = xr[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            or_[j] = std::exp(xr[j] - mx);
            sum += or_[j];
        }
        for (std::size_t j = 0; j < cols; ++j) or_[j] /= sum;
    }
    out->requires_grad = x->requires_grad;
    if (tape && out->requires_grad) {
        tape->record(out, {x}, [x, out, rows, cols](BackwardCtx& ctx) {
            double* gx = ctx.grad_for(x);
            if (!gx) return;
            for (std::size_t r = 0; r < rows; ++r) {
                const double* s = out->values.data() + r * cols;
                const double* g = ctx.out_grad + r * cols;
                double dot = 0.0;
                for (std::size_t j = 0; j < cols; ++j) dot += g[j] * s[j];
                double* gxr = gx + r * cols;
                for (std::size_t j = 0; j < cols; ++j) gxr[j] += s[j] * (g[j] - dot);
            }
        });
    }
    return out;
}

// --- affine ops ------------------------------------------------------------------

TensorPtr add_row_bias(Tape* tape, const TensorPtr& x, const TensorPtr& b) {
    if (x->shape.size() != 2 || b->shape.size() != 1 || b->shape[0] != x->shape[1])
        throw Error("add_row_bias: incompatible shapes " + x->shape_str() + " and " +
                    b->shape_str());
    const std::size_t m = x->shape[0], n = x->shape[1];
    auto out = make_tensor(x->shape);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out->values[i * n + j] = x->values[i * n + j] + b->values[j];
    out->requires_grad = wants_grad({&x, &b});
    if (tape && out->requires_grad) {
        tape->record(out, {x, b}, [x, b, m, n](BackwardCtx& ctx) {
            if (double* gx = ctx.grad_for(x))
                for (std::size_t i = 0; i < m * n; ++i) gx[i] += ctx.out_grad[i];
            if (double* gb = ctx.grad_for(b))
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gb[j] += ctx.out_grad[i * n + j];
        });
    }
    return out;
}

TensorPtr conv1d_k1(Tape* tape, const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
    if (x->shape.size() != 2 || w->shape.size() != 2 || x->shape[1] != w->shape[0])
        throw Error("conv1d_k1: incompatible shapes " + x->shape_str() + " and " +
                    w->shape_str());
    if (b->shape.size() != 1 || b->shape[0] != w->shape[1])
        throw Error("conv1d_k1: bias shape " + b->shape_str() + " does not match " +
                    w->shape_str());
    return add_row_bias(tape, matmul(tape, x, w), b);
}

// --- reductions -------------------------------------------------------------------

TensorPtr mean_rows(Tape* tape, const TensorPtr& x) {
    if (x->shape.size() != 2) throw Error("mean_rows: expected matrix, got " + x->shape_str());
    const std::size_t m = x->shape[0], n = x->shape[1];
    if (m == 0) throw Error("mean_rows: empty input");
    auto out = make_tensor({n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out->values[j] += x->values[i * n + j];
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t j = 0; j < n; ++j) out->values[j] *= inv;
    out->requires_grad = x->requires_grad;
    if (tape && out->requires_grad) {
        tape->record(out, {x}, [x, m, n, inv](BackwardCtx& ctx) {
            if (double* gx = ctx.grad_for(x))
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += inv * ctx.out_grad[j];
        });
    }
    return out;
}

TensorPtr sum_all(Tape* tape, const TensorPtr& x) {
    auto out = scalar_tensor(0.0);
    double s = 0.0;
    for (double v : x->values) s += v;
    out->values[0] = s;
    out->requires_grad = x->requires_grad;
    if (tape && out->requires_grad) {
        std::size_t n = x->size();
        tape->record(out, {x}, [x, n](BackwardCtx& ctx) {
            if (double* gx = ctx.grad_for(x))
                for (std::size_t i = 0; i < n; ++i) gx[i] += ctx.out_grad[0];
        });
    }
    return out;
}

TensorPtr mean_all(Tape* tape, const TensorPtr& x) {
    if (x->size() == 0) throw Error("mean_all: empty input");
    return scale(tape, sum_all(tape, x), 1.0 / static_cast<double>(x->size()));
}

// --- shape ops ----------------------------------------------------------------------

TensorPtr concat_cols(Tape* tape, const std::vector<TensorPtr>& xs) {
    if (xs.empty()) throw Error("concat_cols: no inputs");
    const std::size_t m = xs[0]->shape[0];
    std::size_t total = 0;
    for (const auto& x : xs) {
        if (x->shape.size() != 2 || x->shape[0] != m)
            throw Error("concat_cols: row count mismatch at " + x->shape_str());
        total += x->shape[1];
    }
    auto out = make_tensor({m, total});
    std::size_t off = 0;
    bool rg = false;
    for (const auto& x : xs) {
        const std::size_t n = x->shape[1];
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(x->values.data() + i * n, n, out->values.data() + i * total + off);
        off += n;
        rg = rg || x->requires_grad;
    }
    out->requires_grad = rg;
    if (tape && out->requires_grad) {
        auto inputs = xs;
        tape->record(out, inputs, [inputs, m, total](BackwardCtx& ctx) {
            std::size_t off = 0;
            for (const auto& x : inputs) {
                const std::size_t n = x->shape[1];
                if (double* gx = ctx.grad_for(x))
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j)
                            gx[i * n + j] += ctx.out_grad[i * total + off + j];
                off += n;
            }
        });
    }
    return out;
}

TensorPtr stack_rows(Tape* tape, const std::vector<TensorPtr>& xs) {
    if (xs.empty()) throw Error("stack_rows: no inputs");
    const std::size_t n = xs[0]->size();
    auto out = make_tensor({xs.size(), n});
    bool rg = false;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i]->shape.size() != 1 || xs[i]->size() != n)
            throw Error("stack_rows: inputs must be equal-length vectors");
        std::copy_n(xs[i]->values.data(), n, out->values.data() + i * n);
        rg = rg || xs[i]->requires_grad;
    }
    out->requires_grad = rg;
    if (tape && out->requires_grad) {
        auto inputs = xs;
        tape->record(out, inputs, [inputs, n](BackwardCtx& ctx) {
            for (std::size_t i = 0; i < inputs.size(); ++i)
                if (double* gx = ctx.grad_for(inputs[i]))
                    for (std::size_t j = 0; j < n; ++j) gx[j] += ctx.out_grad[i * n + j];
        });
    }
    return out;
}

TensorPtr rowwise_sqdist(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "rowwise_sqdist");
    if (a->shape.size() != 2)
        throw Error("rowwise_sqdist: expected matrices, got " + a->shape_str());
    const std::size_t m = a->shape[0], n = a->shape[1];
    auto out = make_tensor({m});
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double diff = a->values[i * n + j] - b->values[i * n + j];
            s += diff * diff;
        }
        out->values[i] = s;
    }
    out->requires_grad = wants_grad({&a, &b});
    if (tape && out->requires_grad) {
        tape->record(out, {a, b}, [a, b, m, n](BackwardCtx& ctx) {
            double* ga = ctx.grad_for(a);
            double* gb = ctx.grad_for(b);
            if (!ga && !gb) return;
            for (std::size_t i = 0; i < m; ++i) {
                const double g2 = 2.0 * ctx.out_grad[i];
                for (std::size_t j = 0; j < n; ++j) {
                    const double diff = a->values[i * n + j] - b->values[i * n + j];
                    if (ga) ga[i * n + j] += g2 * diff;
                    if (gb) gb[i * n + j] -= g2 * diff;
                }
            }
        });
    }
    return out;
}

TensorPtr layer_norm_rows(Tape* tape, const TensorPtr& x, const TensorPtr& gain,
                          const TensorPtr& bias, double eps) {
    if (x->shape.size() != 2) throw Error("layer_norm: expected matrix, got " + x->shape_str());
    const std::size_t m = x->shape[0], n = x->shape[1];
    if (gain->shape.size() != 1 || gain->shape[0] != n || bias->shape != gain->shape)
        throw Error("layer_norm: gain/bias must be [" + std::to_string(n) + "]");
    auto out = make_tensor(x->shape);
    // Keep normalized activations for backward.
    auto xhat = std::make_shared<std::vector<double>>(m * n);
    auto inv_std = std::make_shared<std::vector<double>>(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x->values.data() + i * n;
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += xi[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double c = xi[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[i] = is;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (xi[j] - mean) * is;
            (*xhat)[i * n + j] = h;
            out->values[i * n + j] = gain->values[j] * h + bias->values[j];
        }
    }
    out->requires_grad = wants_grad({&x, &gain, &bias});
    if (tape && out->requires_grad) {
        tape->record(out, {x, gain, bias}, [x, gain, bias, xhat, inv_std, m, n](BackwardCtx& ctx) {
            double* gx = ctx.grad_for(x);
            double* gg = ctx.grad_for(gain);
            double* gb = ctx.grad_for(bias);
            for (std::size_t i = 0; i < m; ++i) {
                const double* g = ctx.out_grad + i * n;
                const double* h = xhat->data() + i * n;
                if (gg || gb) {
                    for (std::size_t j = 0; j < n; ++j) {
                        if (gg) gg[j] += g[j] * h[j];
                        if (gb) gb[j] += g[j];
                    }
                }
                if (gx) {
                    // d/dx of (x - mean)/std with biased variance.
                    double sum_gh = 0.0, sum_ghh = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double gh = g[j] * gain->values[j];
                        sum_gh += gh;
                        sum_ghh += gh * h[j];
                    }
                    const double invn = 1.0 / static_cast<double>(n);
                    for (std::size_t j = 0; j < n; ++j) {
                        const double gh = g[j] * gain->values[j];
                        gx[i * n + j] +=
                            (*inv_std)[i] * (gh - invn * sum_gh - h[j] * invn * sum_ghh);
                    }
                }
            }
        });
    }
    return out;
}

TensorPtr gather_rows(Tape* tape, const TensorPtr& table, const std::vector<std::size_t>& indices) {
    if (table->shape.size() != 2)
        throw Error("gather_rows: expected matrix table, got " + table->shape_str());
    const std::size_t n = table->shape[1];
    for (std::size_t idx : indices)
        if (idx >= table->shape[0])
            throw Error("gather_rows: index " + std::to_string(idx) + " out of range for " +
                        table->shape_str());
    auto out = make_tensor({indices.size(), n});
    for (std::size_t i = 0; i < indices.size(); ++i)
        std::copy_n(table->values.data() + indices[i] * n, n, out->values.data() + i * n);
    out->requires_grad = table->requires_grad;
    if (tape && out->requires_grad) {
        auto idx = indices;
        tape->record(out, {table}, [table, idx, n](BackwardCtx& ctx) {
            if (double* gt = ctx.grad_for(table))
                for (std::size_t i = 0; i < idx.size(); ++i)
                    for (std::size_t j = 0; j < n; ++j)
                        gt[idx[i] * n + j] += ctx.out_grad[i * n + j];
        });
    }
    return out;
}

} // namespace dk::autodiff

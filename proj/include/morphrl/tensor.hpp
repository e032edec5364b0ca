#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "morphrl/common.hpp"

namespace morphrl {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

// NaN/Inf checks after every op. On by default in debug builds; tests and
// the trainer can flip it at runtime.
inline bool& finite_checks() {
#ifdef NDEBUG
    static bool enabled = false;
#else
    static bool enabled = true;
#endif
    return enabled;
}

namespace detail {

template <class Real>
struct StorageT {
    Shape shape;
    std::vector<Real> data;
    std::vector<Real> grad;  // allocated iff requires_grad
    bool requires_grad = false;
    bool leaf = true;
};

}  // namespace detail

template <class Real>
class TensorT {
public:
    using StoragePtr = std::shared_ptr<detail::StorageT<Real>>;

    TensorT() = default;

    static TensorT zeros(Shape shape, bool requires_grad = false) {
        return make(std::move(shape), {}, requires_grad, true);
    }
    static TensorT full(Shape shape, Real value, bool requires_grad = false) {
        TensorT t = zeros(std::move(shape), requires_grad);
        std::fill(t.st_->data.begin(), t.st_->data.end(), value);
        return t;
    }
    static TensorT from(Shape shape, std::vector<Real> values, bool requires_grad = false) {
        if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
            throw ShapeError("tensor init: shape " + shape_str(shape) + " does not hold " +
                             std::to_string(values.size()) + " values");
        return make(std::move(shape), std::move(values), requires_grad, false);
    }
    static TensorT scalar(Real v, bool requires_grad = false) {
        return from({1}, {v}, requires_grad);
    }
    static TensorT vector(std::vector<Real> values, bool requires_grad = false) {
        Shape s{static_cast<std::int64_t>(values.size())};
        return from(std::move(s), std::move(values), requires_grad);
    }

    bool defined() const { return static_cast<bool>(st_); }
    const Shape& shape() const { return st_->shape; }
    std::int64_t ndim() const { return static_cast<std::int64_t>(st_->shape.size()); }
    std::int64_t numel() const { return static_cast<std::int64_t>(st_->data.size()); }
    std::int64_t extent(std::int64_t d) const {
        return st_->shape[static_cast<std::size_t>(d < 0 ? ndim() + d : d)];
    }
    bool requires_grad() const { return st_->requires_grad; }
    bool leaf() const { return st_->leaf; }

    std::vector<Real>& data() { return st_->data; }
    const std::vector<Real>& data() const { return st_->data; }
    std::vector<Real>& grad() { return st_->grad; }
    const std::vector<Real>& grad() const { return st_->grad; }

    Real item() const {
        if (numel() != 1) throw ContractError("item(): tensor has " + std::to_string(numel()) + " elements");
        return st_->data[0];
    }

    void zero_grad() {
        if (st_->requires_grad) std::fill(st_->grad.begin(), st_->grad.end(), Real(0));
    }

    TensorT detached_copy() const {
        return from(st_->shape, st_->data, false);
    }

    StoragePtr storage() const { return st_; }

    static TensorT wrap(StoragePtr st) {
        TensorT t;
        t.st_ = std::move(st);
        return t;
    }

private:
    static TensorT make(Shape shape, std::vector<Real> values, bool requires_grad, bool zero_fill) {
        TensorT t;
        t.st_ = std::make_shared<detail::StorageT<Real>>();
        t.st_->shape = std::move(shape);
        const auto n = static_cast<std::size_t>(shape_numel(t.st_->shape));
        if (zero_fill)
            t.st_->data.assign(n, Real(0));
        else
            t.st_->data = std::move(values);
        t.st_->requires_grad = requires_grad;
        if (requires_grad) t.st_->grad.assign(n, Real(0));
        return t;
    }

    StoragePtr st_;
};

// Reverse-mode tape. Ops append their backward rule in execution order;
// backward() replays them once in reverse. Tensors and their tape belong to
// one thread.
template <class Real>
class TapeT {
public:
    void record(std::shared_ptr<detail::StorageT<Real>> out, std::function<void()> backward) {
        ops_.push_back(Op{std::move(out), std::move(backward)});
    }

    std::size_t size() const { return ops_.size(); }

    void clear() { ops_.clear(); }

    // Populates grads of every requires_grad leaf reachable from `loss`.
    // Non-leaf grads are reset first, so calling twice accumulates exactly
    // twice into the leaves.
    void backward(const TensorT<Real>& loss) {
        if (loss.numel() != 1)
            throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
        if (!loss.requires_grad())
            throw ContractError("backward: loss does not require grad (no parameters on tape)");
        for (auto& op : ops_)
            if (!op.out->leaf) std::fill(op.out->grad.begin(), op.out->grad.end(), Real(0));
        loss.storage()->grad[0] += Real(1);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) it->backward();
    }

private:
    struct Op {
        std::shared_ptr<detail::StorageT<Real>> out;
        std::function<void()> backward;
        void operator()() const { backward(); }
    };

    std::vector<Op> ops_;
};

using Tensor = TensorT<float>;
using Tape = TapeT<float>;
using Tensor64 = TensorT<double>;
using Tape64 = TapeT<double>;

namespace detail {

template <class Real>
void check_finite(const TensorT<Real>& t, const char* op) {
    if (!finite_checks()) return;
    for (Real v : t.data())
        if (!std::isfinite(v))
            throw NumericsError(std::string(op) + ": non-finite value in output " + shape_str(t.shape()));
}

template <class Real>
TensorT<Real> op_output(TapeT<Real>* tape, Shape shape, bool any_input_grad) {
    const bool rg = tape != nullptr && any_input_grad;
    TensorT<Real> out = TensorT<Real>::zeros(std::move(shape), rg);
    out.storage()->leaf = false;
    return out;
}

// c[m x n] += a[m x k] . b[k x n]
template <class Real>
void gemm_acc(const Real* a, const Real* b, Real* c, std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const Real* arow = a + i * k;
        Real* crow = c + i * n;
        for (std::int64_t l = 0; l < k; ++l) {
            const Real al = arow[l];
            const Real* brow = b + l * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += al * brow[j];
        }
    }
}

// c[m x n] += a[m x k] . b[n x k]^T  (dot products of contiguous rows)
template <class Real>
void gemm_nt_acc(const Real* a, const Real* b, Real* c, std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const Real* arow = a + i * k;
        Real* crow = c + i * n;
        for (std::int64_t j = 0; j < n; ++j) {
            const Real* brow = b + j * k;
            Real acc = 0;
            for (std::int64_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
            crow[j] += acc;
        }
    }
}

// c[k x n] += a[m x k]^T . b[m x n]
template <class Real>
void gemm_tn_acc(const Real* a, const Real* b, Real* c, std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const Real* arow = a + i * k;
        const Real* brow = b + i * n;
        for (std::int64_t l = 0; l < k; ++l) {
            const Real al = arow[l];
            Real* crow = c + l * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += al * brow[j];
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and structural ops
// ---------------------------------------------------------------------------

template <class Real>
TensorT<Real> add(TapeT<Real>* tape, const TensorT<Real>& a, const TensorT<Real>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    auto out = detail::op_output(tape, a.shape(), a.requires_grad() || b.requires_grad());
    const auto n = a.numel();
    const Real* pa = a.data().data();
    const Real* pb = b.data().data();
    Real* po = out.data().data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    detail::check_finite(out, "add");
    if (tape != nullptr && out.requires_grad()) {
        auto sa = a.storage(), sb = b.storage(), so = out.storage();
        tape->record(so, [sa, sb, so, n] {
            if (sa->requires_grad)
                for (std::int64_t i = 0; i < n; ++i) sa->grad[i] += so->grad[i];
            if (sb->requires_grad)
                for (std::int64_t i = 0; i < n; ++i) sb->grad[i] += so->grad[i];
        });
    }
    return out;
}

template <class Real>
TensorT<Real> sub(TapeT<Real>* tape, const TensorT<Real>& a, const TensorT<Real>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    auto out = detail::op_output(tape, a.shape(), a.requires_grad() || b.requires_grad());
    const auto n = a.numel();
    const Real* pa = a.data().data();
    const Real* pb = b.data().data();
    Real* po = out.data().data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
    detail::check_finite(out, "sub");
    if (tape != nullptr && out.requires_grad()) {
        auto sa = a.storage(), sb = b.storage(), so = out.storage();
        tape->record(so, [sa, sb, so, n] {
            if (sa->requires_grad)
                for (std::int64_t i = 0; i < n; ++i) sa->grad[i] += so->grad[i];
            if (sb->requires_grad)
                for (std::int64_t i = 0; i < n; ++i) sb->grad[i] -= so->grad[i];
        });
    }
    return out;
}

template <class Real>
TensorT<Real> mul(TapeT<Real>* tape, const TensorT<Real>& a, const TensorT<Real>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    auto out = detail::op_output(tape, a.shape(), a.requires_grad() || b.requires_grad());
    const auto n = a.numel();
    const Real* pa = a.data().data();
    const Real* pb = b.data().data();
    Real* po = out.data().data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    detail::check_finite(out, "mul");
    if (tape != nullptr && out.requires_grad()) {
        auto sa = a.storage(), sb = b.storage(), so = out.storage();
        tape->record(so, [sa, sb, so, n] {
            if (sa->requires_grad)
                for (std::int64_t i = 0; i < n; ++i) sa->grad[i] += so->grad[i] * sb->data[i];
            if (sb->requires_grad)
                for (std::int64_t i = 0; i < n; ++i) sb->grad[i] += so->grad[i] * sa->data[i];
        });
    }
    return out;
}

template <class Real>
TensorT<Real> scale(TapeT<Real>* tape, const TensorT<Real>& a, Real factor) {
    auto out = detail::op_output(tape, a.shape(), a.requires_grad());
    const auto n = a.numel();
    const Real* pa = a.data().data();
    Real* po = out.data().data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * factor;
    detail::check_finite(out, "scale");
    if (tape != nullptr && out.requires_grad()) {
        auto sa = a.storage(), so = out.storage();
        tape->record(so, [sa, so, n, factor] {
            for (std::int64_t i = 0; i < n; ++i) sa->grad[i] += so->grad[i] * factor;
        });
    }
    return out;
}

// bias over the last dim
template <class Real>
TensorT<Real> add_bias(TapeT<Real>* tape, const TensorT<Real>& a, const TensorT<Real>& bias) {
    const auto d = a.extent(-1);
    if (bias.ndim() != 1 || bias.extent(0) != d)
        throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match last dim of " +
                         shape_str(a.shape()));
    auto out = detail::op_output(tape, a.shape(), a.requires_grad() || bias.requires_grad());
    const auto rows = a.numel() / d;
    const Real* pa = a.data().data();
    const Real* pb = bias.data().data();
    Real* po = out.data().data();
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t j = 0; j < d; ++j) po[r * d + j] = pa[r * d + j] + pb[j];
    detail::check_finite(out, "add_bias");
    if (tape != nullptr && out.requires_grad()) {
        auto sa = a.storage(), sb = bias.storage(), so = out.storage();
        tape->record(so, [sa, sb, so, rows, d] {
            if (sa->requires_grad)
                for (std::int64_t i = 0; i < rows * d; ++i) sa->grad[i] += so->grad[i];
            if (sb->requires_grad)
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t j = 0; j < d; ++j) sb->grad[j] += so->grad[r * d + j];
        });
    }
    return out;
}

template <class Real>
TensorT<Real> relu(TapeT<Real>* tape, const TensorT<Real>& a) {
    auto out = detail::op_output(tape, a.shape(), a.requires_grad());
    const auto n = a.numel();
    const Real* pa = a.data().data();
    Real* po = out.data().data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] > Real(0) ? pa[i] : Real(0);
    detail::check_finite(out, "relu");
    if (tape != nullptr && out.requires_grad()) {
        auto sa = a.storage(), so = out.storage();
        tape->record(so, [sa, so, n] {
            for (std::int64_t i = 0; i < n; ++i)
                if (sa->data[i] > Real(0)) sa->grad[i] += so->grad[i];
        });
    }
    return out;
}

template <class Real>
TensorT<Real> tanh_op(TapeT<Real>* tape, const TensorT<Real>& a) {
    auto out = detail::op_output(tape, a.shape(), a.requires_grad());
    const auto n = a.numel();
    const Real* pa = a.data().data();
    Real* po = out.data().data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = std::tanh(pa[i]);
    detail::check_finite(out, "tanh");
    if (tape != nullptr && out.requires_grad()) {
        auto sa = a.storage(), so = out.storage();
        tape->record(so, [sa, so, n] {
            for (std::int64_t i = 0; i < n; ++i)
                sa->grad[i] += so->grad[i] * (Real(1) - so->data[i] * so->data[i]);
        });
    }
    return out;
}

template <class Real>
TensorT<Real> square(TapeT<Real>* tape, const TensorT<Real>& a) {
    auto out = detail::op_output(tape, a.shape(), a.requires_grad());
    const auto n = a.numel();
    const Real* pa = a.data().data();
    Real* po = out.data().data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pa[i];
    detail::check_finite(out, "square");
    if (tape != nullptr && out.requires_grad()) {
        auto sa = a.storage(), so = out.storage();
        tape->record(so, [sa, so, n] {
            for (std::int64_t i = 0; i < n; ++i) sa->grad[i] += Real(2) * sa->data[i] * so->grad[i];
        });
    }
    return out;
}

template <class Real>
TensorT<Real> reshape(TapeT<Real>* tape, const TensorT<Real>& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    auto out = detail::op_output(tape, std::move(shape), a.requires_grad());
    out.data() = a.data();
    if (tape != nullptr && out.requires_grad()) {
        auto sa = a.storage(), so = out.storage();
        const auto n = a.numel();
        tape->record(so, [sa, so, n] {
            for (std::int64_t i = 0; i < n; ++i) sa->grad[i] += so->grad[i];
        });
    }
    return out;
}

template <class Real>
TensorT<Real> sum_all(TapeT<Real>* tape, const TensorT<Real>& a) {
    auto out = detail::op_output(tape, Shape{1}, a.requires_grad());
    Real acc = 0;
    for (Real v : a.data()) acc += v;
    out.data()[0] = acc;
    detail::check_finite(out, "sum_all");
    if (tape != nullptr && out.requires_grad()) {
        auto sa = a.storage(), so = out.storage();
        const auto n = a.numel();
        tape->record(so, [sa, so, n] {
            const Real g = so->grad[0];
            for (std::int64_t i = 0; i < n; ++i) sa->grad[i] += g;
        });
    }
    return out;
}

template <class Real>
TensorT<Real> mean_all(TapeT<Real>* tape, const TensorT<Real>& a) {
    auto out = detail::op_output(tape, Shape{1}, a.requires_grad());
    Real acc = 0;
    for (Real v : a.data()) acc += v;
    const auto n = a.numel();
    out.data()[0] = acc / static_cast<Real>(n);
    detail::check_finite(out, "mean_all");
    if (tape != nullptr && out.requires_grad()) {
        auto sa = a.storage(), so = out.storage();
        tape->record(so, [sa, so, n] {
            const Real g = so->grad[0] / static_cast<Real>(n);
            for (std::int64_t i = 0; i < n; ++i) sa->grad[i] += g;
        });
    }
    return out;
}

// [..., n] -> [...]; reduces the last dim to its mean
template <class Real>
TensorT<Real> mean_last(TapeT<Real>* tape, const TensorT<Real>& a) {
    const auto d = a.extent(-1);
    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    if (out_shape.empty()) out_shape = {1};
    auto out = detail::op_output(tape, std::move(out_shape), a.requires_grad());
    const auto rows = a.numel() / d;
    const Real* pa = a.data().data();
    Real* po = out.data().data();
    for (std::int64_t r = 0; r < rows; ++r) {
        Real acc = 0;
        for (std::int64_t j = 0; j < d; ++j) acc += pa[r * d + j];
        po[r] = acc / static_cast<Real>(d);
    }
    detail::check_finite(out, "mean_last");
    if (tape != nullptr && out.requires_grad()) {
        auto sa = a.storage(), so = out.storage();
        tape->record(so, [sa, so, rows, d] {
            for (std::int64_t r = 0; r < rows; ++r) {
                const Real g = so->grad[r] / static_cast<Real>(d);
                for (std::int64_t j = 0; j < d; ++j) sa->grad[r * d + j] += g;
            }
        });
    }
    return out;
}

template <class Real>
TensorT<Real> slice_last(TapeT<Real>* tape, const TensorT<Real>& a, std::int64_t offset, std::int64_t len) {
    const auto d = a.extent(-1);
    if (offset < 0 || len <= 0 || offset + len > d)
        throw ShapeError("slice_last: [" + std::to_string(offset) + "," + std::to_string(offset + len) +
                         ") out of " + shape_str(a.shape()));
    Shape out_shape = a.shape();
    out_shape.back() = len;
    auto out = detail::op_output(tape, std::move(out_shape), a.requires_grad());
    const auto rows = a.numel() / d;
    const Real* pa = a.data().data();
    Real* po = out.data().data();
    for (std::int64_t r = 0; r < rows; ++r)
        std::copy(pa + r * d + offset, pa + r * d + offset + len, po + r * len);
    if (tape != nullptr && out.requires_grad()) {
        auto sa = a.storage(), so = out.storage();
        tape->record(so, [sa, so, rows, d, offset, len] {
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t j = 0; j < len; ++j)
                    sa->grad[r * d + offset + j] += so->grad[r * len + j];
        });
    }
    return out;
}

template <class Real>
TensorT<Real> concat_last(TapeT<Real>* tape, std::span<const TensorT<Real>> parts) {
    if (parts.empty()) throw ContractError("concat_last: no inputs");
    Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
    std::int64_t total = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        Shape pl(p.shape().begin(), p.shape().end() - 1);
        if (pl != lead)
            throw ShapeError("concat_last: leading dims differ, " + shape_str(parts[0].shape()) + " vs " +
                             shape_str(p.shape()));
        total += p.extent(-1);
        any_grad = any_grad || p.requires_grad();
    }
    Shape out_shape = lead;
    out_shape.push_back(total);
    auto out = detail::op_output(tape, std::move(out_shape), any_grad);
    const auto rows = out.numel() / total;
    Real* po = out.data().data();
    std::int64_t col = 0;
    for (const auto& p : parts) {
        const auto w = p.extent(-1);
        const Real* pp = p.data().data();
        for (std::int64_t r = 0; r < rows; ++r)
            std::copy(pp + r * w, pp + (r + 1) * w, po + r * total + col);
        col += w;
    }
    if (tape != nullptr && out.requires_grad()) {
        std::vector<typename TensorT<Real>::StoragePtr> srcs;
        for (const auto& p : parts) srcs.push_back(p.storage());
        auto so = out.storage();
        tape->record(so, [srcs, so, rows, total] {
            std::int64_t c = 0;
            for (const auto& s : srcs) {
                const auto w = static_cast<std::int64_t>(s->shape.back());
                if (s->requires_grad)
                    for (std::int64_t r = 0; r < rows; ++r)
                        for (std::int64_t j = 0; j < w; ++j) s->grad[r * w + j] += so->grad[r * total + c + j];
                c += w;
            }
        });
    }
    return out;
}

template <class Real>
TensorT<Real> concat_last(TapeT<Real>* tape, const TensorT<Real>& a, const TensorT<Real>& b) {
    const TensorT<Real> parts[2] = {a, b};
    return concat_last(tape, std::span<const TensorT<Real>>(parts, 2));
}

// [s...] -> [copies, s...]
template <class Real>
TensorT<Real> expand_leading(TapeT<Real>* tape, const TensorT<Real>& a, std::int64_t copies) {
    if (copies <= 0) throw ContractError("expand_leading: copies must be positive");
    Shape out_shape{copies};
    out_shape.insert(out_shape.end(), a.shape().begin(), a.shape().end());
    auto out = detail::op_output(tape, std::move(out_shape), a.requires_grad());
    const auto n = a.numel();
    const Real* pa = a.data().data();
    Real* po = out.data().data();
    for (std::int64_t c = 0; c < copies; ++c) std::copy(pa, pa + n, po + c * n);
    if (tape != nullptr && out.requires_grad()) {
        auto sa = a.storage(), so = out.storage();
        tape->record(so, [sa, so, copies, n] {
            for (std::int64_t c = 0; c < copies; ++c)
                for (std::int64_t i = 0; i < n; ++i) sa->grad[i] += so->grad[c * n + i];
        });
    }
    return out;
}

template <class Real>
TensorT<Real> transpose_last2(TapeT<Real>* tape, const TensorT<Real>& a) {
    if (a.ndim() < 2) throw ShapeError("transpose_last2: need ndim >= 2, got " + shape_str(a.shape()));
    const auto m = a.extent(-2), n = a.extent(-1);
    Shape out_shape = a.shape();
    std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
    auto out = detail::op_output(tape, std::move(out_shape), a.requires_grad());
    const auto batch = a.numel() / (m * n);
    const Real* pa = a.data().data();
    Real* po = out.data().data();
    for (std::int64_t b = 0; b < batch; ++b)
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < n; ++j) po[b * m * n + j * m + i] = pa[b * m * n + i * n + j];
    if (tape != nullptr && out.requires_grad()) {
        auto sa = a.storage(), so = out.storage();
        tape->record(so, [sa, so, batch, m, n] {
            for (std::int64_t b = 0; b < batch; ++b)
                for (std::int64_t i = 0; i < m; ++i)
                    for (std::int64_t j = 0; j < n; ++j)
                        sa->grad[b * m * n + i * n + j] += so->grad[b * m * n + j * m + i];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

// a [..., k] x b [k, n] -> [..., n]. Leading dims of `a` are treated as
// stacked rows, which covers both the plain 2-D product and shared-weight
// linear layers over a batch.
template <class Real>
TensorT<Real> matmul(TapeT<Real>* tape, const TensorT<Real>& a, const TensorT<Real>& b) {
    if (a.ndim() < 2 || b.ndim() != 2 || a.extent(-1) != b.extent(0))
        throw ShapeError("matmul: inner extents do not match, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    const auto k = b.extent(0), n = b.extent(1);
    const auto m = a.numel() / k;
    Shape out_shape = a.shape();
    out_shape.back() = n;
    auto out = detail::op_output(tape, std::move(out_shape), a.requires_grad() || b.requires_grad());
    detail::gemm_acc(a.data().data(), b.data().data(), out.data().data(), m, k, n);
    detail::check_finite(out, "matmul");
    if (tape != nullptr && out.requires_grad()) {
        auto sa = a.storage(), sb = b.storage(), so = out.storage();
        tape->record(so, [sa, sb, so, m, k, n] {
            if (sa->requires_grad)
                detail::gemm_nt_acc(so->grad.data(), sb->data.data(), sa->grad.data(), m, n, k);
            if (sb->requires_grad)
                detail::gemm_tn_acc(sa->data.data(), so->grad.data(), sb->grad.data(), m, k, n);
        });
    }
    return out;
}

// a [..., m, k] x b [..., k, n] with identical leading dims -> [..., m, n]
template <class Real>
TensorT<Real> bmm(TapeT<Real>* tape, const TensorT<Real>& a, const TensorT<Real>& b) {
    if (a.ndim() != b.ndim() || a.ndim() < 2 ||
        !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin()) ||
        a.extent(-1) != b.extent(-2))
        throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const auto m = a.extent(-2), k = a.extent(-1), n = b.extent(-1);
    const auto batch = a.numel() / (m * k);
    Shape out_shape = a.shape();
    out_shape.back() = n;
    auto out = detail::op_output(tape, std::move(out_shape), a.requires_grad() || b.requires_grad());
    for (std::int64_t c = 0; c < batch; ++c)
        detail::gemm_acc(a.data().data() + c * m * k, b.data().data() + c * k * n,
                         out.data().data() + c * m * n, m, k, n);
    detail::check_finite(out, "bmm");
    if (tape != nullptr && out.requires_grad()) {
        auto sa = a.storage(), sb = b.storage(), so = out.storage();
        tape->record(so, [sa, sb, so, batch, m, k, n] {
            for (std::int64_t c = 0; c < batch; ++c) {
                if (sa->requires_grad)
                    detail::gemm_nt_acc(so->grad.data() + c * m * n, sb->data.data() + c * k * n,
                                        sa->grad.data() + c * m * k, m, n, k);
                if (sb->requires_grad)
                    detail::gemm_tn_acc(sa->data.data() + c * m * k, so->grad.data() + c * m * n,
                                        sb->grad.data() + c * k * n, m, k, n);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Row-normalizing ops
// ---------------------------------------------------------------------------

// Stabilized softmax over the last dim; every row sums to 1.
template <class Real>
TensorT<Real> softmax_last(TapeT<Real>* tape, const TensorT<Real>& a) {
    const auto d = a.extent(-1);
    auto out = detail::op_output(tape, a.shape(), a.requires_grad());
    const auto rows = a.numel() / d;
    const Real* pa = a.data().data();
    Real* po = out.data().data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const Real* x = pa + r * d;
        Real* y = po + r * d;
        Real mx = x[0];
        for (std::int64_t j = 1; j < d; ++j) mx = std::max(mx, x[j]);
        Real sum = 0;
        for (std::int64_t j = 0; j < d; ++j) {
            y[j] = std::exp(x[j] - mx);
            sum += y[j];
        }
        const Real inv = Real(1) / sum;
        for (std::int64_t j = 0; j < d; ++j) y[j] *= inv;
    }
    detail::check_finite(out, "softmax");
    if (tape != nullptr && out.requires_grad()) {
        auto sa = a.storage(), so = out.storage();
        tape->record(so, [sa, so, rows, d] {
            for (std::int64_t r = 0; r < rows; ++r) {
                const Real* y = so->data.data() + r * d;
                const Real* gy = so->grad.data() + r * d;
                Real dot = 0;
                for (std::int64_t j = 0; j < d; ++j) dot += gy[j] * y[j];
                Real* gx = sa->grad.data() + r * d;
                for (std::int64_t j = 0; j < d; ++j) gx[j] += y[j] * (gy[j] - dot);
            }
        });
    }
    return out;
}

// Per-row standardization over the last dim followed by an affine map.
template <class Real>
TensorT<Real> layer_norm_last(TapeT<Real>* tape, const TensorT<Real>& a, const TensorT<Real>& gain,
                              const TensorT<Real>& bias, Real eps) {
    const auto d = a.extent(-1);
    if (gain.ndim() != 1 || gain.extent(0) != d || bias.ndim() != 1 || bias.extent(0) != d)
        throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " do not match last dim of " + shape_str(a.shape()));
    if (!(eps > Real(0))) throw ContractError("layer_norm: eps must be positive");
    auto out = detail::op_output(tape, a.shape(),
                                 a.requires_grad() || gain.requires_grad() || bias.requires_grad());
    const auto rows = a.numel() / d;
    const Real* pa = a.data().data();
    const Real* pg = gain.data().data();
    const Real* pb = bias.data().data();
    Real* po = out.data().data();
    std::vector<Real> inv_std(static_cast<std::size_t>(rows));
    std::vector<Real> means(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const Real* x = pa + r * d;
        Real mean = 0;
        for (std::int64_t j = 0; j < d; ++j) mean += x[j];
        mean /= static_cast<Real>(d);
        Real var = 0;
        for (std::int64_t j = 0; j < d; ++j) var += (x[j] - mean) * (x[j] - mean);
        var /= static_cast<Real>(d);
        const Real istd = Real(1) / std::sqrt(var + eps);
        means[static_cast<std::size_t>(r)] = mean;
        inv_std[static_cast<std::size_t>(r)] = istd;
        Real* y = po + r * d;
        for (std::int64_t j = 0; j < d; ++j) y[j] = (x[j] - mean) * istd * pg[j] + pb[j];
    }
    detail::check_finite(out, "layer_norm");
    if (tape != nullptr && out.requires_grad()) {
        auto sa = a.storage(), sg = gain.storage(), sb = bias.storage(), so = out.storage();
        tape->record(so, [sa, sg, sb, so, rows, d, means, inv_std] {
            for (std::int64_t r = 0; r < rows; ++r) {
                const Real* x = sa->data.data() + r * d;
                const Real* gy = so->grad.data() + r * d;
                const Real mean = means[static_cast<std::size_t>(r)];
                const Real istd = inv_std[static_cast<std::size_t>(r)];
                if (sg->requires_grad || sb->requires_grad) {
                    for (std::int64_t j = 0; j < d; ++j) {
                        const Real xhat = (x[j] - mean) * istd;
                        if (sg->requires_grad) sg->grad[j] += gy[j] * xhat;
                        if (sb->requires_grad) sb->grad[j] += gy[j];
                    }
                }
                if (sa->requires_grad) {
                    Real sum_g = 0, sum_gx = 0;
                    for (std::int64_t j = 0; j < d; ++j) {
                        const Real gh = gy[j] * sg->data[j];
                        const Real xhat = (x[j] - mean) * istd;
                        sum_g += gh;
                        sum_gx += gh * xhat;
                    }
                    Real* gx = sa->grad.data() + r * d;
                    const Real invd = Real(1) / static_cast<Real>(d);
                    for (std::int64_t j = 0; j < d; ++j) {
                        const Real gh = gy[j] * sg->data[j];
                        const Real xhat = (x[j] - mean) * istd;
                        gx[j] += istd * (gh - invd * sum_g - xhat * invd * sum_gx);
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Embedding and sinusoid ops
// ---------------------------------------------------------------------------

// Gathers table rows; gradients scatter-add back, so positions sharing a
// token accumulate into the same row.
template <class Real>
TensorT<Real> embed_rows(TapeT<Real>* tape, const TensorT<Real>& table, const std::vector<int>& tokens) {
    if (table.ndim() != 2) throw ShapeError("embed_rows: table must be 2-D, got " + shape_str(table.shape()));
    const auto vocab = table.extent(0), width = table.extent(1);
    for (int t : tokens)
        if (t < 0 || t >= vocab)
            throw ContractError("embed_rows: token " + std::to_string(t) + " outside vocab of " +
                                std::to_string(vocab));
    const auto len = static_cast<std::int64_t>(tokens.size());
    auto out = detail::op_output(tape, Shape{len, width}, table.requires_grad());
    const Real* pt = table.data().data();
    Real* po = out.data().data();
    for (std::int64_t i = 0; i < len; ++i)
        std::copy(pt + tokens[static_cast<std::size_t>(i)] * width,
                  pt + (tokens[static_cast<std::size_t>(i)] + 1) * width, po + i * width);
    if (tape != nullptr && out.requires_grad()) {
        auto st = table.storage(), so = out.storage();
        tape->record(so, [st, so, tokens, width, len] {
            for (std::int64_t i = 0; i < len; ++i) {
                Real* dst = st->grad.data() + tokens[static_cast<std::size_t>(i)] * width;
                const Real* src = so->grad.data() + i * width;
                for (std::int64_t j = 0; j < width; ++j) dst[j] += src[j];
            }
        });
    }
    return out;
}

// [..., n] -> [..., n, 2F]: per element, columns alternate cos(k_f x),
// sin(k_f x) in frequency order. Differentiable in x.
template <class Real>
TensorT<Real> sinusoid_embed(TapeT<Real>* tape, const TensorT<Real>& x, const std::vector<Real>& freqs) {
    if (freqs.empty()) throw ContractError("sinusoid_embed: no frequencies");
    const auto f = static_cast<std::int64_t>(freqs.size());
    Shape out_shape = x.shape();
    out_shape.push_back(2 * f);
    auto out = detail::op_output(tape, std::move(out_shape), x.requires_grad());
    const auto n = x.numel();
    const Real* px = x.data().data();
    Real* po = out.data().data();
    for (std::int64_t i = 0; i < n; ++i) {
        Real* row = po + i * 2 * f;
        for (std::int64_t j = 0; j < f; ++j) {
            const Real arg = freqs[static_cast<std::size_t>(j)] * px[i];
            row[2 * j] = std::cos(arg);
            row[2 * j + 1] = std::sin(arg);
        }
    }
    detail::check_finite(out, "sinusoid_embed");
    if (tape != nullptr && out.requires_grad()) {
        auto sx = x.storage(), so = out.storage();
        tape->record(so, [sx, so, freqs, n, f] {
            for (std::int64_t i = 0; i < n; ++i) {
                const Real* row = so->data.data() + i * 2 * f;
                const Real* grow = so->grad.data() + i * 2 * f;
                Real acc = 0;
                for (std::int64_t j = 0; j < f; ++j) {
                    const Real k = freqs[static_cast<std::size_t>(j)];
                    acc += k * (-row[2 * j + 1] * grow[2 * j] + row[2 * j] * grow[2 * j + 1]);
                }
                sx->grad[i] += acc;
            }
        });
    }
    return out;
}

}  // namespace morphrl

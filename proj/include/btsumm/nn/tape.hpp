#pragma once

#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "btsumm/nn/tensor.hpp"
#include "btsumm/simd.hpp"

namespace btsumm::nn {

template <class T>
struct Node {
    Tensor<T> val;
    Tensor<T> grad;                // same shape as val, zeroed at backward()
    std::function<void()> back;    // pushes this->grad into parents/params
    const char* op = "leaf";
};

enum class Reduction { kMean, kSum };

template <class T>
struct BnState {
    Tensor<T> running_mean;
    Tensor<T> running_var;
    double momentum = 0.1;
    double eps = 1e-5;
    long batches = 0;

    explicit BnState(int dim = 0)
        : running_mean(std::vector<int>{dim}), running_var(std::vector<int>{dim}) {
        for (auto& x : running_var.v) x = T(1);
    }
};

// Reverse-mode tape. Nodes are created in topological order, so running the
// stored closures in reverse creation order is a valid traversal. backward()
// may be called repeatedly; parameter gradients accumulate across calls
// (callers zero them per step), node gradients are reset internally.
template <class T>
class Tape {
  public:
    // record=false skips gradient allocation for inference-only graphs.
    explicit Tape(bool check_finite = std::is_same_v<T, double>, bool record = true)
        : check_finite_(check_finite), record_(record) {}

    size_t size() const { return nodes_.size(); }
    bool recording() const { return record_; }

    Node<T>* input(Tensor<T> v) { return make(std::move(v), "input"); }

    Node<T>* scalar(T v) {
        Tensor<T> t(std::vector<int>{1});
        t.v[0] = v;
        return make(std::move(t), "scalar");
    }

    // Leaf bound to a parameter; backward accumulates into the parameter.
    Node<T>* from_param(Param<T>& p) {
        Tensor<T> v = p.value;
        Node<T>* n = make(std::move(v), "param");
        Param<T>* pp = &p;
        n->back = [n, pp]() {
            simd::axpy(T(1), n->grad.v.data(), pp->grad.v.data(), n->grad.numel());
        };
        return n;
    }

    // Gather from a frozen table; no gradient flows into it.
    Node<T>* rows_const(const Tensor<T>& table, std::span<const int> ids) {
        int d = table.cols();
        Tensor<T> out(std::vector<int>{static_cast<int>(ids.size()), d});
        for (size_t i = 0; i < ids.size(); ++i)
            std::copy_n(table.row(ids[i]), d, out.row(static_cast<int>(i)));
        return make(std::move(out), "rows_const");
    }

    // Trainable embedding lookup.
    Node<T>* embed(Param<T>& table, std::vector<int> ids) {
        int d = table.value.cols();
        Tensor<T> out(std::vector<int>{static_cast<int>(ids.size()), d});
        for (size_t i = 0; i < ids.size(); ++i)
            std::copy_n(table.value.row(ids[i]), d, out.row(static_cast<int>(i)));
        Node<T>* n = make(std::move(out), "embed");
        Param<T>* tp = &table;
        auto idv = std::make_shared<std::vector<int>>(std::move(ids));
        n->back = [n, tp, idv, d]() {
            for (size_t i = 0; i < idv->size(); ++i)
                simd::axpy(T(1), n->grad.row(static_cast<int>(i)), tp->grad.row((*idv)[i]),
                           static_cast<size_t>(d));
        };
        return n;
    }

    // y = x W^T + b with W stored [out, in]; x is [in] or [n, in].
    Node<T>* linear(Node<T>* x, Param<T>& w, Param<T>* b) {
        const int in = w.value.cols();
        const int out = w.value.rows();
        const bool two_d = x->val.shape.size() == 2;
        const int n = two_d ? x->val.rows() : 1;
        if ((two_d ? x->val.cols() : static_cast<int>(x->val.numel())) != in)
            throw InvalidArgument(std::string("linear: input dim mismatch for ") + w.name);
        Tensor<T> y(two_d ? std::vector<int>{n, out} : std::vector<int>{out});
        for (int i = 0; i < n; ++i) {
            const T* xr = two_d ? x->val.row(i) : x->val.v.data();
            simd::matvec(w.value.v.data(), xr, y.row(i), static_cast<size_t>(out),
                         static_cast<size_t>(in), false);
            if (b != nullptr)
                simd::axpy(T(1), b->value.v.data(), y.row(i), static_cast<size_t>(out));
        }
        Node<T>* node = make(std::move(y), "linear");
        Param<T>* wp = &w;
        Param<T>* bp = b;
        node->back = [node, x, wp, bp, n, in, out, two_d]() {
            for (int i = 0; i < n; ++i) {
                const T* g = node->grad.row(i);
                const T* xr = two_d ? x->val.row(i) : x->val.v.data();
                T* xg = two_d ? x->grad.row(i) : x->grad.v.data();
                simd::outer_acc(g, xr, wp->grad.v.data(), static_cast<size_t>(out),
                                static_cast<size_t>(in));
                simd::matvec_t_acc(wp->value.v.data(), g, xg, static_cast<size_t>(out),
                                   static_cast<size_t>(in));
                if (bp != nullptr)
                    simd::axpy(T(1), g, bp->grad.v.data(), static_cast<size_t>(out));
            }
        };
        return node;
    }

    // y = x W^T + b against a frozen weight matrix; gradient flows to x (and
    // the bias parameter when given) only.
    Node<T>* linear_const(Node<T>* x, const Tensor<T>& w, Param<T>* b) {
        const int in = w.cols();
        const int out = w.rows();
        const bool two_d = x->val.shape.size() == 2;
        const int n = two_d ? x->val.rows() : 1;
        if ((two_d ? x->val.cols() : static_cast<int>(x->val.numel())) != in)
            throw InvalidArgument("linear_const: input dim mismatch");
        Tensor<T> y(two_d ? std::vector<int>{n, out} : std::vector<int>{out});
        for (int i = 0; i < n; ++i) {
            const T* xr = two_d ? x->val.row(i) : x->val.v.data();
            simd::matvec(w.v.data(), xr, y.row(i), static_cast<size_t>(out),
                         static_cast<size_t>(in), false);
            if (b != nullptr)
                simd::axpy(T(1), b->value.v.data(), y.row(i), static_cast<size_t>(out));
        }
        Node<T>* node = make(std::move(y), "linear_const");
        const Tensor<T>* wp = &w;
        Param<T>* bp = b;
        node->back = [node, x, wp, bp, n, in, out, two_d]() {
            for (int i = 0; i < n; ++i) {
                const T* g = node->grad.row(i);
                T* xg = two_d ? x->grad.row(i) : x->grad.v.data();
                simd::matvec_t_acc(wp->v.data(), g, xg, static_cast<size_t>(out),
                                   static_cast<size_t>(in));
                if (bp != nullptr)
                    simd::axpy(T(1), g, bp->grad.v.data(), static_cast<size_t>(out));
            }
        };
        return node;
    }

    Node<T>* add(Node<T>* a, Node<T>* b) {
        require_same(a, b, "add");
        Tensor<T> y = a->val;
        simd::add(a->val.v.data(), b->val.v.data(), y.v.data(), y.numel());
        Node<T>* n = make(std::move(y), "add");
        n->back = [n, a, b]() {
            simd::axpy(T(1), n->grad.v.data(), a->grad.v.data(), n->grad.numel());
            simd::axpy(T(1), n->grad.v.data(), b->grad.v.data(), n->grad.numel());
        };
        return n;
    }

    Node<T>* sub(Node<T>* a, Node<T>* b) {
        require_same(a, b, "sub");
        Tensor<T> y = a->val;
        for (size_t i = 0; i < y.numel(); ++i) y.v[i] = a->val.v[i] - b->val.v[i];
        Node<T>* n = make(std::move(y), "sub");
        n->back = [n, a, b]() {
            simd::axpy(T(1), n->grad.v.data(), a->grad.v.data(), n->grad.numel());
            simd::axpy(T(-1), n->grad.v.data(), b->grad.v.data(), n->grad.numel());
        };
        return n;
    }

    Node<T>* mul(Node<T>* a, Node<T>* b) {
        require_same(a, b, "mul");
        Tensor<T> y = a->val;
        simd::mul(a->val.v.data(), b->val.v.data(), y.v.data(), y.numel());
        Node<T>* n = make(std::move(y), "mul");
        n->back = [n, a, b]() {
            simd::mul_acc(n->grad.v.data(), b->val.v.data(), a->grad.v.data(), n->grad.numel());
            simd::mul_acc(n->grad.v.data(), a->val.v.data(), b->grad.v.data(), n->grad.numel());
        };
        return n;
    }

    // y = alpha * x + beta, elementwise constants.
    Node<T>* affine(Node<T>* x, T alpha, T beta) {
        Tensor<T> y = x->val;
        for (auto& v : y.v) v = alpha * v + beta;
        Node<T>* n = make(std::move(y), "affine");
        n->back = [n, x, alpha]() {
            simd::axpy(alpha, n->grad.v.data(), x->grad.v.data(), n->grad.numel());
        };
        return n;
    }

    // y = x + c for a no-grad constant of identical numel.
    Node<T>* add_const(Node<T>* x, const Tensor<T>& c) {
        if (x->val.numel() != c.numel()) throw InvalidArgument("add_const: size mismatch");
        Tensor<T> y = x->val;
        simd::axpy(T(1), c.v.data(), y.v.data(), y.numel());
        Node<T>* n = make(std::move(y), "add_const");
        n->back = [n, x]() {
            simd::axpy(T(1), n->grad.v.data(), x->grad.v.data(), n->grad.numel());
        };
        return n;
    }

    Node<T>* sigmoid(Node<T>* x) {
        Tensor<T> y = x->val;
        simd::vsigmoid(x->val.v.data(), y.v.data(), y.numel());
        Node<T>* n = make(std::move(y), "sigmoid");
        n->back = [n, x]() {
            for (size_t i = 0; i < n->val.numel(); ++i) {
                T s = n->val.v[i];
                x->grad.v[i] += n->grad.v[i] * s * (T(1) - s);
            }
        };
        return n;
    }

    Node<T>* tanh_op(Node<T>* x) {
        Tensor<T> y = x->val;
        simd::vtanh(x->val.v.data(), y.v.data(), y.numel());
        Node<T>* n = make(std::move(y), "tanh");
        n->back = [n, x]() {
            for (size_t i = 0; i < n->val.numel(); ++i) {
                T s = n->val.v[i];
                x->grad.v[i] += n->grad.v[i] * (T(1) - s * s);
            }
        };
        return n;
    }

    Node<T>* concat(Node<T>* a, Node<T>* b) {
        if (a->val.shape.size() != 1 || b->val.shape.size() != 1)
            throw InvalidArgument("concat expects rank-1 inputs");
        int na = static_cast<int>(a->val.numel());
        int nb = static_cast<int>(b->val.numel());
        Tensor<T> y(std::vector<int>{na + nb});
        std::copy_n(a->val.v.data(), na, y.v.data());
        std::copy_n(b->val.v.data(), nb, y.v.data() + na);
        Node<T>* n = make(std::move(y), "concat");
        n->back = [n, a, b, na, nb]() {
            simd::axpy(T(1), n->grad.v.data(), a->grad.v.data(), static_cast<size_t>(na));
            simd::axpy(T(1), n->grad.v.data() + na, b->grad.v.data(), static_cast<size_t>(nb));
        };
        return n;
    }

    Node<T>* stack_rows(const std::vector<Node<T>*>& rows) {
        if (rows.empty()) throw InvalidArgument("stack_rows: empty");
        int d = static_cast<int>(rows[0]->val.numel());
        Tensor<T> y(std::vector<int>{static_cast<int>(rows.size()), d});
        for (size_t i = 0; i < rows.size(); ++i) {
            if (static_cast<int>(rows[i]->val.numel()) != d)
                throw InvalidArgument("stack_rows: ragged rows");
            std::copy_n(rows[i]->val.v.data(), d, y.row(static_cast<int>(i)));
        }
        Node<T>* n = make(std::move(y), "stack_rows");
        auto rs = std::make_shared<std::vector<Node<T>*>>(rows);
        n->back = [n, rs, d]() {
            for (size_t i = 0; i < rs->size(); ++i)
                simd::axpy(T(1), n->grad.row(static_cast<int>(i)), (*rs)[i]->grad.v.data(),
                           static_cast<size_t>(d));
        };
        return n;
    }

    Node<T>* row(Node<T>* x, int i) {
        if (x->val.shape.size() != 2) throw InvalidArgument("row expects rank-2 input");
        int d = x->val.cols();
        Tensor<T> y(std::vector<int>{d});
        std::copy_n(x->val.row(i), d, y.v.data());
        Node<T>* n = make(std::move(y), "row");
        n->back = [n, x, i, d]() {
            simd::axpy(T(1), n->grad.v.data(), x->grad.row(i), static_cast<size_t>(d));
        };
        return n;
    }

    Node<T>* mean_pool(Node<T>* x) {
        if (x->val.shape.size() != 2) throw InvalidArgument("mean_pool expects rank-2 input");
        int nrow = x->val.rows(), d = x->val.cols();
        Tensor<T> y(std::vector<int>{d});
        for (int i = 0; i < nrow; ++i)
            simd::axpy(T(1), x->val.row(i), y.v.data(), static_cast<size_t>(d));
        simd::scale(T(1) / static_cast<T>(nrow), y.v.data(), static_cast<size_t>(d));
        Node<T>* n = make(std::move(y), "mean_pool");
        n->back = [n, x, nrow, d]() {
            T inv = T(1) / static_cast<T>(nrow);
            for (int i = 0; i < nrow; ++i)
                simd::axpy(inv, n->grad.v.data(), x->grad.row(i), static_cast<size_t>(d));
        };
        return n;
    }

    // weights are per-row constants; caller guarantees sum(w) > 0.
    Node<T>* weighted_mean_pool(Node<T>* x, std::vector<T> weights) {
        if (x->val.shape.size() != 2) throw InvalidArgument("weighted_mean_pool expects rank-2");
        if (static_cast<int>(weights.size()) != x->val.rows())
            throw InvalidArgument("weighted_mean_pool: weight count mismatch");
        int nrow = x->val.rows(), d = x->val.cols();
        T wsum = 0;
        for (T w : weights) wsum += w;
        if (!(wsum > T(0))) throw InvalidArgument("weighted_mean_pool: non-positive weight sum");
        Tensor<T> y(std::vector<int>{d});
        for (int i = 0; i < nrow; ++i)
            simd::axpy(weights[static_cast<size_t>(i)] / wsum, x->val.row(i), y.v.data(),
                       static_cast<size_t>(d));
        Node<T>* n = make(std::move(y), "weighted_mean_pool");
        auto ws = std::make_shared<std::vector<T>>(std::move(weights));
        n->back = [n, x, ws, wsum, nrow, d]() {
            for (int i = 0; i < nrow; ++i)
                simd::axpy((*ws)[static_cast<size_t>(i)] / wsum, n->grad.v.data(), x->grad.row(i),
                           static_cast<size_t>(d));
        };
        return n;
    }

    // y = A x; A [n, m], x [m] -> [n]
    Node<T>* mv(Node<T>* a, Node<T>* x) {
        if (a->val.shape.size() != 2 || a->val.cols() != static_cast<int>(x->val.numel()))
            throw InvalidArgument("mv: shape mismatch");
        size_t n = static_cast<size_t>(a->val.rows()), m = static_cast<size_t>(a->val.cols());
        Tensor<T> y(std::vector<int>{static_cast<int>(n)});
        simd::matvec(a->val.v.data(), x->val.v.data(), y.v.data(), n, m, false);
        Node<T>* node = make(std::move(y), "mv");
        node->back = [node, a, x, n, m]() {
            simd::outer_acc(node->grad.v.data(), x->val.v.data(), a->grad.v.data(), n, m);
            simd::matvec_t_acc(a->val.v.data(), node->grad.v.data(), x->grad.v.data(), n, m);
        };
        return node;
    }

    // z = A^T y; A [n, m], y [n] -> [m]
    Node<T>* tmv(Node<T>* a, Node<T>* y) {
        if (a->val.shape.size() != 2 || a->val.rows() != static_cast<int>(y->val.numel()))
            throw InvalidArgument("tmv: shape mismatch");
        size_t n = static_cast<size_t>(a->val.rows()), m = static_cast<size_t>(a->val.cols());
        Tensor<T> z(std::vector<int>{static_cast<int>(m)});
        simd::matvec_t_acc(a->val.v.data(), y->val.v.data(), z.v.data(), n, m);
        Node<T>* node = make(std::move(z), "tmv");
        node->back = [node, a, y, n, m]() {
            simd::outer_acc(y->val.v.data(), node->grad.v.data(), a->grad.v.data(), n, m);
            simd::matvec(a->val.v.data(), node->grad.v.data(), y->grad.v.data(), n, m, true);
        };
        return node;
    }

    Node<T>* softmax_vec(Node<T>* x) {
        if (x->val.shape.size() != 1) throw InvalidArgument("softmax_vec expects rank-1");
        size_t n = x->val.numel();
        Tensor<T> y = x->val;
        T mx = simd::reduce_max(y.v.data(), n);
        for (auto& v : y.v) v = std::exp(v - mx);
        T s = simd::reduce_sum(y.v.data(), n);
        simd::scale(T(1) / s, y.v.data(), n);
        Node<T>* node = make(std::move(y), "softmax");
        node->back = [node, x, n]() {
            T dot = simd::dot(node->grad.v.data(), node->val.v.data(), n);
            for (size_t i = 0; i < n; ++i)
                x->grad.v[i] += node->val.v[i] * (node->grad.v[i] - dot);
        };
        return node;
    }

    Node<T>* mean_rows(Node<T>* x) {
        if (x->val.shape.size() != 2) throw InvalidArgument("mean_rows expects rank-2");
        int nrow = x->val.rows(), d = x->val.cols();
        Tensor<T> y(std::vector<int>{d});
        for (int i = 0; i < nrow; ++i)
            simd::axpy(T(1) / static_cast<T>(nrow), x->val.row(i), y.v.data(),
                       static_cast<size_t>(d));
        Node<T>* n = make(std::move(y), "mean_rows");
        n->back = [n, x, nrow, d]() {
            T inv = T(1) / static_cast<T>(nrow);
            for (int i = 0; i < nrow; ++i)
                simd::axpy(inv, n->grad.v.data(), x->grad.row(i), static_cast<size_t>(d));
        };
        return n;
    }

    Node<T>* sum_all(Node<T>* x) {
        Tensor<T> y(std::vector<int>{1});
        y.v[0] = simd::reduce_sum(x->val.v.data(), x->val.numel());
        Node<T>* n = make(std::move(y), "sum_all");
        n->back = [n, x]() {
            T g = n->grad.v[0];
            for (auto& v : x->grad.v) v += g;
        };
        return n;
    }

    Node<T>* sum_scalars(const std::vector<Node<T>*>& xs) {
        if (xs.empty()) throw InvalidArgument("sum_scalars: empty");
        Tensor<T> y(std::vector<int>{1});
        for (auto* x : xs) {
            if (x->val.numel() != 1) throw InvalidArgument("sum_scalars: non-scalar input");
            y.v[0] += x->val.v[0];
        }
        Node<T>* n = make(std::move(y), "sum_scalars");
        auto parents = std::make_shared<std::vector<Node<T>*>>(xs);
        n->back = [n, parents]() {
            for (auto* x : *parents) x->grad.v[0] += n->grad.v[0];
        };
        return n;
    }

    // Token-level cross entropy from raw logits [n, V] and target ids [n].
    Node<T>* cross_entropy(Node<T>* logits, std::vector<int> targets,
                           Reduction reduction = Reduction::kMean) {
        if (logits->val.shape.size() != 2) throw InvalidArgument("cross_entropy expects rank-2");
        int n = logits->val.rows(), vsz = logits->val.cols();
        if (static_cast<int>(targets.size()) != n)
            throw InvalidArgument("cross_entropy: target count mismatch");
        auto probs = std::make_shared<Tensor<T>>(logits->val);
        T total = 0;
        for (int i = 0; i < n; ++i) {
            T* rowp = probs->row(i);
            T mx = simd::reduce_max(rowp, static_cast<size_t>(vsz));
            T sum = 0;
            for (int j = 0; j < vsz; ++j) {
                rowp[j] = std::exp(rowp[j] - mx);
                sum += rowp[j];
            }
            simd::scale(T(1) / sum, rowp, static_cast<size_t>(vsz));
            int tgt = targets[static_cast<size_t>(i)];
            if (tgt < 0 || tgt >= vsz) throw InvalidArgument("cross_entropy: target out of range");
            total -= std::log(std::max(rowp[tgt], std::numeric_limits<T>::min()));
        }
        T scale = reduction == Reduction::kMean ? T(1) / static_cast<T>(n) : T(1);
        Tensor<T> y(std::vector<int>{1});
        y.v[0] = total * scale;
        Node<T>* node = make(std::move(y), "cross_entropy");
        auto tgts = std::make_shared<std::vector<int>>(std::move(targets));
        node->back = [node, logits, probs, tgts, n, vsz, scale]() {
            T g = node->grad.v[0] * scale;
            for (int i = 0; i < n; ++i) {
                simd::axpy(g, probs->row(i), logits->grad.row(i), static_cast<size_t>(vsz));
                logits->grad.at(i, (*tgts)[static_cast<size_t>(i)]) -= g;
            }
        };
        return node;
    }

    // Binary cross entropy on probabilities (inputs already in [0,1]).
    // Optional per-element weights (e.g. 0/1 to exclude terms).
    Node<T>* binary_cross_entropy(Node<T>* p, std::vector<T> targets,
                                  Reduction reduction = Reduction::kSum,
                                  std::vector<T> weights = {}) {
        size_t n = p->val.numel();
        if (targets.size() != n) throw InvalidArgument("bce: target count mismatch");
        if (!weights.empty() && weights.size() != n)
            throw InvalidArgument("bce: weight count mismatch");
        const T eps = std::is_same_v<T, double> ? T(1e-12) : T(1e-7);
        T total = 0;
        for (size_t i = 0; i < n; ++i) {
            T t = targets[i];
            if (t < T(0) || t > T(1)) throw InvalidArgument("bce: target outside [0,1]");
            T w = weights.empty() ? T(1) : weights[i];
            if (w == T(0)) continue;
            T q = std::clamp(p->val.v[i], eps, T(1) - eps);
            total -= w * (t * std::log(q) + (T(1) - t) * std::log(T(1) - q));
        }
        T scale = reduction == Reduction::kMean ? T(1) / static_cast<T>(n) : T(1);
        Tensor<T> y(std::vector<int>{1});
        y.v[0] = total * scale;
        Node<T>* node = make(std::move(y), "bce");
        auto tg = std::make_shared<std::vector<T>>(std::move(targets));
        auto ws = std::make_shared<std::vector<T>>(std::move(weights));
        node->back = [node, p, tg, ws, n, scale, eps]() {
            T g = node->grad.v[0] * scale;
            for (size_t i = 0; i < n; ++i) {
                T w = ws->empty() ? T(1) : (*ws)[i];
                if (w == T(0)) continue;
                T q = p->val.v[i];
                if (q <= eps || q >= T(1) - eps) continue;  // clamped region: zero slope
                p->grad.v[i] += g * w * (q - (*tg)[i]) / (q * (T(1) - q));
            }
        };
        return node;
    }

    Node<T>* batch_norm(Node<T>* x, Param<T>& gamma, Param<T>& beta, BnState<T>& state,
                        bool training) {
        if (x->val.shape.size() != 2) throw InvalidArgument("batch_norm expects rank-2");
        int n = x->val.rows(), d = x->val.cols();
        if (static_cast<int>(gamma.value.numel()) != d)
            throw InvalidArgument("batch_norm: gamma dim mismatch");
        const T eps = static_cast<T>(state.eps);

        auto mean = std::make_shared<std::vector<T>>(static_cast<size_t>(d), T(0));
        auto var = std::make_shared<std::vector<T>>(static_cast<size_t>(d), T(0));
        if (training) {
            for (int i = 0; i < n; ++i)
                simd::axpy(T(1) / static_cast<T>(n), x->val.row(i), mean->data(),
                           static_cast<size_t>(d));
            for (int i = 0; i < n; ++i) {
                const T* r = x->val.row(i);
                for (int j = 0; j < d; ++j) {
                    T c = r[j] - (*mean)[static_cast<size_t>(j)];
                    (*var)[static_cast<size_t>(j)] += c * c / static_cast<T>(n);
                }
            }
            double m = state.momentum;
            for (int j = 0; j < d; ++j) {
                state.running_mean.v[static_cast<size_t>(j)] = static_cast<T>(
                    (1 - m) * state.running_mean.v[static_cast<size_t>(j)] + m * (*mean)[static_cast<size_t>(j)]);
                state.running_var.v[static_cast<size_t>(j)] = static_cast<T>(
                    (1 - m) * state.running_var.v[static_cast<size_t>(j)] + m * (*var)[static_cast<size_t>(j)]);
            }
            state.batches++;
        } else {
            std::copy(state.running_mean.v.begin(), state.running_mean.v.end(), mean->begin());
            std::copy(state.running_var.v.begin(), state.running_var.v.end(), var->begin());
        }

        auto xhat = std::make_shared<Tensor<T>>(std::vector<int>{n, d});
        Tensor<T> y(std::vector<int>{n, d});
        for (int i = 0; i < n; ++i) {
            const T* r = x->val.row(i);
            T* h = xhat->row(i);
            T* yo = y.row(i);
            for (int j = 0; j < d; ++j) {
                T inv = T(1) / std::sqrt((*var)[static_cast<size_t>(j)] + eps);
                h[j] = (r[j] - (*mean)[static_cast<size_t>(j)]) * inv;
                yo[j] = gamma.value.v[static_cast<size_t>(j)] * h[j] + beta.value.v[static_cast<size_t>(j)];
            }
        }
        Node<T>* node = make(std::move(y), "batch_norm");
        Param<T>* gp = &gamma;
        Param<T>* bp = &beta;
        node->back = [node, x, gp, bp, mean, var, xhat, n, d, eps, training]() {
            // dgamma, dbeta
            for (int i = 0; i < n; ++i) {
                const T* g = node->grad.row(i);
                const T* h = xhat->row(i);
                for (int j = 0; j < d; ++j) {
                    gp->grad.v[static_cast<size_t>(j)] += g[j] * h[j];
                    bp->grad.v[static_cast<size_t>(j)] += g[j];
                }
            }
            if (!training) {
                for (int i = 0; i < n; ++i) {
                    const T* g = node->grad.row(i);
                    T* xg = x->grad.row(i);
                    for (int j = 0; j < d; ++j) {
                        T inv = T(1) / std::sqrt((*var)[static_cast<size_t>(j)] + eps);
                        xg[j] += g[j] * gp->value.v[static_cast<size_t>(j)] * inv;
                    }
                }
                return;
            }
            std::vector<T> dvar(static_cast<size_t>(d), T(0)), dmean(static_cast<size_t>(d), T(0));
            for (int j = 0; j < d; ++j) {
                T inv = T(1) / std::sqrt((*var)[static_cast<size_t>(j)] + eps);
                T sum_dxhat = 0, sum_dxhat_c = 0;
                for (int i = 0; i < n; ++i) {
                    T dxh = node->grad.at(i, j) * gp->value.v[static_cast<size_t>(j)];
                    sum_dxhat += dxh;
                    sum_dxhat_c += dxh * (x->val.at(i, j) - (*mean)[static_cast<size_t>(j)]);
                }
                dvar[static_cast<size_t>(j)] = sum_dxhat_c * T(-0.5) * inv * inv * inv;
                dmean[static_cast<size_t>(j)] = -inv * sum_dxhat;
            }
            for (int i = 0; i < n; ++i) {
                T* xg = x->grad.row(i);
                for (int j = 0; j < d; ++j) {
                    T inv = T(1) / std::sqrt((*var)[static_cast<size_t>(j)] + eps);
                    T dxh = node->grad.at(i, j) * gp->value.v[static_cast<size_t>(j)];
                    T c = x->val.at(i, j) - (*mean)[static_cast<size_t>(j)];
                    xg[j] += dxh * inv + dvar[static_cast<size_t>(j)] * T(2) * c / static_cast<T>(n) +
                             dmean[static_cast<size_t>(j)] / static_cast<T>(n);
                }
            }
        };
        return node;
    }

    void backward(Node<T>* loss) {
        if (!record_) throw InvalidArgument("backward on a non-recording tape");
        if (loss->val.numel() != 1)
            throw InvalidArgument("backward requires a scalar loss node");
        for (auto& n : nodes_) n.grad.zero();
        loss->grad.v[0] = T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
            if (it->back) it->back();
    }

  private:
    void require_same(Node<T>* a, Node<T>* b, const char* op) {
        if (!a->val.same_shape(b->val))
            throw InvalidArgument(std::string(op) + ": shape mismatch");
    }

    Node<T>* make(Tensor<T> val, const char* op) {
        nodes_.emplace_back();
        Node<T>& n = nodes_.back();
        n.op = op;
        n.val = std::move(val);
        if (record_) n.grad = Tensor<T>(n.val.shape);
        if (check_finite_ && !n.val.all_finite())
            throw DivergenceError(std::string("non-finite value produced by op ") + op);
        return &n;
    }

    std::deque<Node<T>> nodes_;
    bool check_finite_;
    bool record_;
};

// --- composite layers ------------------------------------------------------

template <class T>
struct GruLayer {
    Param<T> wz, uz, bz, wr, ur, br, wh, uh, bh;
    int input_dim = 0;
    int hidden = 0;

    GruLayer() = default;
    GruLayer(const std::string& prefix, int in, int h)
        : wz(prefix + ".wz", {h, in}), uz(prefix + ".uz", {h, h}), bz(prefix + ".bz", {h}),
          wr(prefix + ".wr", {h, in}), ur(prefix + ".ur", {h, h}), br(prefix + ".br", {h}),
          wh(prefix + ".wh", {h, in}), uh(prefix + ".uh", {h, h}), bh(prefix + ".bh", {h}),
          input_dim(in), hidden(h) {}

    void init(std::mt19937_64& rng) {
        for (Param<T>* p : {&wz, &wr, &wh}) p->init_uniform(rng, input_dim);
        for (Param<T>* p : {&uz, &ur, &uh}) p->init_uniform(rng, hidden);
    }

    std::vector<Param<T>*> params() {
        return {&wz, &uz, &bz, &wr, &ur, &br, &wh, &uh, &bh};
    }
};

// Update/reset-gate GRU cell: h' = (1 - z) * h + z * htilde.
template <class T>
Node<T>* gru_cell(Tape<T>& t, Node<T>* x, Node<T>* h, GruLayer<T>& layer) {
    auto* z = t.sigmoid(t.add(t.linear(x, layer.wz, &layer.bz), t.linear(h, layer.uz, nullptr)));
    auto* r = t.sigmoid(t.add(t.linear(x, layer.wr, &layer.br), t.linear(h, layer.ur, nullptr)));
    auto* cand = t.tanh_op(
        t.add(t.linear(x, layer.wh, &layer.bh), t.linear(t.mul(r, h), layer.uh, nullptr)));
    auto* keep = t.affine(z, T(-1), T(1));  // 1 - z
    return t.add(t.mul(keep, h), t.mul(z, cand));
}

// Two stacked GRU layers; returns both new states.
template <class T>
std::pair<Node<T>*, Node<T>*> gru_stack2(Tape<T>& t, Node<T>* x, Node<T>* h1, Node<T>* h2,
                                         GruLayer<T>& l1, GruLayer<T>& l2) {
    Node<T>* n1 = gru_cell(t, x, h1, l1);
    Node<T>* n2 = gru_cell(t, n1, h2, l2);
    return {n1, n2};
}

template <class T>
struct AttentionOut {
    Node<T>* context;
    Node<T>* weights;
};

// Dot-product attention of a query against a [steps, dim] memory.
template <class T>
AttentionOut<T> dot_attention(Tape<T>& t, Node<T>* query, Node<T>* keys, Node<T>* values) {
    Node<T>* scores = t.mv(keys, query);
    Node<T>* alpha = t.softmax_vec(scores);
    Node<T>* ctx = t.tmv(values, alpha);
    return {ctx, alpha};
}

}  // namespace btsumm::nn

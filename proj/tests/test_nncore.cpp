#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "btsumm/nn/checkpoint.hpp"
#include "btsumm/nn/optim.hpp"
#include "btsumm/nn/tape.hpp"
#include "testutil.hpp"

using namespace btsumm;
using nn::Node;
using nn::Param;
using nn::Tape;
using nn::Tensor;

namespace {

void fill_random(Tensor<double>& t, uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (auto& x : t.v) x = dist(rng);
}

// Runs the graph builder, does backward, finite-difference checks every
// parameter's sampled coordinates.
void check_gradients(std::vector<Param<double>*> params,
                     const std::function<Node<double>*(Tape<double>&)>& build,
                     double tol = 1e-4) {
    Tape<double> tape;
    Node<double>* loss = build(tape);
    for (auto* p : params) p->zero_grad();
    tape.backward(loss);

    std::vector<std::pair<double*, double>> coords;
    for (auto* p : params) {
        for (size_t i : btest::sample_coords(p->value.numel(), 24))
            coords.emplace_back(&p->value.v[i], p->grad.v[i]);
    }
    auto simple_loss = [&]() {
        Tape<double> t2;
        return build(t2)->val.v[0];
    };
    btest::FdResult r = btest::fd_check(simple_loss, coords);
    CHECK(r.max_rel < tol);
    CHECK(r.max_abs_smallgrad < 1e-7);
}

}  // namespace

TEST_CASE("softmax of equal logits is uniform") {
    Tape<double> tape;
    Tensor<double> x(std::vector<int>{4});
    for (auto& v : x.v) v = 1.7;
    auto* y = tape.softmax_vec(tape.input(x));
    for (int i = 0; i < 4; ++i) CHECK(y->val.v[static_cast<size_t>(i)] == doctest::Approx(0.25));
}

TEST_CASE("binary cross entropy is minimized at p = target") {
    auto bce_at = [](double p, double t) {
        Tape<double> tape;
        Tensor<double> x(std::vector<int>{1});
        x.v[0] = p;
        return tape.binary_cross_entropy(tape.input(x), {t})->val.v[0];
    };
    double t = 0.3;
    double at_target = bce_at(t, t);
    for (double p : {0.05, 0.2, 0.4, 0.9}) CHECK(bce_at(p, t) > at_target);
}

TEST_CASE("gru_cell with zero weights and zero state gives zero output") {
    Tape<double> tape;
    nn::GruLayer<double> layer("g", 3, 4);  // weights default to zero
    Tensor<double> x(std::vector<int>{3});
    x.v = {0.5, -0.2, 0.1};
    Tensor<double> h(std::vector<int>{4});
    auto* out = nn::gru_cell(tape, tape.input(x), tape.input(h), layer);
    for (double v : out->val.v) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("backward: loss = sum of squares gives gradient 2v") {
    Param<double> v("v", {5});
    fill_random(v.value, 3);
    Tape<double> tape;
    auto* node = tape.from_param(v);
    auto* loss = tape.sum_all(tape.mul(node, node));
    v.zero_grad();
    tape.backward(loss);
    for (size_t i = 0; i < v.value.numel(); ++i)
        CHECK(v.grad.v[i] == doctest::Approx(2.0 * v.value.v[i]));
}

TEST_CASE("backward twice without zeroing exactly doubles parameter gradients") {
    Param<double> v("v", {4});
    fill_random(v.value, 5);
    Tape<double> tape;
    auto* loss = tape.sum_all(tape.mul(tape.from_param(v), tape.from_param(v)));
    v.zero_grad();
    tape.backward(loss);
    std::vector<double> once = v.grad.v;
    tape.backward(loss);
    for (size_t i = 0; i < once.size(); ++i)
        CHECK(v.grad.v[i] == doctest::Approx(2.0 * once[i]));
}

TEST_CASE("backward rejects non-scalar loss") {
    Tape<double> tape;
    Tensor<double> x(std::vector<int>{3});
    auto* n = tape.input(x);
    CHECK_THROWS_AS(tape.backward(n), InvalidArgument);
}

TEST_CASE("finite differences: linear + bias") {
    Param<double> w("w", {4, 3}), b("b", {4}), x("x", {3});
    fill_random(w.value, 1);
    fill_random(b.value, 2);
    fill_random(x.value, 3);
    check_gradients({&w, &b, &x}, [&](Tape<double>& t) {
        return t.sum_all(t.tanh_op(t.linear(t.from_param(x), w, &b)));
    });
}

TEST_CASE("finite differences: embedding lookup + mean pool") {
    Param<double> table("e", {6, 4});
    fill_random(table.value, 7);
    check_gradients({&table}, [&](Tape<double>& t) {
        auto* rows = t.embed(table, {1, 3, 3, 5});
        return t.sum_all(t.tanh_op(t.mean_pool(rows)));
    });
}

TEST_CASE("finite differences: weighted mean pool") {
    Param<double> x("x", {3, 4});
    fill_random(x.value, 11);
    check_gradients({&x}, [&](Tape<double>& t) {
        return t.sum_all(
            t.tanh_op(t.weighted_mean_pool(t.from_param(x), std::vector<double>{0.2, 1.5, 0.0})));
    });
}

TEST_CASE("finite differences: sigmoid, tanh, mul, affine, concat, row, mv, tmv, softmax") {
    Param<double> a("a", {3, 4}), q("q", {4});
    fill_random(a.value, 21);
    fill_random(q.value, 22);
    check_gradients({&a, &q}, [&](Tape<double>& t) {
        auto* amat = t.from_param(a);
        auto* scores = t.mv(amat, t.from_param(q));      // [3]
        auto* alpha = t.softmax_vec(scores);             // [3]
        auto* ctx = t.tmv(amat, alpha);                  // [4]
        auto* r0 = t.row(amat, 0);
        auto* mixed = t.mul(t.sigmoid(ctx), t.tanh_op(r0));
        auto* cat = t.concat(mixed, t.affine(ctx, 0.5, -0.1));
        return t.sum_all(cat);
    });
}

TEST_CASE("finite differences: cross entropy over stacked logits") {
    Param<double> w("w", {5, 3}), x1("x1", {3}), x2("x2", {3});
    fill_random(w.value, 31);
    fill_random(x1.value, 32);
    fill_random(x2.value, 33);
    check_gradients({&w, &x1, &x2}, [&](Tape<double>& t) {
        auto* l1 = t.linear(t.from_param(x1), w, nullptr);
        auto* l2 = t.linear(t.from_param(x2), w, nullptr);
        return t.cross_entropy(t.stack_rows({l1, l2}), {2, 4}, nn::Reduction::kMean);
    });
}

TEST_CASE("finite differences: binary cross entropy with weights") {
    Param<double> x("x", {6});
    fill_random(x.value, 41);
    check_gradients({&x}, [&](Tape<double>& t) {
        auto* p = t.sigmoid(t.from_param(x));
        return t.binary_cross_entropy(p, {0.1, 0.9, 0.5, 0.0, 1.0, 0.25}, nn::Reduction::kSum,
                                      {1, 1, 0, 1, 1, 1});
    });
}

TEST_CASE("finite differences: batch norm (training mode)") {
    Param<double> x("x", {5, 3}), gamma("g", {3}), beta("b", {3});
    fill_random(x.value, 51);
    for (auto& v : gamma.value.v) v = 1.3;
    fill_random(beta.value, 52);
    // fresh BN state per evaluation so running-stat updates do not leak into
    // the finite-difference evaluations
    check_gradients({&x, &gamma, &beta}, [&](Tape<double>& t) {
        nn::BnState<double> bn(3);
        return t.sum_all(
            t.tanh_op(t.batch_norm(t.from_param(x), gamma, beta, bn, true)));
    });
}

TEST_CASE("finite differences: batch norm (inference mode)") {
    Param<double> x("x", {2, 3}), gamma("g", {3}), beta("b", {3});
    fill_random(x.value, 61);
    for (auto& v : gamma.value.v) v = 0.9;
    fill_random(beta.value, 62);
    nn::BnState<double> bn(3);
    fill_random(bn.running_mean, 63, 0.2);
    for (auto& v : bn.running_var.v) v = 1.1;
    check_gradients({&x, &gamma, &beta}, [&](Tape<double>& t) {
        return t.sum_all(t.batch_norm(t.from_param(x), gamma, beta, bn, false));
    });
}

TEST_CASE("batch norm inference is a fixed affine map (no batch dependence)") {
    Param<double> gamma("g", {2}), beta("b", {2});
    gamma.value.v = {1.5, 0.5};
    beta.value.v = {0.1, -0.2};
    nn::BnState<double> bn(2);
    bn.running_mean.v = {0.3, -0.1};
    bn.running_var.v = {2.0, 0.5};

    auto eval_row = [&](std::vector<double> row, std::vector<double> other) {
        Tape<double> t(false, false);
        Tensor<double> x(std::vector<int>{2, 2});
        x.v = {row[0], row[1], other[0], other[1]};
        auto* y = t.batch_norm(t.input(x), gamma, beta, bn, false);
        return std::vector<double>{y->val.at(0, 0), y->val.at(0, 1)};
    };
    auto a = eval_row({1.0, 2.0}, {0.0, 0.0});
    auto b = eval_row({1.0, 2.0}, {50.0, -3.0});
    CHECK(a[0] == doctest::Approx(b[0]));
    CHECK(a[1] == doctest::Approx(b[1]));
}

TEST_CASE("finite differences: full gru cell") {
    nn::GruLayer<double> layer("g", 4, 3);
    std::mt19937_64 rng(71);
    layer.init(rng);
    Param<double> x("x", {4}), h("h", {3});
    fill_random(x.value, 72);
    fill_random(h.value, 73);
    std::vector<Param<double>*> params{&x, &h};
    for (auto* p : layer.params()) params.push_back(p);
    check_gradients(params, [&](Tape<double>& t) {
        auto* out = nn::gru_cell(t, t.from_param(x), t.from_param(h), layer);
        return t.sum_all(t.tanh_op(out));
    });
}

TEST_CASE("finite differences: two-layer gru stack") {
    nn::GruLayer<double> l1("g1", 3, 3), l2("g2", 3, 3);
    std::mt19937_64 rng(81);
    l1.init(rng);
    l2.init(rng);
    Param<double> x("x", {3}), h1("h1", {3}), h2("h2", {3});
    fill_random(x.value, 82);
    fill_random(h1.value, 83);
    fill_random(h2.value, 84);
    std::vector<Param<double>*> params{&x, &h1, &h2};
    for (auto* p : l1.params()) params.push_back(p);
    for (auto* p : l2.params()) params.push_back(p);
    check_gradients(params, [&](Tape<double>& t) {
        auto [a, b] = nn::gru_stack2(t, t.from_param(x), t.from_param(h1), t.from_param(h2), l1, l2);
        return t.sum_all(t.mul(a, b));
    });
}

TEST_CASE("finite differences: dot attention") {
    Param<double> keys("k", {4, 3}), q("q", {3});
    fill_random(keys.value, 91);
    fill_random(q.value, 92);
    check_gradients({&keys, &q}, [&](Tape<double>& t) {
        auto* km = t.from_param(keys);
        auto att = nn::dot_attention(t, t.from_param(q), km, km);
        return t.sum_all(t.tanh_op(att.context));
    });
}

TEST_CASE("non-finite values trip a DivergenceError in test mode") {
    Tape<double> tape(true);
    Tensor<double> x(std::vector<int>{2});
    x.v = {1.0, -1.0};
    auto* n = tape.input(x);
    // exp overflow -> inf
    Tensor<double> big(std::vector<int>{2});
    big.v = {1e308, 1e308};
    CHECK_THROWS_AS(tape.mul(tape.input(big), tape.add_const(n, big)), DivergenceError);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Param<double> p("p", {3});
    fill_random(p.value, 101);
    std::vector<double> before = p.value.v;
    nn::Adam<double> opt({&p});
    opt.zero_grad();
    opt.step();
    CHECK(p.value.v == before);
}

TEST_CASE("adam: first step moves by ~lr * sign(g)") {
    Param<double> p("p", {4});
    p.value.v = {1.0, -2.0, 0.5, 3.0};
    std::vector<double> before = p.value.v;
    nn::AdamConfig cfg;
    cfg.lr = 1e-3;
    cfg.clip_norm = 0;
    nn::Adam<double> opt({&p}, cfg);
    opt.zero_grad();
    p.grad.v = {0.7, -0.01, 2.0, -5.0};
    opt.step();
    for (size_t i = 0; i < 4; ++i) {
        double delta = p.value.v[i] - before[i];
        double expect = -cfg.lr * (p.grad.v[i] > 0 ? 1.0 : -1.0);
        CHECK(delta == doctest::Approx(expect).epsilon(1e-4));
    }
}

TEST_CASE("adam: 200 steps on a convex quadratic reach small gradient") {
    Param<double> p("p", {6});
    fill_random(p.value, 111, 2.0);
    nn::AdamConfig cfg;
    cfg.lr = 0.05;
    nn::Adam<double> opt({&p}, cfg);
    for (int it = 0; it < 200; ++it) {
        opt.zero_grad();
        Tape<double> tape;
        auto* node = tape.from_param(p);
        auto* loss = tape.sum_all(tape.mul(node, node));
        tape.backward(loss);
        opt.clip();
        opt.step();
    }
    double norm = 0;
    for (double v : p.value.v) norm += 4.0 * v * v;  // grad of ||x||^2 is 2x
    CHECK(std::sqrt(norm) < 1e-3);
}

TEST_CASE("gradient clipping caps the global norm") {
    Param<double> p("p", {3});
    nn::AdamConfig cfg;
    cfg.clip_norm = 1.0;
    nn::Adam<double> opt({&p}, cfg);
    p.grad.v = {3.0, 4.0, 0.0};  // norm 5
    double pre = opt.clip();
    CHECK(pre == doctest::Approx(5.0));
    double post = std::sqrt(p.grad.v[0] * p.grad.v[0] + p.grad.v[1] * p.grad.v[1]);
    CHECK(post == doctest::Approx(1.0));
}

TEST_CASE("checkpoint round-trip with precision conversion") {
    btest::TmpDir tmp("ckpt");
    Param<double> a("a", {2, 3}), b("b", {4});
    fill_random(a.value, 121);
    fill_random(b.value, 122);
    nn::save_checkpoint<double>(tmp.file("m.ckpt"),
                                {{"a", &a.value}, {"b", &b.value}});

    Param<double> a2("a", {2, 3}), b2("b", {4});
    nn::load_checkpoint<double>(tmp.file("m.ckpt"), {{"a", &a2.value}, {"b", &b2.value}});
    CHECK(a2.value.v == a.value.v);

    // f64 file into f32 tensors
    nn::Tensor<float> af(std::vector<int>{2, 3});
    nn::load_checkpoint<float>(tmp.file("m.ckpt"), {{"a", &af}});
    for (size_t i = 0; i < af.numel(); ++i)
        CHECK(af.v[i] == doctest::Approx(a.value.v[i]).epsilon(1e-6));

    nn::Tensor<double> wrong(std::vector<int>{3, 2});
    CHECK_THROWS_AS(nn::load_checkpoint<double>(tmp.file("m.ckpt"), {{"a", &wrong}}), IoError);
    nn::Tensor<double> missing(std::vector<int>{1});
    CHECK_THROWS_AS(nn::load_checkpoint<double>(tmp.file("m.ckpt"), {{"zz", &missing}}), IoError);
}

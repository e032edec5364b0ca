#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gradcheck.hpp"
#include "morphrl/nn.hpp"
#include "morphrl/tensor.hpp"

using namespace morphrl;
using testutil::gradcheck;
using testutil::random_tensor;

TEST_CASE("matmul identity cases") {
    auto eye = Tensor64::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    auto b = Tensor64::from({3, 2}, {1, 2, 3, 4, 5, 6});
    auto out = matmul<double>(nullptr, eye, b);
    CHECK(out.data() == b.data());

    auto a = Tensor64::from({2, 2}, {1, 2, 3, 4});
    auto eye2 = Tensor64::from({2, 2}, {1, 0, 0, 1});
    CHECK(matmul<double>(nullptr, a, eye2).data() == a.data());
}

TEST_CASE("matmul shape mismatch names both shapes") {
    auto a = Tensor64::zeros({2, 3});
    auto b = Tensor64::zeros({4, 2});
    try {
        matmul<double>(nullptr, a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[4x2]") != std::string::npos);
    }
}

TEST_CASE("matmul gradient vs finite differences") {
    SplitRng rng(11);
    auto a = random_tensor<double>(rng, {4, 5});
    auto b = random_tensor<double>(rng, {5, 3});
    auto res = gradcheck<double>(
        [&](Tape64* tape) { return sum_all(tape, matmul(tape, a, b)); }, {a, b});
    CHECK(res.max_rel_err < 1e-5);
    CHECK(res.checked == 35);
}

TEST_CASE("batched matmul and bmm gradients") {
    SplitRng rng(12);
    auto a = random_tensor<double>(rng, {2, 3, 4});
    auto w = random_tensor<double>(rng, {4, 2});
    auto res = gradcheck<double>(
        [&](Tape64* tape) { return sum_all(tape, square(tape, matmul(tape, a, w))); }, {a, w});
    CHECK(res.max_rel_err < 1e-5);

    auto x = random_tensor<double>(rng, {2, 3, 4});
    auto y = random_tensor<double>(rng, {2, 4, 2});
    auto res2 = gradcheck<double>(
        [&](Tape64* tape) { return sum_all(tape, square(tape, bmm(tape, x, y))); }, {x, y});
    CHECK(res2.max_rel_err < 1e-5);
}

TEST_CASE("softmax flat row is uniform") {
    auto x = Tensor64::from({1, 4}, {0, 0, 0, 0});
    auto y = softmax_last<double>(nullptr, x);
    for (double v : y.data()) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("softmax stays stable at extreme magnitudes") {
    auto x = Tensor64::from({1, 2}, {1000, 0});
    auto y = softmax_last<double>(nullptr, x);
    CHECK(y.data()[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(y.data()[1] == doctest::Approx(0.0).epsilon(1e-6));

    SplitRng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        auto big = random_tensor<double>(rng, {3, 5}, false, -1e4, 1e4);
        auto s = softmax_last<double>(nullptr, big);
        for (int r = 0; r < 3; ++r) {
            double sum = 0;
            for (int c = 0; c < 5; ++c) sum += s.data()[static_cast<std::size_t>(r * 5 + c)];
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("softmax jacobian vs finite differences") {
    SplitRng rng(7);
    auto x = random_tensor<double>(rng, {3, 4});
    // check each output element's gradient row separately
    for (int k = 0; k < 12; ++k) {
        std::vector<double> pick(12, 0.0);
        pick[static_cast<std::size_t>(k)] = 1.0;
        auto mask = Tensor64::from({3, 4}, pick);
        auto res = gradcheck<double>(
            [&](Tape64* tape) { return sum_all(tape, mul(tape, softmax_last(tape, x), mask)); }, {x});
        CHECK(res.max_rel_err < 1e-5);
    }
}

TEST_CASE("layer_norm handles constant and standardized rows") {
    auto gain = Tensor64::full({3}, 1.0);
    auto bias = Tensor64::zeros({3});
    auto constant = Tensor64::from({1, 3}, {5, 5, 5});
    auto y = layer_norm_last<double>(nullptr, constant, gain, bias, 1e-5);
    for (double v : y.data()) CHECK(v == doctest::Approx(0.0));

    auto g2 = Tensor64::full({2}, 1.0);
    auto b2 = Tensor64::zeros({2});
    auto x = Tensor64::from({1, 2}, {1, -1});
    auto y2 = layer_norm_last<double>(nullptr, x, g2, b2, 1e-12);
    CHECK(y2.data()[0] == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(y2.data()[1] == doctest::Approx(-1.0).epsilon(1e-5));
}

TEST_CASE("layer_norm gradient vs finite differences") {
    SplitRng rng(13);
    auto x = random_tensor<double>(rng, {4, 6});
    auto gain = random_tensor<double>(rng, {6});
    auto bias = random_tensor<double>(rng, {6});
    auto res = gradcheck<double>(
        [&](Tape64* tape) {
            return sum_all(tape, square(tape, layer_norm_last(tape, x, gain, bias, 1e-5)));
        },
        {x, gain, bias});
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("backward populates leaf grads") {
    auto x = Tensor64::from({3}, {1, 2, 3}, true);
    Tape64 tape;
    auto loss = sum_all(&tape, x);
    tape.backward(loss);
    for (double g : x.grad()) CHECK(g == doctest::Approx(1.0));

    auto v = Tensor64::from({1}, {3}, true);
    Tape64 tape2;
    auto loss2 = sum_all(&tape2, mul(&tape2, v, v));
    tape2.backward(loss2);
    CHECK(v.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("backward rejects non-scalar loss and accumulates on repeat") {
    auto x = Tensor64::from({2}, {1, 2}, true);
    Tape64 tape;
    auto y = square(&tape, x);
    CHECK_THROWS_AS(tape.backward(y), ContractError);

    auto loss = sum_all(&tape, y);
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(4.0));
}

TEST_CASE("elementwise and structural op gradients") {
    SplitRng rng(17);
    auto a = random_tensor<double>(rng, {3, 4});
    auto b = random_tensor<double>(rng, {3, 4});
    auto bias = random_tensor<double>(rng, {4});

    auto res = gradcheck<double>(
        [&](Tape64* tape) {
            auto h = add(tape, mul(tape, a, b), sub(tape, a, b));
            h = add_bias(tape, h, bias);
            h = tanh_op(tape, h);
            h = relu(tape, scale(tape, h, 1.7));
            auto parts = concat_last(tape, h, square(tape, a));
            auto t = transpose_last2(tape, parts);
            auto s = slice_last(tape, t, 1, 2);
            return mean_all(tape, square(tape, s));
        },
        {a, b, bias});
    CHECK(res.max_rel_err < 1e-5);

    auto c = random_tensor<double>(rng, {2, 3});
    auto res2 = gradcheck<double>(
        [&](Tape64* tape) {
            auto e = expand_leading(tape, c, 4);
            auto r = reshape(tape, e, {4, 3, 2});
            return sum_all(tape, square(tape, mean_last(tape, r)));
        },
        {c});
    CHECK(res2.max_rel_err < 1e-5);
}

TEST_CASE("embedding rows share gradients across duplicate tokens") {
    SplitRng rng(19);
    auto table = random_tensor<double>(rng, {5, 3});
    const std::vector<int> tokens{2, 0, 2};  // token 2 used twice

    auto weight = random_tensor<double>(rng, {3, 3}, false);
    auto res = gradcheck<double>(
        [&](Tape64* tape) {
            return sum_all(tape, mul(tape, embed_rows(tape, table, tokens), weight));
        },
        {table});
    CHECK(res.max_rel_err < 1e-5);

    // duplicate positions accumulate the sum of both positions' grads
    table.zero_grad();
    Tape64 tape;
    auto out = embed_rows(&tape, table, tokens);
    tape.backward(sum_all(&tape, out));
    CHECK(table.grad()[2 * 3 + 0] == doctest::Approx(2.0));
    CHECK(table.grad()[0 * 3 + 0] == doctest::Approx(1.0));
    CHECK(table.grad()[1 * 3 + 0] == doctest::Approx(0.0));

    CHECK_THROWS_AS(embed_rows<double>(nullptr, table, {7}), ContractError);
}

TEST_CASE("sinusoid embed values and gradient") {
    // zero input: cos columns 1, sin columns 0
    auto zero = Tensor64::zeros({3});
    auto freqs = sinusoid_frequencies<double>(6);
    auto out = sinusoid_embed<double>(nullptr, zero, freqs);
    CHECK(out.shape() == Shape{3, 6});
    for (int i = 0; i < 3; ++i)
        for (int f = 0; f < 3; ++f) {
            CHECK(out.data()[static_cast<std::size_t>(i * 6 + 2 * f)] == doctest::Approx(1.0));
            CHECK(out.data()[static_cast<std::size_t>(i * 6 + 2 * f + 1)] == doctest::Approx(0.0));
        }

    // frequency ladder endpoints
    auto k96 = sinusoid_frequencies<double>(96);
    CHECK(k96.size() == 48);
    CHECK(k96.front() == doctest::Approx(0.1));
    CHECK(k96.back() == doctest::Approx(1000.0));
    auto k2 = sinusoid_frequencies<double>(2);
    CHECK(k2.size() == 1);
    CHECK(k2[0] == doctest::Approx(0.1));

    // M=4 at s = 10*pi: [cos(pi), sin(pi), cos(10000*pi), sin(10000*pi)]
    auto s = Tensor64::from({1}, {10.0 * std::numbers::pi});
    auto row = sinusoid_embed<double>(nullptr, s, sinusoid_frequencies<double>(4));
    CHECK(row.data()[0] == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(row.data()[1] == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(row.data()[2] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(row.data()[3] == doctest::Approx(0.0).epsilon(1e-6));

    SplitRng rng(23);
    auto x = random_tensor<double>(rng, {4});
    auto small_freqs = std::vector<double>{0.1, 0.7, 2.0};
    auto res = gradcheck<double>(
        [&](Tape64* tape) { return sum_all(tape, square(tape, sinusoid_embed(tape, x, small_freqs))); },
        {x});
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("finite checks catch non-finite outputs") {
    const bool prev = finite_checks();
    finite_checks() = true;
    auto x = Tensor64::from({2}, {1e308, 1e308});
    CHECK_THROWS_AS(scale<double>(nullptr, x, 10.0), NumericsError);
    finite_checks() = prev;
}

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "morphrl/rng.hpp"
#include "morphrl/tensor.hpp"

namespace testutil {

// Central-difference gradient oracle: h = 1e-4 * max(1, |x|). The numeric
// side only ever calls the tape-less forward path, so it is independent of
// the backward rules under test.
struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
};

template <class Real, class Fn>
GradCheckResult gradcheck(Fn&& loss_fn, std::vector<morphrl::TensorT<Real>> leaves,
                          double h_scale = 1e-4) {
    for (auto& leaf : leaves) leaf.zero_grad();
    morphrl::TapeT<Real> tape;
    morphrl::TensorT<Real> loss = loss_fn(&tape);
    tape.backward(loss);

    std::vector<std::vector<Real>> analytic;
    analytic.reserve(leaves.size());
    for (const auto& leaf : leaves) analytic.push_back(leaf.grad());

    GradCheckResult res;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& leaf = leaves[li];
        for (std::size_t i = 0; i < leaf.data().size(); ++i) {
            const Real orig = leaf.data()[i];
            const double h = h_scale * std::max(1.0, std::abs(static_cast<double>(orig)));
            leaf.data()[i] = static_cast<Real>(orig + h);
            const double fp = static_cast<double>(loss_fn(nullptr).item());
            leaf.data()[i] = static_cast<Real>(orig - h);
            const double fm = static_cast<double>(loss_fn(nullptr).item());
            leaf.data()[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double exact = static_cast<double>(analytic[li][i]);
            const double rel =
                std::abs(exact - numeric) / std::max({1.0, std::abs(numeric), std::abs(exact)});
            res.max_rel_err = std::max(res.max_rel_err, rel);
            ++res.checked;
        }
    }
    return res;
}

template <class Real>
morphrl::TensorT<Real> random_tensor(morphrl::SplitRng& rng, morphrl::Shape shape,
                                     bool requires_grad = true, double lo = -2.0, double hi = 2.0) {
    std::vector<Real> v(static_cast<std::size_t>(morphrl::shape_numel(shape)));
    for (auto& x : v) x = static_cast<Real>(rng.uniform(lo, hi));
    return morphrl::TensorT<Real>::from(std::move(shape), std::move(v), requires_grad);
}

}  // namespace testutil

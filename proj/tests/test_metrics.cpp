#include <doctest.h>

#include <cmath>

#include "greenview/errors.hpp"
#include "greenview/metrics.hpp"
#include "greenview/util.hpp"

using namespace greenview;

namespace {

BinaryMask mask_from_bits(int w, int h, const std::vector<int>& bits) {
    BinaryMask m(w, h);
    for (size_t i = 0; i < m.flags.size(); ++i) m.flags[i] = bits[i] ? 1 : 0;
    return m;
}

BinaryMask random_mask(Rng& rng, int w, int h, double p) {
    BinaryMask m(w, h);
    for (auto& f : m.flags) f = rng.uniform() < p ? 1 : 0;
    return m;
}

}  // namespace

TEST_CASE("eval_pair identity and disjoint masks") {
    Rng rng(11);
    BinaryMask m = random_mask(rng, 8, 8, 0.4);
    ImageEval self = eval_pair(m, m);
    CHECK(*self.iou == 1.0);
    CHECK(self.delta == 0.0);
    CHECK(*self.fp == 0);
    CHECK(*self.fn == 0);

    BinaryMask a(4, 4), b(4, 4);
    a.set(0, 0, true);
    b.set(3, 3, true);
    CHECK(*eval_pair(a, b).iou == 0.0);
}

TEST_CASE("eval_pair constructed counts: tp=6 fp=2 fn=2 on 10x10") {
    BinaryMask pred(10, 10), truth(10, 10);
    for (int i = 0; i < 8; ++i) pred.flags[i] = 1;   // pixels 0..7
    for (int i = 0; i < 6; ++i) truth.flags[i] = 1;  // pixels 0..5 overlap
    truth.flags[20] = truth.flags[21] = 1;           // 2 missed
    ImageEval e = eval_pair(pred, truth);
    CHECK(*e.tp == 6);
    CHECK(*e.fp == 2);
    CHECK(*e.fn == 2);
    CHECK(*e.tn == 90);
    CHECK(*e.iou == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(e.delta == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("eval_pair both-empty convention and swap symmetry") {
    BinaryMask empty(5, 5);
    CHECK(*eval_pair(empty, empty).iou == 1.0);

    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        BinaryMask a = random_mask(rng, 6, 6, 0.3);
        BinaryMask b = random_mask(rng, 6, 6, 0.5);
        ImageEval ab = eval_pair(a, b);
        ImageEval ba = eval_pair(b, a);
        CHECK(*ab.tp == *ba.tp);
        CHECK(*ab.fp == *ba.fn);
        CHECK(*ab.fn == *ba.fp);
        CHECK(*ab.iou == *ba.iou);
        CHECK(std::abs(ab.delta) == std::abs(ba.delta));
    }

    BinaryMask other(4, 5);
    CHECK_THROWS_AS(eval_pair(empty, other), ValidationError);
}

TEST_CASE("mean_iou and mean_abs_error definitions") {
    ImageEval a, b;
    a.iou = 0.2;
    b.iou = 0.6;
    a.delta = 0.1;
    b.delta = -0.1;
    CHECK(mean_iou({a}) == 0.2);
    CHECK(mean_iou({a, b}) == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(mean_abs_error({a, b}) == doctest::Approx(0.1).epsilon(1e-15));  // abs before mean
    CHECK_THROWS_AS(mean_iou({}), ValidationError);
    CHECK_THROWS_AS(mean_abs_error({}), ValidationError);
}

TEST_CASE("pearson_r anchors and the undefined case") {
    CHECK(pearson_r({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pearson_r({1, 2, 3}, {-1, -2, -3}) == doctest::Approx(-1.0).epsilon(1e-12));
    // frozen from direct formula evaluation
    CHECK(pearson_r({0.1, 0.2, 0.3}, {0.2, 0.1, 0.3}) ==
          doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(pearson_r({1.0}, {1.0}), ValidationError);
    CHECK_THROWS_AS(pearson_r({1, 1, 1}, {1, 2, 3}), ValidationError);
}

TEST_CASE("error_band quantiles") {
    auto band = error_band({0.25, 0.25, 0.25});
    CHECK(band.first == 0.25);
    CHECK(band.second == 0.25);

    // sorted {-0.2, 0, 0.2}: pos05 = 0.1 -> -0.18, pos95 = 1.9 -> 0.18
    auto b2 = error_band({-0.2, 0.0, 0.2});
    CHECK(b2.first == doctest::Approx(-0.18).epsilon(1e-12));
    CHECK(b2.second == doctest::Approx(0.18).epsilon(1e-12));

    auto rev = error_band({0.2, 0.0, -0.2});
    CHECK(rev.first == b2.first);
    CHECK(rev.second == b2.second);

    CHECK_THROWS_AS(error_band({0.1}), ValidationError);
}

TEST_CASE("report aggregates recompute from the per-image list") {
    Rng rng(99);
    std::vector<ImageEval> evals;
    for (int i = 0; i < 12; ++i) {
        BinaryMask p = random_mask(rng, 9, 9, 0.35);
        BinaryMask t = random_mask(rng, 9, 9, 0.4);
        ImageEval e = eval_pair(p, t);
        e.image_id = "img" + std::to_string(i);
        evals.push_back(e);
    }
    EvalReport rep = make_report(evals, true);
    CHECK(rep.n == 12);
    CHECK(*rep.mean_iou == mean_iou(rep.per_image));
    CHECK(rep.mean_abs_error == mean_abs_error(rep.per_image));
    std::vector<double> deltas;
    for (const auto& e : rep.per_image) deltas.push_back(e.delta);
    auto band = error_band(deltas);
    CHECK(rep.err_q05 == band.first);
    CHECK(rep.err_q95 == band.second);
}

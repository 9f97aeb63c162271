#include <doctest.h>

#include <cmath>

#include "mcal/auditor.hpp"
#include "mcal/random.hpp"
#include "mcal/synthetic.hpp"

using namespace mcal;

namespace {

Population id_population(int n) {
    std::vector<AttrKind> schema{AttrKind::Boolean};
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(n), std::vector<double>{1.0});
    return Population(std::move(schema), std::move(rows));
}

/// S of 100 ids where the qualified half has p*=1 and the rest p*=0; the
/// constant-1/2 predictor is the canonical uncalibrated-but-AE example.
struct HalfQualified {
    Population pop = id_population(200);
    GroundTruth truth;
    SetPredicate s = SetPredicate::explicit_ids([] {
        std::vector<int> ids(100);
        for (int i = 0; i < 100; ++i) ids[static_cast<std::size_t>(i)] = i;
        return ids;
    }());
    SetPredicate qualified = SetPredicate::explicit_ids([] {
        std::vector<int> ids(50);
        for (int i = 0; i < 50; ++i) ids[static_cast<std::size_t>(i)] = i;
        return ids;
    }());

    HalfQualified() {
        truth.probs.assign(200, 0.5);
        for (int i = 0; i < 50; ++i) truth.probs[static_cast<std::size_t>(i)] = 1.0;
        for (int i = 50; i < 100; ++i) truth.probs[static_cast<std::size_t>(i)] = 0.0;
    }
};

}  // namespace

TEST_CASE("ae_error examples") {
    HalfQualified hq;
    DensePredictor x = DensePredictor::constant(200, 0.5);

    CHECK(ae_error(x, hq.truth, hq.s, hq.pop) == doctest::Approx(0.0));          // balanced on S
    CHECK(ae_error(x, hq.truth, hq.qualified, hq.pop) == doctest::Approx(-0.5)); // but not on S'

    DensePredictor exact;
    exact.values = hq.truth.probs;
    CHECK(ae_error(exact, hq.truth, hq.s, hq.pop) == 0.0);

    // ten city-A days, all predicted 0.8 with p* = 0.8
    const auto city = id_population(10);
    GroundTruth rainy{std::vector<double>(10, 0.8)};
    CHECK(ae_error(DensePredictor::constant(10, 0.8), rainy, SetPredicate::all(), city) ==
          doctest::Approx(0.0));

    CHECK_THROWS(ae_error(x, hq.truth, SetPredicate::explicit_ids({}), hq.pop));
}

TEST_CASE("check_calibration witness construction") {
    HalfQualified hq;
    const DiscretizationGrid grid(0.1);

    DensePredictor exact;
    exact.values = hq.truth.probs;
    CHECK(check_calibration(exact, hq.truth, hq.s, hq.pop, 0.05, grid).calibrated);

    // constant 1/2 on the qualified half: a single category with error 1/2
    DensePredictor half = DensePredictor::constant(200, 0.5);
    const auto bad = check_calibration(half, hq.truth, hq.qualified, hq.pop, 0.1, grid);
    CHECK_FALSE(bad.calibrated);
    CHECK(bad.excluded_fraction == 1.0);
    REQUIRE(bad.excluded.size() == 1);
    CHECK(bad.excluded[0].signed_error == doctest::Approx(-0.5));

    // alpha = 0 boundary with a perfectly matching constant
    GroundTruth flat{std::vector<double>(200, 0.5)};
    CHECK(check_calibration(half, flat, hq.s, hq.pop, 0.0, grid).calibrated);
}

TEST_CASE("observable calibration matches realized outcomes") {
    const auto pop = id_population(10);
    const DiscretizationGrid grid(0.1);

    // x in {0,1} with outcomes equal to the rounded predictions
    DensePredictor x;
    x.values = {1, 0, 1, 1, 0, 0, 1, 0, 1, 0};
    OutcomeVector o;
    for (double v : x.values) o.bits.push_back(static_cast<std::uint8_t>(v));
    const auto res = check_observable_calibration(x, o, SetPredicate::all(), pop, 0.05, grid);
    CHECK(res.worst_error == 0.0);
    CHECK(res.calibrated);

    // rain example: 0.8 predicted on ten days, eight rainy
    DensePredictor rain = DensePredictor::constant(10, 0.8);
    OutcomeVector wet;
    wet.bits = {1, 1, 1, 1, 1, 1, 1, 1, 0, 0};
    const auto rain_res = check_observable_calibration(rain, wet, SetPredicate::all(), pop, 0.05, grid);
    CHECK(rain_res.worst_error == doctest::Approx(0.0));
    CHECK(rain_res.calibrated);
}

TEST_CASE("al-multicalibration audit flags exactly the planted violation") {
    HalfQualified hq;
    const DiscretizationGrid grid(0.1);
    SubsetCollection c;
    c.gamma = 0.1;
    c.predicates = {hq.s, hq.qualified};

    DensePredictor exact;
    exact.values = hq.truth.probs;
    CHECK(check_al_multicalibration(exact, hq.truth, c, hq.pop, 0.1, grid).clean());

    DensePredictor half = DensePredictor::constant(200, 0.5);
    const auto report = check_al_multicalibration(half, hq.truth, c, hq.pop, 0.1, grid);
    REQUIRE(report.violations.size() == 1);  // S balances out, S' does not
    CHECK(report.violations[0].set_index == 1);
    CHECK(std::abs(report.violations[0].signed_error) == doctest::Approx(0.5));
    CHECK(report.violations[0].category_size == 50);
    CHECK(report.worst() != nullptr);
    CHECK(report.squared_error == doctest::Approx(100 * 0.25));

    // every reported violation satisfies the definitional floor and bound
    for (const auto& v : report.violations) {
        CHECK(std::abs(v.signed_error) > 0.1);
        const auto m = members(c.predicates[static_cast<std::size_t>(v.set_index)], hq.pop);
        CHECK(static_cast<double>(v.category_size) >= 0.1 * grid.lambda() * static_cast<double>(m.ids.size()));
    }
}

TEST_CASE("squared_error examples") {
    GroundTruth truth{std::vector<double>(100, 0.8)};
    CHECK(squared_error(DensePredictor::constant(100, 0.0), truth) == doctest::Approx(64.0));

    DensePredictor same;
    same.values = truth.probs;
    CHECK(squared_error(same, truth) == 0.0);

    GroundTruth bits;
    bits.probs.assign(8, 0.0);
    for (int i = 0; i < 4; ++i) bits.probs[static_cast<std::size_t>(i)] = 1.0;
    CHECK(squared_error(DensePredictor::constant(8, 0.5), bits) == doctest::Approx(8.0 / 4.0));
}

TEST_CASE("benchmark predictor passes every audit at every positive alpha") {
    GeneratorConfig cfg;
    cfg.n = 500;
    cfg.collection.conjunction_count = 5;
    cfg.collection.gamma = 0.1;
    cfg.collection.density_min = 0.15;
    cfg.collection.density_max = 0.5;
    cfg.truth.kind = "per_set";
    cfg.truth.offset_min = 0.05;
    cfg.truth.offset_max = 0.25;
    const auto inst = generate_synthetic(cfg, 31);
    DensePredictor star;
    star.values = inst.truth.probs;
    for (double alpha : {1e-9, 0.01, 0.1, 0.5}) {
        for (double lambda : {0.1, 0.25}) {
            const DiscretizationGrid grid(lambda);
            CHECK(check_al_multicalibration(star, inst.truth, inst.collection, inst.population, alpha, grid)
                      .clean());
        }
        CHECK(check_multi_ae(star, inst.truth, inst.collection, inst.population, alpha).clean());
    }
}

TEST_CASE("alpha-calibration implies 2alpha accuracy in expectation") {
    Rng rng(17);
    const auto pop = id_population(400);
    const DiscretizationGrid grid(0.1);
    const SetPredicate all = SetPredicate::all();
    int checked = 0;
    for (int trial = 0; trial < 60; ++trial) {
        GroundTruth truth;
        DensePredictor x;
        for (int i = 0; i < 400; ++i) {
            const double v = rng.next_unit();
            x.values.push_back(v);
            truth.probs.push_back(clip01(v + 0.4 * (rng.next_unit() - 0.5)));
        }
        const double alpha = 0.02 + 0.3 * rng.next_unit();
        if (!check_calibration(x, truth, all, pop, alpha, grid).calibrated) continue;
        ++checked;
        CHECK(std::abs(ae_error(x, truth, all, pop)) <= 2.0 * alpha + 1e-12);
    }
    CHECK(checked > 10);  // the property must actually have been exercised
}

TEST_CASE("audit passes are monotone in alpha") {
    Rng rng(23);
    const auto pop = id_population(300);
    const DiscretizationGrid grid(0.2);
    SubsetCollection c;
    c.gamma = 0.25;
    c.predicates.push_back(SetPredicate::all());
    std::vector<int> front, stripe;
    for (int i = 0; i < 300; ++i) {
        if (i < 120) front.push_back(i);
        if (i % 3 == 0) stripe.push_back(i);
    }
    c.predicates.push_back(SetPredicate::explicit_ids(front));
    c.predicates.push_back(SetPredicate::explicit_ids(stripe));

    for (int trial = 0; trial < 40; ++trial) {
        GroundTruth truth;
        DensePredictor x;
        for (int i = 0; i < 300; ++i) {
            const double v = rng.next_unit();
            x.values.push_back(v);
            truth.probs.push_back(clip01(v + 0.3 * (rng.next_unit() - 0.5)));
        }
        const double alpha = 0.05 + 0.2 * rng.next_unit();
        const double alpha_hi = alpha + 0.1 + 0.3 * rng.next_unit();
        if (check_al_multicalibration(x, truth, c, pop, alpha, grid).clean()) {
            CHECK(check_al_multicalibration(x, truth, c, pop, alpha_hi, grid).clean());
        }
        if (check_multi_ae(x, truth, c, pop, alpha).clean()) {
            CHECK(check_multi_ae(x, truth, c, pop, alpha_hi).clean());
        }
    }
}

TEST_CASE("clean al-audit plus discretization passes calibration at alpha+lambda") {
    Rng rng(29);
    const auto pop = id_population(500);
    const double alpha = 0.1, lambda = 0.1;
    const DiscretizationGrid grid(lambda);
    SubsetCollection c;
    c.gamma = 0.3;
    c.predicates.push_back(SetPredicate::all());
    std::vector<int> half;
    for (int i = 0; i < 250; ++i) half.push_back(2 * i);
    c.predicates.push_back(SetPredicate::explicit_ids(half));

    int exercised = 0;
    for (int trial = 0; trial < 80; ++trial) {
        GroundTruth truth;
        DensePredictor x;
        for (int i = 0; i < 500; ++i) {
            const double v = rng.next_unit();
            x.values.push_back(v);
            truth.probs.push_back(clip01(v + 0.18 * (rng.next_unit() - 0.5)));
        }
        if (!check_al_multicalibration(x, truth, c, pop, alpha, grid).clean()) continue;
        ++exercised;
        const auto disc = discretize(x, grid);
        for (const auto& pred : c.predicates) {
            CHECK(check_calibration(disc, truth, pred, pop, alpha + lambda, grid).calibrated);
        }
    }
    CHECK(exercised > 5);
}

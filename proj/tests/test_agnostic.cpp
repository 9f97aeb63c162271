#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "mcal/agnostic.hpp"
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

std::vector<LabeledExample> full_labeling(std::span<const double> values) {
    std::vector<LabeledExample> out;
    for (int i = 0; i < static_cast<int>(values.size()); ++i) {
        out.push_back(LabeledExample{i, values[static_cast<std::size_t>(i)]});
    }
    return out;
}

}  // namespace

TEST_CASE("correlation basics") {
    std::vector<double> ones(10, 1.0);
    CHECK(correlation(ones, ones) == doctest::Approx(1.0));

    std::vector<double> a(8), b(8);
    for (int i = 0; i < 8; ++i) {
        a[static_cast<std::size_t>(i)] = 1.0;
        b[static_cast<std::size_t>(i)] = i < 4 ? 1.0 : -1.0;  // half aligned, half anti
    }
    CHECK(correlation(a, b) == doctest::Approx(0.0));

    const auto pop = id_population(6);
    Concept c{SetPredicate::explicit_ids({0, 2, 4})};
    std::vector<double> ind;
    for (int i = 0; i < 6; ++i) ind.push_back(c.evaluate(pop, i));
    CHECK(correlation(ind, ind) == doctest::Approx(1.0));

    CHECK_THROWS(correlation(std::vector<double>{1.0}, std::vector<double>{}));
}

TEST_CASE("label-space maps compose to the identity") {
    Rng rng(2);
    for (int t = 0; t < 200; ++t) {
        const double u = rng.next_unit();
        CHECK(to_prediction_space(to_label_space(u)) == doctest::Approx(u).epsilon(1e-12));
        const double y = 2.0 * rng.next_unit() - 1.0;
        CHECK(to_label_space(to_prediction_space(y)) == doctest::Approx(y).epsilon(1e-12));
    }
}

TEST_CASE("build_delta_labels examples") {
    const DiscretizationGrid grid(0.2);
    DensePredictor x;
    x.values = {0.5, 0.5, 0.1, 1.0};
    std::vector<double> outcomes = {0.0, 1.0, 0.1, 1.0};
    const int mid = grid.interval_of(0.5);
    const auto delta = build_delta_labels(x, outcomes, grid, mid);
    CHECK(delta[0] == doctest::Approx(0.25));   // (0.5 - 0)/2
    CHECK(delta[1] == doctest::Approx(-0.25));  // (0.5 - 1)/2
    CHECK(delta[2] == 0.0);                     // outside the interval
    CHECK(delta[3] == 0.0);

    // x equal to its 0/1 outcomes everywhere: all-zero labels
    DensePredictor bits;
    bits.values = {1.0, 0.0, 1.0};
    std::vector<double> same = {1.0, 0.0, 1.0};
    for (int k = 0; k < grid.interval_count(); ++k) {
        for (double d : build_delta_labels(bits, same, grid, k)) CHECK(d == 0.0);
    }
}

TEST_CASE("delta-label correlation meets the planted-violation bound") {
    // Interval around 0.5 holds S_v (error +a each) and an equal-size
    // counterweight (error -a each), so the interval is exactly balanced and
    // the correlation with the concept of S collects both halves.
    const int n = 400;
    const auto pop = id_population(n);
    const DiscretizationGrid grid(0.2);
    const double alpha = 0.12, a = 0.15;

    DensePredictor x;
    GroundTruth truth;
    x.values.assign(n, 0.1);
    truth.probs.assign(n, 0.1);
    std::vector<int> s_ids;
    for (int i = 0; i < 100; ++i) {
        x.values[static_cast<std::size_t>(i)] = 0.5;
        truth.probs[static_cast<std::size_t>(i)] = 0.5 - a;  // x - p* = +a
        s_ids.push_back(i);
    }
    for (int i = 100; i < 200; ++i) {
        x.values[static_cast<std::size_t>(i)] = 0.5;
        truth.probs[static_cast<std::size_t>(i)] = 0.5 + a;  // x - p* = -a
    }
    const double beta = 100.0 / n;
    const double rho = alpha * beta / 2.0;
    const double tau = rho;

    const auto delta = build_delta_labels(x, truth.probs, grid, grid.interval_of(0.5));
    Concept c{SetPredicate::explicit_ids(s_ids)};
    std::vector<double> cv;
    for (int i = 0; i < n; ++i) cv.push_back(c.evaluate(pop, i));
    CHECK(correlation(cv, delta) >= 2.0 * rho - tau / 2.0 - 1e-12);
}

TEST_CASE("delta-label bound holds on randomized enforced instances") {
    Rng rng(71);
    const int n = 300;
    const auto pop = id_population(n);
    const double lambda = 0.25, gamma = 0.2, alpha = 0.2;
    const DiscretizationGrid grid(lambda);
    const double beta = alpha * lambda * gamma;
    const double rho = alpha * beta / 2.0;
    const double tau = rho;

    int exercised = 0;
    for (int trial = 0; trial < 50; ++trial) {
        // plant a strong signed miscalibration on a random set, flat elsewhere
        const double shift = (trial % 2 == 0 ? 1.0 : -1.0) * (0.4 + 0.1 * rng.next_unit());
        std::vector<int> set;
        DensePredictor x;
        GroundTruth truth;
        for (int i = 0; i < n; ++i) {
            const bool member = rng.bernoulli(0.45);
            if (member) set.push_back(i);
            const double v = 0.5 + 0.45 * rng.next_unit();  // keep x - shift inside [0,1]
            x.values.push_back(v);
            truth.probs.push_back(member ? clip01(v - shift) : v);
        }
        if (set.empty()) continue;

        // enforcement side-step until every interval is observably recentred,
        // mirroring the learner's offset-and-resample loop
        for (int pass = 0; pass < 1000; ++pass) {
            bool shifted = false;
            for (int k = 0; k < grid.interval_count() && !shifted; ++k) {
                std::vector<int> interval_ids;
                double disc = 0.0;
                for (int i = 0; i < n; ++i) {
                    if (grid.interval_of(x.values[static_cast<std::size_t>(i)]) != k) continue;
                    interval_ids.push_back(i);
                    disc += x.values[static_cast<std::size_t>(i)] - truth.probs[static_cast<std::size_t>(i)];
                }
                if (interval_ids.empty() || std::abs(disc) <= tau * n / 4.0) continue;
                apply_update_in_place(x, interval_ids, -disc / static_cast<double>(interval_ids.size()));
                shifted = true;
            }
            if (!shifted) break;
        }

        for (int k = 0; k < grid.interval_count(); ++k) {
            double violation = 0.0;
            std::int64_t size = 0;
            for (int id : set) {
                if (grid.interval_of(x.values[static_cast<std::size_t>(id)]) != k) continue;
                violation += x.values[static_cast<std::size_t>(id)] - truth.probs[static_cast<std::size_t>(id)];
                ++size;
            }
            if (size < static_cast<std::int64_t>(beta * n) || size == 0) continue;
            const auto delta = build_delta_labels(x, truth.probs, grid, k);
            Concept c{SetPredicate::explicit_ids(set)};
            std::vector<double> cv;
            for (int i = 0; i < n; ++i) cv.push_back(c.evaluate(pop, i));
            if (violation >= alpha * static_cast<double>(size)) {
                CHECK(correlation(cv, delta) >= 2.0 * rho - tau / 2.0 - 1e-12);
                ++exercised;
            } else if (-violation >= alpha * static_cast<double>(size)) {
                std::vector<double> neg(delta.size());
                for (std::size_t i = 0; i < delta.size(); ++i) neg[i] = -delta[i];
                CHECK(correlation(cv, neg) >= 2.0 * rho - tau / 2.0 - 1e-12);
                ++exercised;
            }
        }
    }
    CHECK(exercised > 20);
}

TEST_CASE("exhaustive weak learner examples") {
    const int n = 120;
    const auto pop = id_population(n);
    std::vector<int> s_ids;
    for (int i = 0; i < n; i += 3) s_ids.push_back(i);
    std::vector<Concept> concepts;
    concepts.push_back(Concept{SetPredicate::explicit_ids(s_ids)});
    concepts.push_back(Concept{SetPredicate::explicit_ids({1, 4, 7})});

    // labels equal to a concept: correlation 1 hypothesis comes back
    std::vector<double> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = concepts[0].evaluate(pop, i);
    const WALContract contract{0.5, 0.25};
    const auto h = exhaustive_weak_learner(concepts, pop, full_labeling(y), contract);
    REQUIRE(h.has_value());
    const auto hv = h->evaluate_all(pop);
    CHECK(correlation(hv, y) == doctest::Approx(1.0));

    // all-zero labels: nothing beats a positive tau
    std::vector<double> zero(static_cast<std::size_t>(n), 0.0);
    CHECK_FALSE(exhaustive_weak_learner(concepts, pop, full_labeling(zero), contract).has_value());

    // promise instance with full labeling: returned correlation meets tau
    Rng rng(9);
    std::vector<double> noisy = y;
    for (auto& v : noisy) {
        if (rng.bernoulli(0.1)) v = -v;
    }
    std::vector<double> cv;
    for (int i = 0; i < n; ++i) cv.push_back(concepts[0].evaluate(pop, i));
    REQUIRE(correlation(cv, noisy) > 0.5);  // the promise itself
    const auto h2 = exhaustive_weak_learner(concepts, pop, full_labeling(noisy), WALContract{0.5, 0.5});
    REQUIRE(h2.has_value());
    CHECK(correlation(h2->evaluate_all(pop), noisy) > 0.5);

    CHECK_THROWS(exhaustive_weak_learner(concepts, pop, full_labeling(y), WALContract{0.1, 0.2}));
}

TEST_CASE("learn_via_wal terminates immediately at the constant-half fixpoint") {
    GeneratorConfig cfg;
    cfg.n = 200;
    cfg.collection.gamma = 0.2;
    cfg.collection.conjunction_count = 3;
    cfg.collection.density_min = 0.25;
    cfg.collection.density_max = 0.5;
    cfg.truth.kind = "constant";
    cfg.truth.base = 0.5;
    const auto inst = generate_synthetic(cfg, 61);

    std::vector<Concept> concepts;
    for (const auto& p : inst.collection.predicates) concepts.push_back(Concept{p});

    ViaWalParams params;
    params.alpha = 0.25;
    params.lambda = 0.25;
    params.gamma = 0.2;
    const double rho = params.alpha * params.alpha * params.lambda * params.gamma / 2.0;
    params.contract = WALContract{rho, rho};

    const auto result = learn_via_wal(inst.collection, inst.population,
                                      make_exhaustive_weak_learner(concepts, inst.population),
                                      exact_label_source(inst.population, inst.truth), params,
                                      &inst.truth);
    CHECK(result.trace.updates == 0);
    for (double v : result.predictor.values) CHECK(v == 0.5);
}

TEST_CASE("learn_via_wal with the exhaustive learner reaches an audit-clean predictor") {
    GeneratorConfig cfg;
    cfg.n = 250;
    cfg.collection.gamma = 0.2;
    cfg.collection.conjunction_count = 4;
    cfg.collection.density_min = 0.25;
    cfg.collection.density_max = 0.5;
    cfg.truth.kind = "per_set";
    cfg.truth.base = 0.5;
    cfg.truth.offset_min = 0.15;
    cfg.truth.offset_max = 0.3;
    const auto inst = generate_synthetic(cfg, 67);

    std::vector<Concept> concepts;
    for (const auto& p : inst.collection.predicates) concepts.push_back(Concept{p});

    ViaWalParams params;
    params.alpha = 0.25;
    params.lambda = 0.25;
    params.gamma = 0.2;
    const double rho = params.alpha * params.alpha * params.lambda * params.gamma / 2.0;
    params.contract = WALContract{rho, rho};

    const auto result = learn_via_wal(inst.collection, inst.population,
                                      make_exhaustive_weak_learner(concepts, inst.population),
                                      exact_label_source(inst.population, inst.truth), params,
                                      &inst.truth);

    // every hypothesis step pays for itself in squared error
    const double nd = inst.population.size();
    for (const auto& rec : result.trace.records) {
        if (rec.kind != "update") continue;
        CHECK(rec.potential_before - rec.potential_after >=
              params.contract.tau * params.contract.tau * nd - 1e-9);
    }
    CHECK(bound_check(result.trace).within);

    const DiscretizationGrid grid(params.lambda);
    CHECK(check_al_multicalibration(result.predictor, inst.truth, inst.collection, inst.population,
                                    params.alpha, grid)
              .clean());
}

TEST_CASE("wal_from_multicalibration constant branches") {
    const int n = 100;
    const auto pop = id_population(n);
    SubsetCollection c;
    c.gamma = 0.1;
    c.predicates.push_back(SetPredicate::explicit_ids({0, 1, 2, 3, 4}));

    WalFromMcParams params;
    params.contract = WALContract{0.5, 0.045};
    params.gamma = 0.1;
    params.alpha = 0.02;

    LabelVector all_neg{std::vector<double>(n, -1.0)};
    const auto h = wal_from_multicalibration(c, pop, all_neg, params);
    const auto hv = h.evaluate_all(pop);
    CHECK(correlation(hv, all_neg.values) == doctest::Approx(1.0));
    for (double v : hv) CHECK(v == -1.0);

    LabelVector all_pos{std::vector<double>(n, 1.0)};
    const auto hp = wal_from_multicalibration(c, pop, all_pos, params);
    CHECK(correlation(hp.evaluate_all(pop), all_pos.values) == doctest::Approx(1.0));

    // contract violation must be rejected up front
    WalFromMcParams bad = params;
    bad.contract.tau = 0.2;
    CHECK_THROWS(wal_from_multicalibration(c, pop, all_neg, bad));
}

TEST_CASE("wal_from_multicalibration sign branch beats rho/4 - 4*alpha on promise instances") {
    GeneratorConfig cfg;
    cfg.n = 500;
    cfg.collection.gamma = 0.1;
    cfg.collection.conjunction_count = 3;
    cfg.collection.density_min = 0.3;
    cfg.collection.density_max = 0.45;
    cfg.truth.kind = "constant";
    cfg.truth.base = 0.5;

    WalFromMcParams params;
    params.contract = WALContract{0.5, 0.045};
    params.gamma = 0.1;
    params.alpha = 0.02;

    int exercised = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto inst = generate_synthetic(cfg, seed);
        Concept planted{inst.collection.predicates[0]};
        Rng rng(seed * 97 + 1);
        LabelVector y;
        for (int i = 0; i < inst.population.size(); ++i) {
            double v = planted.evaluate(inst.population, i);
            if (rng.bernoulli(0.15)) v = -v;
            y.values.push_back(v);
        }
        std::vector<double> cv;
        for (int i = 0; i < inst.population.size(); ++i) cv.push_back(planted.evaluate(inst.population, i));
        if (correlation(cv, y.values) < params.contract.rho) continue;  // promise must hold

        const auto h = wal_from_multicalibration(inst.collection, inst.population, y, params);
        const double corr = correlation(h.evaluate_all(inst.population), y.values);
        CHECK(corr >= params.contract.rho / 4.0 - 4.0 * params.alpha - 1e-12);
        ++exercised;
    }
    CHECK(exercised >= 2);
}

TEST_CASE("labels and hypothesis files round-trip") {
    auto dir = std::filesystem::temp_directory_path() / "mcal_agn_test";
    std::filesystem::create_directories(dir);

    LabelVector y{{-1.0, -0.5, 0.0, 0.25, 1.0}};
    store_labels(y, (dir / "y.csv").string());
    const auto y2 = load_labels((dir / "y.csv").string());
    REQUIRE(y2.size() == 5);
    for (int i = 0; i < 5; ++i) {
        CHECK(y2.values[static_cast<std::size_t>(i)] ==
              doctest::Approx(y.values[static_cast<std::size_t>(i)]).epsilon(1e-9));
    }

    const auto pop = id_population(4);
    const std::vector<Hypothesis> hs = {
        Hypothesis::constant(-1.0),
        Hypothesis::of_concept(SetPredicate::explicit_ids({1, 3})),
        Hypothesis::sign_of(DensePredictor{{0.1, 0.9, 0.5, 0.3}}),
        Hypothesis::tabulated({-0.5, 0.5, 1.0, -1.0}),
    };
    for (std::size_t i = 0; i < hs.size(); ++i) {
        const auto path = (dir / ("h" + std::to_string(i) + ".json")).string();
        store_hypothesis(hs[i], path);
        const auto back = load_hypothesis(path);
        for (int id = 0; id < 4; ++id) CHECK(back.evaluate(pop, id) == hs[i].evaluate(pop, id));
    }

    LabelVector bad{{2.0}};
    CHECK_THROWS(store_labels(bad, (dir / "bad.csv").string()));
}

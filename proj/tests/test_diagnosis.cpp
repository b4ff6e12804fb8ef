#include "doctest.h"

#include <random>

#include "hpylori/diagnosis.hpp"
#include "hpylori/error.hpp"
#include "oracles.hpp"

using namespace hpylori;

namespace {

std::vector<WindowScore> scores_for(const std::string& slide, int n, int n_pos) {
    std::vector<WindowScore> out;
    for (int i = 0; i < n; ++i) {
        WindowScore s;
        s.window.slide_id = slide;
        s.window.patient_id = "p";
        s.positive = i < n_pos;
        s.f_red = s.positive ? 2.0 : 1.0;
        out.push_back(s);
    }
    return out;
}

std::vector<LabeledFraction> labeled(const std::vector<double>& f, const std::vector<bool>& pos) {
    std::vector<LabeledFraction> out;
    for (std::size_t i = 0; i < f.size(); ++i) out.push_back({f[i], pos[i]});
    return out;
}

}  // namespace

TEST_CASE("slide diagnosis uses a strict threshold") {
    const auto s = scores_for("a", 10, 3);
    const auto d = diagnose_slide(s, 0.3);
    CHECK(d.n_windows == 10);
    CHECK(d.n_positive == 3);
    CHECK(d.positive_fraction == doctest::Approx(0.3));
    CHECK(d.predicted == Label::Negative);
    CHECK(diagnose_slide(s, 0.29).predicted == Label::Positive);
    CHECK_THROWS_AS(diagnose_slide({}, 0.1), Error);
    auto mixed = s;
    mixed[4].window.slide_id = "b";
    CHECK_THROWS_AS(diagnose_slide(mixed, 0.1), Error);
}

TEST_CASE("seven positives in a hundred windows clear a 6.18 percent threshold") {
    const auto d = diagnose_slide(scores_for("a", 100, 7), 0.0618);
    CHECK(d.positive_fraction == doctest::Approx(0.07));
    CHECK(d.predicted == Label::Positive);
    CHECK(diagnose_slide(scores_for("a", 100, 6), 0.0618).predicted == Label::Negative);
}

TEST_CASE("perfectly separated scores give AUC 1 and a separating threshold") {
    const auto curve = roc_curve(labeled({0.0, 0.01, 0.02, 0.3, 0.5}, {false, false, false, true, true}));
    CHECK(curve.auc == 1.0);
    const double t = optimal_threshold(curve);
    CHECK(t == 0.02);
    CHECK(curve.optimal.fpr == 0.0);
    CHECK(curve.optimal.tpr == 1.0);
    CHECK(curve.points.front().fpr == 0.0);
    CHECK(curve.points.back().tpr == 1.0);
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        CHECK(curve.points[i].threshold < curve.points[i - 1].threshold);
    }
}

TEST_CASE("ties between equidistant points pick the smaller threshold") {
    // (fpr, tpr) = (0, 0.5) at t=0.6 and (0.5, 1) at t=0.1 are both 0.5
    // away from the ideal corner.
    const std::vector<double> f{0.1, 0.6, 0.4, 0.9};
    const std::vector<bool> pos{false, false, true, true};
    const auto curve = roc_curve(labeled(f, pos));
    CHECK(optimal_threshold(curve) == 0.1);
    CHECK(oracle::best_threshold(f, pos) == 0.1);
}

TEST_CASE("ROC matches pair counting and the exhaustive scan on random data") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        std::uniform_int_distribution<int> size(2, 60);
        const int n = size(rng);
        std::vector<double> f(n);
        std::vector<bool> pos(n);
        std::uniform_int_distribution<int> level(0, 12);
        for (int i = 0; i < n; ++i) {
            f[i] = level(rng) / 12.0;
            pos[i] = i % 2 == 0 || (rng() % 3 == 0);
        }
        pos[1] = false;
        const auto curve = roc_curve(labeled(f, pos));
        CHECK(curve.auc == doctest::Approx(oracle::pair_auc(f, pos)).epsilon(1e-12));
        CHECK(optimal_threshold(curve) == oracle::best_threshold(f, pos));
    }
}

TEST_CASE("single-class input is degenerate") {
    try {
        roc_curve(labeled({0.1, 0.2}, {true, true}));
        FAIL("expected DegenerateRoc");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DegenerateRoc);
    }
}

TEST_CASE("diagnosis CSV round trip") {
    std::vector<SlideDiagnosis> rows{diagnose_slide(scores_for("s1", 7, 2), 0.1),
                                     diagnose_slide(scores_for("s2", 3, 0), 0.1)};
    const auto path = std::filesystem::temp_directory_path() / "hpylori_tests" / "diag.csv";
    write_diagnosis_csv(rows, path);
    const auto back = read_diagnosis_csv(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].slide_id == "s1");
    CHECK(back[0].positive_fraction == rows[0].positive_fraction);
    CHECK(back[0].predicted == Label::Positive);
    CHECK(back[1].predicted == Label::Negative);
}

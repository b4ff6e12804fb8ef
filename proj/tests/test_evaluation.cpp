#include "doctest.h"

#include <cmath>
#include <map>
#include <random>

#include "hpylori/error.hpp"
#include "hpylori/evaluation.hpp"
#include "json.hpp"

using namespace hpylori;

namespace {

std::vector<PatientRecord> cohort(int n_neg, int n_pos) {
    std::vector<PatientRecord> out;
    for (int i = 0; i < n_neg + n_pos; ++i) {
        out.push_back({"P" + std::to_string(1000 + i), i < n_neg ? Label::Negative : Label::Positive, "", {}});
    }
    return out;
}

std::vector<PatientFraction> fractions_for(const std::vector<PatientRecord>& patients, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pos(0, 40);
    std::vector<PatientFraction> out;
    for (const auto& p : patients) {
        PatientFraction f{p.patient_id, p.label, 0.0, 40, 0};
        f.n_positive = static_cast<std::size_t>(p.label == Label::Positive ? 6 + pos(rng) % 30 : pos(rng) % 5);
        f.fraction = static_cast<double>(f.n_positive) / 40.0;
        out.push_back(f);
    }
    return out;
}

}  // namespace

TEST_CASE("class metrics follow the confusion counts") {
    const ConfusionMatrix m{8, 2, 1, 9};
    const auto p = positive_class_metrics(m);
    CHECK(p.precision == doctest::Approx(8.0 / 9.0));
    CHECK(p.recall == doctest::Approx(0.8));
    CHECK(p.f1 == doctest::Approx(2 * (8.0 / 9.0) * 0.8 / (8.0 / 9.0 + 0.8)));
    const auto n = negative_class_metrics(m);
    CHECK(n.precision == doctest::Approx(9.0 / 11.0));
    CHECK(n.recall == doctest::Approx(0.9));
    CHECK(accuracy(m) == doctest::Approx(17.0 / 20.0));
    const auto none = positive_class_metrics(ConfusionMatrix{0, 3, 0, 5});
    CHECK(none.precision == 0.0);
    CHECK(none.f1 == 0.0);
}

TEST_CASE("mean_std uses the sample deviation") {
    const std::vector<double> v{1, 2, 3, 4};
    const auto ms = mean_std(v);
    CHECK(ms.mean == 2.5);
    CHECK(ms.std == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(mean_std(std::vector<double>{7}).std == 0.0);
}

TEST_CASE("folds on a 117/128 cohort are stratified within one patient") {
    const auto patients = cohort(117, 128);
    const FoldPlan plan = make_folds(patients, 10, 4);
    std::map<int, int> neg, pos;
    for (const auto& p : patients) (p.label == Label::Positive ? pos : neg)[plan.assignments.at(p.patient_id)]++;
    for (int f = 0; f < 10; ++f) {
        CHECK(std::abs(neg[f] - 11.7) <= 1.0);
        CHECK(std::abs(pos[f] - 12.8) <= 1.0);
        const int size = neg[f] + pos[f];
        CHECK((size == 24 || size == 25));
    }
}

TEST_CASE("fold plans are reproducible and independent of input order") {
    auto patients = cohort(30, 25);
    const FoldPlan a = make_folds(patients, 5, 9);
    std::reverse(patients.begin(), patients.end());
    const FoldPlan b = make_folds(patients, 5, 9);
    CHECK(a.assignments == b.assignments);
    const FoldPlan c = make_folds(patients, 5, 10);
    CHECK(a.assignments != c.assignments);
}

TEST_CASE("make_folds rejects small or duplicated cohorts") {
    try {
        make_folds(cohort(20, 5), 10, 1);
        FAIL("expected TooFewPatients");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::TooFewPatients);
    }
    auto dup = cohort(12, 12);
    dup[3].patient_id = dup[4].patient_id;
    CHECK_THROWS_AS(make_folds(dup, 10, 1), Error);
}

TEST_CASE("fold thresholds never see the held-out patients") {
    const auto patients = cohort(40, 40);
    const FoldPlan plan = make_folds(patients, 10, 2);
    auto fractions = fractions_for(patients, 3);
    for (int fold = 0; fold < plan.k; ++fold) {
        const FoldMetrics base = run_fold(fold, plan, fractions);
        CHECK(base.confusion.total() == plan.members(fold).size());
        auto perturbed = fractions;
        for (auto& f : perturbed) {
            if (plan.assignments.at(f.patient_id) == fold) f.fraction = 1.0 - f.fraction;
        }
        const FoldMetrics moved = run_fold(fold, plan, perturbed);
        CHECK(moved.threshold == base.threshold);
        CHECK(moved.train_roc.auc == base.train_roc.auc);
    }
}

TEST_CASE("evaluate aggregates folds and writes a stable report") {
    const auto patients = cohort(20, 20);
    const FoldPlan plan = make_folds(patients, 10, 5);
    const auto fractions = fractions_for(patients, 6);
    const EvalReport r = evaluate(plan, fractions);
    CHECK(r.folds.size() == 10);
    CHECK(r.pooled.total() == 40);
    CHECK(r.box_negative.size() == 20);
    CHECK(r.box_positive.size() == 20);
    CHECK(r.pooled_auc == 1.0);
    const std::string j1 = report_json(r, "cafe");
    CHECK(j1 == report_json(evaluate(plan, fractions), "cafe"));
    const auto j = nlohmann::json::parse(j1);
    CHECK(j.at("auc").get<double>() == 1.0);
    CHECK(j.at("config_hash") == "cafe");
    CHECK(j.at("folds").size() == 10);
    CHECK(report_text(r).find("Accuracy") != std::string::npos);
}

TEST_CASE("manifest round trip and patient grouping") {
    std::vector<ManifestEntry> rows{{"P1", Label::Negative, "", "slides/P1_s1.png", "train"},
                                    {"P1", Label::Negative, "", "slides/P1_s2.png", "eval"},
                                    {"P2", Label::Positive, "high", "slides/P2_s1.png", "train"}};
    const auto path = std::filesystem::temp_directory_path() / "hpylori_tests" / "manifest.csv";
    write_manifest(rows, path);
    const auto back = read_manifest(path);
    REQUIRE(back.size() == 3);
    CHECK(back[2].density == "high");
    const auto patients = patients_from_manifest(back);
    REQUIRE(patients.size() == 2);
    CHECK(patients[0].slide_paths.size() == 2);
    rows[1].label = Label::Positive;
    CHECK_THROWS_AS(patients_from_manifest(rows), Error);
}

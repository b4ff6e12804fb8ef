#include "hpylori/diagnosis.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "hpylori/error.hpp"
#include "text_util.hpp"

namespace hpylori {

const char* to_string(Label label) {
    return label == Label::Positive ? "positive" : "negative";
}

Label parse_label(const std::string& text) {
    std::string t = detail::trim(text);
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    if (t == "positive") return Label::Positive;
    if (t == "negative") return Label::Negative;
    fail(ErrorKind::MalformedFile, "unknown label '" + text + "'");
}

SlideDiagnosis diagnose_slide(std::span<const WindowScore> scores, double threshold) {
    if (scores.empty()) fail(ErrorKind::EmptyInput, "cannot diagnose a slide with no windows");
    SlideDiagnosis d;
    d.slide_id = scores.front().window.slide_id;
    d.patient_id = scores.front().window.patient_id;
    for (const auto& s : scores) {
        if (s.window.slide_id != d.slide_id) {
            fail(ErrorKind::InvalidArgument, "window scores from different slides: " + d.slide_id +
                                                 " and " + s.window.slide_id);
        }
        if (s.positive) ++d.n_positive;
    }
    d.n_windows = scores.size();
    d.positive_fraction = static_cast<double>(d.n_positive) / static_cast<double>(d.n_windows);
    d.threshold_used = threshold;
    d.predicted = d.positive_fraction > threshold ? Label::Positive : Label::Negative;
    return d;
}

RocCurve roc_curve(std::span<const LabeledFraction> samples) {
    std::size_t n_pos = 0;
    for (const auto& s : samples) {
        if (!std::isfinite(s.fraction)) fail(ErrorKind::InvalidArgument, "roc_curve: non-finite score");
        if (s.positive) ++n_pos;
    }
    const std::size_t n_neg = samples.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        fail(ErrorKind::DegenerateRoc, "roc_curve needs both classes (positives: " +
                                           std::to_string(n_pos) + ", negatives: " +
                                           std::to_string(n_neg) + ")");
    }

    std::vector<double> values;
    values.reserve(samples.size());
    for (const auto& s : samples) values.push_back(s.fraction);
    std::sort(values.begin(), values.end(), std::greater<>());
    values.erase(std::unique(values.begin(), values.end()), values.end());

    std::vector<double> thresholds;
    thresholds.push_back(values.front() + 1.0);
    thresholds.insert(thresholds.end(), values.begin(), values.end());
    thresholds.push_back(values.back() - 1.0);

    RocCurve curve;
    for (double t : thresholds) {
        std::size_t tp = 0;
        std::size_t fp = 0;
        for (const auto& s : samples) {
            if (s.fraction > t) {
                if (s.positive) ++tp;
                else ++fp;
            }
        }
        curve.points.push_back({t, static_cast<double>(fp) / static_cast<double>(n_neg),
                                static_cast<double>(tp) / static_cast<double>(n_pos)});
    }
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        curve.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
    }
    const double best = optimal_threshold(curve);
    for (const auto& p : curve.points) {
        if (p.threshold == best) curve.optimal = p;
    }
    return curve;
}

double optimal_threshold(const RocCurve& curve) {
    if (curve.points.empty()) fail(ErrorKind::InvalidArgument, "optimal_threshold: empty curve");
    // Squared distances are rationals with denominator n_neg^2 * n_pos^2,
    // so distinct values differ by far more than the tie band for any
    // realistic cohort; the band absorbs rounding in fpr and 1 - tpr.
    constexpr double kTieBand = 1e-12;
    double best_d = std::numeric_limits<double>::infinity();
    double best_t = curve.points.front().threshold;
    for (const auto& p : curve.points) {
        const double miss = 1.0 - p.tpr;
        const double d = p.fpr * p.fpr + miss * miss;
        if (d < best_d - kTieBand || (std::fabs(d - best_d) <= kTieBand && p.threshold < best_t)) {
            best_d = std::min(d, best_d);
            best_t = p.threshold;
        }
    }
    return best_t;
}

namespace {
const std::vector<std::string> kDiagnosisHeader = {
    "slide_id", "patient_id", "n_windows", "n_positive", "positive_fraction", "predicted"};
}

void write_diagnosis_csv(std::span<const SlideDiagnosis> rows, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    out << "slide_id,patient_id,n_windows,n_positive,positive_fraction,predicted\n";
    for (const auto& d : rows) {
        out << d.slide_id << ',' << d.patient_id << ',' << d.n_windows << ',' << d.n_positive << ','
            << detail::fmt(d.positive_fraction) << ',' << to_string(d.predicted) << '\n';
    }
}

std::vector<SlideDiagnosis> read_diagnosis_csv(const std::filesystem::path& path) {
    std::vector<SlideDiagnosis> out;
    for (const auto& row : detail::read_csv(path, kDiagnosisHeader)) {
        SlideDiagnosis d;
        d.slide_id = row[0];
        d.patient_id = row[1];
        d.n_windows = detail::parse<std::size_t>(row[2], "n_windows");
        d.n_positive = detail::parse<std::size_t>(row[3], "n_positive");
        d.positive_fraction = detail::parse<double>(row[4], "positive_fraction");
        d.predicted = parse_label(row[5]);
        out.push_back(std::move(d));
    }
    return out;
}

void write_roc_csv(const RocCurve& curve, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    out << "threshold,fpr,tpr\n";
    for (const auto& p : curve.points) {
        out << detail::fmt(p.threshold) << ',' << detail::fmt(p.fpr) << ',' << detail::fmt(p.tpr) << '\n';
    }
}

std::string roc_summary_json(const RocCurve& curve) {
    nlohmann::ordered_json j;
    j["auc"] = curve.auc;
    j["optimal"] = {{"threshold", curve.optimal.threshold},
                    {"fpr", curve.optimal.fpr},
                    {"tpr", curve.optimal.tpr}};
    j["n_points"] = curve.points.size();
    return j.dump(2);
}

}  // namespace hpylori

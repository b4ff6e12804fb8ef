#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hpylori/anomaly.hpp"

namespace hpylori {

enum class Label { Negative, Positive };

const char* to_string(Label label);
/// Accepts positive/negative (any case). Throws Error(MalformedFile) otherwise.
Label parse_label(const std::string& text);

struct SlideDiagnosis {
    std::string slide_id;
    std::string patient_id;
    std::size_t n_windows = 0;
    std::size_t n_positive = 0;
    double positive_fraction = 0.0;
    Label predicted = Label::Negative;
    double threshold_used = 0.0;
};

struct RocPoint {
    double threshold = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
};

/// Points run from the highest threshold (0,0) to the lowest (1,1);
/// thresholds strictly decrease along the curve.
struct RocCurve {
    std::vector<RocPoint> points;
    double auc = 0.0;
    RocPoint optimal;
};

struct LabeledFraction {
    double fraction = 0.0;
    bool positive = false;
};

/// Positive iff the share of positive windows is strictly above threshold.
SlideDiagnosis diagnose_slide(std::span<const WindowScore> scores, double threshold);

/// Candidate thresholds are the unique observed fractions plus one sentinel
/// below the minimum and one above the maximum; a sample counts as
/// predicted positive when its fraction is strictly greater than the
/// threshold. AUC is the trapezoidal area. Throws Error(DegenerateRoc)
/// unless both classes are present.
RocCurve roc_curve(std::span<const LabeledFraction> samples);

/// Threshold of the point closest to (0,1); equidistant points resolve to
/// the smaller threshold.
double optimal_threshold(const RocCurve& curve);

void write_diagnosis_csv(std::span<const SlideDiagnosis> rows, const std::filesystem::path& path);
std::vector<SlideDiagnosis> read_diagnosis_csv(const std::filesystem::path& path);
void write_roc_csv(const RocCurve& curve, const std::filesystem::path& path);
/// JSON object with auc, optimal point and point count.
std::string roc_summary_json(const RocCurve& curve);

}  // namespace hpylori

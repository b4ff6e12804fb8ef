#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hpylori/diagnosis.hpp"

namespace hpylori {

struct PatientRecord {
    std::string patient_id;
    Label label = Label::Negative;
    std::string density;  // "low" / "high" / empty; metadata only
    std::vector<std::string> slide_paths;
};

/// One row of the dataset manifest. slide_role is "train" (autoencoder
/// training slide, used only for negative patients) or "eval".
struct ManifestEntry {
    std::string patient_id;
    Label label = Label::Negative;
    std::string density;
    std::string slide_path;  // relative paths resolve against the manifest directory
    std::string slide_role;
};

void write_manifest(std::span<const ManifestEntry> rows, const std::filesystem::path& path);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
/// Groups manifest rows by patient; a patient's label must be consistent.
std::vector<PatientRecord> patients_from_manifest(std::span<const ManifestEntry> rows);

/// Patient-level positive-window fraction on the evaluation slide(s).
struct PatientFraction {
    std::string patient_id;
    Label label = Label::Negative;
    double fraction = 0.0;
    std::size_t n_windows = 0;
    std::size_t n_positive = 0;
};

struct FoldPlan {
    int k = 10;
    std::uint64_t seed = 0;
    std::map<std::string, int> assignments;

    std::vector<std::string> members(int fold) const;
};

struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fn = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;

    std::size_t total() const noexcept { return tp + fn + fp + tn; }
    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        tp += o.tp;
        fn += o.fn;
        fp += o.fp;
        tn += o.tn;
        return *this;
    }
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Per-class metrics with H. pylori (positive) as the reference class.
/// Precision with no predictions of that class is reported as 0.
ClassMetrics positive_class_metrics(const ConfusionMatrix& m);
ClassMetrics negative_class_metrics(const ConfusionMatrix& m);
double accuracy(const ConfusionMatrix& m);

struct FoldMetrics {
    int fold = 0;
    double threshold = 0.0;
    RocCurve train_roc;
    ConfusionMatrix confusion;
    ClassMetrics positive;
    ClassMetrics negative;
    double accuracy = 0.0;
    double auc = 0.0;  // held-out AUC; NaN when the test split has one class
    std::vector<SlideDiagnosis> diagnoses;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

/// Sample standard deviation (n - 1); zero for fewer than two values.
MeanStd mean_std(std::span<const double> values);

struct EvalReport {
    int k = 0;
    std::uint64_t seed = 0;
    std::vector<FoldMetrics> folds;

    MeanStd positive_precision, positive_recall, positive_f1;
    MeanStd negative_precision, negative_recall, negative_f1;
    MeanStd accuracy, auc, threshold;

    ConfusionMatrix pooled;
    double pooled_auc = 0.0;
    /// Positive-window percentages per patient, split by ground truth.
    std::vector<double> box_negative;
    std::vector<double> box_positive;
};

/// Shuffled-within-class round robin; the fold counter carries over from
/// the negative class into the positive class so fold sizes differ by at
/// most one. Throws Error(TooFewPatients) unless each class has >= k patients.
FoldPlan make_folds(std::span<const PatientRecord> patients, int k, std::uint64_t seed);

/// Threshold from the ROC of patients outside `fold`; metrics on patients inside it.
FoldMetrics run_fold(int fold, const FoldPlan& plan, std::span<const PatientFraction> fractions);

EvalReport aggregate_report(std::vector<FoldMetrics> folds, std::span<const PatientFraction> fractions,
                            const FoldPlan& plan);

/// Runs every fold and aggregates.
EvalReport evaluate(const FoldPlan& plan, std::span<const PatientFraction> fractions);

std::string report_json(const EvalReport& report, const std::string& config_hash = {});
/// Human-readable summary laid out like a two-class metrics table plus the
/// pooled confusion matrix.
std::string report_text(const EvalReport& report);
void write_boxplot_csv(std::span<const PatientFraction> fractions, const std::filesystem::path& path);

}  // namespace hpylori

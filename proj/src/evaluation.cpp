#include "hpylori/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "hpylori/error.hpp"
#include "json.hpp"
#include "text_util.hpp"

namespace hpylori {

std::vector<std::string> FoldPlan::members(int fold) const {
    std::vector<std::string> out;
    for (const auto& [id, f] : assignments) {
        if (f == fold) out.push_back(id);
    }
    return out;
}

namespace {
const std::vector<std::string> kManifestHeader = {"patient_id", "label", "density", "slide_path",
                                                  "slide_role"};
}

void write_manifest(std::span<const ManifestEntry> rows, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    out << "patient_id,label,density,slide_path,slide_role\n";
    for (const auto& r : rows) {
        out << r.patient_id << ',' << to_string(r.label) << ',' << r.density << ',' << r.slide_path
            << ',' << r.slide_role << '\n';
    }
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::vector<ManifestEntry> out;
    for (auto& row : detail::read_csv(path, kManifestHeader)) {
        ManifestEntry e;
        e.patient_id = row[0];
        e.label = parse_label(row[1]);
        e.density = row[2];
        e.slide_path = row[3];
        e.slide_role = row[4];
        if (e.slide_role != "train" && e.slide_role != "eval") {
            fail(ErrorKind::MalformedFile, "manifest slide_role must be train or eval, got '" +
                                               e.slide_role + "'");
        }
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<PatientRecord> patients_from_manifest(std::span<const ManifestEntry> rows) {
    std::vector<PatientRecord> out;
    std::map<std::string, std::size_t> index;
    for (const auto& r : rows) {
        auto [it, inserted] = index.emplace(r.patient_id, out.size());
        if (inserted) {
            out.push_back({r.patient_id, r.label, r.density, {}});
        } else if (out[it->second].label != r.label) {
            fail(ErrorKind::MalformedFile, "patient " + r.patient_id + " has conflicting labels");
        }
        out[it->second].slide_paths.push_back(r.slide_path);
    }
    return out;
}

namespace {

double safe_div(double a, double b) { return b > 0.0 ? a / b : 0.0; }

ClassMetrics class_metrics(double hit, double predicted, double actual) {
    ClassMetrics m;
    m.precision = safe_div(hit, predicted);
    m.recall = safe_div(hit, actual);
    m.f1 = safe_div(2.0 * m.precision * m.recall, m.precision + m.recall);
    return m;
}

}  // namespace

ClassMetrics positive_class_metrics(const ConfusionMatrix& m) {
    return class_metrics(static_cast<double>(m.tp), static_cast<double>(m.tp + m.fp),
                         static_cast<double>(m.tp + m.fn));
}

ClassMetrics negative_class_metrics(const ConfusionMatrix& m) {
    return class_metrics(static_cast<double>(m.tn), static_cast<double>(m.tn + m.fn),
                         static_cast<double>(m.tn + m.fp));
}

double accuracy(const ConfusionMatrix& m) {
    return safe_div(static_cast<double>(m.tp + m.tn), static_cast<double>(m.total()));
}

MeanStd mean_std(std::span<const double> values) {
    MeanStd r;
    if (values.empty()) return r;
    double sum = 0.0;
    for (double v : values) sum += v;
    r.mean = sum / static_cast<double>(values.size());
    if (values.size() < 2) return r;
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    return r;
}

FoldPlan make_folds(std::span<const PatientRecord> patients, int k, std::uint64_t seed) {
    if (k < 2) fail(ErrorKind::InvalidArgument, "fold count must be at least 2");
    std::vector<std::string> neg;
    std::vector<std::string> pos;
    std::set<std::string> seen;
    for (const auto& p : patients) {
        if (!seen.insert(p.patient_id).second) {
            fail(ErrorKind::InvalidArgument, "duplicate patient id " + p.patient_id);
        }
        (p.label == Label::Positive ? pos : neg).push_back(p.patient_id);
    }
    if (neg.size() < static_cast<std::size_t>(k) || pos.size() < static_cast<std::size_t>(k)) {
        fail(ErrorKind::TooFewPatients, "need at least " + std::to_string(k) +
                                            " patients per class for " + std::to_string(k) +
                                            " folds (negatives: " + std::to_string(neg.size()) +
                                            ", positives: " + std::to_string(pos.size()) + ")");
    }
    // Input order must not leak into the plan.
    std::sort(neg.begin(), neg.end());
    std::sort(pos.begin(), pos.end());

    std::mt19937_64 rng(seed);
    std::shuffle(neg.begin(), neg.end(), rng);
    std::shuffle(pos.begin(), pos.end(), rng);

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    int next = 0;
    for (const auto* group : {&neg, &pos}) {
        for (const auto& id : *group) {
            plan.assignments[id] = next;
            next = (next + 1) % k;
        }
    }
    return plan;
}

FoldMetrics run_fold(int fold, const FoldPlan& plan, std::span<const PatientFraction> fractions) {
    if (fold < 0 || fold >= plan.k) fail(ErrorKind::InvalidArgument, "fold index out of range");
    std::vector<LabeledFraction> train;
    std::vector<const PatientFraction*> test;
    for (const auto& f : fractions) {
        auto it = plan.assignments.find(f.patient_id);
        if (it == plan.assignments.end()) {
            fail(ErrorKind::InvalidArgument, "patient " + f.patient_id + " is not in the fold plan");
        }
        if (it->second == fold) {
            test.push_back(&f);
        } else {
            train.push_back({f.fraction, f.label == Label::Positive});
        }
    }

    FoldMetrics m;
    m.fold = fold;
    m.train_roc = roc_curve(train);
    m.threshold = optimal_threshold(m.train_roc);

    std::vector<LabeledFraction> held_out;
    for (const auto* f : test) {
        SlideDiagnosis d;
        d.slide_id = f->patient_id;
        d.patient_id = f->patient_id;
        d.n_windows = f->n_windows;
        d.n_positive = f->n_positive;
        d.positive_fraction = f->fraction;
        d.threshold_used = m.threshold;
        d.predicted = f->fraction > m.threshold ? Label::Positive : Label::Negative;
        const bool truth = f->label == Label::Positive;
        const bool pred = d.predicted == Label::Positive;
        if (truth && pred) ++m.confusion.tp;
        if (truth && !pred) ++m.confusion.fn;
        if (!truth && pred) ++m.confusion.fp;
        if (!truth && !pred) ++m.confusion.tn;
        held_out.push_back({f->fraction, truth});
        m.diagnoses.push_back(std::move(d));
    }
    m.positive = positive_class_metrics(m.confusion);
    m.negative = negative_class_metrics(m.confusion);
    m.accuracy = accuracy(m.confusion);
    try {
        m.auc = roc_curve(held_out).auc;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::DegenerateRoc) throw;
        m.auc = std::numeric_limits<double>::quiet_NaN();
    }
    return m;
}

EvalReport aggregate_report(std::vector<FoldMetrics> folds, std::span<const PatientFraction> fractions,
                            const FoldPlan& plan) {
    EvalReport r;
    r.k = plan.k;
    r.seed = plan.seed;

    auto collect = [&](auto getter) {
        std::vector<double> v;
        for (const auto& f : folds) {
            const double x = getter(f);
            if (std::isfinite(x)) v.push_back(x);
        }
        return mean_std(v);
    };
    r.positive_precision = collect([](const FoldMetrics& f) { return f.positive.precision; });
    r.positive_recall = collect([](const FoldMetrics& f) { return f.positive.recall; });
    r.positive_f1 = collect([](const FoldMetrics& f) { return f.positive.f1; });
    r.negative_precision = collect([](const FoldMetrics& f) { return f.negative.precision; });
    r.negative_recall = collect([](const FoldMetrics& f) { return f.negative.recall; });
    r.negative_f1 = collect([](const FoldMetrics& f) { return f.negative.f1; });
    r.accuracy = collect([](const FoldMetrics& f) { return f.accuracy; });
    r.auc = collect([](const FoldMetrics& f) { return f.auc; });
    r.threshold = collect([](const FoldMetrics& f) { return f.threshold; });

    for (const auto& f : folds) r.pooled += f.confusion;

    std::vector<LabeledFraction> all;
    for (const auto& f : fractions) {
        all.push_back({f.fraction, f.label == Label::Positive});
        (f.label == Label::Positive ? r.box_positive : r.box_negative).push_back(100.0 * f.fraction);
    }
    try {
        r.pooled_auc = roc_curve(all).auc;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::DegenerateRoc) throw;
        r.pooled_auc = std::numeric_limits<double>::quiet_NaN();
    }
    r.folds = std::move(folds);
    return r;
}

EvalReport evaluate(const FoldPlan& plan, std::span<const PatientFraction> fractions) {
    std::vector<FoldMetrics> folds;
    for (int f = 0; f < plan.k; ++f) folds.push_back(run_fold(f, plan, fractions));
    return aggregate_report(std::move(folds), fractions, plan);
}

namespace {

nlohmann::ordered_json to_json(const MeanStd& m) {
    return {{"mean", m.mean}, {"std", m.std}};
}

nlohmann::ordered_json to_json(const ClassMetrics& m) {
    return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
}

nlohmann::ordered_json to_json(const ConfusionMatrix& m) {
    return {{"tp", m.tp}, {"fn", m.fn}, {"fp", m.fp}, {"tn", m.tn}};
}

nlohmann::ordered_json number_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

std::string pm(const MeanStd& m) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f +/- %.2f", m.mean, m.std);
    return buf;
}

double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

}  // namespace

std::string report_json(const EvalReport& r, const std::string& config_hash) {
    nlohmann::ordered_json j;
    j["config_hash"] = config_hash;
    j["k"] = r.k;
    j["seed"] = r.seed;
    j["auc"] = number_or_null(r.pooled_auc);
    j["summary"] = {
        {"positive", {{"precision", to_json(r.positive_precision)},
                      {"recall", to_json(r.positive_recall)},
                      {"f1", to_json(r.positive_f1)}}},
        {"negative", {{"precision", to_json(r.negative_precision)},
                      {"recall", to_json(r.negative_recall)},
                      {"f1", to_json(r.negative_f1)}}},
        {"accuracy", to_json(r.accuracy)},
        {"fold_auc", to_json(r.auc)},
        {"threshold", to_json(r.threshold)},
    };
    const auto pooled_pos = positive_class_metrics(r.pooled);
    const auto pooled_neg = negative_class_metrics(r.pooled);
    j["pooled"] = {
        {"confusion", to_json(r.pooled)},
        {"positive", to_json(pooled_pos)},
        {"negative", to_json(pooled_neg)},
        {"accuracy", accuracy(r.pooled)},
        {"sensitivity", pooled_pos.recall},
        {"specificity", pooled_neg.recall},
    };
    auto folds = nlohmann::ordered_json::array();
    for (const auto& f : r.folds) {
        nlohmann::ordered_json fj;
        fj["fold"] = f.fold;
        fj["threshold"] = f.threshold;
        fj["train_auc"] = f.train_roc.auc;
        fj["auc"] = number_or_null(f.auc);
        fj["accuracy"] = f.accuracy;
        fj["positive"] = to_json(f.positive);
        fj["negative"] = to_json(f.negative);
        fj["confusion"] = to_json(f.confusion);
        auto pats = nlohmann::ordered_json::array();
        for (const auto& d : f.diagnoses) {
            pats.push_back({{"patient_id", d.patient_id},
                            {"positive_fraction", d.positive_fraction},
                            {"predicted", to_string(d.predicted)}});
        }
        fj["patients"] = std::move(pats);
        folds.push_back(std::move(fj));
    }
    j["folds"] = std::move(folds);
    j["boxplot"] = {{"negative_percent", r.box_negative}, {"positive_percent", r.box_positive}};
    return j.dump(2) + "\n";
}

std::string report_text(const EvalReport& r) {
    std::ostringstream os;
    char line[256];
    os << "Statistical summary of the " << r.k << "-fold validation\n\n";
    std::snprintf(line, sizeof(line), "%-10s | %-22s | %-22s | %s\n", "", "negative H. pylori",
                  "positive H. pylori", "Average");
    os << line;
    auto row = [&](const char* name, const MeanStd& neg, const MeanStd& pos) {
        std::snprintf(line, sizeof(line), "%-10s | %-22s | %-22s | %.2f\n", name, pm(neg).c_str(),
                      pm(pos).c_str(), (neg.mean + pos.mean) / 2.0);
        os << line;
    };
    row("Precision", r.negative_precision, r.positive_precision);
    row("Recall", r.negative_recall, r.positive_recall);
    row("f-1 score", r.negative_f1, r.positive_f1);
    os << "\nAccuracy " << pm(r.accuracy) << ", fold AUC " << pm(r.auc) << ", pooled AUC "
       << detail::fmt(r.pooled_auc) << "\n";
    std::snprintf(line, sizeof(line), "Threshold %.4f%% +/- %.4f%%\n", 100.0 * r.threshold.mean,
                  100.0 * r.threshold.std);
    os << line;

    os << "\nConfusion matrix (rows: ground truth, columns: predicted)\n";
    std::snprintf(line, sizeof(line), "%-14s | %-12s | %-12s\n", "", "H. pylori", "No H. pylori");
    os << line;
    std::snprintf(line, sizeof(line), "%-14s | %-12s | %-12s\n", "H. pylori",
                  (std::to_string(r.pooled.tp) + " (TP)").c_str(),
                  (std::to_string(r.pooled.fn) + " (FN)").c_str());
    os << line;
    std::snprintf(line, sizeof(line), "%-14s | %-12s | %-12s\n", "No H. pylori",
                  (std::to_string(r.pooled.fp) + " (FP)").c_str(),
                  (std::to_string(r.pooled.tn) + " (TN)").c_str());
    os << line;

    std::snprintf(line, sizeof(line),
                  "\nMedian positive-window percentage: negative %.2f%%, positive %.2f%%\n",
                  median(r.box_negative), median(r.box_positive));
    os << line;
    return os.str();
}

void write_boxplot_csv(std::span<const PatientFraction> fractions, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    out << "patient_id,label,positive_percent\n";
    for (const auto& f : fractions) {
        out << f.patient_id << ',' << to_string(f.label) << ',' << detail::fmt(100.0 * f.fraction) << '\n';
    }
}

}  // namespace hpylori

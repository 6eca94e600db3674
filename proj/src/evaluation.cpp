#include "ipfcad/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace ipfcad {

namespace {

// Report order {honeycombing, groundglass, healthy}, mirroring the table
// column order rather than the label-code order.
int report_index(TissueClass c) {
    switch (c) {
        case TissueClass::Honeycombing: return 0;
        case TissueClass::GroundGlass: return 1;
        case TissueClass::Healthy: return 2;
        default: raise(ErrorCode::InvalidArgument, "unlabeled class in predictions");
    }
}

constexpr const char* kReportClassNames[3] = {"honeycombing", "groundglass", "healthy"};

std::string full_precision(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

std::vector<Fold> lopo_folds(const std::vector<PatientRecord>& patients) {
    std::vector<size_t> active;
    for (size_t i = 0; i < patients.size(); ++i)
        if (!patients[i].excluded) active.push_back(i);
    if (active.size() < 2)
        raise(ErrorCode::TooFewPatients,
              "leave-one-patient-out needs >= 2 non-excluded patients, got " +
                  std::to_string(active.size()));

    std::vector<Fold> folds;
    folds.reserve(active.size());
    for (size_t t : active) {
        Fold f;
        f.test_index = t;
        for (size_t o : active)
            if (o != t) f.train_indices.push_back(o);
        folds.push_back(std::move(f));
    }
    return folds;
}

std::array<std::optional<double>, 3> per_class_accuracy(
    const std::vector<std::pair<TissueClass, TissueClass>>& true_pred) {
    if (true_pred.empty()) raise(ErrorCode::EmptyPredictions, "no predictions to score");
    std::array<uint64_t, 3> total{};
    std::array<uint64_t, 3> hit{};
    for (const auto& [truth, pred] : true_pred) {
        const int t = report_index(truth);
        ++total[static_cast<size_t>(t)];
        if (truth == pred) ++hit[static_cast<size_t>(t)];
    }
    std::array<std::optional<double>, 3> out;
    for (int c = 0; c < 3; ++c)
        if (total[static_cast<size_t>(c)] > 0)
            out[static_cast<size_t>(c)] = static_cast<double>(hit[static_cast<size_t>(c)]) /
                                          static_cast<double>(total[static_cast<size_t>(c)]);
    return out;
}

double weighted_average(const std::vector<double>& values, const std::vector<double>& weights) {
    if (values.size() != weights.size())
        raise(ErrorCode::LengthMismatch, std::to_string(values.size()) + " values vs " +
                                             std::to_string(weights.size()) + " weights");
    double num = 0.0;
    double den = 0.0;
    for (size_t i = 0; i < values.size(); ++i) {
        if (!(weights[i] > 0.0))
            raise(ErrorCode::ZeroTotalWeight, "weights must be positive");
        num += values[i] * weights[i];
        den += weights[i];
    }
    if (den == 0.0) raise(ErrorCode::ZeroTotalWeight, "total weight is zero");
    return num / den;
}

EvalReport run_evaluation(const std::vector<PatientRecord>& patients, const TrainConfig& config,
                          const Architecture& arch) {
    const std::vector<Fold> folds = lopo_folds(patients);

    EvalReport report;
    report.patients.reserve(patients.size());
    for (const PatientRecord& p : patients) {
        PatientResult r;
        r.patient_id = p.patient_id;
        r.section_count = p.section_count;
        r.excluded = p.excluded;
        r.exclusion_reason = p.exclusion_reason;
        r.dice = p.segmentation_dice;
        report.patients.push_back(std::move(r));
    }

    for (const Fold& fold : folds) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            std::vector<Block> train_blocks;
            for (size_t i : fold.train_indices)
                train_blocks.insert(train_blocks.end(), patients[i].blocks.begin(),
                                    patients[i].blocks.end());
            const auto [model, history] = train(train_blocks, config, arch);

            const PatientRecord& test = patients[fold.test_index];
            PatientResult& result = report.patients[fold.test_index];
            std::vector<std::pair<TissueClass, TissueClass>> outcomes;
            outcomes.reserve(test.blocks.size());
            for (const Block& b : test.blocks) {
                const Prediction pred = predict(model, b.patch);
                outcomes.emplace_back(b.label, pred.label);
                ++result.confusion[static_cast<size_t>(report_index(b.label))]
                                  [static_cast<size_t>(report_index(pred.label))];
            }
            result.recall = per_class_accuracy(outcomes);
            result.fold_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        } catch (const Error& e) {
            raise(e.code(), "fold for patient " +
                                std::to_string(patients[fold.test_index].patient_id) + ": " + e.what());
        }
    }

    // Weighted averages over non-excluded patients; a class missing from some
    // patient's truth simply drops that patient from that class's average.
    for (int c = 0; c < 3; ++c) {
        std::vector<double> values, weights;
        for (const PatientResult& r : report.patients) {
            if (r.excluded || !r.recall[static_cast<size_t>(c)]) continue;
            values.push_back(*r.recall[static_cast<size_t>(c)]);
            weights.push_back(static_cast<double>(r.section_count));
        }
        if (!values.empty())
            report.weighted_recall[static_cast<size_t>(c)] = weighted_average(values, weights);
    }
    {
        std::vector<double> values, weights;
        for (const PatientResult& r : report.patients) {
            if (r.excluded || !r.dice) continue;
            values.push_back(*r.dice);
            weights.push_back(static_cast<double>(r.section_count));
        }
        if (!values.empty()) report.weighted_dice = weighted_average(values, weights);
    }
    return report;
}

RenderedReport render_report(const EvalReport& report) {
    RenderedReport out;

    auto cell = [](const std::optional<double>& v) {
        if (!v) return std::string("-");
        char buf[16];
        std::snprintf(buf, sizeof buf, "%.3f", *v);
        return std::string(buf);
    };

    char line[160];
    std::snprintf(line, sizeof line, "%-10s %9s %14s %12s %9s %7s\n", "patient", "sections",
                  "honeycombing", "groundglass", "healthy", "dice");
    out.table = line;
    for (const PatientResult& r : report.patients) {
        const bool ex = r.excluded;
        std::snprintf(line, sizeof line, "%-10u %9d %14s %12s %9s %7s\n", r.patient_id,
                      r.section_count, ex ? "-" : cell(r.recall[0]).c_str(),
                      ex ? "-" : cell(r.recall[1]).c_str(), ex ? "-" : cell(r.recall[2]).c_str(),
                      cell(r.dice).c_str());
        out.table += line;
    }
    std::snprintf(line, sizeof line, "%-10s %9s %14s %12s %9s %7s\n", "w.average", "-",
                  cell(report.weighted_recall[0]).c_str(), cell(report.weighted_recall[1]).c_str(),
                  cell(report.weighted_recall[2]).c_str(), cell(report.weighted_dice).c_str());
    out.table += line;

    auto csv_cell = [](const std::optional<double>& v) { return v ? full_precision(*v) : std::string(); };

    out.csv = "patient_id,sections,acc_honeycombing,acc_groundglass,acc_healthy,dice\n";
    for (const PatientResult& r : report.patients) {
        out.csv += std::to_string(r.patient_id);
        out.csv += ',' + std::to_string(r.section_count);
        for (int c = 0; c < 3; ++c)
            out.csv += ',' + (r.excluded ? std::string() : csv_cell(r.recall[static_cast<size_t>(c)]));
        out.csv += ',' + csv_cell(r.dice);
        out.csv += '\n';
    }
    out.csv += "weighted_average,";
    for (int c = 0; c < 3; ++c) out.csv += ',' + csv_cell(report.weighted_recall[static_cast<size_t>(c)]);
    out.csv += ',' + csv_cell(report.weighted_dice);
    out.csv += '\n';

    out.counts_csv = "patient_id,true_class,predicted_class,count\n";
    for (const PatientResult& r : report.patients) {
        if (r.excluded) continue;
        for (int t = 0; t < 3; ++t)
            for (int p = 0; p < 3; ++p) {
                const uint64_t n = r.confusion[static_cast<size_t>(t)][static_cast<size_t>(p)];
                if (n == 0) continue;
                out.counts_csv += std::to_string(r.patient_id);
                out.counts_csv += ',';
                out.counts_csv += kReportClassNames[t];
                out.counts_csv += ',';
                out.counts_csv += kReportClassNames[p];
                out.counts_csv += ',' + std::to_string(n) + '\n';
            }
    }
    return out;
}

}  // namespace ipfcad

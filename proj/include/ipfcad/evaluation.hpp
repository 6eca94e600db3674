#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ipfcad/blocking.hpp"
#include "ipfcad/cnn.hpp"

namespace ipfcad {

// One patient's evaluation inputs: balanced blocks plus bookkeeping. The
// segmentation Dice is computed upstream (against a reference or phantom-truth
// mask) and carried along for the report.
struct PatientRecord {
    uint16_t patient_id = 0;
    int section_count = 0;
    std::vector<Block> blocks;
    bool excluded = false;
    std::string exclusion_reason;
    std::optional<double> segmentation_dice;
};

struct Fold {
    size_t test_index = 0;               // into the patient list
    std::vector<size_t> train_indices;   // all other non-excluded patients
};

// Leave-one-patient-out folds over the non-excluded patients.
std::vector<Fold> lopo_folds(const std::vector<PatientRecord>& patients);

// Per-class recall, indexed {honeycombing, groundglass, healthy}. Classes
// absent from the truth come back unset rather than 0.
std::array<std::optional<double>, 3> per_class_accuracy(
    const std::vector<std::pair<TissueClass, TissueClass>>& true_pred);

// Section-count weighted mean: sum(v*w) / sum(w).
double weighted_average(const std::vector<double>& values, const std::vector<double>& weights);

struct PatientResult {
    uint16_t patient_id = 0;
    int section_count = 0;
    bool excluded = false;
    std::string exclusion_reason;
    std::array<std::optional<double>, 3> recall;  // {honeycombing, groundglass, healthy}
    std::optional<double> dice;
    // confusion[true][pred], class order {honeycombing, groundglass, healthy}
    std::array<std::array<uint64_t, 3>, 3> confusion{};
    double fold_seconds = 0.0;
};

struct EvalReport {
    std::vector<PatientResult> patients;  // ordered by patient id
    std::array<std::optional<double>, 3> weighted_recall;
    std::optional<double> weighted_dice;
};

// Trains one model per fold and scores the held-out patient. Deterministic
// for fixed inputs and seeds.
EvalReport run_evaluation(const std::vector<PatientRecord>& patients, const TrainConfig& config,
                          const Architecture& arch = Architecture::standard());

struct RenderedReport {
    std::string table;       // aligned text, Table-3/4 shaped
    std::string csv;         // patient_id,sections,acc_honeycombing,acc_groundglass,acc_healthy,dice
    std::string counts_csv;  // patient_id,true_class,predicted_class,count
};

RenderedReport render_report(const EvalReport& report);

}  // namespace ipfcad

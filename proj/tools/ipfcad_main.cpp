// ipfcad command-line tool: lung segmentation, blocking, training, prediction,
// leave-one-patient-out evaluation, phantom generation and overlay rendering.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ipfcad/config.hpp"
#include "ipfcad/dicom.hpp"
#include "ipfcad/nifti.hpp"
#include "ipfcad/overlay.hpp"
#include "ipfcad/phantom.hpp"
#include "ipfcad/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ipfcad;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;

std::string slice_suffix(int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03d", index);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorCode::IoFailure, "cannot write " + path.string());
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCode::IoFailure, "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

PipelineConfig load_config(const std::string& config_path, std::optional<uint64_t> seed_override) {
    PipelineConfig cfg;
    if (!config_path.empty()) cfg = parse_config(read_text(config_path));
    if (seed_override) {
        cfg.seed = *seed_override;
        cfg.blocking.rng_seed = *seed_override;
        cfg.training.rng_seed = *seed_override;
    }
    cfg.validate();
    return cfg;
}

// --- segment -----------------------------------------------------------------

int cmd_segment(const std::string& input_dir, const std::string& out_mask,
                const std::string& ref_mask_path, const PipelineConfig& cfg) {
    const HuVolume vol = load_series(input_dir);
    const BinaryMask mask = segment_lungs(vol, cfg.segmentation);

    const fs::path nifti_path(out_mask);
    write_file_bytes(nifti_path, encode_nifti_mask(mask));
    fs::path stem = nifti_path;
    stem.replace_extension();
    for (int s = 0; s < mask.slice_count(); ++s) {
        const fs::path pgm = stem.string() + "_" + slice_suffix(s) + ".pgm";
        write_file_bytes(pgm, encode_pgm(mask.slices[s]));
    }

    if (!ref_mask_path.empty()) {
        const BinaryMask ref = parse_nifti_mask(read_file_bytes(ref_mask_path),
                                                VolumeDims{vol.slice_count(), vol.rows, vol.cols});
        std::printf("dice=%.3f\n", dice(mask, ref));
    }
    return kExitOk;
}

// --- blocks ------------------------------------------------------------------

int cmd_blocks(const std::string& input_dir, const std::string& labels_path, int patient_id,
               const std::string& out_path, const PipelineConfig& cfg) {
    const HuVolume vol = load_series(input_dir);
    const LabelMask labels = parse_nifti_labels(read_file_bytes(labels_path),
                                                VolumeDims{vol.slice_count(), vol.rows, vol.cols});
    const PatientRecord record = make_patient_record(static_cast<uint16_t>(patient_id), vol, labels,
                                                     nullptr, cfg.segmentation, cfg.blocking);
    write_file_bytes(out_path, encode_ipfb(record.blocks));
    const fs::path manifest = fs::path(out_path).replace_extension(".manifest.csv");
    write_text(manifest, block_manifest_csv(record.blocks));
    std::printf("blocks=%zu\n", record.blocks.size());
    return kExitOk;
}

// --- train -------------------------------------------------------------------

int cmd_train(const std::vector<std::string>& block_files, const std::string& out_model,
              const std::string& history_path, const PipelineConfig& cfg) {
    std::vector<Block> blocks;
    for (const std::string& f : block_files) {
        const std::vector<Block> part = decode_ipfb(read_file_bytes(f));
        blocks.insert(blocks.end(), part.begin(), part.end());
    }
    const auto [model, history] = train(blocks, cfg.training, cfg.make_architecture());
    write_file_bytes(out_model, encode_ipfm(model));
    if (!history_path.empty()) write_text(history_path, history.to_csv());
    if (!history.train_loss.empty())
        std::printf("final_loss=%.6f final_train_accuracy=%.4f\n", history.train_loss.back(),
                    history.train_accuracy.back());
    return kExitOk;
}

// --- predict -----------------------------------------------------------------

int cmd_predict(const std::string& model_path, const std::string& input_dir,
                const std::string& out_dir, const PipelineConfig& cfg) {
    if (!fs::exists(model_path)) raise(ErrorCode::IoFailure, "model file not found: " + model_path);
    const CnnModel model = decode_ipfm(read_file_bytes(model_path));
    const HuVolume vol = load_series(input_dir);
    const BinaryMask mask = segment_lungs(vol, cfg.segmentation);
    const HuVolume masked = apply_mask(vol, mask, cfg.segmentation.excluded_sentinel_hu);

    fs::create_directories(out_dir);
    const auto cells = grid_rois(vol.rows, vol.cols, cfg.blocking.roi_px);
    const int grid_rows = vol.rows / cfg.blocking.roi_px;
    const int grid_cols = vol.cols / cfg.blocking.roi_px;

    for (int s = 0; s < vol.slice_count(); ++s) {
        Image2D<uint8_t> class_map(grid_rows, grid_cols, 0);
        const MaskSlice& m = mask.slices[s];
        for (const RoiCell& cell : cells) {
            // Only ROIs meaningfully inside the lung mask are classified;
            // the rest stay 0 in the map.
            int covered = 0;
            for (int r = 0; r < cfg.blocking.roi_px; ++r)
                for (int c = 0; c < cfg.blocking.roi_px; ++c)
                    covered += m.at(cell.row0 + r, cell.col0 + c) != 0;
            const double fraction = static_cast<double>(covered) /
                                    (static_cast<double>(cfg.blocking.roi_px) * cfg.blocking.roi_px);
            if (fraction < cfg.blocking.min_labeled_fraction) continue;
            const auto patch = normalize_block(extract_block(masked.slices[s], cell, cfg.blocking,
                                                             cfg.segmentation.excluded_sentinel_hu));
            const Prediction pred = predict(model, patch);
            class_map.at(cell.grid_row, cell.grid_col) = static_cast<uint8_t>(pred.label);
        }
        std::string text;
        for (int gr = 0; gr < grid_rows; ++gr) {
            for (int gc = 0; gc < grid_cols; ++gc) {
                if (gc) text += ' ';
                text += std::to_string(class_map.at(gr, gc));
            }
            text += '\n';
        }
        write_text(fs::path(out_dir) / ("classmap_" + slice_suffix(s) + ".txt"), text);
    }
    std::printf("slices=%d\n", vol.slice_count());
    return kExitOk;
}

// --- evaluate ----------------------------------------------------------------

struct ManifestEntry {
    int patient_id = 0;
    std::string dicom_dir;
    std::string labels_path;
    std::string ref_mask_path;   // optional
    std::string excluded_reason; // nonempty marks exclusion
};

std::vector<ManifestEntry> parse_manifest(const std::string& text, const fs::path& base_dir) {
    std::vector<ManifestEntry> entries;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (line_no == 1 && line.rfind("patient_id,", 0) == 0) continue;  // header row
        std::vector<std::string> fields;
        std::string field;
        std::istringstream ls(line);
        while (std::getline(ls, field, ',')) fields.push_back(field);
        while (fields.size() < 5) fields.emplace_back();
        if (fields.size() != 5)
            raise(ErrorCode::InvalidArgument,
                  "manifest line " + std::to_string(line_no) + ": expected 5 fields");
        ManifestEntry e;
        try {
            e.patient_id = std::stoi(fields[0]);
        } catch (const std::exception&) {
            raise(ErrorCode::InvalidArgument,
                  "manifest line " + std::to_string(line_no) + ": bad patient id '" + fields[0] + "'");
        }
        auto resolve = [&](const std::string& p) {
            if (p.empty()) return std::string();
            const fs::path path(p);
            return path.is_absolute() ? path.string() : (base_dir / path).string();
        };
        e.dicom_dir = resolve(fields[1]);
        e.labels_path = resolve(fields[2]);
        e.ref_mask_path = resolve(fields[3]);
        e.excluded_reason = fields[4];
        entries.push_back(std::move(e));
    }
    if (entries.empty()) raise(ErrorCode::InvalidArgument, "manifest lists no patients");
    return entries;
}

int cmd_evaluate(const std::string& manifest_path, const std::string& out_dir,
                 const PipelineConfig& cfg) {
    const auto entries = parse_manifest(read_text(manifest_path), fs::path(manifest_path).parent_path());

    std::vector<PatientRecord> records;
    for (const ManifestEntry& e : entries) {
        if (!e.excluded_reason.empty()) {
            PatientRecord r;
            r.patient_id = static_cast<uint16_t>(e.patient_id);
            r.excluded = true;
            r.exclusion_reason = e.excluded_reason;
            // Sections and Dice still appear in the report when inputs exist.
            if (!e.dicom_dir.empty()) {
                const HuVolume vol = load_series(e.dicom_dir);
                r.section_count = vol.slice_count();
                if (!e.ref_mask_path.empty()) {
                    const BinaryMask mask = segment_lungs(vol, cfg.segmentation);
                    const BinaryMask ref =
                        parse_nifti_mask(read_file_bytes(e.ref_mask_path),
                                         VolumeDims{vol.slice_count(), vol.rows, vol.cols});
                    r.segmentation_dice = dice(mask, ref);
                }
            } else {
                r.section_count = 1;
            }
            records.push_back(std::move(r));
            continue;
        }
        const HuVolume vol = load_series(e.dicom_dir);
        const LabelMask labels = parse_nifti_labels(read_file_bytes(e.labels_path),
                                                    VolumeDims{vol.slice_count(), vol.rows, vol.cols});
        std::optional<BinaryMask> ref;
        if (!e.ref_mask_path.empty())
            ref = parse_nifti_mask(read_file_bytes(e.ref_mask_path),
                                   VolumeDims{vol.slice_count(), vol.rows, vol.cols});
        records.push_back(make_patient_record(static_cast<uint16_t>(e.patient_id), vol, labels,
                                              ref ? &*ref : nullptr, cfg.segmentation, cfg.blocking));
    }

    const EvalReport report = run_evaluation(records, cfg.training, cfg.make_architecture());
    const RenderedReport rendered = render_report(report);

    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "report.txt", rendered.table);
    write_text(fs::path(out_dir) / "report.csv", rendered.csv);
    write_text(fs::path(out_dir) / "counts.csv", rendered.counts_csv);
    std::fputs(rendered.table.c_str(), stdout);
    return kExitOk;
}

// --- phantom -----------------------------------------------------------------

int cmd_phantom(int n_patients, const std::string& out_dir, uint64_t seed) {
    const auto patients = phantom_patient_set(n_patients, seed);
    fs::create_directories(out_dir);

    std::string manifest = "patient_id,dicom_dir,labels,ref_mask,excluded_reason\n";
    for (const PhantomPatient& p : patients) {
        const std::string name = "patient_" + std::to_string(p.patient_id);
        const fs::path series_dir = fs::path(out_dir) / name;
        fs::create_directories(series_dir);
        const HuVolume& vol = p.data.volume;
        for (int s = 0; s < vol.slice_count(); ++s) {
            RawSlice raw;
            raw.rows = vol.rows;
            raw.cols = vol.cols;
            raw.instance_number = s + 1;
            raw.slice_location = static_cast<double>(s) * 10.0;
            raw.rescale_slope = 1.0;
            raw.rescale_intercept = -1024.0;
            raw.stored_values.resize(vol.slices[s].data.size());
            for (size_t i = 0; i < raw.stored_values.size(); ++i)
                raw.stored_values[i] = vol.slices[s].data[i] + 1024;  // invert the rescale
            write_file_bytes(series_dir / ("slice_" + slice_suffix(s) + ".dcm"),
                             encode_dicom_slice(raw));
        }
        const std::string labels_name = name + "_labels.nii";
        const std::string mask_name = name + "_truth_mask.nii";
        write_file_bytes(fs::path(out_dir) / labels_name, encode_nifti_labels(p.data.truth_labels));
        write_file_bytes(fs::path(out_dir) / mask_name, encode_nifti_mask(p.data.truth_lungs));
        manifest += std::to_string(p.patient_id) + "," + name + "," + labels_name + "," + mask_name + ",\n";
    }
    write_text(fs::path(out_dir) / "manifest.csv", manifest);
    std::printf("patients=%d out=%s\n", n_patients, out_dir.c_str());
    return kExitOk;
}

// --- overlay -----------------------------------------------------------------

Image2D<uint8_t> parse_class_map(const std::string& text) {
    std::vector<std::vector<uint8_t>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<uint8_t> row;
        std::istringstream ls(line);
        int v;
        while (ls >> v) {
            if (v < 0 || v > 3)
                raise(ErrorCode::UnknownLabelCode, "class map value " + std::to_string(v));
            row.push_back(static_cast<uint8_t>(v));
        }
        if (!rows.empty() && row.size() != rows.front().size())
            raise(ErrorCode::InvalidArgument, "ragged class map");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) raise(ErrorCode::InvalidArgument, "empty class map");
    Image2D<uint8_t> map(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
    for (size_t r = 0; r < rows.size(); ++r)
        for (size_t c = 0; c < rows[r].size(); ++c)
            map.at(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
    return map;
}

int cmd_overlay(const std::string& dicom_path, const std::string& map_path, const std::string& out_png,
                const PipelineConfig& cfg) {
    const RawSlice raw = parse_dicom_slice(read_file_bytes(dicom_path));
    const HuSlice hu = to_hu(raw);
    const Image2D<uint8_t> class_map = parse_class_map(read_text(map_path));
    const RgbImage img = render_overlay(hu, class_map, cfg.blocking.roi_px, cfg.window_center_hu,
                                        cfg.window_width_hu);
    write_file_bytes(out_png, encode_png_rgb(img));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"IPF tissue classification pipeline for CT volumes"};
    app.require_subcommand(0, 1);

    std::string config_path;
    std::optional<uint64_t> seed_override;
    bool dump_cfg = false;
    app.add_option("--config", config_path, "key=value config file");
    app.add_option("--seed", seed_override, "override the config seed");
    app.add_flag("--dump-config", dump_cfg, "print the effective config and exit");

    auto* segment = app.add_subcommand("segment", "segment the lung pair from a DICOM series");
    std::string seg_input, seg_out_mask, seg_ref;
    segment->add_option("--input", seg_input, "DICOM series directory")->required();
    segment->add_option("--out-mask", seg_out_mask, "output NIfTI mask path")->required();
    segment->add_option("--ref-mask", seg_ref, "reference NIfTI mask; prints dice=<v>");

    auto* blocks = app.add_subcommand("blocks", "extract balanced labeled blocks");
    std::string blk_input, blk_labels, blk_out;
    int blk_patient = 0;
    blocks->add_option("--input", blk_input, "DICOM series directory")->required();
    blocks->add_option("--labels", blk_labels, "NIfTI label mask")->required();
    blocks->add_option("--patient-id", blk_patient, "numeric patient id")->required();
    blocks->add_option("--out", blk_out, "output IPFB file")->required();

    auto* train_cmd = app.add_subcommand("train", "train the classifier on IPFB block sets");
    std::vector<std::string> train_blocks;
    std::string train_out, train_history;
    train_cmd->add_option("--blocks", train_blocks, "IPFB files")->required()->expected(-1);
    train_cmd->add_option("--out", train_out, "output IPFM model file")->required();
    train_cmd->add_option("--history", train_history, "training history CSV");

    auto* predict_cmd = app.add_subcommand("predict", "classify ROIs of a new series");
    std::string pred_model, pred_input, pred_out_dir;
    predict_cmd->add_option("--model", pred_model, "IPFM model file")->required();
    predict_cmd->add_option("--input", pred_input, "DICOM series directory")->required();
    predict_cmd->add_option("--out-dir", pred_out_dir, "output directory for class maps")->required();

    auto* evaluate = app.add_subcommand("evaluate", "leave-one-patient-out evaluation");
    std::string eval_manifest, eval_out_dir;
    evaluate->add_option("--manifest", eval_manifest, "patient manifest CSV")->required();
    evaluate->add_option("--out-dir", eval_out_dir, "report output directory")->required();

    auto* phantom = app.add_subcommand("phantom", "generate a synthetic patient set");
    int ph_patients = 4;
    std::string ph_out_dir;
    phantom->add_option("--patients", ph_patients, "number of synthetic patients");
    phantom->add_option("--out-dir", ph_out_dir, "output directory")->required();

    auto* overlay = app.add_subcommand("overlay", "render a class-map overlay PNG");
    std::string ov_dicom, ov_map, ov_out;
    overlay->add_option("--dicom", ov_dicom, "DICOM slice file")->required();
    overlay->add_option("--map", ov_map, "class map text file (from predict)")->required();
    overlay->add_option("--out", ov_out, "output PNG")->required();

    // global --config/--seed may appear after the subcommand name
    for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitUsage;
    }

    try {
        const PipelineConfig cfg = load_config(config_path, seed_override);
        if (dump_cfg) {
            std::fputs(dump_config(cfg).c_str(), stdout);
            return kExitOk;
        }
        if (segment->parsed()) return cmd_segment(seg_input, seg_out_mask, seg_ref, cfg);
        if (blocks->parsed()) return cmd_blocks(blk_input, blk_labels, blk_patient, blk_out, cfg);
        if (train_cmd->parsed()) return cmd_train(train_blocks, train_out, train_history, cfg);
        if (predict_cmd->parsed()) return cmd_predict(pred_model, pred_input, pred_out_dir, cfg);
        if (evaluate->parsed()) return cmd_evaluate(eval_manifest, eval_out_dir, cfg);
        if (phantom->parsed()) return cmd_phantom(ph_patients, ph_out_dir, cfg.seed);
        if (overlay->parsed()) return cmd_overlay(ov_dicom, ov_map, ov_out, cfg);
        std::fputs(app.help().c_str(), stderr);
        return kExitUsage;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return static_cast<int>(error_class(e.code()));
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
}

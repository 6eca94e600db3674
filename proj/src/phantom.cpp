#include "ipfcad/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ipfcad/rng.hpp"

namespace ipfcad {

namespace {

// Strict containment probed along the inner ellipse boundary.
bool ellipse_inside(const EllipseRegion& inner, const EllipseRegion& outer) {
    for (int i = 0; i < 360; ++i) {
        const double t = i * std::numbers::pi / 180.0;
        const double r = inner.center_row + inner.semi_row * std::sin(t);
        const double c = inner.center_col + inner.semi_col * std::cos(t);
        const double dr = (r - outer.center_row) / outer.semi_row;
        const double dc = (c - outer.center_col) / outer.semi_col;
        if (dr * dr + dc * dc >= 1.0) return false;
    }
    return true;
}

}  // namespace

void PhantomSpec::validate() const {
    if (rows < 16 || cols < 16 || slice_count < 1)
        raise(ErrorCode::SpecInvariantViolation, "phantom dimensions too small");
    if (!ellipse_inside(lung_left, body) || !ellipse_inside(lung_right, body))
        raise(ErrorCode::SpecInvariantViolation, "lung ellipses must lie strictly inside the body");
    for (const LesionSpec& lesion : lesions) {
        if (lesion.tissue != TissueClass::GroundGlass && lesion.tissue != TissueClass::Honeycombing)
            raise(ErrorCode::SpecInvariantViolation, "lesion class must be ground-glass or honeycombing");
        if (!ellipse_inside(lesion.shape, lung_left) && !ellipse_inside(lesion.shape, lung_right))
            raise(ErrorCode::SpecInvariantViolation, "lesion must lie inside a lung ellipse");
    }
    if (!(honeycomb_lumen_hu < healthy_mean_hu && healthy_mean_hu < groundglass_mean_hu &&
          groundglass_mean_hu < honeycomb_wall_hu))
        raise(ErrorCode::SpecInvariantViolation,
              "texture means must order lumen < healthy < ground-glass < wall");
    if (honeycomb_pitch_px < 2)
        raise(ErrorCode::SpecInvariantViolation, "honeycomb pitch too small");
}

PhantomResult generate_phantom(const PhantomSpec& spec) {
    spec.validate();
    Rng rng(spec.rng_seed);

    PhantomResult out;
    out.volume.patient_id = "phantom";
    out.volume.rows = spec.rows;
    out.volume.cols = spec.cols;
    out.truth_lungs = BinaryMask(spec.rows, spec.cols, spec.slice_count);
    out.truth_labels = LabelMask(spec.rows, spec.cols, spec.slice_count);

    auto clamp_hu = [](double v) {
        return static_cast<int32_t>(std::llround(std::clamp(v, -1000.0, 400.0)));
    };

    for (int s = 0; s < spec.slice_count; ++s) {
        HuSlice slice(spec.rows, spec.cols, -1000);
        MaskSlice& lungs = out.truth_lungs.slices[s];
        LabelSlice& labels = out.truth_labels.slices[s];
        for (int r = 0; r < spec.rows; ++r) {
            for (int c = 0; c < spec.cols; ++c) {
                if (!spec.body.contains(r, c)) continue;  // background stays -1000 exactly

                const bool in_lung = spec.lung_left.contains(r, c) || spec.lung_right.contains(r, c);
                if (!in_lung) {
                    slice.at(r, c) = clamp_hu(rng.normal(spec.body_mean_hu, spec.body_sigma_hu));
                    continue;
                }

                lungs.at(r, c) = 1;
                TissueClass cls = TissueClass::Healthy;
                for (const LesionSpec& lesion : spec.lesions)
                    if (lesion.shape.contains(r, c)) cls = lesion.tissue;
                labels.at(r, c) = static_cast<uint8_t>(cls);

                double hu;
                switch (cls) {
                    case TissueClass::GroundGlass:
                        hu = rng.normal(spec.groundglass_mean_hu, spec.groundglass_sigma_hu);
                        break;
                    case TissueClass::Honeycombing: {
                        // Cyst lattice: thin walls on a square grid, lumen inside.
                        const bool wall = (r % spec.honeycomb_pitch_px == 0) ||
                                          (c % spec.honeycomb_pitch_px == 0);
                        hu = rng.normal(wall ? spec.honeycomb_wall_hu : spec.honeycomb_lumen_hu,
                                        spec.honeycomb_sigma_hu);
                        break;
                    }
                    default:
                        hu = rng.normal(spec.healthy_mean_hu, spec.healthy_sigma_hu);
                        break;
                }
                slice.at(r, c) = clamp_hu(hu);
            }
        }
        out.volume.slices.push_back(std::move(slice));
    }
    return out;
}

std::vector<PhantomPatient> phantom_patient_set(int n, uint64_t base_seed) {
    if (n < 2) raise(ErrorCode::InvalidArgument, "a patient set needs n >= 2");

    std::vector<PhantomPatient> patients;
    patients.reserve(static_cast<size_t>(n));
    Rng jitter(base_seed);

    for (int i = 0; i < n; ++i) {
        PhantomSpec spec;
        spec.rng_seed = base_seed * 1000003ULL + static_cast<uint64_t>(i) + 1;

        auto scale = [&](double v) { return v * jitter.uniform(0.9, 1.1); };
        spec.body.semi_row = scale(spec.body.semi_row);
        spec.body.semi_col = scale(spec.body.semi_col);
        spec.lung_left.semi_row = scale(spec.lung_left.semi_row);
        spec.lung_left.semi_col = scale(spec.lung_left.semi_col);
        spec.lung_right.semi_row = scale(spec.lung_right.semi_row);
        spec.lung_right.semi_col = scale(spec.lung_right.semi_col);
        spec.honeycomb_pitch_px = 4 + static_cast<int>(jitter.next_below(3));  // 4..6

        // One ground-glass and one honeycombing lesion, alternating sides so
        // lesion position is not a class giveaway. Sized relative to the
        // (jittered) host lung so containment always holds.
        const bool gg_left = i % 2 == 0;
        const EllipseRegion& gg_host = gg_left ? spec.lung_left : spec.lung_right;
        const EllipseRegion& hc_host = gg_left ? spec.lung_right : spec.lung_left;
        auto make_lesion = [&](const EllipseRegion& host, TissueClass cls, double row_shift) {
            LesionSpec lesion;
            lesion.tissue = cls;
            lesion.shape.semi_row = host.semi_row * jitter.uniform(0.30, 0.40);
            lesion.shape.semi_col = host.semi_col * jitter.uniform(0.38, 0.50);
            lesion.shape.center_row = host.center_row + row_shift * host.semi_row;
            lesion.shape.center_col = host.center_col;
            return lesion;
        };
        spec.lesions.push_back(make_lesion(gg_host, TissueClass::GroundGlass,
                                           jitter.uniform(-0.35, -0.15)));
        spec.lesions.push_back(make_lesion(hc_host, TissueClass::Honeycombing,
                                           jitter.uniform(0.15, 0.35)));

        PhantomPatient p;
        p.patient_id = static_cast<uint16_t>(i + 1);
        p.section_count = spec.slice_count;
        p.data = generate_phantom(spec);
        p.data.volume.patient_id = "phantom_" + std::to_string(i + 1);
        patients.push_back(std::move(p));
    }
    return patients;
}

}  // namespace ipfcad

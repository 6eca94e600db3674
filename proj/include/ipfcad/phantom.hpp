#pragma once

#include <cstdint>
#include <vector>

#include "ipfcad/image.hpp"

namespace ipfcad {

struct EllipseRegion {
    double center_row = 0.0;
    double center_col = 0.0;
    double semi_row = 1.0;
    double semi_col = 1.0;

    bool contains(int row, int col) const {
        const double dr = (row - center_row) / semi_row;
        const double dc = (col - center_col) / semi_col;
        return dr * dr + dc * dc <= 1.0;
    }
};

struct LesionSpec {
    EllipseRegion shape;
    TissueClass tissue = TissueClass::GroundGlass;  // GroundGlass or Honeycombing
};

// Synthetic chest slice: air background, soft-tissue body ellipse, two lung
// ellipses textured per tissue class. Truth masks fall out of the geometry,
// which is what makes this the segmentation / classification oracle.
//
// The HU texture constants are test-design values chosen inside the clinical
// HU scale (air -1000, lung parenchyma around -700..-600); they are not
// measurements.
struct PhantomSpec {
    int rows = 256;
    int cols = 256;
    int slice_count = 8;

    EllipseRegion body{128, 128, 100, 112};
    EllipseRegion lung_left{132, 78, 64, 36};
    EllipseRegion lung_right{132, 178, 64, 36};

    double healthy_mean_hu = -650.0;
    double healthy_sigma_hu = 30.0;
    double groundglass_mean_hu = -450.0;
    double groundglass_sigma_hu = 40.0;
    double honeycomb_lumen_hu = -900.0;
    double honeycomb_wall_hu = -200.0;
    double honeycomb_sigma_hu = 20.0;
    int honeycomb_pitch_px = 5;  // cyst lattice pitch, 4-6 px reads well at block scale

    double body_mean_hu = 40.0;
    double body_sigma_hu = 10.0;

    std::vector<LesionSpec> lesions;
    uint64_t rng_seed = 0;

    void validate() const;
};

struct PhantomResult {
    HuVolume volume;
    BinaryMask truth_lungs;
    LabelMask truth_labels;
};

PhantomResult generate_phantom(const PhantomSpec& spec);

// One synthetic patient: the phantom plus identity and section count.
struct PhantomPatient {
    uint16_t patient_id = 0;
    int section_count = 0;
    PhantomResult data;
};

// n >= 2 patients with +-10% seeded jitter of the ellipse geometry. Every
// patient contains all three tissue classes.
std::vector<PhantomPatient> phantom_patient_set(int n, uint64_t base_seed);

}  // namespace ipfcad

#include "ipfcad/pipeline.hpp"

namespace ipfcad {

PatientRecord make_patient_record(uint16_t patient_id, const HuVolume& volume,
                                  const LabelMask& labels, const BinaryMask* reference_mask,
                                  const SegmentationParams& seg_params,
                                  const BlockingParams& blocking_params) {
    PatientRecord record;
    record.patient_id = patient_id;
    record.section_count = volume.slice_count();

    const BinaryMask mask = segment_lungs(volume, seg_params);
    if (reference_mask) record.segmentation_dice = dice(mask, *reference_mask);

    const HuVolume masked = apply_mask(volume, mask, seg_params.excluded_sentinel_hu);
    const std::vector<Block> raw = extract_labeled_blocks(masked, labels, blocking_params, patient_id,
                                                          seg_params.excluded_sentinel_hu);
    record.blocks = balance_blocks(raw, blocking_params.balance_ratios, blocking_params.rng_seed);
    return record;
}

}  // namespace ipfcad

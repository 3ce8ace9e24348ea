//! Class activation maps and their PMI-difference refinements, turned into
//! bounding boxes for weakly supervised localisation.

mod bbox;
mod maps;
mod metrics;
mod pgm;

pub use bbox::{connected_components, extract_bbox, iou, BoxExtraction, DEFAULT_THRESHOLD_RATIO};
pub use maps::{
    cam_map, class_cell_scores, infocam_map, infocam_plus_map, intensity_map, upsample_bilinear,
    ArgminScope, IntensityMap, MapMode,
};
pub use metrics::{class_map, evaluate_localization, LocalizationMetrics, IOU_THRESHOLD};
pub use pgm::{encode_pgm, write_heatmap, write_pgm};

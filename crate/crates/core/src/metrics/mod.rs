//! Segmentation overlap metrics, localization error tables and tissue
//! quantification reports.

mod loc;
mod overlap;
mod quantify;

pub use loc::{loc_eval_table, LocEvalInput, LocEvalRow, LocEvalTable};
pub use overlap::{
    boundary, dice, directed_boundary_distances, evaluate_segmentation, hd95, iou,
    nearest_rank_95, squared_distance_map, ClassScores, SegEvaluation, SegScores,
};
pub use quantify::{
    export_report, format_sig, load_report_json, quantify, report_csv, PerClass, ReportFormat,
    SliceQuant, TissueReport, CSV_HEADER,
};

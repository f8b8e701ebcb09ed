//! File formats: the MFSM binary matrix container, headerless CSV matrices,
//! JSON design files, key=value run configuration, and on-disk persistence
//! of reduced models.

mod config;
mod design;
mod matrix;
mod model_store;

pub use config::{parse_config, read_config, RunConfig};
pub use design::{read_design, write_design, DesignFile, IterativeMetaFile, TraceEntry};
pub use matrix::{
    load_matrix, load_snapshots, read_csv_matrix, read_mfsm, write_csv_matrix, write_mfsm,
    MatrixFormat,
};
pub use model_store::{load_model, save_model};

//! File formats: CSV for trajectories, panels and results, versioned JSON
//! for everything else.

mod csv_files;
mod json_docs;
mod results;

pub use csv_files::{
    panel_header, read_panel_from, read_panels, read_trajectories, read_trajectories_from, trajectory_header,
    write_panel, write_panel_to, write_trajectories, write_trajectories_to,
};
pub use json_docs::{
    load_config, load_instance, load_model, load_policy, read_json, save_instance, save_model, save_policy, write_json,
    InstanceDoc, ModelDoc, ModelKind, PolicyDoc, RunConfig, SpecDoc, StoredPolicy, FORMAT_VERSION,
};
pub use results::{write_curves, write_curves_to, write_results, write_results_to, ResultRow};

//! Configuration files, result tables and figures.

pub mod config;
pub mod emit;
pub mod plot;

pub use config::{config_to_toml, parse_config, parse_config_str};
pub use emit::{
    emit_results, read_results_json, results_csv, results_json, strip_timing, Format, CSV_HEADER,
};
pub use plot::{emit_plot, render_svg, Figure, ReportBundle, Series};

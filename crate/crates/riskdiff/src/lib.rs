//! File formats, the parallel simulation runner and the `riskdiff`
//! command-line tool on top of `riskdiff-core`.

pub mod config;
pub mod csv_io;
pub mod error;
pub mod exact_cache;
pub mod output;
pub mod runner;

pub use config::{SimConfig, CONFIG_SCHEMA_VERSION};
pub use csv_io::{load_csv, read_csv};
pub use error::{AppError, AppResult};
pub use exact_cache::LatticeCache;
pub use runner::{run_grid, run_scenario, GridOptions, RunSettings};

/// Text printed by `--version`.
pub const VERSION_LINE: &str = concat!(env!("CARGO_PKG_VERSION"), " (config schema 1)");

#[cfg(test)]
mod tests {
    #[test]
    fn version_line_names_schema() {
        assert!(super::VERSION_LINE.ends_with(&format!("(config schema {})", super::CONFIG_SCHEMA_VERSION)));
    }
}

//! Scenario-driven front end for the `rendezvous-core` experiments.

pub mod bundled;
pub mod error;
pub mod runner;
pub mod scenario;

pub use error::CliError;
pub use runner::{run, Manifest, RunOptions, RunSummary};
pub use scenario::Scenario;

/// Reads a scenario from a file path, falling back to a bundled scenario name.
pub fn load(arg: &str) -> Result<(Scenario, Vec<u8>), CliError> {
    let path = std::path::Path::new(arg);
    let bytes = if path.exists() {
        std::fs::read(path).map_err(|e| CliError::io(path.display(), e))?
    } else if let Some(b) = bundled::find(arg) {
        b.source.as_bytes().to_vec()
    } else {
        return Err(CliError::Validation(format!(
            "{arg}: no such file or bundled scenario (see `list`)"
        )));
    };
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| CliError::Validation(format!("{arg}: not valid UTF-8")))?;
    let sc = Scenario::parse(text)?;
    Ok((sc, bytes))
}

mod allan;
mod fit;
mod map;
mod predict;
mod simulate;
mod sweep;

use std::io::Write;
use std::path::PathBuf;

use crate::config::Loaded;
use crate::error::CliError;
use crate::output::{sink, Provenance};

pub use allan::run as allan;
pub use fit::run as fit;
pub use map::run as map;
pub use predict::run as predict;
pub use simulate::run as simulate;
pub use sweep::run as sweep;

/// Everything a command needs after overrides have been folded into the config.
pub struct Context {
    pub command: &'static str,
    pub loaded: Loaded,
    pub out: Option<PathBuf>,
    pub hash: String,
}

impl Context {
    pub fn seeds(&self) -> Vec<u64> {
        self.loaded.config.seeds()
    }

    /// Output sink with the provenance header already written.
    pub fn csv(&self) -> Result<Box<dyn Write>, CliError> {
        let mut w = sink(self.out.as_deref())?;
        Provenance {
            command: self.command,
            config_hash: &self.hash,
            seeds: &self.seeds(),
        }
        .write(&mut w)?;
        Ok(w)
    }
}

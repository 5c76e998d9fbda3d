use std::fs;
use std::path::PathBuf;

use clap::Args;

use crate::error::{CliError, Result};
use crate::output::{hex_digest, read_manifest, Outcome, SUMMARY};

#[derive(Debug, Default, Args)]
pub struct ReportArgs {
    /// Output directories written by the other commands.
    #[arg(required = true)]
    pub dirs: Vec<PathBuf>,
}

/// Verifies every manifest hash and prints one line per directory.
/// Exits with the most severe code found (3 over 2 over 0).
pub fn run(a: ReportArgs) -> Result<i32> {
    let mut worst = 0;
    for dir in &a.dirs {
        let m = read_manifest(dir)?;
        for (name, hash) in &m.files {
            let bytes = fs::read(dir.join(name))?;
            if &hex_digest(&bytes) != hash {
                return Err(CliError::Usage(format!(
                    "{}: {name} does not match its manifest hash",
                    dir.display()
                )));
            }
        }
        let text = fs::read_to_string(dir.join(SUMMARY))?;
        let o: Outcome = serde_json::from_str(&text)?;
        println!(
            "{}\t{}\t{}\t{}\t{}",
            dir.display(),
            o.command,
            &m.config_hash[..12],
            o.exit_code,
            o.verdict
        );
        worst = match (worst, o.exit_code) {
            (3, _) | (_, 3) => 3,
            (1, _) | (_, 1) => 1,
            (2, _) | (_, 2) => 2,
            _ => 0,
        };
    }
    Ok(worst)
}

//! External stage-2 filter over a process boundary.
//!
//! Protocol: each instance is written to the process's stdin as one JSON
//! manifest record per line, then stdin is closed. The process prints one
//! line reading `keep` or `drop` per instance, in input order. Any other
//! output line is ignored.

use std::fmt;
use std::io::{Read, Write};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use super::ManifestRecord;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterCommand {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

impl fmt::Display for FilterCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.program)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        Ok(())
    }
}

/// One keep flag per record, in order.
pub fn run_external_filter(cmd: &FilterCommand, records: &[ManifestRecord]) -> Result<Vec<bool>> {
    let mut input = Vec::new();
    for r in records {
        serde_json::to_writer(&mut input, r)?;
        input.push(b'\n');
    }
    let mut child = Command::new(&cmd.program)
        .args(&cmd.args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::ExternalFilter(format!("cannot start {cmd}: {e}")))?;
    let mut stdin = child.stdin.take().expect("stdin is piped");
    // Feed stdin from a thread so a filter that writes before reading cannot deadlock.
    let writer = std::thread::spawn(move || {
        // A filter may exit without draining its input; that is not an error here.
        let _ = stdin.write_all(&input);
    });
    let mut stdout = String::new();
    child.stdout.take().expect("stdout is piped").read_to_string(&mut stdout)?;
    let mut stderr = String::new();
    child.stderr.take().expect("stderr is piped").read_to_string(&mut stderr)?;
    let status = child.wait()?;
    writer.join().map_err(|_| Error::ExternalFilter("stdin writer panicked".into()))?;
    if !status.success() {
        return Err(Error::ExternalFilter(format!("{cmd} exited with {status}; stderr: {}", stderr.trim())));
    }
    let verdicts: Vec<bool> = stdout
        .lines()
        .filter_map(|l| match l.trim() {
            "keep" => Some(true),
            "drop" => Some(false),
            _ => None,
        })
        .collect();
    if verdicts.len() != records.len() {
        return Err(Error::ExternalFilter(format!(
            "{cmd} gave {} verdicts for {} instances; stderr: {}",
            verdicts.len(),
            records.len(),
            stderr.trim()
        )));
    }
    Ok(verdicts)
}

//! Producer-side adapter for solvers that write DRAT lines to standard output.

use std::io::{self, BufReader};
use std::process::{Child, ChildStdout, Command, ExitStatus, Stdio};

use crate::formats::{DratReader, FormatError, ProofStep};

/// A running solver whose stdout is parsed as a (lenient) DRAT stream.
pub struct SolverProcess {
    child: Child,
    steps: DratReader<BufReader<ChildStdout>>,
}

/// Starts `command` through `sh -c`. Lines that are not proof lines
/// (`s ...`, `v ...`, comments) are skipped.
pub fn spawn_solver(command: &str) -> io::Result<SolverProcess> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()?;
    let stdout = child.stdout.take().expect("stdout is piped");
    Ok(SolverProcess {
        child,
        steps: DratReader::new(BufReader::new(stdout)).lenient(),
    })
}

impl SolverProcess {
    pub fn steps(&mut self) -> &mut DratReader<BufReader<ChildStdout>> {
        &mut self.steps
    }

    pub fn wait(mut self) -> io::Result<ExitStatus> {
        drop(self.steps);
        self.child.wait()
    }
}

impl Iterator for SolverProcess {
    type Item = Result<ProofStep, FormatError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.steps.next()
    }
}

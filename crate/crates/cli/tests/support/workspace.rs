//! Runs the `pf` binary inside a throwaway directory.

// Shared across test targets; not every target uses every item.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

pub const IMAGE: &str = "ipfs://Qmb2Bf5Tvh37knbMzsZmWRKpxpmVeA1zkEPNWu3bPMh3YQ";
pub const COMPANY_A: &str = "0x00000000000000000000000000000000000000a1";
pub const COMPANY_B: &str = "0x00000000000000000000000000000000000000b2";

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(rel)
}

pub fn workpiece() -> PathBuf {
    fixture("diamond_circle_square/workpiece.json")
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.stdout)
            .unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", self.stdout))
    }
}

impl From<Output> for Run {
    fn from(o: Output) -> Self {
        Self {
            code: o.status.code().unwrap_or(-1),
            stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
        }
    }
}

pub struct Workspace {
    pub dir: TempDir,
}

impl Workspace {
    pub fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn pf(&self, args: &[&str]) -> Run {
        Command::new(env!("CARGO_BIN_EXE_pf"))
            .args(args)
            .current_dir(self.dir.path())
            .env_remove("PF_STORE")
            .env_remove("PF_LEDGER_FILE")
            .env("PF_KEY_FILE", self.path("station.key"))
            .output()
            .expect("pf runs")
            .into()
    }

    /// Like [`pf`](Self::pf) but panics unless the exit code is 0.
    pub fn ok(&self, args: &[&str]) -> Run {
        let run = self.pf(args);
        assert_eq!(run.code, 0, "pf {args:?} failed: {}", run.stderr);
        run
    }

    /// Ledger, key and collection ready for publishing.
    pub fn initialised() -> Self {
        let ws = Self::new();
        ws.ok(&[
            "init",
            "--name",
            "DSC Product QualityTest",
            "--symbol",
            "DSCQ",
        ]);
        ws.ok(&["keygen", "--key-id", "station-key"]);
        ws
    }

    /// Evaluates a measurements fixture into `<out>` with a fixed timestamp.
    pub fn evaluate(&self, measurements: &str, token_id: u64, out: &str) {
        let w = workpiece();
        let m = fixture(&format!("diamond_circle_square/{measurements}"));
        self.ok(&[
            "evaluate",
            w.to_str().unwrap(),
            m.to_str().unwrap(),
            "--workpiece-id",
            &token_id.to_string(),
            "--created-at",
            "2024-05-01T10:00:00Z",
            "--out",
            out,
        ]);
    }

    /// `pf publish` (mint) or `pf append`, returning the JSON output.
    pub fn publish(
        &self,
        verb: &str,
        report: &str,
        token_id: u64,
        who: &str,
        producer: &str,
        step: u64,
    ) -> Run {
        let w = workpiece();
        let token = token_id.to_string();
        let step = step.to_string();
        let who_flag = if verb == "publish" {
            "--owner"
        } else {
            "--caller"
        };
        self.pf(&[
            "--format",
            "json",
            verb,
            report,
            w.to_str().unwrap(),
            "--token-id",
            &token,
            who_flag,
            who,
            "--producer",
            producer,
            "--step",
            &step,
            "--image",
            IMAGE,
        ])
    }
}

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_esap");

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(self.stdout.trim()).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", self.stdout))
    }

    pub fn error(&self) -> serde_json::Value {
        let lines: Vec<&str> = self.stderr.lines().collect();
        assert_eq!(lines.len(), 1, "stderr must be one line: {:?}", self.stderr);
        serde_json::from_str(lines[0]).expect("stderr is JSON")
    }
}

impl From<Output> for Run {
    fn from(o: Output) -> Self {
        Run {
            code: o.status.code().unwrap_or(-1),
            stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
        }
    }
}

/// Run the binary in `dir` with a clean port environment.
pub fn esap(dir: &Path, args: &[&str]) -> Run {
    esap_env(dir, args, &[])
}

pub fn esap_env(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(BIN);
    cmd.current_dir(dir).args(args);
    for var in ["ESAP_API_KEY", "ESAP_BASE_URL", "ESAP_MODEL"] {
        cmd.env_remove(var);
    }
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs").into()
}

pub fn ok(dir: &Path, args: &[&str]) -> Run {
    let run = esap(dir, args);
    assert_eq!(run.code, 0, "esap {args:?} failed: {}", run.stderr);
    run
}

pub fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

pub const TOY_CORPUS: &str = concat!(
    "{\"id\":\"fruit-1\",\"text\":\"red apple\"}\n",
    "{\"id\":\"fruit-2\",\"text\":\"green pear\"}\n",
    "{\"id\":\"memo\",\"text\":\"Quarterly notes. Reach the team at ops@example.com for access.\",\"acl\":[\"finance\"]}\n",
);

//! Driving the `fairdraw` binary: relay processes, key files, spec files.

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::Duration;

use fairdraw::client::{RelayClient, RetryPolicy};
use fairdraw::relay::{session_id, LogEntry};
use fairdraw::specfile::SpecFile;

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fairdraw"));
    for var in ["FAIRDRAW_RELAY", "FAIRDRAW_JSON", "FAIRDRAW_TIMEOUT_SECS", "FAIRDRAW_BIND", "FAIRDRAW_DATA_DIR"] {
        c.env_remove(var);
    }
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("fairdraw runs")
}

pub fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

/// `fairdraw serve` on an ephemeral port, killed on drop.
pub struct RelayProc {
    child: Child,
    pub base: String,
}

impl RelayProc {
    pub fn start() -> Self {
        let mut child = bin()
            .args(["serve", "--bind", "127.0.0.1:0"])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("relay starts");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let base = line.trim().strip_prefix("listening on ").expect("address banner").to_string();
        Self { child, base }
    }

    pub fn client(&self) -> RelayClient {
        RelayClient::new(&self.base, RetryPolicy { attempts: 3, initial: Duration::from_millis(20), max: Duration::from_millis(100) })
    }

    pub fn log(&self, id: &str) -> Vec<LogEntry> {
        self.client().fetch_log(id, 0).map(|p| p.messages).unwrap_or_default()
    }
}

impl Drop for RelayProc {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct Keys {
    pub name: String,
    pub key_file: PathBuf,
    pub public_b64: String,
    pub fingerprint_hex: String,
}

pub fn keygen(dir: &Path, name: &str) -> Keys {
    let out = run(&["keygen", dir.to_str().unwrap(), "--name", name]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    let field = |k: &str| {
        stdout
            .lines()
            .find_map(|l| l.strip_prefix(k).map(|v| v.trim().to_string()))
            .unwrap_or_else(|| panic!("no {k} in {stdout}"))
    };
    Keys {
        name: name.into(),
        key_file: dir.join(format!("{name}.key")),
        public_b64: field("public_key"),
        fingerprint_hex: field("fingerprint"),
    }
}

/// Spec file over `keys` with one uniform drawing per DID.
pub fn write_spec(dir: &Path, keys: &[Keys], dids: &[&str], candidates: &[&str]) -> PathBuf {
    let spec = serde_json::json!({
        "stakeholders": keys.iter().map(|k| serde_json::json!({"name": k.name, "public_key": k.public_b64})).collect::<Vec<_>>(),
        "draws": dids.iter().map(|d| serde_json::json!({"did": d, "candidates": candidates})).collect::<Vec<_>>(),
    });
    let path = dir.join("spec.json");
    std::fs::write(&path, serde_json::to_string_pretty(&spec).unwrap()).unwrap();
    path
}

pub fn spec_session_id(spec: &Path) -> String {
    let setup = SpecFile::parse(&std::fs::read_to_string(spec).unwrap()).unwrap().into_setup().unwrap();
    session_id(&setup)
}

pub fn participate(relay: &RelayProc, spec: &Path, k: &Keys, dir: &Path, extra: &[&str]) -> Command {
    let mut c = bin();
    c.args(["--relay", &relay.base, "participate", spec.to_str().unwrap(), "--key", k.key_file.to_str().unwrap()])
        .arg("--transcript")
        .arg(dir.join(format!("{}.transcript.json", k.name)))
        .args(extra);
    if !extra.contains(&"--poll-ms") {
        c.args(["--poll-ms", "25"]);
    }
    c.stdout(Stdio::piped()).stderr(Stdio::piped());
    c
}

/// True when no reveal precedes the last commitment in the relay log.
pub fn reveals_follow_all_commits(log: &[LogEntry], stakeholders: usize) -> bool {
    let commits: Vec<u64> = log.iter().filter(|e| e.message.is_commit()).map(|e| e.index).collect();
    let reveals: Vec<u64> = log.iter().filter(|e| !e.message.is_commit()).map(|e| e.index).collect();
    if reveals.is_empty() {
        return true;
    }
    commits.len() == stakeholders && reveals.iter().all(|r| commits.iter().all(|c| c < r))
}

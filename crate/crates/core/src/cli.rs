//! The `fairdraw` command line.
//!
//! Exit codes: 0 success (or a Fair audit), 1 other failure, 2 Manipulated,
//! 3 Incomplete, timeout or abort, 4 relay unreachable, 64 usage or invalid
//! input file.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::thread::sleep;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::audit::{audit_transcript, audit_views, Transcript};
use crate::client::{ClientError, RelayClient, RetryPolicy};
use crate::crypto::KeyPair;
use crate::model::Fingerprint;
use crate::protocol::{start_session, AbortReport, DrawOutcome, Message, Phase, PhaseClock};
use crate::relay::{now_ms, ServeConfig};
use crate::simulate::{simulate, Adversary, SimConfig};
use crate::specfile::{SessionSetup, SpecFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INCOMPLETE: i32 = 3;
pub const EXIT_NETWORK: i32 = 4;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "fairdraw", version, about = "Auditable commit-and-reveal random drawings")]
pub struct Cli {
    /// Relay base URL.
    #[arg(long, global = true, env = "FAIRDRAW_RELAY", default_value = "http://127.0.0.1:8080")]
    pub relay: String,
    /// Machine-readable JSON output.
    #[arg(long, global = true, env = "FAIRDRAW_JSON")]
    pub json: bool,
    /// Per-phase timeout.
    #[arg(long, global = true, env = "FAIRDRAW_TIMEOUT_SECS", default_value_t = 600)]
    pub timeout_secs: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a signing key pair: <dir>/<name>.key (secret) and <dir>/<name>.pub.
    Keygen(KeygenArgs),
    /// Take part in a drawing through the relay and print the outcome.
    Participate(ParticipateArgs),
    /// Verify one or more transcript files.
    Audit(AuditArgs),
    /// Run many in-process sessions and test the outcome distribution.
    Simulate(SimulateArgs),
    /// Run the relay.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct KeygenArgs {
    pub dir: PathBuf,
    #[arg(long, default_value = "stakeholder")]
    pub name: String,
    /// Overwrite existing key files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ParticipateArgs {
    pub spec: PathBuf,
    /// Secret key file written by `keygen`.
    #[arg(long)]
    pub key: PathBuf,
    /// Where to save this stakeholder's view of the session.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub poll_ms: u64,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub spec: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Number of stakeholders colluding on a fixed share.
    #[arg(long, default_value_t = 0)]
    pub colluders: usize,
    #[arg(long, default_value_t = 0)]
    pub fixed_share: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "FAIRDRAW_BIND", default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// Persist boards here; in memory when absent.
    #[arg(long, env = "FAIRDRAW_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        let code = if e.is_network() { EXIT_NETWORK } else { EXIT_FAILURE };
        Failure::new(code, e.to_string())
    }
}

type Outcome = Result<i32, Failure>;

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Keygen(a) => keygen(&cli, a),
        Command::Participate(a) => participate(&cli, a),
        Command::Audit(a) => audit(&cli, a),
        Command::Simulate(a) => run_simulation(&cli, a),
        Command::Serve(a) => serve(&cli, a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("fairdraw: {}", f.message);
            f.code
        }
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn load_setup(path: &Path) -> Result<SessionSetup, Failure> {
    let text = read_text(path)?;
    SpecFile::parse(&text)
        .and_then(SpecFile::into_setup)
        .map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", path.display())))
}

pub fn read_key_file(path: &Path) -> Result<KeyPair, String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let secret: [u8; 32] = bytes
        .try_into()
        .map_err(|b: Vec<u8>| format!("{}: expected a 32-byte secret key, found {} bytes", path.display(), b.len()))?;
    Ok(KeyPair::from_secret(secret))
}

#[derive(Serialize)]
struct KeygenOutput {
    fingerprint: String,
    public_key: String,
    secret_key_file: PathBuf,
    public_key_file: PathBuf,
}

fn keygen(cli: &Cli, a: &KeygenArgs) -> Outcome {
    let secret_path = a.dir.join(format!("{}.key", a.name));
    let public_path = a.dir.join(format!("{}.pub", a.name));
    if !a.force {
        if let Some(p) = [&secret_path, &public_path].into_iter().find(|p| p.exists()) {
            return Err(Failure::new(EXIT_FAILURE, format!("{} exists; use --force to overwrite", p.display())));
        }
    }
    let io = |e: std::io::Error| Failure::new(EXIT_FAILURE, e.to_string());
    fs::create_dir_all(&a.dir).map_err(io)?;
    let pair = KeyPair::generate();
    write_secret(&secret_path, &pair.secret_bytes()).map_err(io)?;
    fs::write(&public_path, pair.public_key().0).map_err(io)?;
    let out = KeygenOutput {
        fingerprint: pair.fingerprint().to_hex(),
        public_key: crate::json::encode(&pair.public_key().0),
        secret_key_file: secret_path,
        public_key_file: public_path,
    };
    if cli.json {
        print_json(&out);
    } else {
        println!("fingerprint {}", out.fingerprint);
        println!("public_key  {}", out.public_key);
        println!("wrote {} and {}", out.secret_key_file.display(), out.public_key_file.display());
    }
    Ok(EXIT_OK)
}

#[cfg(unix)]
fn write_secret(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    use std::os::unix::fs::OpenOptionsExt;
    let mut f = fs::OpenOptions::new().write(true).create(true).truncate(true).mode(0o600).open(path)?;
    f.write_all(bytes)
}

#[cfg(not(unix))]
fn write_secret(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    fs::write(path, bytes)
}

#[derive(Serialize)]
struct ParticipateOutput<'a> {
    session_id: &'a str,
    phase: Phase,
    outcome: &'a [DrawOutcome],
    #[serde(skip_serializing_if = "Option::is_none")]
    abort: Option<&'a AbortReport>,
    transcript: &'a Path,
}

fn participate(cli: &Cli, a: &ParticipateArgs) -> Outcome {
    let setup = load_setup(&a.spec)?;
    let keypair = read_key_file(&a.key).map_err(|e| Failure::new(EXIT_USAGE, e))?;
    let me = keypair.fingerprint();
    let client = RelayClient::new(&cli.relay, RetryPolicy::default());
    let id = client.create_session(&setup)?;
    let transcript_path = a
        .transcript
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("fairdraw-{}-{}.transcript.json", &id[..12], me.short())));

    let (mut participant, commit) = start_session(setup.session.clone(), setup.keys.clone(), &keypair)
        .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    let mut view = LocalView::new(&setup);
    let commit: Message = commit.into();
    client.post_message(&id, &commit)?;
    view.record(commit);
    eprintln!("session {id}: committed as {}", me.short());

    let mut clock = PhaseClock::new(Duration::from_secs(cli.timeout_secs), participant.phase());
    let mut next = 0;
    let mut revealed = false;
    loop {
        let page = client.fetch_log(&id, next)?;
        next = page.next_index;
        for entry in page.messages {
            let _ = participant.receive(&entry.message);
            view.record(entry.message);
        }
        match participant.phase() {
            Phase::Revealing if !revealed => {
                let reveal: Message = participant.reveal().map_err(|e| Failure::new(EXIT_FAILURE, e.to_string()))?.into();
                client.post_message(&id, &reveal)?;
                view.record(reveal);
                revealed = true;
                eprintln!("session {id}: all commitments verified, revealed");
            }
            Phase::Complete | Phase::Aborted => break,
            _ => {}
        }
        if clock.expired(participant.phase(), Instant::now()) {
            participant.handle_timeout();
            break;
        }
        sleep(Duration::from_millis(a.poll_ms));
    }

    let session = participant.session();
    let outcome = session.outcome().map(<[_]>::to_vec).unwrap_or_default();
    if session.phase() == Phase::Complete {
        view.transcript.claimed_outcome = Some(outcome.clone());
    }
    fs::write(&transcript_path, view.transcript.to_json())
        .map_err(|e| Failure::new(EXIT_FAILURE, format!("{}: {e}", transcript_path.display())))?;

    let abort = session.abort_report();
    if cli.json {
        print_json(&ParticipateOutput {
            session_id: &id,
            phase: session.phase(),
            outcome: &outcome,
            abort,
            transcript: &transcript_path,
        });
    } else {
        for o in &outcome {
            println!("{}", o.line());
        }
    }
    match abort {
        None => Ok(EXIT_OK),
        Some(report) => {
            let names: Vec<String> = report.culprits.iter().map(|c| label(&setup, c)).collect();
            eprintln!("session {id}: aborted ({:?}); culprits: {}", report.reason, names.join(" "));
            Ok(EXIT_INCOMPLETE)
        }
    }
}

fn label(setup: &SessionSetup, fp: &Fingerprint) -> String {
    match setup.keys.name_of(fp) {
        Some(name) => format!("{name}({})", fp.short()),
        None => fp.to_hex(),
    }
}

/// Everything this stakeholder sent or received, each message once.
struct LocalView {
    transcript: Transcript,
    seen: std::collections::HashSet<Vec<u8>>,
}

impl LocalView {
    fn new(setup: &SessionSetup) -> Self {
        Self { transcript: Transcript::new(setup, false), seen: Default::default() }
    }

    fn record(&mut self, msg: Message) {
        if self.seen.insert(msg.to_wire()) {
            self.transcript.push(now_ms(), msg);
        }
    }
}

fn audit(cli: &Cli, a: &AuditArgs) -> Outcome {
    let mut views = Vec::new();
    for path in &a.files {
        let text = read_text(path)?;
        let t = Transcript::parse(&text).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", path.display())))?;
        views.push(t);
    }
    if let [single] = views.as_slice() {
        let report = audit_transcript(single).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
        if cli.json {
            print_json(&report);
        } else {
            print!("{report}");
        }
        return Ok(report.verdict.exit_code());
    }
    let multi = audit_views(&views).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    if cli.json {
        print_json(&multi);
    } else {
        for (path, report) in a.files.iter().zip(&multi.reports) {
            println!("== {}", path.display());
            print!("{report}");
        }
        println!("== cross-view");
        for f in &multi.cross_findings {
            println!("finding: {f}");
        }
        println!("overall verdict: {}", multi.verdict);
    }
    Ok(multi.verdict.exit_code())
}

fn run_simulation(cli: &Cli, a: &SimulateArgs) -> Outcome {
    let setup = load_setup(&a.spec)?;
    let config = SimConfig {
        trials: a.trials,
        seed: a.seed,
        adversary: Adversary { colluders: a.colluders, fixed_share: a.fixed_share },
    };
    let report = simulate(&setup, &config).map_err(|e| Failure::new(EXIT_FAILURE, e.to_string()))?;
    if let Some(b) = report.banner() {
        eprintln!("{b}");
    }
    if cli.json {
        print_json(&report);
    } else {
        print!("{report}");
    }
    Ok(EXIT_OK)
}

fn serve(cli: &Cli, a: &ServeArgs) -> Outcome {
    let config = ServeConfig { bind: a.bind, data_dir: a.data_dir.clone(), timeout_secs: cli.timeout_secs };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::new(EXIT_FAILURE, e.to_string()))?;
    runtime
        .block_on(async {
            let (addr, server) = crate::relay::bind(&config).await?;
            println!("listening on http://{addr}");
            let _ = std::io::stdout().flush();
            server.await
        })
        .map_err(|e| Failure::new(EXIT_FAILURE, e.to_string()))?;
    Ok(EXIT_OK)
}

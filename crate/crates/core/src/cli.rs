//! Command-line front end (`csketch`).

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::engine::{AppConfig, Engine, IngestReport};
use crate::model::UserId;
use crate::streamgen::{generate, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

const DEFAULT_DATA_DIR: &str = "csketch-data";
const LOCK_FILE: &str = ".lock";

#[derive(Debug, Parser)]
#[command(
    name = "csketch",
    version,
    about = "Streaming contact-graph sketch for contact tracing"
)]
struct Cli {
    /// Data directory (CSKETCH_DATA takes precedence)
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create an empty store from a configuration file
    Init {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Process device streams from files, directories or a TCP listener
    Ingest {
        paths: Vec<PathBuf>,
        #[arg(long, value_name = "HOST:PORT", conflicts_with = "paths")]
        listen: Option<String>,
        /// Stop after this many connections
        #[arg(long, requires = "listen")]
        max_connections: Option<u64>,
        #[arg(long)]
        json: bool,
    },
    /// Trace contacts of newly infected users
    Trace {
        #[arg(long, value_delimiter = ',', required = true)]
        infected: Vec<UserId>,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        levels: u32,
        #[arg(long)]
        json: bool,
    },
    /// Report infection clusters
    Clusters {
        #[arg(long)]
        json: bool,
    },
    /// Report store statistics and space estimates
    Stats {
        #[arg(long)]
        json: bool,
    },
    /// Remove edges with no contact left in the window
    Sweep,
    /// Start a new virtual-ID epoch
    Rotate {
        #[arg(long)]
        seed: u64,
    },
    /// Generate synthetic streams and their ground truth from a scenario
    Gen { scenario: PathBuf, outdir: PathBuf },
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl<E: Into<crate::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: EXIT_DATA,
            message: e.into().to_string(),
        }
    }
}

fn data_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_DATA,
        message: message.into(),
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let data = std::env::var_os("CSKETCH_DATA")
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or(cli.data)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR));
    let mut out = io::stdout().lock();
    match dispatch(cli.command, &data, &mut out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = out.flush();
            eprintln!("csketch: {}", f.message);
            f.code
        }
    }
}

/// Exclusive hold on a data directory, released on drop.
struct DirLock(PathBuf);

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| data_error(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DirLock(path))
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(data_error(format!(
                "data directory {} is locked by another process (remove {} if it is stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(data_error(format!("cannot lock {}: {e}", dir.display()))),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn load(dir: &Path) -> Result<Engine, Failure> {
    if !Engine::exists(dir) {
        return Err(data_error(format!(
            "no store in {}; run `csketch init` first",
            dir.display()
        )));
    }
    Ok(Engine::load(dir)?)
}

fn dispatch(cmd: Command, data: &Path, out: &mut dyn Write) -> Result<(), Failure> {
    match cmd {
        Command::Gen { scenario, outdir } => cmd_gen(&scenario, &outdir, out),
        Command::Init { config, force } => {
            let _lock = DirLock::acquire(data)?;
            cmd_init(&config, force, data, out)
        }
        Command::Ingest {
            paths,
            listen,
            max_connections,
            json,
        } => {
            let _lock = DirLock::acquire(data)?;
            let mut engine = load(data)?;
            let report = match listen {
                Some(addr) => cmd_listen(engine, &addr, max_connections, data, out)?,
                None => {
                    let report = ingest_paths(&mut engine, &paths)?;
                    engine.save(data)?;
                    report
                }
            };
            print_report(&report, json, out)
        }
        Command::Trace { infected, levels, json } => {
            let _lock = DirLock::acquire(data)?;
            let mut engine = load(data)?;
            engine.trace(&infected, levels)?;
            engine.save(data)?;
            print_trace(&engine, json, out)
        }
        Command::Clusters { json } => {
            let _lock = DirLock::acquire(data)?;
            let mut engine = load(data)?;
            print_clusters(&mut engine, json, out)
        }
        Command::Stats { json } => {
            let _lock = DirLock::acquire(data)?;
            let mut engine = load(data)?;
            print_stats(&mut engine, json, out)
        }
        Command::Sweep => {
            let _lock = DirLock::acquire(data)?;
            let mut engine = load(data)?;
            let freed = engine.sweep();
            engine.save(data)?;
            writeln!(out, "{freed} edges expired").map_err(io_failure)
        }
        Command::Rotate { seed } => {
            let _lock = DirLock::acquire(data)?;
            let mut engine = load(data)?;
            let epoch = engine.rotate_ids(seed);
            engine.save(data)?;
            writeln!(out, "epoch {epoch}").map_err(io_failure)
        }
    }
}

fn io_failure(e: io::Error) -> Failure {
    data_error(format!("write failed: {e}"))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let raw = fs::read(path).map_err(|e| data_error(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&raw).map_err(|e| data_error(format!("{}: {e}", path.display())))
}

fn cmd_init(config: &Path, force: bool, data: &Path, out: &mut dyn Write) -> Result<(), Failure> {
    let app: AppConfig = read_json(config)?;
    let engine = Engine::new(app)?;
    if Engine::exists(data) && !force {
        return Err(data_error(format!(
            "a store already exists in {}; pass --force to replace it",
            data.display()
        )));
    }
    engine.save(data)?;
    let cfg = engine.config();
    writeln!(
        out,
        "initialized {}: N={} q={} n={} rho={}",
        data.display(),
        cfg.population(),
        cfg.q(),
        cfg.n(),
        cfg.rho()
    )
    .map_err(io_failure)
}

/// Files in argument order; a directory contributes its files sorted by name.
fn expand_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| data_error(format!("{}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            inner.sort();
            files.extend(inner);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn ingest_paths(engine: &mut Engine, paths: &[PathBuf]) -> Result<IngestReport, Failure> {
    let mut report = IngestReport::default();
    for path in expand_paths(paths)? {
        let bytes = fs::read(&path).map_err(|e| data_error(format!("{}: {e}", path.display())))?;
        let mut r = engine.ingest_bytes(&bytes);
        for e in &mut r.errors {
            *e = format!("{}: {e}", path.display());
        }
        report.absorb(r);
    }
    Ok(report)
}

/// Reads one stream from a connection: everything up to and including the
/// end record, or up to EOF.
fn read_stream(conn: &TcpStream) -> io::Result<Vec<u8>> {
    let mut reader = BufReader::new(conn);
    let mut buf = Vec::new();
    loop {
        let start = buf.len();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        let line = buf[start..].trim_ascii_end();
        if line == b"E" {
            break;
        }
    }
    Ok(buf)
}

fn cmd_listen(
    engine: Engine,
    addr: &str,
    max_connections: Option<u64>,
    data: &Path,
    out: &mut dyn Write,
) -> Result<IngestReport, Failure> {
    let listener = TcpListener::bind(addr).map_err(|e| data_error(format!("cannot listen on {addr}: {e}")))?;
    let local = listener.local_addr().map_err(io_failure)?;
    writeln!(out, "listening on {local}").map_err(io_failure)?;
    out.flush().map_err(io_failure)?;

    let shared = Arc::new(Mutex::new((engine, IngestReport::default())));
    let data = data.to_path_buf();
    let mut handles = Vec::new();
    let mut accepted = 0u64;
    for conn in listener.incoming() {
        let conn = match conn {
            Ok(c) => c,
            Err(e) => {
                eprintln!("csketch: accept failed: {e}");
                continue;
            }
        };
        let shared = Arc::clone(&shared);
        let data = data.clone();
        handles.push(std::thread::spawn(move || serve(conn, &shared, &data)));
        accepted += 1;
        if max_connections.is_some_and(|m| accepted >= m) {
            break;
        }
    }
    for h in handles {
        let _ = h.join();
    }
    let (engine, report) = Arc::try_unwrap(shared)
        .map_err(|_| data_error("listener threads still running"))?
        .into_inner()
        .map_err(|_| data_error("engine lock poisoned"))?;
    engine.save(&data)?;
    Ok(report)
}

fn serve(mut conn: TcpStream, shared: &Mutex<(Engine, IngestReport)>, data: &Path) {
    let peer = conn.peer_addr().map(|a| a.to_string()).unwrap_or_default();
    let reply = match read_stream(&conn) {
        Ok(bytes) => {
            let mut guard = match shared.lock() {
                Ok(g) => g,
                Err(p) => p.into_inner(),
            };
            let (engine, total) = &mut *guard;
            let report = engine.ingest_bytes(&bytes);
            if let Err(e) = engine.save(data) {
                eprintln!("csketch: saving after {peer} failed: {e}");
            }
            let line = serde_json::to_string(&report).unwrap_or_default();
            total.absorb(report);
            line
        }
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    };
    let _ = writeln!(conn, "{reply}");
    let _ = conn.flush();
}

fn print_report(report: &IngestReport, json: bool, out: &mut dyn Write) -> Result<(), Failure> {
    if json {
        let s = serde_json::to_string(report).map_err(|e| data_error(e.to_string()))?;
        return writeln!(out, "{s}").map_err(io_failure);
    }
    let w = |out: &mut dyn Write| -> io::Result<()> {
        writeln!(out, "streams            {}", report.streams)?;
        writeln!(out, "samples            {}", report.samples)?;
        writeln!(out, "gaps               {}", report.gaps)?;
        writeln!(out, "contactsInstalled  {}", report.contacts_installed)?;
        writeln!(out, "contactsStale      {}", report.contacts_stale)?;
        writeln!(out, "edgesCreated       {}", report.edges_created)?;
        writeln!(out, "edgesExpired       {}", report.edges_expired)?;
        writeln!(out, "parseErrors        {}", report.parse_errors)?;
        writeln!(out, "sampleErrors       {}", report.sample_errors)?;
        for e in &report.errors {
            writeln!(out, "  {e}")?;
        }
        Ok(())
    };
    w(out).map_err(io_failure)
}

fn print_trace(engine: &Engine, json: bool, out: &mut dyn Write) -> Result<(), Failure> {
    let r = engine.trace_state();
    let w = |out: &mut dyn Write| -> io::Result<()> {
        if json {
            for e in &r.gamma {
                writeln!(
                    out,
                    "{}",
                    json!({ "user": e.user, "level": e.level, "via": e.via, "source": e.source })
                )?;
            }
            for e in &r.chi {
                writeln!(out, "{}", json!({ "from": e.from, "to": e.to }))?;
            }
            return Ok(());
        }
        for &src in &r.infected {
            let list: Vec<String> = r
                .gamma_of(src)
                .iter()
                .map(|e| format!("{}.{}", e.user, e.level))
                .collect();
            writeln!(out, "gamma {src}: {{{}}}", list.join(", "))?;
        }
        for &src in &r.infected {
            let ids: Vec<UserId> = r.gamma_of(src).iter().map(|e| e.user).collect();
            let edges: Vec<String> = r
                .chi
                .iter()
                .filter(|e| ids.contains(&e.to))
                .map(|e| format!("({},{})", e.from, e.to))
                .collect();
            writeln!(out, "chi {src}: {{{}}}", edges.join(", "))?;
        }
        Ok(())
    };
    w(out).map_err(io_failure)
}

fn print_clusters(engine: &mut Engine, json: bool, out: &mut dyn Write) -> Result<(), Failure> {
    let clusters = engine.clusters();
    let w = |out: &mut dyn Write| -> io::Result<()> {
        if json {
            for c in &clusters {
                writeln!(out, "{}", serde_json::to_string(c).unwrap_or_default())?;
            }
            return Ok(());
        }
        writeln!(out, "{} clusters", clusters.len())?;
        for c in &clusters {
            let names = |v: &[UserId]| v.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(",");
            let edges: Vec<String> = c.edges.iter().map(|e| format!("({},{})", e.from, e.to)).collect();
            writeln!(
                out,
                "root {} size {} infected [{}] suspected [{}] edges {}",
                c.root,
                c.size,
                names(&c.infected_members),
                names(&c.suspected_members),
                edges.join(" ")
            )?;
        }
        Ok(())
    };
    w(out).map_err(io_failure)
}

fn print_stats(engine: &mut Engine, json: bool, out: &mut dyn Write) -> Result<(), Failure> {
    let s = engine.stats()?;
    let cfg = engine.config().clone();
    let w = |out: &mut dyn Write| -> io::Result<()> {
        if json {
            return writeln!(out, "{}", serde_json::to_string(&s).unwrap_or_default());
        }
        writeln!(out, "users              {}", s.graph.users)?;
        writeln!(out, "edges              {}", s.graph.edges)?;
        writeln!(
            out,
            "vector cells       {} ({} vacant)",
            s.graph.vector_cells, s.graph.vacant_cells
        )?;
        writeln!(out, "overflow records   {}", s.graph.overflow_records)?;
        match s.graph.now {
            Some(now) => writeln!(out, "current slot       {now}")?,
            None => writeln!(out, "current slot       none")?,
        }
        writeln!(out, "id epoch           {}", s.epoch)?;
        writeln!(out, "infected           {}", s.infected)?;
        writeln!(out, "suspected          {}", s.suspected)?;
        writeln!(out, "clusters           {}", s.clusters)?;
        writeln!(
            out,
            "space estimate     N={} q={} n={}: \u{2248}{:.1} GB",
            cfg.population(),
            cfg.q(),
            cfg.n(),
            s.space_estimate_gb
        )?;
        let r = &s.reference_estimate;
        writeln!(
            out,
            "space estimate     N={} q={} n={}: \u{2248}{:.1} GB",
            r.users, r.q, r.n, r.gb
        )
    };
    w(out).map_err(io_failure)
}

fn cmd_gen(scenario: &Path, outdir: &Path, out: &mut dyn Write) -> Result<(), Failure> {
    let sc: Scenario = read_json(scenario)?;
    let generated = generate(&sc)?;
    let streams_dir = outdir.join("streams");
    fs::create_dir_all(&streams_dir).map_err(|e| data_error(format!("{}: {e}", streams_dir.display())))?;
    let width = generated.streams.len().saturating_sub(1).to_string().len();
    for (user, text) in &generated.streams {
        let path = streams_dir.join(format!("P{:0width$}.txt", user.0));
        fs::write(&path, text).map_err(|e| data_error(format!("{}: {e}", path.display())))?;
    }
    let write_json = |name: &str, value: &serde_json::Value| -> Result<(), Failure> {
        let path = outdir.join(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| data_error(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| data_error(format!("{}: {e}", path.display())))
    };
    let app = AppConfig {
        trace: sc.config.clone(),
        ids: sc.ids,
        sweep: Default::default(),
    };
    write_json(
        "config.json",
        &serde_json::to_value(&app).map_err(|e| data_error(e.to_string()))?,
    )?;
    write_json(
        "truth.json",
        &serde_json::to_value(&generated.truth).map_err(|e| data_error(e.to_string()))?,
    )?;
    writeln!(
        out,
        "wrote {} streams ({} samples, {} gaps) to {}",
        generated.streams.len(),
        generated.truth.samples,
        generated.truth.gaps,
        streams_dir.display()
    )
    .map_err(io_failure)
}

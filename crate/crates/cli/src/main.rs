//! `fedweaver` command-line tool.
//!
//! Exit codes: 0 success, 1 internal or input error, 2 failed expectation,
//! blocking model finding or rejected metadata.

mod keys;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use fedweaver_core::fimsm::{gap_report, load_model, validate_model};
use fedweaver_core::scenario::{load_scenario, run_scenario};
use fedweaver_core::trust::{verify_metadata, Registry};
use fedweaver_core::Tick;

#[derive(Parser)]
#[command(name = "fedweaver", version, about = "Federated identity management testbed")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and check its expectations.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the audit trace (JSON lines) to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Print the report as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Check a layer model against the conformance rules.
    Validate {
        model: PathBuf,
        /// Print a remediation report grouped by layer.
        #[arg(long)]
        report: bool,
    },
    /// Federation metadata operations.
    Metadata {
        #[command(subcommand)]
        command: MetadataCommand,
    },
}

#[derive(Subcommand)]
enum MetadataCommand {
    /// Sign the members of a registry file into a metadata aggregate.
    Aggregate {
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Operator secret key. Without it a new key pair is written next to
        /// the output as `<out>.key` and `<out>.pub`.
        #[arg(long)]
        key: Option<PathBuf>,
        /// Logical time the aggregate becomes valid.
        #[arg(long, default_value_t = 0)]
        now: u64,
        /// Ticks the aggregate stays valid.
        #[arg(long, default_value_t = 1000)]
        validity: u64,
    },
    /// Verify a signed aggregate against the operator's public key.
    Verify {
        file: PathBuf,
        #[arg(long)]
        key: PathBuf,
        /// Logical time to check the validity window at.
        #[arg(long, default_value_t = 0)]
        now: u64,
    },
    /// Create an operator key pair `<out>.key` / `<out>.pub`.
    Keygen {
        #[arg(long)]
        out: PathBuf,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn run(scenario: &Path, seed: u64, trace: Option<&Path>, json: bool) -> Result<u8> {
    let config = load_scenario(scenario)?;
    let mut report = run_scenario(&config, seed)?;
    if let Some(path) = trace {
        write(path, &report.trace.to_text())?;
        report.trace_path = Some(path.display().to_string());
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.render());
    }
    Ok(report.exit_code() as u8)
}

fn validate(path: &Path, report: bool) -> Result<u8> {
    let model = load_model(&read(path)?).with_context(|| format!("{} is not a valid model", path.display()))?;
    let findings = validate_model(&model);
    if report {
        print!("{}", gap_report(&model));
    } else if findings.is_empty() {
        println!("no findings");
    } else {
        for f in &findings {
            println!("{}", f.summary_line());
        }
    }
    Ok(if findings.iter().any(|f| f.is_blocking()) { 2 } else { 0 })
}

fn aggregate(registry: &Path, out: &Path, key: Option<&Path>, now: u64, validity: u64) -> Result<u8> {
    let mut registry: Registry =
        toml::from_str(&read(registry)?).with_context(|| format!("{} is not a registry", registry.display()))?;
    registry.validate()?;
    let key = match key {
        Some(path) => keys::read_secret(&read(path)?)?,
        None => {
            let pair = keys::generate();
            let (secret, public) = (with_suffix(out, ".key"), with_suffix(out, ".pub"));
            write(&secret, &keys::secret_file(&pair))?;
            write(&public, &keys::public_file(&pair.public_key()))?;
            eprintln!("new operator key: {} (public {})", secret.display(), public.display());
            pair
        }
    };
    let metadata = registry.aggregate_metadata(&key, Tick(now), validity)?;
    write(out, &metadata.to_wire())?;
    println!(
        "federation {} serial {} with {} member(s), valid {}..{}",
        metadata.federation_id,
        metadata.serial,
        metadata.members.len(),
        metadata.valid_from,
        metadata.valid_until
    );
    Ok(0)
}

fn verify(file: &Path, key: &Path, now: u64) -> Result<u8> {
    let key = keys::read_public(&read(key)?)?;
    let blob = std::fs::read(file).with_context(|| format!("cannot read {}", file.display()))?;
    match verify_metadata(&blob, &key, Tick(now)) {
        Ok(md) => {
            println!("valid: federation {} serial {}", md.federation_id, md.serial);
            for m in &md.members {
                let roles: Vec<String> = m.roles.iter().map(|r| format!("{r:?}").to_lowercase()).collect();
                println!("  {} [{}] loa {}", m.entity_id, roles.join(","), m.loa);
            }
            Ok(0)
        }
        Err(e) => {
            println!("rejected: {e}");
            Ok(2)
        }
    }
}

fn keygen(out: &Path) -> Result<u8> {
    let pair = keys::generate();
    let (secret, public) = (with_suffix(out, ".key"), with_suffix(out, ".pub"));
    if secret.exists() {
        bail!("{} already exists", secret.display());
    }
    write(&secret, &keys::secret_file(&pair))?;
    write(&public, &keys::public_file(&pair.public_key()))?;
    println!("{}\n{}", secret.display(), public.display());
    Ok(0)
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            trace,
            json,
        } => run(&scenario, seed, trace.as_deref(), json),
        Command::Validate { model, report } => validate(&model, report),
        Command::Metadata { command } => match command {
            MetadataCommand::Aggregate {
                registry,
                out,
                key,
                now,
                validity,
            } => aggregate(&registry, &out, key.as_deref(), now, validity),
            MetadataCommand::Verify { file, key, now } => verify(&file, &key, now),
            MetadataCommand::Keygen { out } => keygen(&out),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

//! Command-line front end: validation, deferred acceptance, stability
//! analysis, condition checks, counterexample construction, and claim
//! re-verification over JSON instance documents.
//!
//! Exit codes: 0 when the requested check passes or the command succeeds,
//! 1 when a verification fails or a checked matching turns out unstable,
//! 2 on unreadable or invalid input.

use std::path::{Path, PathBuf};
use std::process::exit;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use couplematch::dpda::{run_dpda, Trace};
use couplematch::model::{
    matching_cap, validate_instance, Instance, Matching, ValidationMode, ValidationReport,
};
use couplematch::prefs::{
    check_diversity_aversion, check_extreme_altruism, concretize, AltruismViolation,
    DiversityViolation,
};
use couplematch::stability::{enumerate_stable, find_blocks, Block};
use couplematch::theorems::{
    counterexample_from_altruism_violation, counterexample_from_diversity_violation,
    verify_claim, Budget, BuildError, ClaimId, CounterexampleReport, WitnessReport,
};

#[derive(Parser)]
#[command(
    name = "couplematch",
    version,
    about = "Many-to-one stable matching with couples: deferred acceptance, \
             stability analysis, and no-stable-matching constructions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// How strictly to validate instances before running.
    #[arg(long, value_enum, default_value_t = Mode::Strict, global = true)]
    mode: Mode,

    /// Output format on standard output.
    #[arg(long, value_enum, default_value_t = Output::Text, global = true)]
    output: Output,

    /// Seed for any sampled preference completion.
    #[arg(long, default_value_t = 0, global = true)]
    seed: u64,

    /// Cap on brute-force matching enumeration (overrides MATCHING_CAP).
    #[arg(long, global = true)]
    matching_cap: Option<u64>,

    /// Cap on preference-completion enumeration (overrides EXTENSION_CAP).
    #[arg(long, global = true)]
    extension_cap: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Strict,
    Relaxed,
}

impl Mode {
    fn validation(self) -> ValidationMode {
        match self {
            Mode::Strict => ValidationMode::Strict,
            Mode::Relaxed => ValidationMode::Relaxed,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Output {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance document and print the validation report.
    Validate { instance: PathBuf },

    /// Run doctor-proposing deferred acceptance and print the matching.
    Dpda {
        instance: PathBuf,
        /// Also print the round-by-round proposal/hold/rejection log.
        #[arg(long)]
        trace: bool,
    },

    /// Report every block of a proposed matching (exit 1 if any exist).
    CheckStability {
        instance: PathBuf,
        /// Matching document: JSON map from doctor to hospital or "@".
        matching: PathBuf,
    },

    /// Enumerate all stable matchings by brute force.
    FindStable { instance: PathBuf },

    /// Report extreme-altruism and diversity-aversion violations.
    /// Finding witnesses is success: the exit code stays 0.
    CheckConditions { instance: PathBuf },

    /// Build a market with no stable matching from a violating instance.
    BuildCounterexample {
        #[arg(value_enum)]
        kind: Kind,
        instance: PathBuf,
        /// Write the constructed instance here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Re-verify one of the bundled reference markets.
    Repro {
        #[arg(value_enum)]
        market: Market,
    },

    /// Re-verify a named claim, or "all" of them.
    Verify {
        /// A claim name as listed by `verify --help`, or "all".
        claim: String,
        /// Instances to sweep (claim-specific default when omitted).
        #[arg(long)]
        instances: Option<u64>,
        /// Preference completions per instance (claim-specific default).
        #[arg(long)]
        extensions: Option<u64>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    /// Seed from the first extreme-altruism violation.
    Altruism,
    /// Seed from the first diversity-aversion violation.
    Diversity,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Market {
    /// Three hospitals, one couple, no stable matching.
    ThreeHospital,
    /// One overcrowded hospital, eleven feasible matchings, none stable.
    Crowding,
    /// Two hospitals whose split assignment survives every completion.
    SplitCouple,
}

impl Market {
    fn claim(self) -> ClaimId {
        match self {
            Market::ThreeHospital => ClaimId::ThreeHospitalExample,
            Market::Crowding => ClaimId::FrozenCounts,
            Market::SplitCouple => ClaimId::SplitCoupleExample,
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Some(cap) = cli.matching_cap {
        std::env::set_var("MATCHING_CAP", cap.to_string());
    }
    if let Some(cap) = cli.extension_cap {
        std::env::set_var("EXTENSION_CAP", cap.to_string());
    }
    match run(&cli) {
        Ok(code) => exit(code),
        Err(message) => {
            eprintln!("error: {message}");
            exit(2);
        }
    }
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

/// Load an instance, refusing documents that fail validation in the
/// requested mode. Warnings go to standard error and do not block.
fn load_instance(path: &Path, mode: Mode) -> Result<Instance, String> {
    let inst = Instance::from_json(&read(path)?)
        .map_err(|e| format!("cannot parse {}: {e}", path.display()))?;
    let report = validate_instance(&inst, mode.validation());
    if !report.is_valid() {
        return Err(format!(
            "instance {} is not valid:\n{}",
            path.display(),
            report.render()
        ));
    }
    for issue in &report.issues {
        eprintln!("warning[{}]: {}", issue.code, issue.message);
    }
    Ok(inst)
}

/// Write one line to standard output, ignoring a closed pipe so commands
/// compose with `head` and friends.
fn print_line(s: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{s}");
}

fn emit<T: Serialize>(output: Output, value: &T, text: impl FnOnce() -> String) {
    match output {
        Output::Json => print_line(
            &serde_json::to_string_pretty(value).expect("reports always serialize"),
        ),
        Output::Text => print_line(&text()),
    }
}

fn matching_text(m: &Matching) -> String {
    m.assignment
        .iter()
        .map(|(d, p)| format!("{d} -> {p}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn run(cli: &Cli) -> Result<i32, String> {
    match &cli.command {
        Command::Validate { instance } => {
            let inst = Instance::from_json(&read(instance)?)
                .map_err(|e| format!("cannot parse {}: {e}", instance.display()))?;
            let report = validate_instance(&inst, cli.mode.validation());

            #[derive(Serialize)]
            struct Out<'a> {
                valid: bool,
                #[serde(flatten)]
                report: &'a ValidationReport,
            }
            let valid = report.is_valid();
            emit(
                cli.output,
                &Out {
                    valid,
                    report: &report,
                },
                || report.render(),
            );
            Ok(if valid { 0 } else { 1 })
        }

        Command::Dpda { instance, trace } => {
            let inst = load_instance(instance, cli.mode)?;
            let (matching, log) = run_dpda(&inst).map_err(|e| e.to_string())?;

            #[derive(Serialize)]
            struct Out<'a> {
                matching: &'a Matching,
                #[serde(skip_serializing_if = "Option::is_none")]
                trace: Option<&'a Trace>,
            }
            emit(
                cli.output,
                &Out {
                    matching: &matching,
                    trace: trace.then_some(&log),
                },
                || {
                    let mut s = matching_text(&matching);
                    if *trace {
                        s.push_str("\n\n");
                        s.push_str(&log.render());
                    }
                    s
                },
            );
            Ok(0)
        }

        Command::CheckStability { instance, matching } => {
            let inst = load_instance(instance, cli.mode)?;
            let inst = concretize(&inst, Some(cli.seed)).map_err(|e| e.to_string())?;
            let proposed = Matching::from_json(&read(matching)?)
                .map_err(|e| format!("cannot parse {}: {e}", matching.display()))?;
            let blocks = find_blocks(&proposed, &inst).map_err(|e| e.to_string())?;

            #[derive(Serialize)]
            struct Out<'a> {
                stable: bool,
                blocks: &'a [Block],
            }
            emit(
                cli.output,
                &Out {
                    stable: blocks.is_empty(),
                    blocks: &blocks,
                },
                || {
                    if blocks.is_empty() {
                        "stable: no blocks found".to_string()
                    } else {
                        let mut lines = vec![format!("unstable: {} block(s)", blocks.len())];
                        for b in &blocks {
                            lines.push(format!(
                                "  {}",
                                serde_json::to_string(b).expect("blocks serialize")
                            ));
                        }
                        lines.join("\n")
                    }
                },
            );
            Ok(if blocks.is_empty() { 0 } else { 1 })
        }

        Command::FindStable { instance } => {
            let inst = load_instance(instance, cli.mode)?;
            let inst = concretize(&inst, Some(cli.seed)).map_err(|e| e.to_string())?;
            let stable = enumerate_stable(&inst, matching_cap()).map_err(|e| e.to_string())?;

            #[derive(Serialize)]
            struct Out<'a> {
                count: usize,
                matchings: &'a [Matching],
            }
            emit(
                cli.output,
                &Out {
                    count: stable.len(),
                    matchings: &stable,
                },
                || {
                    let mut lines = vec![format!("stable matchings: {}", stable.len())];
                    for (i, m) in stable.iter().enumerate() {
                        lines.push(format!("--- matching {} ---", i + 1));
                        lines.push(matching_text(m));
                    }
                    lines.join("\n")
                },
            );
            Ok(0)
        }

        Command::CheckConditions { instance } => {
            let inst = load_instance(instance, cli.mode)?;
            let inst = concretize(&inst, Some(cli.seed)).map_err(|e| e.to_string())?;
            let altruism = check_extreme_altruism(&inst).map_err(|e| e.to_string())?;
            let diversity = check_diversity_aversion(&inst).map_err(|e| e.to_string())?;

            #[derive(Serialize)]
            struct Out<'a> {
                extreme_altruism: &'a [AltruismViolation],
                diversity_aversion: &'a [DiversityViolation],
            }
            emit(
                cli.output,
                &Out {
                    extreme_altruism: &altruism,
                    diversity_aversion: &diversity,
                },
                || {
                    let mut lines = vec![format!(
                        "extreme altruism: {} violation(s)",
                        altruism.len()
                    )];
                    for v in &altruism {
                        lines.push(format!(
                            "  {}",
                            serde_json::to_string(v).expect("violations serialize")
                        ));
                    }
                    lines.push(format!(
                        "aversion to couple diversity: {} violation(s)",
                        diversity.len()
                    ));
                    for v in &diversity {
                        lines.push(format!(
                            "  {}",
                            serde_json::to_string(v).expect("violations serialize")
                        ));
                    }
                    lines.join("\n")
                },
            );
            Ok(0)
        }

        Command::BuildCounterexample {
            kind,
            instance,
            out,
        } => {
            let inst = load_instance(instance, cli.mode)?;
            let inst = concretize(&inst, Some(cli.seed)).map_err(|e| e.to_string())?;
            let built = match kind {
                Kind::Altruism => counterexample_from_altruism_violation(&inst),
                Kind::Diversity => counterexample_from_diversity_violation(&inst),
            };
            let (market, report) = match built {
                Ok(pair) => pair,
                Err(
                    e @ (BuildError::NoViolation
                    | BuildError::NoUsableWitness { .. }
                    | BuildError::InsufficientDoctors { .. }),
                ) => {
                    eprintln!("cannot build: {e}");
                    return Ok(1);
                }
                Err(e) => return Err(e.to_string()),
            };
            if let Some(path) = out {
                std::fs::write(path, market.to_json() + "\n")
                    .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            }

            #[derive(Serialize)]
            struct Out<'a> {
                report: &'a CounterexampleReport,
                instance: &'a Instance,
            }
            match cli.output {
                Output::Json => emit(
                    cli.output,
                    &Out {
                        report: &report,
                        instance: &market,
                    },
                    String::new,
                ),
                Output::Text => {
                    eprintln!("{report}");
                    if out.is_none() {
                        print_line(&market.to_json());
                    }
                }
            }
            Ok(0)
        }

        Command::Repro { market } => {
            let report = verify_claim(market.claim(), &Budget::default(), cli.seed);
            finish_verification(cli.output, &[report])
        }

        Command::Verify {
            claim,
            instances,
            extensions,
        } => {
            let budget = Budget {
                instances: *instances,
                extensions: *extensions,
            };
            let reports: Vec<WitnessReport> = if claim == "all" {
                ClaimId::ALL
                    .into_iter()
                    .map(|c| verify_claim(c, &budget, cli.seed))
                    .collect()
            } else {
                let id: ClaimId = claim.parse()?;
                vec![verify_claim(id, &budget, cli.seed)]
            };
            finish_verification(cli.output, &reports)
        }
    }
}

fn finish_verification(output: Output, reports: &[WitnessReport]) -> Result<i32, String> {
    emit(output, &reports, || {
        reports
            .iter()
            .map(WitnessReport::render)
            .collect::<Vec<_>>()
            .join("\n")
    });
    Ok(if reports.iter().all(WitnessReport::passed) {
        0
    } else {
        1
    })
}

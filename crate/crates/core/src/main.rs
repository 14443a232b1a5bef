//! Command-line driver: boundary tables, verification sweeps, family
//! diagnostics, and one-off oracle / Monte Carlo queries.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bigjump::cli::{self, ExperimentConfig};
use bigjump::dist::{make_family, StandardizeMode, StepDistribution};
use bigjump::error::{Error, Result};
use bigjump::lattice::{self, GridSpec, SpillMode};
use bigjump::mc;
use bigjump::seqs::{self, BoundaryOptions, Provenance};

#[derive(Parser)]
#[command(name = "bigjump", version, about = "Big-jump domain laboratory for heavy-tailed random walks")]
struct Args {
    /// Master seed for Monte Carlo subcommands
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores); output never depends on this
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory for reports and traces
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Assertion mode: exit 4 when configured checks fail
    #[arg(long, global = true)]
    check: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print boundary sets as JSON
    Boundary {
        /// Family spec, e.g. pareto:alpha=2.5,x_min=1
        #[arg(long)]
        family: String,
        /// none | full | center
        #[arg(long, default_value = "none")]
        standardize: String,
        /// Walk lengths
        #[arg(long, value_delimiter = ',')]
        n: Vec<u32>,
        /// prop_8_1 .. prop_9_3, heuristic_24, corollary_2_1
        #[arg(long)]
        provenance: String,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        tol_i: Option<f64>,
        #[arg(long)]
        multiplier: Option<f64>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        a: Option<f64>,
        /// Window width T ("inf" for global tails)
        #[arg(long, default_value = "inf")]
        window: String,
    },
    /// Run a verification sweep from a config file
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// csv | json | both
        #[arg(long, default_value = "both")]
        format: String,
    },
    /// Regular-variation and subexponentiality diagnostics for a family
    Diagnose {
        #[arg(long)]
        family: String,
        #[arg(long, default_value = "none")]
        standardize: String,
        #[arg(long, default_value = "inf")]
        window: String,
    },
    /// One-off exact lattice query for P{S_n in (x, x+T]}
    Oracle {
        #[arg(long)]
        family: String,
        #[arg(long, default_value = "none")]
        standardize: String,
        #[arg(long)]
        n: u32,
        #[arg(long, allow_negative_numbers = true)]
        x: f64,
        #[arg(long, default_value = "inf")]
        window: String,
        #[arg(long)]
        delta: f64,
        #[arg(long, allow_negative_numbers = true)]
        lo: f64,
        #[arg(long, allow_negative_numbers = true)]
        hi: f64,
        /// strict | bound
        #[arg(long, default_value = "strict")]
        spill: String,
    },
    /// One-off Monte Carlo estimate
    Mc {
        #[arg(long)]
        family: String,
        #[arg(long, default_value = "none")]
        standardize: String,
        /// plain | big_jump_cmc | tilted_restricted
        #[arg(long)]
        method: String,
        #[arg(long)]
        n: u32,
        #[arg(long, allow_negative_numbers = true)]
        x: f64,
        #[arg(long, default_value = "inf")]
        window: String,
        /// Truncation level for the tilted estimator
        #[arg(long)]
        h: Option<f64>,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
    },
}

/// Parses `name:key=val,key=val`; lattice atoms as `atoms=v:m|v:m`.
fn parse_family(spec: &str, standardize: &str) -> Result<StepDistribution> {
    let (name, rest) = match spec.split_once(':') {
        Some((n, r)) => (n, r),
        None => (spec, ""),
    };
    let d = if name == "lattice" {
        let mut atoms = Vec::new();
        for part in rest.split(',') {
            let Some(body) = part.strip_prefix("atoms=") else {
                return Err(Error::Config {
                    field: "family".into(),
                    msg: format!("lattice expects atoms=v:m|v:m, got `{part}`"),
                });
            };
            for pair in body.split('|') {
                let (v, m) = pair.split_once(':').ok_or_else(|| Error::Config {
                    field: "family".into(),
                    msg: format!("bad atom `{pair}`"),
                })?;
                atoms.push((
                    v.parse().map_err(|_| Error::Config {
                        field: "family".into(),
                        msg: format!("bad atom value `{v}`"),
                    })?,
                    m.parse().map_err(|_| Error::Config {
                        field: "family".into(),
                        msg: format!("bad atom mass `{m}`"),
                    })?,
                ));
            }
        }
        StepDistribution::lattice(atoms)?
    } else {
        let mut params = BTreeMap::new();
        if !rest.is_empty() {
            for part in rest.split(',') {
                let (k, v) = part.split_once('=').ok_or_else(|| Error::Config {
                    field: "family".into(),
                    msg: format!("expected key=value, got `{part}`"),
                })?;
                params.insert(
                    k.trim().to_string(),
                    v.trim().parse::<f64>().map_err(|_| Error::Config {
                        field: "family".into(),
                        msg: format!("bad number `{v}`"),
                    })?,
                );
            }
        }
        make_family(name, &params)?
    };
    let mode = match standardize {
        "none" => StandardizeMode::None,
        "full" => StandardizeMode::Full,
        "center" => StandardizeMode::CenterOnly,
        other => {
            return Err(Error::Config {
                field: "standardize".into(),
                msg: format!("unknown mode `{other}`"),
            })
        }
    };
    d.standardize(mode)
}

fn parse_window(s: &str) -> Result<f64> {
    if s == "inf" || s == "infinity" {
        Ok(f64::INFINITY)
    } else {
        s.parse().map_err(|_| Error::Config {
            field: "window".into(),
            msg: format!("bad window `{s}`"),
        })
    }
}

fn run(args: Args) -> Result<i32> {
    match args.cmd {
        Cmd::Boundary {
            family,
            standardize,
            n,
            provenance,
            t,
            epsilon,
            gamma,
            tol_i,
            multiplier,
            kappa,
            a,
            window,
        } => {
            let d = parse_family(&family, &standardize)?;
            let prov = Provenance::parse(&provenance)?;
            let mut opts = BoundaryOptions {
                t_window: parse_window(&window)?,
                ..Default::default()
            };
            if let Some(v) = t {
                opts.t = v;
            }
            if let Some(v) = epsilon {
                opts.epsilon = v;
            }
            if let Some(v) = gamma {
                opts.gamma = v;
            }
            if let Some(v) = tol_i {
                opts.tol_i = v;
            }
            if let Some(v) = multiplier {
                opts.multiplier = v;
            }
            if let Some(v) = kappa {
                opts.kappa = v;
            }
            if let Some(v) = a {
                opts.a_lin = v;
            }
            let sets: Vec<_> = n
                .iter()
                .map(|&n| seqs::boundary(&d, n, prov, &opts))
                .collect::<Result<_>>()?;
            println!("{}", serde_json::to_string_pretty(&sets).unwrap());
            Ok(0)
        }
        Cmd::Verify { config, format } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            let report = cli::run_experiment(&cfg)?;
            let formats: Vec<&str> = match format.as_str() {
                "both" => vec!["csv", "json"],
                f => vec![f],
            };
            let written = cli::emit(&report, &args.out, &formats)?;
            for p in &written {
                eprintln!("wrote {}", p.display());
            }
            for s in &report.summary {
                println!(
                    "n = {:>6}: sup |ratio - 1| over x >= x_n = {:.6}",
                    s.n, s.sup_ratio_dev
                );
            }
            if args.check {
                if let Some(limit) = cfg.check_sup {
                    let worst = report
                        .summary
                        .iter()
                        .map(|s| s.sup_ratio_dev)
                        .fold(0.0f64, f64::max);
                    if worst > limit {
                        eprintln!("check failed: sup ratio deviation {worst:.6} > {limit:.6}");
                        return Ok(4);
                    }
                }
            }
            Ok(0)
        }
        Cmd::Diagnose {
            family,
            standardize,
            window,
        } => {
            let d = parse_family(&family, &standardize)?;
            let bundle = cli::diagnose(&d, parse_window(&window)?)?;
            let written = cli::emit_diagnostics(&bundle, &args.out)?;
            for p in &written {
                eprintln!("wrote {}", p.display());
            }
            for v in &bundle.verdicts {
                println!("{v}");
            }
            Ok(0)
        }
        Cmd::Oracle {
            family,
            standardize,
            n,
            x,
            window,
            delta,
            lo,
            hi,
            spill,
        } => {
            let d = parse_family(&family, &standardize)?;
            let t = parse_window(&window)?;
            let mode = match spill.as_str() {
                "strict" => SpillMode::Strict,
                "bound" => SpillMode::Bound,
                other => {
                    return Err(Error::Config {
                        field: "spill".into(),
                        msg: format!("unknown mode `{other}`"),
                    })
                }
            };
            let pmf = lattice::discretize(&d, GridSpec { delta, lo, hi })?;
            let law = lattice::nfold_split(&pmf, n, lo, hi, None)?;
            let bracket = law.tail_table().window_prob(x, t, mode)?;
            let nwm = n as f64 * d.window_mass(x, t);
            println!(
                "{}",
                serde_json::json!({
                    "n": n,
                    "x": x,
                    "p": bracket.point,
                    "p_lower": bracket.lower,
                    "p_upper": bracket.upper,
                    "n_window_mass": nwm,
                    "ratio": bracket.point / nwm,
                })
            );
            Ok(0)
        }
        Cmd::Mc {
            family,
            standardize,
            method,
            n,
            x,
            window,
            h,
            samples,
        } => {
            let d = parse_family(&family, &standardize)?;
            let t = parse_window(&window)?;
            let seed = args.seed.unwrap_or(1);
            let result = match method.as_str() {
                "plain" => mc::plain_tail(&d, n, x, t, samples, seed)?,
                "big_jump_cmc" => mc::big_jump_cmc(&d, n, x, samples, seed)?,
                "tilted_restricted" => {
                    let h = h.ok_or_else(|| Error::Config {
                        field: "h".into(),
                        msg: "tilted_restricted needs --h".into(),
                    })?;
                    mc::tilted_restricted(&d, h, n, x, t, samples, seed)?
                }
                other => {
                    return Err(Error::Config {
                        field: "method".into(),
                        msg: format!("unknown method `{other}`"),
                    })
                }
            };
            println!("{}", result.to_json());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    match run(args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gamma_lab::discrete_energy::{anneal_minimize, AnnealSchedule};
use gamma_lab::domain::{sample_iid, DensityModel, Domain};
use gamma_lab::experiments::{self, ExperimentConfig};
use gamma_lab::kernels::{alpha_d, RadialProfile};
use gamma_lab::oracle;
use gamma_lab::transport::{match_bottleneck, match_pcost, tlp_distance, DiscreteMeasure, MatchMethod};

#[derive(Parser)]
#[command(name = "gamma-lab", version, about = "Discrete-to-continuum interaction energy laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write rows.csv, summary.json and runtimes.csv.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config, including the delta scaling rule.
    Validate { config: PathBuf },
    /// Compare a fast solver with brute force on random small instances.
    Oracle {
        case: OracleCase,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of random instances.
        #[arg(long, default_value_t = 20)]
        instances: usize,
        /// Points per side (at most 9 for permutations, 14 points for labels).
        #[arg(long, default_value_t = 6)]
        size: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleCase {
    Pcost,
    Bottleneck,
    Tlp,
    Labels,
    Alpha,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> gamma_lab::Result<ExitCode> {
    match command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = experiments::run(&cfg)?;
            let dir = out.or(cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("gamma-lab-out"));
            report.write_outputs(&dir)?;
            println!("{}", serde_json::to_string_pretty(&report.summary)?);
            eprintln!("wrote {} rows to {}", report.rows.len(), dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let text = std::fs::read_to_string(&config)?;
            let cfg: ExperimentConfig = serde_json::from_str(&text)?;
            match cfg.validate() {
                Ok(()) => {
                    println!("ok: {} valid", config.display());
                    Ok(ExitCode::SUCCESS)
                }
                Err(gamma_lab::Error::Config(msgs)) => {
                    for m in msgs {
                        println!("invalid: {m}");
                    }
                    Ok(ExitCode::from(1))
                }
                Err(e) => Err(e),
            }
        }
        Command::Oracle { case, seed, instances, size } => run_oracle(case, seed, instances, size),
    }
}

fn random_measure(rng: &mut ChaCha8Rng, m: usize) -> gamma_lab::Result<DiscreteMeasure> {
    let pts: Vec<f64> = (0..2 * m).map(|_| rng.gen::<f64>()).collect();
    DiscreteMeasure::uniform(2, pts)
}

fn run_oracle(case: OracleCase, seed: u64, instances: usize, size: usize) -> gamma_lab::Result<ExitCode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..instances {
        let (fast, brute) = match case {
            OracleCase::Pcost => {
                let (a, b) = (random_measure(&mut rng, size)?, random_measure(&mut rng, size)?);
                let p = 1.0 + rng.gen::<f64>() * 2.0;
                (match_pcost(&a, &b, p, &MatchMethod::Exact)?.cost, oracle::brute_pcost(&a, &b, p)?)
            }
            OracleCase::Bottleneck => {
                let (a, b) = (random_measure(&mut rng, size)?, random_measure(&mut rng, size)?);
                (match_bottleneck(&a, &b)?.1, oracle::brute_bottleneck(&a, &b)?)
            }
            OracleCase::Tlp => {
                let (a, b) = (random_measure(&mut rng, size)?, random_measure(&mut rng, size)?);
                let f: Vec<f64> = (0..size).map(|_| rng.gen()).collect();
                let g: Vec<f64> = (0..size).map(|_| rng.gen()).collect();
                (tlp_distance(&a, &f, &b, &g, 1.0)?, oracle::brute_tlp(&a, &f, &b, &g, 1.0)?)
            }
            OracleCase::Labels => {
                let model = DensityModel::uniform(Domain::unit(2)?);
                let cloud = sample_iid(&model, size, seed.wrapping_add(k as u64))?;
                let profile = RadialProfile::unit_step();
                let count = (size / 4).max(1);
                let exact = oracle::exhaustive_class_minimum(&cloud, 0.4, 1.0, &profile, count)?.0;
                let schedule = AnnealSchedule { t0: 2.0, ratio: 0.9995, steps: 16_000 };
                let found = anneal_minimize(&cloud, 0.4, 1.0, &profile, count, count, &schedule, seed + k as u64)?;
                (found.best_energy, exact)
            }
            OracleCase::Alpha => {
                let d = 2 + k % 4;
                let profile = RadialProfile::unit_step();
                (alpha_d(&profile, d)?, oracle::alpha_d_quadrature(&profile, d)?)
            }
        };
        let rel = (fast - brute).abs() / brute.abs().max(1e-300);
        worst = worst.max(rel);
        println!("instance {k}: solver {fast:.15e} oracle {brute:.15e} relative gap {rel:.3e}");
    }
    println!("worst relative gap {worst:.3e}");
    let tol = match case {
        OracleCase::Labels => 0.05,
        _ => 1e-9,
    };
    Ok(if worst <= tol { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

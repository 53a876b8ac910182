use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use setobs_core::detectability::{check_detectability, DetectabilityReport, Verdict};
use setobs_core::residual::{threshold_table, ThresholdPolicy};
use setobs_core::scenario::output::{thresholds_csv, write_run, RunReport};
use setobs_core::scenario::{load_config, simulate, Outcome, Prepared};
use setobs_core::sdp::{assemble_sdp, Branch, SdpParameters};
use setobs_core::{Error, Result};

#[derive(Parser)]
#[command(name = "setobs", version, about = "Set-valued mode, state and unknown-input estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the scenario and run the estimator.
    Run {
        /// Config file, or the name of a bundled scenario.
        #[arg(long)]
        config: String,
        /// Overrides the noise seed; also mixed into the input seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Offline mode-detectability analysis.
    CheckDetectability {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes the gain-synthesis SDP of one mode, one file per branch.
    ExportSdp {
        #[arg(long)]
        config: String,
        /// One-based mode index.
        #[arg(long)]
        mode: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        eps1: f64,
        #[arg(long, default_value_t = 1.0)]
        eps2: f64,
    },
    /// Prints the residual thresholds of one mode.
    Thresholds {
        #[arg(long)]
        config: String,
        /// One-based mode index.
        #[arg(long)]
        mode: usize,
        #[arg(long)]
        kmax: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(out: Option<PathBuf>, fallback: Option<&Path>, name: &str) -> PathBuf {
    out.or_else(|| fallback.map(Path::to_path_buf)).unwrap_or_else(|| PathBuf::from("out").join(name))
}

fn mode_index(mode: usize, count: usize) -> Result<usize> {
    if mode == 0 || mode > count {
        return Err(Error::Config(format!("mode {mode} out of range 1..={count}")));
    }
    Ok(mode - 1)
}

fn detectability_text(r: &DetectabilityReport) -> String {
    let mut s = String::new();
    for st in &r.steady {
        s += &format!(
            "mode {}: steady delta_tri {}, settled at {}, analytic bound {}\n",
            st.mode + 1,
            st.steady_tri.map_or("none".into(), |v| format!("{v:.6}")),
            st.settled_at.map_or("-".into(), |k| k.to_string()),
            st.analytic_bound.map_or("none".into(), |v| format!("{v:.6}"))
        );
    }
    match &r.condition_i {
        None => s += "condition (i): not applicable, trajectory bounds not configured\n",
        Some(pairs) => {
            for p in pairs {
                s += &format!(
                    "condition (i) modes {}-{}: sigma_min(W) {}, required {}, {}{}\n",
                    p.q + 1,
                    p.q2 + 1,
                    p.sigma_min_w.map_or("none".into(), |v| format!("{v:.6}")),
                    p.rhs.map_or("none".into(), |v| format!("{v:.6}")),
                    if p.passes { "pass" } else { "fail" },
                    p.note.as_ref().map_or(String::new(), |n| format!(" ({n})"))
                );
            }
        }
    }
    let c2 = &r.condition_ii;
    for p in &c2.t2_distinct_pairs {
        s += &format!(
            "condition (ii) T2 modes {}-{}: distance {}, {}\n",
            p.q + 1,
            p.q2 + 1,
            p.distance.map_or("shapes differ".into(), |v| format!("{v:.3e}")),
            if p.distinct { "distinct" } else { "equal" }
        );
    }
    for (q, ((j, ok), (h, hb))) in c2
        .jacobian_norm
        .iter()
        .zip(&c2.jacobian_norm_ok)
        .zip(c2.hessian_bound.iter().zip(&c2.hessian_bounded))
        .enumerate()
    {
        s += &format!("condition (ii) mode {}: |J_f(0)| {j:.6} ({}), Hessian bound {h:.6} ({})\n", q + 1, ok, hb);
    }
    s += &format!("condition (ii) structural checks: {}\n", if c2.structural_pass { "pass" } else { "fail" });
    s += "condition (ii) also requires an unknown input of unlimited energy\n";
    s += &format!(
        "verdict: {}\n",
        match r.overall {
            Verdict::Pass => "pass",
            Verdict::Conditional => "conditional",
            Verdict::Fail => "fail",
        }
    );
    s
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let cfg = load_config(&config)?;
            let name = cfg.name.clone().unwrap_or_else(|| "scenario".into());
            let dir = out_dir(out, cfg.output_dir.as_deref(), &name);
            let prepared = Prepared::new(cfg)?;
            let art = simulate(&prepared, seed)?;
            write_run(&prepared, &art, &dir)?;
            print!("{}", RunReport::new(&art).to_text());
            println!("outputs written to {}", dir.display());
            Ok(match art.outcome {
                Outcome::Completed => ExitCode::SUCCESS,
                Outcome::ModelMismatch { .. } => ExitCode::from(Error::ModelMismatch { step: 0 }.exit_code()),
            })
        }
        Command::CheckDetectability { config, out } => {
            let prepared = Prepared::new(load_config(&config)?)?;
            let report = check_detectability(&prepared.system, &prepared.decompositions, &prepared.gains)?;
            let text = detectability_text(&report);
            print!("{text}");
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("detectability.txt"), &text)?;
                let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Numerical(e.to_string()))?;
                fs::write(dir.join("detectability.json"), json)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ExportSdp { config, mode, out, alpha, eps1, eps2 } => {
            let mut cfg = load_config(&config)?;
            cfg.allow_uncertified = true;
            let name = cfg.name.clone().unwrap_or_else(|| "scenario".into());
            let system = cfg.build_system()?;
            let q = mode_index(mode, system.mode_count())?;
            let dec = setobs_core::decomposition::decompose(&system.modes[q])?;
            let gains = setobs_core::gains::synthesize_gains(q, &system.modes[q], &dec, system.noise[q], None)?;
            let params = SdpParameters { alpha, eps1, eps2, ..SdpParameters::default() };
            let dir = out_dir(out, None, &name);
            fs::create_dir_all(&dir)?;
            for (branch, tag) in [(Branch::A, "A"), (Branch::B, "B")] {
                let sdp = assemble_sdp(&system.modes[q], &dec, &gains, &params, branch)?;
                let path = dir.join(format!("sdp_q{mode}_branch_{tag}.dat-s"));
                fs::write(&path, sdp.write_sdpa())?;
                println!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Thresholds { config, mode, kmax, out } => {
            if kmax == 0 {
                return Err(Error::ZeroHorizon);
            }
            let mut cfg = load_config(&config)?;
            cfg.allow_uncertified = true;
            let system = cfg.build_system()?;
            let q = mode_index(mode, system.mode_count())?;
            let decs = system
                .modes
                .iter()
                .map(setobs_core::decomposition::decompose)
                .collect::<Result<Vec<_>>>()?;
            let gains = setobs_core::scenario::runner::build_gains(&cfg, &system, &decs)?;
            let policy = ThresholdPolicy { max_vertices: cfg.inf_bound_max_vertices, use_vertex_bound: true };
            let table = threshold_table(&gains[q], &decs[q], system.delta_x0, kmax, &policy)?;
            let csv = thresholds_csv(&table);
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir)?;
                    fs::write(dir.join(format!("thresholds_q{mode}.csv")), &csv)?;
                }
                None => print!("{csv}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

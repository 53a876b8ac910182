//! CSV logs, threshold tables, reports and plot data.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::runner::{Outcome, Prepared, RunArtifacts, Violations};
use crate::error::Result;
use crate::gains::GainSummary;
use crate::residual::ThresholdTable;

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn opt_vec(v: Option<&Vec<f64>>, len: usize) -> Vec<String> {
    match v {
        Some(v) => v.iter().map(f64::to_string).collect(),
        None => vec![String::new(); len],
    }
}

fn indexed(prefix: &str, len: usize, suffix: &str) -> Vec<String> {
    if len == 1 {
        vec![format!("{prefix}{suffix}")]
    } else {
        (1..=len).map(|i| format!("{prefix}{i}{suffix}")).collect()
    }
}

/// One row per step: `k, x.., d.., surv_count`, then per mode
/// `r, tri, inf, hat, elim, xhat.., dx, dhat.., dd`. `d` is `d_{k-1}`;
/// missing values are empty fields.
pub fn steps_csv(prepared: &Prepared, art: &RunArtifacts) -> String {
    let sys = &prepared.system;
    let n = sys.modes[0].dims().n;
    let p_true = sys.modes[art.true_mode].dims().p;
    let mut head: Vec<String> = vec!["k".into()];
    head.extend((1..=n).map(|i| format!("x{i}")));
    head.extend(indexed("d", p_true, ""));
    head.push("surv_count".into());
    for (q, mode) in sys.modes.iter().enumerate() {
        let s = format!("_{}", q + 1);
        for c in ["r", "tri", "inf", "hat", "elim"] {
            head.push(format!("{c}{s}"));
        }
        head.extend((1..=n).map(|i| format!("xhat{i}{s}")));
        head.push(format!("dx{s}"));
        head.extend(indexed("dhat", mode.dims().p, &s));
        head.push(format!("dd{s}"));
    }
    let mut out = head.join(",");
    out.push('\n');
    for st in &art.steps {
        let mut row: Vec<String> = vec![st.k.to_string()];
        row.extend(st.x.iter().map(f64::to_string));
        row.extend(opt_vec(st.d_prev.as_ref(), p_true));
        row.push(st.surviving.to_string());
        for (q, m) in st.modes.iter().enumerate() {
            row.push(opt(m.residual));
            row.push(opt(m.delta_tri));
            row.push(opt(m.delta_inf));
            row.push(opt(m.delta_hat));
            row.push(u8::from(m.eliminated).to_string());
            row.extend(opt_vec(m.x_hat.as_ref(), n));
            row.push(opt(m.delta_x));
            row.extend(opt_vec(m.d_hat.as_ref(), sys.modes[q].dims().p));
            row.push(opt(m.delta_d));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn thresholds_csv(table: &ThresholdTable<f64>) -> String {
    let mut out = String::from("k,delta_tri,delta_inf,delta_hat,eta_t,vertices,capped,state_radius\n");
    for r in &table.reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.k,
            r.delta_tri,
            opt(r.delta_inf),
            r.delta_hat,
            r.eta_t,
            r.vertices_enumerated,
            u8::from(r.capped),
            table.state_radii.get(r.k).copied().unwrap_or(f64::NAN)
        );
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub name: String,
    pub noise_seed: u64,
    pub true_mode: usize,
    pub horizon: usize,
    pub steps_completed: usize,
    pub outcome: String,
    pub mismatch_step: Option<usize>,
    pub guaranteed: bool,
    pub surviving: Vec<usize>,
    /// One-based mode -> elimination step.
    pub eliminated_at: Vec<(usize, usize)>,
    pub violations: Violations,
    pub gains: Vec<GainSummary>,
}

impl RunReport {
    pub fn new(art: &RunArtifacts) -> Self {
        let (outcome, mismatch_step) = match art.outcome {
            Outcome::Completed => ("completed".to_string(), None),
            Outcome::ModelMismatch { step } => ("model_mismatch".to_string(), Some(step)),
        };
        RunReport {
            name: art.name.clone(),
            noise_seed: art.noise_seed,
            true_mode: art.true_mode + 1,
            horizon: art.horizon,
            steps_completed: art.steps.last().map_or(0, |s| s.k),
            outcome,
            mismatch_step,
            guaranteed: art.guaranteed,
            surviving: art.modes.surviving.iter().map(|q| q + 1).collect(),
            eliminated_at: art.modes.eliminated_at.iter().map(|(&q, &k)| (q + 1, k)).collect(),
            violations: art.violations(),
            gains: art.gains.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario: {}", self.name);
        let _ = writeln!(s, "noise seed: {}", self.noise_seed);
        let _ = writeln!(s, "true mode: {}", self.true_mode);
        let _ = writeln!(s, "steps: {} of {}", self.steps_completed, self.horizon);
        let _ = writeln!(s, "outcome: {}", self.outcome);
        if let Some(k) = self.mismatch_step {
            let _ = writeln!(s, "model mismatch at step {k}: no mode is consistent with the data");
        }
        if !self.guaranteed {
            let _ = writeln!(s, "warning: some gains are uncertified, radii are not guaranteed");
        }
        let surv: Vec<String> = self.surviving.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "surviving modes: {{{}}}", surv.join(", "));
        for (q, k) in &self.eliminated_at {
            let _ = writeln!(s, "mode {q} eliminated at step {k}");
        }
        let v = &self.violations;
        let _ = writeln!(
            s,
            "true-mode violations: eliminated {}, state radius {}, input radius {}, threshold {}",
            v.true_mode_eliminated, v.state_radius, v.input_radius, v.threshold
        );
        for (q, g) in self.gains.iter().enumerate() {
            let _ = writeln!(
                s,
                "mode {}: theta {:.6}, eta_bar {:.6}, certified {}, steady radius {}",
                q + 1,
                g.theta,
                g.eta_bar,
                g.certified,
                g.steady_state_radius.map_or("none".into(), |r| format!("{r:.6}"))
            );
        }
        s
    }
}

fn write(dir: &Path, name: &str, content: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, content)?;
    files.push(p);
    Ok(())
}

/// Writes every run artifact into `dir` and returns the file paths.
pub fn write_run(prepared: &Prepared, art: &RunArtifacts, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    write(dir, "steps.csv", &steps_csv(prepared, art), &mut files)?;
    for (q, t) in prepared.thresholds.iter().enumerate() {
        write(dir, &format!("thresholds_q{}.csv", q + 1), &thresholds_csv(t), &mut files)?;
    }
    let report = RunReport::new(art);
    write(dir, "report.txt", &report.to_text(), &mut files)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| crate::Error::Numerical(e.to_string()))?;
    write(dir, "report.json", &json, &mut files)?;
    for (name, content) in plot_data(prepared, art) {
        write(dir, &name, &content, &mut files)?;
    }
    Ok(files)
}

/// Whitespace-separated series and a gnuplot script drawing them.
pub fn plot_data(prepared: &Prepared, art: &RunArtifacts) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let nq = prepared.system.mode_count();
    for q in 0..nq {
        let mut s = String::from("# k residual delta_tri delta_inf delta_hat\n");
        for st in art.steps.iter().skip(1) {
            let m = &st.modes[q];
            if m.residual.is_none() {
                continue;
            }
            let f = |v: Option<f64>| v.map_or_else(|| "NaN".to_string(), |x| x.to_string());
            let _ = writeln!(s, "{} {} {} {} {}", st.k, f(m.residual), f(m.delta_tri), f(m.delta_inf), f(m.delta_hat));
        }
        out.push((format!("residual_q{}.dat", q + 1), s));
    }
    let mut s = String::from("# k surviving\n");
    for st in &art.steps {
        let _ = writeln!(s, "{} {}", st.k, st.surviving);
    }
    out.push(("surviving.dat".into(), s));

    let mut s = String::from("# k x.. center.. radius\n");
    for st in &art.steps {
        if let Some(b) = &st.fused.state_bound {
            let xs: Vec<String> = st.x.iter().chain(&b.center).map(f64::to_string).collect();
            let _ = writeln!(s, "{} {} {}", st.k, xs.join(" "), b.radius);
        }
    }
    out.push(("state.dat".into(), s));

    let mut s = String::from("# k d(k-1).. center.. radius\n");
    for st in &art.steps {
        if let (Some(b), Some(d)) = (&st.fused.input_bound, &st.d_prev) {
            if b.center.len() == d.len() {
                let ds: Vec<String> = d.iter().chain(&b.center).map(f64::to_string).collect();
                let _ = writeln!(s, "{} {} {}", st.k - 1, ds.join(" "), b.radius);
            }
        }
    }
    out.push(("input.dat".into(), s));

    let n = prepared.system.modes[0].dims().n;
    let mut gp = String::from("set terminal pngcairo size 1000,700\n");
    gp.push_str("set output 'surviving.png'\nset xlabel 'k'\nset ylabel 'surviving modes'\n");
    gp.push_str("plot 'surviving.dat' using 1:2 with steps title 'surviving'\n");
    for q in 1..=nq {
        let _ = write!(
            gp,
            "set output 'residual_q{q}.png'\nset logscale y\nplot 'residual_q{q}.dat' using 1:2 with lines title '|r|', \
             '' using 1:3 with lines title 'tri', '' using 1:4 with lines title 'inf', '' using 1:5 with lines title 'hat'\n\
             unset logscale y\n"
        );
    }
    for i in 0..n {
        let (c_true, c_ctr, c_rad) = (i + 2, n + i + 2, 2 * n + 2);
        let _ = write!(
            gp,
            "set output 'state_x{}.png'\nplot 'state.dat' using 1:{c_true} with lines title 'x{}', \
             '' using 1:(${c_ctr}-${c_rad}):(${c_ctr}+${c_rad}) with filledcurves fs transparent solid 0.3 title 'ball'\n",
            i + 1,
            i + 1
        );
    }
    out.push(("plot.gp".into(), gp));
    out
}

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ocpkit::bench::{
    perf_profile, perf_ratios, run_matrix, write_profile_csv, BenchConfig, BenchmarkResult, Obstacle, R_M,
};
use ocpkit::nlp::{InteriorPoint, SolveOptions};
use ocpkit::plot::{Plot, Series};
use serde::Deserialize;

use crate::manifest::{create_dir, read_problem, relative_to, RunManifest};
use crate::Outcome;

#[derive(clap::Args)]
pub struct BenchArgs {
    suite: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Run cells on worker threads.
    #[arg(long)]
    parallel: bool,
    /// Use fidelities 2..=102 with three repetitions.
    #[arg(long)]
    full: bool,
}

#[derive(clap::Args)]
pub struct ProfileArgs {
    /// Result files written by `bench`.
    #[arg(required = true)]
    results: Vec<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Γ window `lo:hi`; may be repeated.
    #[arg(long = "window")]
    windows: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Suite {
    problem: PathBuf,
    solvers: Option<Vec<String>>,
    p_min: Option<usize>,
    p_max: Option<usize>,
    reps: Option<usize>,
    obstacle: Option<Obstacle>,
    #[serde(default)]
    options: SolveOptions,
}

pub fn run_bench(a: BenchArgs) -> Result<Outcome> {
    let text = fs::read_to_string(&a.suite).with_context(|| format!("reading {}", a.suite.display()))?;
    let suite: Suite = toml::from_str(&text).with_context(|| format!("{}", a.suite.display()))?;
    let problem = relative_to(&a.suite, &suite.problem);
    let ocp = read_problem(&problem)?;

    let base = if a.full { BenchConfig::full() } else { BenchConfig::default() };
    let lo = suite.p_min.unwrap_or(base.fidelities[0]);
    let hi = suite.p_max.unwrap_or(*base.fidelities.last().unwrap());
    if lo < 2 || hi < lo {
        bail!("fidelities must satisfy 2 <= p_min <= p_max");
    }
    let cfg = BenchConfig {
        solvers: suite.solvers.unwrap_or(base.solvers),
        fidelities: if a.full { base.fidelities } else { (lo..=hi).collect() },
        reps: if a.full { base.reps } else { suite.reps.unwrap_or(base.reps) },
        options: suite.options,
        parallel: a.parallel,
    };
    let result = run_matrix(&ocp, suite.obstacle.as_ref(), &InteriorPoint, &cfg)?;

    create_dir(&a.out)?;
    result.write_csv(BufWriter::new(File::create(a.out.join("results.csv"))?))?;
    RunManifest::new("bench", vec![a.suite.clone(), problem], &cfg, &a.out).write()?;
    for (s, row) in result.solvers.iter().zip(&result.times) {
        let solved = row.iter().filter(|t| !t.is_nan()).count();
        println!("{s}: {solved}/{} cells solved", row.len());
    }
    Ok(Outcome::Done)
}

fn parse_window(w: &str) -> Result<(f64, f64)> {
    let (lo, hi) = w.split_once(':').with_context(|| format!("window `{w}` is not lo:hi"))?;
    let (lo, hi): (f64, f64) = (lo.trim().parse()?, hi.trim().parse()?);
    if !(lo >= 1.0 && hi > lo) {
        bail!("window `{w}` needs 1 <= lo < hi");
    }
    Ok((lo, hi))
}

/// Γ values where some profile steps, plus the window ends.
fn breakpoints(ratios: &[Vec<f64>], lo: f64, hi: f64) -> Vec<f64> {
    let mut g: Vec<f64> = ratios.iter().flatten().copied().filter(|&r| r > lo && r < hi).collect();
    g.push(lo);
    g.push(hi);
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

pub fn run_profile(a: ProfileArgs) -> Result<Outcome> {
    let windows = if a.windows.is_empty() {
        vec![(1.0, 2.0), (1.0, 5.0), (1.0, 20.0), (1.0, 100.0)]
    } else {
        a.windows.iter().map(|w| parse_window(w)).collect::<Result<_>>()?
    };
    let mut runs = Vec::new();
    for path in &a.results {
        let f = File::open(path).with_context(|| format!("reading {}", path.display()))?;
        runs.extend(BenchmarkResult::read_csv(BufReader::new(f)).with_context(|| format!("{}", path.display()))?);
    }
    if runs.is_empty() {
        bail!("no benchmark runs in the input files");
    }
    let result = BenchmarkResult::from_runs(runs);
    let ratios = perf_ratios(&result);

    create_dir(&a.out)?;
    let all = breakpoints(&ratios, 1.0, R_M);
    write_profile_csv(
        BufWriter::new(File::create(a.out.join("profile.csv"))?),
        &result.solvers,
        &all,
        &perf_profile(&ratios, &all),
    )?;
    for (k, &(lo, hi)) in windows.iter().enumerate() {
        let g = breakpoints(&ratios, lo, hi);
        let prof = perf_profile(&ratios, &g);
        write_window(&a.out, k, &result.solvers, &g, &prof, (lo, hi))?;
    }
    RunManifest::new("profile", a.results.clone(), &windows, &a.out).write()?;
    let at_one = perf_profile(&ratios, &[1.0]);
    for (s, p) in result.solvers.iter().zip(&at_one) {
        println!("{s}: fastest on {:.1}% of problems", 100.0 * p[0]);
    }
    Ok(Outcome::Done)
}

fn write_window(out: &Path, k: usize, solvers: &[String], g: &[f64], prof: &[Vec<f64>], range: (f64, f64)) -> Result<()> {
    write_profile_csv(BufWriter::new(File::create(out.join(format!("profile_w{k}.csv")))?), solvers, g, prof)?;
    let mut plot = Plot::new(format!("performance profile, {} <= Γ <= {}", range.0, range.1), "Γ", "P(r <= Γ)");
    plot.x_range = Some(range);
    plot.y_range = Some((0.0, 1.05));
    for (s, p) in solvers.iter().zip(prof) {
        plot.series.push(Series::new(s, g.iter().copied().zip(p.iter().copied()).collect()).steps());
    }
    fs::write(out.join(format!("profile_w{k}.svg")), plot.to_svg())?;
    Ok(())
}

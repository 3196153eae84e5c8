use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use dynperc::dynamics::run_observable_series;
use dynperc::estimators::{integrated_tau, AutocorrEstimate, WindowRule};
use dynperc::query::{
    corollary_bounds, exact_report, monte_carlo_report, revealment_exact, ss_bound_check, BoundSlack, CorollaryBounds,
    McOptions, RevealmentReport,
};
use dynperc::spectral::{spectral_weights_from_table, truth_table};
use dynperc::tree_exact::{write_tree_table, TreeRow};
use dynperc::verify::{run_suite, CriterionReport, VerifyOptions};
use dynperc::{Error, LatticeDescriptor};
use serde::Serialize;

use crate::config::{
    build_lattice, check_p, config_error, config_hash, require_seed, Mode, RevealmentConfig, SimulateConfig,
    SpectrumConfig, TreeExactConfig,
};

/// Whether the run met its numeric targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    NumericFailure,
}

pub struct Output {
    dir: PathBuf,
    header: Vec<String>,
}

impl Output {
    pub fn new<T: Serialize>(dir: &Path, command: &str, config: &T) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            header: vec![format!(
                "dynperc {} {command} config_sha256={}",
                env!("CARGO_PKG_VERSION"),
                config_hash(config)
            )],
        })
    }

    fn header(&self) -> &[String] {
        &self.header
    }

    fn write(&self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        let mut out = BufWriter::new(file);
        body(&mut out)
            .and_then(|_| out.flush())
            .with_context(|| format!("cannot write {}", path.display()))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<()> {
        self.write(name, |out| {
            serde_json::to_writer_pretty(&mut *out, value)?;
            writeln!(out)
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

pub fn tree_exact(config: &TreeExactConfig, out: &Path) -> anyhow::Result<Outcome> {
    let LatticeDescriptor::Tree { depth } = config.lattice else {
        return Err(config_error("lattice: tree-exact needs a tree lattice"));
    };
    let ps = config.p.values();
    for &p in &ps {
        check_p(p, "p")?;
    }
    let depths = config.depths.clone().unwrap_or_else(|| (1..=depth).collect());
    if depths.contains(&0) {
        return Err(config_error("depths: every depth must be at least 1"));
    }
    let mut rows = Vec::with_capacity(ps.len() * depths.len());
    for &p in &ps {
        for &n in &depths {
            rows.push(TreeRow::compute(p, n)?);
        }
    }
    let output = Output::new(out, "tree-exact", config)?;
    output.write("tree_exact.csv", |w| write_tree_table(w, &rows, output.header()))?;
    Ok(Outcome::Success)
}

#[derive(Debug, Serialize)]
struct SpectrumSummary {
    num_bits: usize,
    p: f64,
    mean: f64,
    variance: f64,
    weight_total: f64,
    mean_level: f64,
    tau: f64,
    tau_per_bit: f64,
    tau_continuous: f64,
}

pub fn spectrum(config: &SpectrumConfig, out: &Path) -> anyhow::Result<Outcome> {
    let measure = check_p(config.p, "p")?;
    if config.times.iter().any(|t| !(*t >= 0.0)) {
        return Err(config_error("times: must be nonnegative"));
    }
    let lattice = build_lattice(&config.lattice)?;
    let f = config.observable.build(&lattice, measure)?;
    let n = lattice.num_edges();
    let table = truth_table(&f, n, config.cap)?;
    let weights = spectral_weights_from_table(&table, n, &measure, config.method.into())?;
    let mean = table
        .iter()
        .enumerate()
        .map(|(mask, v)| v * measure.mask_prob(mask as u64, n))
        .sum();

    let output = Output::new(out, "spectrum", config)?;
    let mut header = output.header().to_vec();
    header.push(format!("lattice={} p={}", config.lattice, config.p));
    output.write("spectrum_weights.csv", |w| weights.write_csv(w, &header))?;
    output.write("spectrum_rho.csv", |w| {
        for line in &header {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "s,rho")?;
        for &s in &config.lags {
            writeln!(w, "{s},{}", weights.rho_discrete(s))?;
        }
        Ok(())
    })?;
    output.write("spectrum_rho_continuous.csv", |w| {
        for line in &header {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "t,rho")?;
        for &t in &config.times {
            writeln!(w, "{t},{}", weights.rho_continuous(t))?;
        }
        Ok(())
    })?;
    output.json(
        "spectrum_summary.json",
        &SpectrumSummary {
            num_bits: n,
            p: config.p,
            mean,
            variance: weights.variance(),
            weight_total: weights.total(),
            mean_level: weights.mean(),
            tau: weights.tau_discrete(),
            tau_per_bit: weights.tau_discrete_per_bit(),
            tau_continuous: weights.tau_continuous(),
        },
    )?;
    Ok(Outcome::Success)
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    seed: u64,
    steps: usize,
    mean: f64,
    constant_observable: bool,
    estimate: Option<AutocorrEstimate>,
}

pub fn simulate(config: &SimulateConfig, out: &Path) -> anyhow::Result<Outcome> {
    let measure = check_p(config.p, "p")?;
    let seed = require_seed(config.seed)?;
    if config.steps < 1000 {
        return Err(config_error(format!("steps: need at least 1000, got {}", config.steps)));
    }
    if !(config.window_c > 0.0) {
        return Err(config_error("window_c: must be positive"));
    }
    let lattice = build_lattice(&config.lattice)?;
    let mut f = config.observable.build(&lattice, measure)?;
    let output = Output::new(out, "simulate", config)?;
    let series = run_observable_series(&lattice, &measure, &mut f, config.steps, seed)?;
    if config.write_series {
        output.write("series.csv", |w| series.write_csv(w, output.header()))?;
    }
    let rule = WindowRule {
        c: config.window_c,
        max_lag: config.max_lag,
        report_lags: config.report_lags,
    };
    let mean = series.values.iter().sum::<f64>() / series.len() as f64;
    let estimate = match integrated_tau(&series.values, rule) {
        Ok(e) => Some(e),
        Err(Error::ConstantSeries) => None,
        Err(e) => return Err(e.into()),
    };
    if let Some(e) = &estimate {
        output.write("autocorr_rho.csv", |w| e.write_rho_csv(w, output.header()))?;
        output.write("autocorr_summary.csv", |w| e.write_summary_csv(w, output.header()))?;
    }
    output.json(
        "autocorr.json",
        &SimulateSummary {
            seed,
            steps: config.steps,
            mean,
            constant_observable: estimate.is_none(),
            estimate,
        },
    )?;
    Ok(Outcome::Success)
}

#[derive(Debug, Serialize)]
struct BoundSummary {
    /// Every level satisfies `P(W = k) <= 2 eps + 2 delta k`.
    holds: bool,
    min_slack: f64,
    corollary: Option<CorollaryBounds>,
    exact_tau: f64,
    rows: Vec<BoundSlack>,
}

pub fn revealment(config: &RevealmentConfig, out: &Path) -> anyhow::Result<Outcome> {
    let measure = check_p(config.p, "p")?;
    let lattice = build_lattice(&config.lattice)?;
    let plan = config
        .plan
        .build(&lattice)
        .map_err(|e| config_error(format!("plan: {e}")))?;
    let f = config
        .observable
        .as_ref()
        .map(|spec| spec.build(&lattice, measure))
        .transpose()?;
    let n = lattice.num_edges();
    let output = Output::new(out, "revealment", config)?;
    let report: RevealmentReport = match config.mode {
        Mode::Exact => {
            if n > dynperc::spectral::DEFAULT_ENUMERATION_CAP {
                return Err(Error::CapExceeded {
                    bits: n,
                    cap: dynperc::spectral::DEFAULT_ENUMERATION_CAP,
                }
                .into());
            }
            match &f {
                None => revealment_exact(plan.as_ref(), &measure)?,
                Some(f) => {
                    let table = truth_table(f, n, dynperc::spectral::DEFAULT_ENUMERATION_CAP)?;
                    let report = exact_report(plan.as_ref(), &measure, &table)?;
                    let weights = spectral_weights_from_table(&table, n, &measure, Default::default())?;
                    let epsilon = report.epsilon.unwrap_or(0.0);
                    let rows = ss_bound_check(&weights, report.delta, epsilon);
                    let min_slack = rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
                    let corollary = corollary_bounds(report.delta, epsilon, n).ok();
                    output.write("bound_slack.csv", |w| {
                        for line in output.header() {
                            writeln!(w, "# {line}")?;
                        }
                        writeln!(w, "k,weight,bound,slack")?;
                        for r in &rows {
                            writeln!(w, "{},{},{},{}", r.k, r.weight, r.bound, r.slack)?;
                        }
                        Ok(())
                    })?;
                    output.json(
                        "bounds.json",
                        &BoundSummary {
                            holds: min_slack >= -1e-12,
                            min_slack,
                            corollary,
                            exact_tau: weights.tau_discrete(),
                            rows,
                        },
                    )?;
                    report
                }
            }
        }
        Mode::MonteCarlo => {
            let seed = require_seed(config.seed)?;
            let options = McOptions {
                runs: config.runs,
                batches: config.batches,
                seed,
            };
            monte_carlo_report(plan.as_ref(), &measure, f.as_ref(), config.variance, options)
                .map_err(|e| config_error(format!("{e}")))?
        }
    };
    output.json("revealment.json", &report)?;
    Ok(Outcome::Success)
}

#[derive(Debug, Serialize)]
struct VerifySummary<'a> {
    pass: bool,
    seed: u64,
    criteria: &'a [CriterionReport],
}

pub fn verify(options: &VerifyOptions, out: &Path) -> anyhow::Result<Outcome> {
    if let Some(p) = options.perturb {
        if dynperc::verify::criterion_info(p.criterion).is_none() {
            return Err(config_error(format!("perturb.criterion: no criterion {}", p.criterion)));
        }
    }
    let output = Output::new(out, "verify", options)?;
    let reports = run_suite(options);
    for r in &reports {
        println!("{}", r.summary_line());
    }
    let pass = reports.iter().all(|r| r.pass);
    output.json(
        "verify.json",
        &VerifySummary {
            pass,
            seed: options.seed,
            criteria: &reports,
        },
    )?;
    eprintln!("report written to {}", output.path("verify.json").display());
    Ok(if pass {
        Outcome::Success
    } else {
        Outcome::NumericFailure
    })
}

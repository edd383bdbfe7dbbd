//! Command implementations behind the `qram` binary.
//!
//! Each command takes a validated [`RunConfig`] and returns a [`CmdOutput`]: the primary
//! document (JSON or CSV), optional side files, and a pass/fail verdict.

use std::path::{Path, PathBuf};

use qram_core::circuit::{build_nohe_parallel, count_costs, expand_gadgets_layered, verify_equivalence};
use qram_core::cliffordlab::{
    adversarial_dataset, conjugation_identity_check, controlled_z, hierarchy_level, qram_dense,
    verify_phi2_linear_graph,
};
use qram_core::densesim::{fidelity, haar_random_state};
use qram_core::factory::{
    initial_occupancy, move_plan_rows, plan_rearrangement, timing_report, validate_aod_layer, verify_bpd, Scheme,
    TimingInputs,
};
use qram_core::noiselab::haar::{moment_s, moment_z, sample_simplex};
use qram_core::noiselab::{estimate_fidelity, fit_scaling, query_layout, EstimateSpec, Estimator, ModelKind};
use qram_core::par::stream_rng;
use qram_core::queryproto::{
    build_phi, build_phi1, gate_teleport, ideal_output, invert_nohe, run_query, v_on, GtOutcome, InversionMode,
    PhiMode,
};
use qram_core::{Dataset, Gate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Run(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    #[must_use]
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

/// Everything a command needs; unset fields take the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Memory sizes, ascending.
    pub n: Vec<usize>,
    pub models: Vec<ModelKind>,
    pub epsilons: Vec<f64>,
    pub samples: usize,
    pub datasets: usize,
    pub estimator: Estimator,
    pub with_bus: bool,
    /// Memory bits for `simulate`; random when absent.
    pub dataset: Option<Vec<u8>>,
    pub scheme: Scheme,
    pub tau_us: f64,
    pub t_us: Option<f64>,
    pub t0_us: f64,
    pub d0_um: f64,
    pub l_um: f64,
    pub haar_samples: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: vec![2, 4, 8, 16],
            models: ModelKind::ALL.to_vec(),
            epsilons: vec![1e-4],
            samples: 200,
            datasets: 200,
            estimator: Estimator::Bound,
            with_bus: true,
            dataset: None,
            scheme: Scheme::Optimized,
            tau_us: 500.0,
            t_us: Some(33.0),
            t0_us: 200.0,
            d0_um: 110.0,
            l_um: 3.0,
            haar_samples: 100_000,
            seed: 0,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if self.n.is_empty() {
            return usage("n must list at least one memory size".into());
        }
        if let Some(&bad) = self.n.iter().find(|&&n| n < 2 || !n.is_power_of_two()) {
            return usage(format!("N = {bad} is not a power of two >= 2"));
        }
        if self.n.windows(2).any(|w| w[0] >= w[1]) {
            return usage("n must be strictly ascending".into());
        }
        if let Some(&e) = self.epsilons.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return usage(format!("epsilon {e} outside [0, 1]"));
        }
        if self.samples == 0 || self.datasets == 0 || self.haar_samples < 2 {
            return usage("sample counts must be positive".into());
        }
        for (name, v) in [("tau_us", self.tau_us), ("t0_us", self.t0_us), ("d0_um", self.d0_um), ("l_um", self.l_um)] {
            if v.is_nan() || v <= 0.0 {
                return usage(format!("{name} must be positive"));
            }
        }
        if let Some(d) = &self.dataset {
            if d.iter().any(|&b| b > 1) {
                return usage("dataset bits must be 0 or 1".into());
            }
        }
        Ok(())
    }

    fn timing(&self, n: usize) -> TimingInputs {
        TimingInputs {
            n,
            tau_us: self.tau_us,
            t_us: self.t_us,
            t0_us: self.t0_us,
            d0_um: self.d0_um,
            l_um: self.l_um,
            scheme: self.scheme,
        }
    }
}

/// Primary document, side files keyed by file suffix, and the verdict.
#[derive(Clone, Debug, PartialEq)]
pub struct CmdOutput {
    pub body: String,
    pub side: Vec<(String, String)>,
    pub passed: bool,
}

impl CmdOutput {
    fn pass(body: String) -> Self {
        Self { body, side: Vec::new(), passed: true }
    }

    /// Writes the body to `out` (or returns it for stdout) and side files next to it.
    pub fn write(&self, out: Option<&Path>) -> Result<Option<String>, CliError> {
        match out {
            Some(p) => {
                std::fs::write(p, &self.body)?;
                for (suffix, text) in &self.side {
                    std::fs::write(side_path(p, suffix), text)?;
                }
                Ok(None)
            }
            None => {
                let mut s = self.body.clone();
                for (suffix, text) in &self.side {
                    s.push_str(&format!("\n# {suffix}\n{text}"));
                }
                Ok(Some(s))
            }
        }
    }
}

/// `runs/report.json` + `moves.csv` → `runs/report.moves.csv`.
#[must_use]
pub fn side_path(p: &Path, suffix: &str) -> PathBuf {
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    p.with_file_name(format!("{stem}.{suffix}"))
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map_err(run_err)
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(run_err)?;
    }
    String::from_utf8(w.into_inner().map_err(run_err)?).map_err(run_err)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub n: Vec<usize>,
    pub suites: Vec<SuiteResult>,
    pub passed: bool,
}

fn suite(name: &str, f: impl FnOnce() -> Result<String, String>) -> SuiteResult {
    match f() {
        Ok(detail) => SuiteResult { name: name.into(), passed: true, detail },
        Err(detail) => SuiteResult { name: name.into(), passed: false, detail },
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Runs the invariant suites; dense suites use the sizes of `n` they support.
pub fn cmd_verify(cfg: &RunConfig) -> Result<CmdOutput, CliError> {
    cfg.validate()?;
    let seed = cfg.seed;
    let dense: Vec<usize> = cfg.n.iter().copied().filter(|&n| n <= 4).collect();
    let mut suites = vec![suite("nohe-equivalence", || {
        for &n in &cfg.n {
            let r = verify_equivalence(n).map_err(s)?;
            check(r.passed(), || format!("N={n}: {:?}", r.first_mismatch))?;
        }
        Ok(format!("N in {:?}", cfg.n))
    })];
    suites.push(suite("gate-teleportation", || {
        let mut rng = stream_rng(seed, 1);
        let mut worst = 1.0f64;
        for &n in &dense {
            let log_n = n.trailing_zeros() as usize;
            let phi1 = build_phi1(n).map_err(s)?;
            let psi = haar_random_state(log_n, &mut rng);
            for idx in 0..1 << (2 * log_n) {
                let m = GtOutcome::from_index(idx, log_n);
                let (_, out) = gate_teleport(&psi, &phi1, Some(&m), &mut rng).map_err(s)?;
                worst = worst.min(fidelity(&out, &v_on(&psi, &m, n).map_err(s)?).map_err(s)?);
            }
        }
        check(worst >= 1.0 - 1e-10, || format!("min fidelity {worst}"))?;
        Ok(format!("all outcomes at N in {dense:?}"))
    }));
    suites.push(suite("inversion", || {
        let mut rng = stream_rng(seed, 2);
        let mut worst = 1.0f64;
        for &n in &dense {
            let log_n = n.trailing_zeros() as usize;
            for mode in [InversionMode::Adaptive, InversionMode::Frame] {
                for _ in 0..10 {
                    let psi = haar_random_state(log_n, &mut rng);
                    let input = v_on(&psi, &GtOutcome::zero(log_n), n).map_err(s)?;
                    let r = invert_nohe(&input, n, true, mode, None, &mut rng).map_err(s)?;
                    let mut want = psi.clone();
                    want.append_zeros(1);
                    want.apply_gate(&Gate::H(log_n)).map_err(s)?;
                    worst = worst.min(fidelity(&r.state, &want).map_err(s)?);
                }
            }
        }
        check(worst >= 1.0 - 1e-10, || format!("min fidelity {worst}"))?;
        Ok(format!("both modes at N in {dense:?}"))
    }));
    suites.push(suite("resource-state-query", || {
        let mut rng = stream_rng(seed, 3);
        let mut worst = 1.0f64;
        for &n in &dense {
            let log_n = n.trailing_zeros() as usize;
            let phi = build_phi(n, PhiMode::Frame, None, &mut rng).map_err(s)?;
            for _ in 0..5 {
                let psi = haar_random_state(log_n, &mut rng);
                let d = Dataset::random(n, &mut rng);
                let (out, _) = run_query(&psi, &d, &phi, &mut rng).map_err(s)?;
                worst = worst.min(fidelity(&out, &ideal_output(&psi, &d).map_err(s)?).map_err(s)?);
            }
        }
        check(worst >= 1.0 - 1e-8, || format!("min fidelity {worst}"))?;
        Ok(format!("N in {dense:?}"))
    }));
    suites.push(suite("graph-state", || {
        let r = verify_phi2_linear_graph().map_err(s)?;
        check(r.passed(), || format!("{r:?}"))?;
        Ok("N=2 generators and linear chain".into())
    }));
    suites.push(suite("clifford-hierarchy", || {
        for m in 0..4 {
            let l = hierarchy_level(&controlled_z(m), 4).map_err(s)?;
            check(l == Some(m), || format!("C_{m}Z level {l:?}"))?;
        }
        for n in [2, 4] {
            let sign = conjugation_identity_check(n).map_err(s)?;
            check(sign == Some(-1), || format!("identity sign at N={n}: {sign:?}"))?;
        }
        let l = hierarchy_level(&qram_dense(&adversarial_dataset(4)).map_err(s)?, 4).map_err(s)?;
        check(l == Some(2), || format!("U_QRAM level {l:?}"))?;
        Ok("levels and conjugation identity".into())
    }));
    suites.push(suite("haar-moments", || {
        let r = haar_check(cfg)?;
        check(r.passed, || format!("{:?}", r.rows.iter().find(|x| !x.passed)))?;
        Ok(format!("{} moments", r.rows.len()))
    }));
    let passed = suites.iter().all(|x| x.passed);
    let report = VerifyReport { seed, n: cfg.n.clone(), suites, passed };
    Ok(CmdOutput { body: to_json(&report)?, side: Vec::new(), passed })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub with_bus: bool,
    pub toffoli_counted: usize,
    pub toffoli_closed_form: usize,
    pub t_count: usize,
    pub cs_depth: usize,
    pub total_depth: usize,
    pub matches: bool,
}

pub fn cost_rows(cfg: &RunConfig) -> Result<Vec<CostRow>, CliError> {
    cfg.validate()?;
    cfg.n
        .iter()
        .map(|&n| {
            let c = count_costs(n, cfg.with_bus).map_err(run_err)?;
            Ok(CostRow {
                n,
                with_bus: cfg.with_bus,
                toffoli_counted: c.toffoli_count,
                toffoli_closed_form: c.toffoli_closed_form,
                t_count: c.t_count,
                cs_depth: c.cs_layer_depth,
                total_depth: c.total_depth,
                matches: c.toffoli_count == c.toffoli_closed_form,
            })
        })
        .collect()
}

pub fn cmd_costs(cfg: &RunConfig) -> Result<CmdOutput, CliError> {
    let rows = cost_rows(cfg)?;
    let passed = rows.iter().all(|r| r.matches);
    Ok(CmdOutput { body: to_csv(&rows)?, side: Vec::new(), passed })
}

/// Layered circuit text for the largest requested `N`, unexpanded and gadget-expanded.
pub fn cmd_schedule(cfg: &RunConfig) -> Result<CmdOutput, CliError> {
    cfg.validate()?;
    let n = *cfg.n.last().expect("validated");
    let c = build_nohe_parallel(n, cfg.with_bus).map_err(run_err)?;
    c.check_disjoint().map_err(run_err)?;
    let mut out = CmdOutput::pass(c.to_text());
    out.side.push(("expanded.txt".into(), expand_gadgets_layered(&c).to_text()));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub dataset: Vec<u8>,
    pub fidelity: f64,
    pub transcript: qram_core::queryproto::QueryTranscript,
}

/// One dense resource-state query at the smallest requested `N` (2 or 4).
pub fn cmd_simulate(cfg: &RunConfig) -> Result<CmdOutput, CliError> {
    cfg.validate()?;
    let n = cfg.n[0];
    if n > 4 {
        return Err(CliError::Usage(format!("simulate supports N <= 4, got {n}")));
    }
    let mut rng = stream_rng(cfg.seed, 0);
    let d = match &cfg.dataset {
        Some(bits) => Dataset::from_bits(bits).map_err(|e| CliError::Usage(e.to_string()))?,
        None => Dataset::random(n, &mut rng),
    };
    if d.len() != n {
        return Err(CliError::Usage(format!("dataset has {} bits, N = {n}", d.len())));
    }
    let psi = haar_random_state(n.trailing_zeros() as usize, &mut rng);
    let phi = build_phi(n, PhiMode::Frame, None, &mut rng).map_err(run_err)?;
    let (out, transcript) = run_query(&psi, &d, &phi, &mut rng).map_err(run_err)?;
    let f = fidelity(&out, &ideal_output(&psi, &d).map_err(run_err)?).map_err(run_err)?;
    let report = SimulateReport { n, seed: cfg.seed, dataset: d.bits(), fidelity: f, transcript };
    Ok(CmdOutput { body: to_json(&report)?, side: Vec::new(), passed: f >= 1.0 - 1e-8 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub model: String,
    pub epsilon: f64,
    pub estimator: String,
    pub alpha: Option<f64>,
    pub note: String,
}

/// One CSV row per (model, ε, N); fitted exponents go to the `alpha.csv` side file.
pub fn cmd_fidelity_scan(cfg: &RunConfig) -> Result<CmdOutput, CliError> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut alphas = Vec::new();
    for &kind in &cfg.models {
        for &epsilon in &cfg.epsilons {
            let mut pts = Vec::new();
            for &n in &cfg.n {
                let layout = query_layout(n).map_err(|e| CliError::Usage(e.to_string()))?;
                let spec = EstimateSpec {
                    n,
                    kind,
                    epsilon,
                    samples: cfg.samples,
                    datasets: cfg.datasets,
                    estimator: cfg.estimator,
                    seed: cfg.seed,
                };
                let e = estimate_fidelity(&spec, &layout).map_err(run_err)?;
                pts.push((n, e.infidelity));
                rows.push(e);
            }
            let (alpha, note) = match fit_scaling(&pts) {
                Ok(a) => (Some(a), String::new()),
                Err(e) => (None, e.to_string()),
            };
            alphas.push(AlphaRow {
                model: kind.to_string(),
                epsilon,
                estimator: cfg.estimator.to_string(),
                alpha,
                note,
            });
        }
    }
    let mut out = CmdOutput::pass(to_csv(&rows)?);
    out.side.push(("alpha.csv".into(), to_csv(&alphas)?));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaarRow {
    pub quantity: String,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub exact: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaarReport {
    pub samples: usize,
    pub seed: u64,
    pub rows: Vec<HaarRow>,
    pub passed: bool,
}

fn haar_check(cfg: &RunConfig) -> Result<HaarReport, String> {
    let mut rows = Vec::new();
    for (i, (n, big_n)) in [(1usize, 4usize), (3, 8), (8, 32)].into_iter().enumerate() {
        let mut rng = stream_rng(cfg.seed, 100 + i as u64);
        let draws: Vec<Vec<f64>> = (0..cfg.haar_samples).map(|_| sample_simplex(big_n, &mut rng)).collect();
        for m in 1..=3u64 {
            for (quantity, exact, f) in [
                (format!("z^{m}"), moment_z(m, big_n).map_err(s)?, Box::new(|z: &[f64]| z[0]) as Box<dyn Fn(&[f64]) -> f64>),
                (format!("s^{m}"), moment_s(m, n, big_n).map_err(s)?, Box::new(move |z: &[f64]| z[..n].iter().sum())),
            ] {
                let v: Vec<f64> = draws.iter().map(|z| f(z).powi(m as i32)).collect();
                let k = v.len() as f64;
                let mean = v.iter().sum::<f64>() / k;
                let se = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt();
                rows.push(HaarRow {
                    quantity,
                    n,
                    big_n,
                    exact,
                    mc_mean: mean,
                    mc_stderr: se,
                    passed: (mean - exact).abs() <= 5.0 * se,
                });
            }
        }
    }
    let passed = rows.iter().all(|r| r.passed);
    Ok(HaarReport { samples: cfg.haar_samples, seed: cfg.seed, rows, passed })
}

pub fn cmd_haar_check(cfg: &RunConfig) -> Result<CmdOutput, CliError> {
    cfg.validate()?;
    let r = haar_check(cfg).map_err(CliError::Run)?;
    Ok(CmdOutput { body: to_json(&r)?, side: Vec::new(), passed: r.passed })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactoryReport {
    pub timing: qram_core::factory::TimingReport,
    pub layout_n: usize,
    pub aod_valid: [bool; 3],
    pub bpd_matches_nbg: bool,
}

/// Timing for the largest requested `N`; plan, AOD and BPD checks for the largest
/// requested `N ≤ 2^12`.
pub fn cmd_factory(cfg: &RunConfig) -> Result<CmdOutput, CliError> {
    cfg.validate()?;
    let n = *cfg.n.last().expect("validated");
    if n < 4 {
        return Err(CliError::Usage("factory needs N >= 4".into()));
    }
    let timing = timing_report(&cfg.timing(n)).map_err(|e| CliError::Usage(e.to_string()))?;
    let layout_n = n.min(1 << 12);
    let mut layout = initial_occupancy(layout_n).map_err(run_err)?;
    let mut aod_valid = [false; 3];
    for (i, layer) in plan_rearrangement(layout_n).map_err(run_err)?.iter().enumerate() {
        aod_valid[i] = validate_aod_layer(layer, &layout);
        if aod_valid[i] {
            layout.apply(layer, i).map_err(run_err)?;
        }
    }
    let bpd_matches_nbg = verify_bpd(layout_n).map_err(run_err)?.passed();
    let report = FactoryReport { timing, layout_n, aod_valid, bpd_matches_nbg };
    let passed = aod_valid.iter().all(|&v| v) && bpd_matches_nbg;
    let moves = to_csv(&move_plan_rows(layout_n).map_err(run_err)?)?;
    Ok(CmdOutput { body: to_json(&report)?, side: vec![("moves.csv".into(), moves)], passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        let bad = RunConfig { n: vec![8, 4], ..RunConfig::default() };
        assert_eq!(bad.validate().unwrap_err().exit_code(), 2);
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
        let c = RunConfig::from_json(r#"{"n": [8], "models": ["EC"], "seed": 3}"#).unwrap();
        assert_eq!(c.models, vec![ModelKind::Ec]);
        assert_eq!(c.samples, 200);
    }

    #[test]
    fn side_paths() {
        assert_eq!(side_path(Path::new("runs/report.json"), "moves.csv"), PathBuf::from("runs/report.moves.csv"));
    }
}

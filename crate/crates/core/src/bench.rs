//! Monte-Carlo experiment harness: ensembles of estimates against the
//! closed-form entropy, aggregated per parameter cell.
//!
//! Member j of every cell draws its sample with seed `base_seed + j`, so
//! cells sharing a distribution and N see the same samples, and a smaller
//! ensemble reproduces a prefix of a larger one.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::estimators::{estimate_kl_from_table, estimate_kpn_from_table, EstimatorConfig, Method};
use crate::knn::NeighborTable;
use crate::par::{map_indexed, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Grid,
    DimSweep,
    Manifold,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Grid => "grid",
            ExperimentKind::DimSweep => "dims",
            ExperimentKind::Manifold => "manifold",
        }
    }

    /// Grid cells study the kpN parameters alone; the other experiments
    /// compare both estimators on the same samples.
    pub fn methods(self) -> &'static [Method] {
        match self {
            ExperimentKind::Grid => &[Method::Kpn],
            _ => &[Method::Kl, Method::Kpn],
        }
    }
}

/// Product families with parameters ramped over the dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampFamily {
    Gaussian,
    Gamma,
    Beta,
}

impl RampFamily {
    pub fn spec(self, d: usize) -> DistributionSpec {
        match self {
            RampFamily::Gaussian => DistributionSpec::gaussian_ramp(d),
            RampFamily::Gamma => DistributionSpec::gamma_ramp(d),
            RampFamily::Beta => DistributionSpec::beta_ramp(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub kind: ExperimentKind,
    pub specs: Vec<DistributionSpec>,
    pub n_values: Vec<usize>,
    pub k_values: Vec<usize>,
    pub p_frac_values: Vec<f64>,
    pub ensembles: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub execution: Execution,
}

impl ExperimentPlan {
    pub fn grid(
        specs: Vec<DistributionSpec>,
        n_values: Vec<usize>,
        k_values: Vec<usize>,
        p_frac_values: Vec<f64>,
        ensembles: usize,
        base_seed: u64,
    ) -> Self {
        Self {
            kind: ExperimentKind::Grid,
            specs,
            n_values,
            k_values,
            p_frac_values,
            ensembles,
            base_seed,
            record_timing: false,
            execution: Execution::default(),
        }
    }

    /// One ramped spec per family and dimension, single (N, k, p/N).
    pub fn dim_sweep(
        families: &[RampFamily],
        dims: &[usize],
        n: usize,
        k: usize,
        p_frac: f64,
        ensembles: usize,
        base_seed: u64,
    ) -> Self {
        let specs = families.iter().flat_map(|f| dims.iter().map(|&d| f.spec(d))).collect();
        Self {
            kind: ExperimentKind::DimSweep,
            specs,
            n_values: vec![n],
            k_values: vec![k],
            p_frac_values: vec![p_frac],
            ensembles,
            base_seed,
            record_timing: false,
            execution: Execution::default(),
        }
    }

    /// Linear-manifold specs for every observation count and noise level.
    pub fn manifold(
        observations: &[usize],
        noise_values: &[f64],
        n: usize,
        k: usize,
        p_frac: f64,
        ensembles: usize,
        base_seed: u64,
    ) -> Self {
        let specs = noise_values
            .iter()
            .flat_map(|&s2| observations.iter().map(move |&m| DistributionSpec::linear_manifold(m, s2)))
            .collect();
        Self {
            kind: ExperimentKind::Manifold,
            specs,
            n_values: vec![n],
            k_values: vec![k],
            p_frac_values: vec![p_frac],
            ensembles,
            base_seed,
            record_timing: false,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if self.specs.is_empty() || self.n_values.is_empty() || self.k_values.is_empty() || self.p_frac_values.is_empty()
        {
            return bad("experiment plan lists must be nonempty");
        }
        if self.ensembles == 0 {
            return bad("ensembles must be at least 1");
        }
        if self.n_values.iter().any(|&n| n < 3) {
            return bad("every N must be at least 3");
        }
        if self.p_frac_values.iter().any(|&f| !(f > 0.0 && f < 1.0)) {
            return bad("p/N must lie in (0, 1)");
        }
        for spec in &self.specs {
            spec.validate()?;
        }
        for &n in &self.n_values {
            for &k in &self.k_values {
                if k == 0 || k >= n {
                    return Err(Error::InvalidParameter(format!("need 1 ≤ k < N, got k={k}, N={n}")));
                }
            }
        }
        Ok(())
    }
}

/// p = round(p_frac·N), at least max(k, d+2), at most N−1.
pub fn neighbor_count(p_frac: f64, n: usize, k: usize, d: usize) -> usize {
    ((p_frac * n as f64).round() as usize).max(k).max(d + 2).min(n - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub method: Method,
    pub family: String,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub p: usize,
    pub ensembles: usize,
    pub analytic_entropy: f64,
    /// Mean of 100·|H* − Ĥ|/|H*| over members.
    pub mean_rel_err_pct: f64,
    /// Sample variance of the percent relative error.
    pub var_rel_err_pct: f64,
    pub mean_abs_err: f64,
    pub var_abs_err: f64,
    pub ep_nonconverged: usize,
    pub wall_time_s: Option<f64>,
    /// Per-member estimates in member order; empty for failed cells.
    pub estimates: Vec<f64>,
    pub error: Option<String>,
}

impl ResultRow {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var)
}

/// One member's results for every (k, p, method) cell of a (spec, N) group.
struct MemberOutcome {
    cells: Vec<Result<(f64, usize, f64)>>,
}

struct Cell {
    k: usize,
    p: usize,
    method: Method,
}

fn run_member(
    spec: &DistributionSpec,
    n: usize,
    seed: u64,
    cells: &[Cell],
    exec: Execution,
) -> Result<MemberOutcome> {
    let s = spec.sample(n, seed)?;
    let m = cells.iter().map(|c| c.p.max(c.k)).max().unwrap_or(1);
    let t0 = Instant::now();
    let table = NeighborTable::build(&s, m, exec)?;
    let table_time = t0.elapsed().as_secs_f64();
    let cells = cells
        .iter()
        .map(|c| {
            let t = Instant::now();
            let r = match c.method {
                Method::Kl => estimate_kl_from_table(&s, &table, c.k),
                Method::Kpn => {
                    let cfg = EstimatorConfig::new(c.k, c.p).with_execution(exec);
                    estimate_kpn_from_table(&s, &table, &cfg)
                }
            };
            r.map(|rep| (rep.estimate, rep.ep_nonconverged, table_time + t.elapsed().as_secs_f64()))
        })
        .collect();
    Ok(MemberOutcome { cells })
}

fn experiment_id(kind: ExperimentKind, spec: &DistributionSpec, n: usize, k: usize, p: usize, method: Method) -> String {
    let noise = match spec {
        DistributionSpec::LinearManifold { noise_var, .. } => format!("/noise{noise_var:e}"),
        _ => String::new(),
    };
    format!(
        "{}/{}{noise}/d{}/n{n}/k{k}/p{p}/{}",
        kind.as_str(),
        spec.family_name(),
        spec.dim(),
        method.as_str()
    )
}

/// Runs every cell of the plan. Estimator failures become failure rows.
pub fn run(plan: &ExperimentPlan) -> Result<Vec<ResultRow>> {
    plan.validate()?;
    let mut rows = Vec::new();
    for spec in &plan.specs {
        let h = spec.analytic_entropy()?;
        let d = spec.dim();
        for &n in &plan.n_values {
            let mut cells = Vec::new();
            for &k in &plan.k_values {
                for &f in &plan.p_frac_values {
                    for &method in plan.kind.methods() {
                        cells.push(Cell {
                            k,
                            p: neighbor_count(f, n, k, d),
                            method,
                        });
                    }
                }
            }
            let members = map_indexed(plan.execution, plan.ensembles, |j| {
                let seed = plan.base_seed.wrapping_add(j as u64);
                run_member(spec, n, seed, &cells, Execution::Sequential)
            });
            for (ci, cell) in cells.iter().enumerate() {
                let mut row = ResultRow {
                    experiment: experiment_id(plan.kind, spec, n, cell.k, cell.p, cell.method),
                    method: cell.method,
                    family: spec.family_name().to_string(),
                    n,
                    d,
                    k: cell.k,
                    p: cell.p,
                    ensembles: plan.ensembles,
                    analytic_entropy: h,
                    mean_rel_err_pct: f64::NAN,
                    var_rel_err_pct: f64::NAN,
                    mean_abs_err: f64::NAN,
                    var_abs_err: f64::NAN,
                    ep_nonconverged: 0,
                    wall_time_s: None,
                    estimates: Vec::new(),
                    error: None,
                };
                let mut estimates = Vec::with_capacity(plan.ensembles);
                let mut nonconv = 0;
                let mut time = 0.0;
                for (j, member) in members.iter().enumerate() {
                    let r = match member {
                        Ok(m) => m.cells[ci].as_ref().map_err(|e| e.to_string()),
                        Err(e) => Err(e.to_string()),
                    };
                    match r {
                        Ok(&(est, nc, t)) => {
                            estimates.push(est);
                            nonconv += nc;
                            time += t;
                        }
                        Err(e) => {
                            log::error!("{} member {j}: {e}", row.experiment);
                            row.error = Some(format!("member {j}: {e}"));
                            break;
                        }
                    }
                }
                if row.error.is_none() {
                    let rel: Vec<f64> = estimates.iter().map(|e| 100.0 * (h - e).abs() / h.abs()).collect();
                    let abs: Vec<f64> = estimates.iter().map(|e| (h - e).abs()).collect();
                    (row.mean_rel_err_pct, row.var_rel_err_pct) = mean_var(&rel);
                    (row.mean_abs_err, row.var_abs_err) = mean_var(&abs);
                    row.ep_nonconverged = nonconv;
                    row.wall_time_s = plan.record_timing.then_some(time);
                    row.estimates = estimates;
                }
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

fn run_kind(plan: &ExperimentPlan, kind: ExperimentKind) -> Result<Vec<ResultRow>> {
    if plan.kind != kind {
        return Err(Error::InvalidParameter(format!(
            "expected a {} plan, got {}",
            kind.as_str(),
            plan.kind.as_str()
        )));
    }
    run(plan)
}

pub fn run_grid(plan: &ExperimentPlan) -> Result<Vec<ResultRow>> {
    run_kind(plan, ExperimentKind::Grid)
}

pub fn run_dim_sweep(plan: &ExperimentPlan) -> Result<Vec<ResultRow>> {
    run_kind(plan, ExperimentKind::DimSweep)
}

pub fn run_manifold(plan: &ExperimentPlan) -> Result<Vec<ResultRow>> {
    run_kind(plan, ExperimentKind::Manifold)
}

pub const RESULT_COLUMNS: [&str; 14] = [
    "experiment",
    "method",
    "family",
    "n",
    "d",
    "k",
    "p",
    "ensembles",
    "analytic_entropy",
    "mean_rel_err_pct",
    "var_rel_err_pct",
    "mean_abs_err",
    "ep_nonconverged",
    "wall_time_s",
];

pub fn write_results_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULT_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.method.as_str().to_string(),
            r.family.clone(),
            r.n.to_string(),
            r.d.to_string(),
            r.k.to_string(),
            r.p.to_string(),
            r.ensembles.to_string(),
            r.analytic_entropy.to_string(),
            r.mean_rel_err_pct.to_string(),
            r.var_rel_err_pct.to_string(),
            r.mean_abs_err.to_string(),
            r.ep_nonconverged.to_string(),
            r.wall_time_s.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-member estimates: experiment,member,seed,estimate.
pub fn write_raw_csv<W: Write>(rows: &[ResultRow], base_seed: u64, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["experiment", "member", "seed", "estimate"])?;
    for r in rows {
        for (j, e) in r.estimates.iter().enumerate() {
            w.write_record([
                r.experiment.clone(),
                j.to_string(),
                base_seed.wrapping_add(j as u64).to_string(),
                e.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid(ensembles: usize) -> ExperimentPlan {
        ExperimentPlan::grid(
            vec![DistributionSpec::correlated_pair(0.5)],
            vec![400],
            vec![1, 4],
            vec![0.05],
            ensembles,
            7,
        )
    }

    #[test]
    fn p_rule() {
        assert_eq!(neighbor_count(0.02, 10_000, 4, 80), 200);
        assert_eq!(neighbor_count(0.01, 1000, 4, 16), 18);
        assert_eq!(neighbor_count(0.5, 10, 20, 1), 9);
    }

    #[test]
    fn rows_reproduce_raw_members() {
        let rows = run(&small_grid(4)).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert_eq!(r.estimates.len(), 4);
            assert_eq!(r.method, Method::Kpn);
            let rel: Vec<f64> = r
                .estimates
                .iter()
                .map(|e| 100.0 * (r.analytic_entropy - e).abs() / r.analytic_entropy.abs())
                .collect();
            let (m, v) = mean_var(&rel);
            assert_eq!((m, v), (r.mean_rel_err_pct, r.var_rel_err_pct));
        }
    }

    #[test]
    fn smaller_ensemble_is_a_prefix() {
        let big = run(&small_grid(5)).unwrap();
        let small = run(&small_grid(2)).unwrap();
        for (a, b) in big.iter().zip(&small) {
            assert_eq!(&a.estimates[..2], &b.estimates[..]);
        }
    }

    #[test]
    fn csv_is_deterministic_and_schema_exact() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_results_csv(&run(&small_grid(2)).unwrap(), &mut a).unwrap();
        write_results_csv(&run(&small_grid(2)).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "experiment,method,family,n,d,k,p,ensembles,analytic_entropy,mean_rel_err_pct,var_rel_err_pct,mean_abs_err,ep_nonconverged,wall_time_s"
        );
        assert!(text.lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn sweep_compares_both_methods_on_one_sample() {
        let plan = ExperimentPlan::dim_sweep(&[RampFamily::Gamma], &[2], 300, 4, 0.1, 2, 3);
        let rows = run_dim_sweep(&plan).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].method, rows[1].method), (Method::Kl, Method::Kpn));
        assert!(run_grid(&plan).is_err());
    }

    #[test]
    fn manifold_plan_covers_observation_counts() {
        let plan = ExperimentPlan::manifold(&[1, 2, 3], &[1e-1, 1e-3], 200, 4, 0.05, 1, 1);
        assert_eq!(plan.specs.len(), 6);
        let rows = run_manifold(&plan).unwrap();
        assert_eq!(rows.len(), 12);
        assert!(rows.iter().all(|r| !r.failed()));
        assert_eq!(rows[0].d, 2);
        assert!(rows[0].experiment.contains("noise1e-1"));
    }

    #[test]
    fn estimator_failures_become_rows() {
        // Tiny Beta shapes put most draws exactly on 0 or 1.
        let plan = ExperimentPlan::grid(
            vec![DistributionSpec::BetaProduct {
                alpha: vec![1e-3],
                beta: vec![1e-3],
            }],
            vec![50],
            vec![1],
            vec![0.1],
            1,
            1,
        );
        let rows = run(&plan).unwrap();
        assert!(rows[0].failed(), "{rows:?}");
        assert!(rows[0].mean_rel_err_pct.is_nan());
    }

    #[test]
    fn invalid_plans() {
        let mut p = small_grid(1);
        p.ensembles = 0;
        assert!(p.validate().is_err());
        let mut p = small_grid(1);
        p.p_frac_values = vec![1.5];
        assert!(p.validate().is_err());
        let mut p = small_grid(1);
        p.k_values.clear();
        assert!(p.validate().is_err());
    }

    #[test]
    fn raw_csv_lists_members() {
        let rows = run(&small_grid(3)).unwrap();
        let mut out = Vec::new();
        write_raw_csv(&rows, 7, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 3);
        assert!(text.lines().nth(3).unwrap().contains(",2,9,"));
    }

    #[test]
    fn plan_json_round_trip() {
        let plan = ExperimentPlan::dim_sweep(&[RampFamily::Beta], &[4, 8], 2000, 4, 0.02, 5, 7);
        let json = serde_json::to_string(&plan).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentPlan>(&json).unwrap(), plan);
    }
}

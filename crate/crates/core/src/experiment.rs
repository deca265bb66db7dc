//! Monte-Carlo phase-transition sweeps over `(n, m or s, N)` grids.
//!
//! Every trial draws its own instance from a seed derived from
//! `(base_seed, n, dim, N, trial)`, so cells can run in any order or in
//! parallel and still produce the same output.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{binomial, certify_joint_sparse, certify_subspace, CertifyOptions, Mode, DEFAULT_SUPPORT_BUDGET};
use crate::error::{BgpcError, Result};
use crate::fmt::fmt_f64;
use crate::model::{min_samples_joint_sparse, min_samples_subspace, random_instance};
use crate::recover::{recover, recover_joint_sparse, RecoverOptions, RecoveryStatus};

/// Exact CSV header.
pub const CSV_HEADER: [&str; 10] = [
    "mode",
    "n",
    "dim",
    "N",
    "threshold_met",
    "trials",
    "successes",
    "rate",
    "mean_runtime_ms",
    "skipped_reason",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub mode: Mode,
    pub n: usize,
    /// Dictionary size in joint-sparse mode; ignored for subspace sweeps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Inclusive range of `m` (subspace) or `s` (joint sparse).
    pub dim_range: [usize; 2],
    /// Inclusive range of snapshot counts.
    #[serde(rename = "N_range")]
    pub n_range: [usize; 2],
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Also require the recovery solver to return a unique solution.
    #[serde(default)]
    pub cross_check_recovery: bool,
    /// Measure wall-clock time per trial. Off by default because timings make
    /// the CSV non-reproducible.
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default = "default_budget")]
    pub support_budget: u64,
}

fn default_budget() -> u64 {
    DEFAULT_SUPPORT_BUDGET
}

impl SweepConfig {
    pub fn subspace(n: usize, dim_range: [usize; 2], n_range: [usize; 2], trials: usize, base_seed: u64) -> Self {
        Self {
            mode: Mode::Subspace,
            n,
            m: None,
            dim_range,
            n_range,
            trials,
            base_seed,
            tolerance: None,
            output: None,
            cross_check_recovery: false,
            record_timing: false,
            support_budget: DEFAULT_SUPPORT_BUDGET,
        }
    }

    pub fn joint_sparse(
        n: usize,
        m: usize,
        s_range: [usize; 2],
        n_range: [usize; 2],
        trials: usize,
        base_seed: u64,
    ) -> Self {
        Self {
            mode: Mode::JointSparse,
            m: Some(m),
            ..Self::subspace(n, s_range, n_range, trials, base_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim_range[0] > self.dim_range[1] || self.n_range[0] > self.n_range[1] {
            return Err(BgpcError::Input(
                "dim_range and N_range must be nonempty [lo, hi] pairs".into(),
            ));
        }
        if self.trials == 0 {
            return Err(BgpcError::Input("trials must be at least 1".into()));
        }
        if self.mode == Mode::JointSparse && self.m.is_none() {
            return Err(BgpcError::Input("joint-sparse sweeps need field `m`".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub mode: Mode,
    pub n: usize,
    pub dim: usize,
    #[serde(rename = "N")]
    pub snapshots: usize,
    pub threshold_met: bool,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    pub mean_runtime_ms: f64,
    pub skipped_reason: Option<String>,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one trial, a pure function of its grid coordinates.
pub fn trial_seed(base: u64, n: usize, dim: usize, snapshots: usize, trial: usize) -> u64 {
    [n, dim, snapshots, trial]
        .iter()
        .fold(mix(base), |h, &x| mix(h ^ x as u64))
}

fn threshold(mode: Mode, n: usize, dim: usize) -> Option<usize> {
    match mode {
        Mode::Subspace => min_samples_subspace(n, dim).ok(),
        Mode::JointSparse => min_samples_joint_sparse(n, dim).ok(),
    }
}

fn skip_reason(cfg: &SweepConfig, dim: usize, snapshots: usize) -> Option<String> {
    let n = cfg.n;
    if snapshots < 2 {
        return Some("N < 2".into());
    }
    match cfg.mode {
        Mode::Subspace => (dim == 0 || n <= dim).then(|| "n <= m".into()),
        Mode::JointSparse => {
            let m = cfg.m.unwrap_or(0);
            if dim == 0 || dim > m {
                Some("s outside 1..m".into())
            } else if n <= 2 * dim {
                Some("n <= 2s".into())
            } else if binomial(m, dim) > cfg.support_budget as u128 {
                Some("support budget exceeded".into())
            } else {
                None
            }
        }
    }
}

fn run_trial(cfg: &SweepConfig, dim: usize, snapshots: usize, trial: usize) -> Result<bool> {
    let seed = trial_seed(cfg.base_seed, cfg.n, dim, snapshots, trial);
    let certify_opts = CertifyOptions {
        tol: cfg.tolerance,
        support_budget: cfg.support_budget,
    };
    let recover_opts = RecoverOptions {
        tol: cfg.tolerance,
        support_budget: cfg.support_budget,
        ..Default::default()
    };
    let (certified, inst) = match cfg.mode {
        Mode::Subspace => {
            let inst = random_instance(cfg.n, dim, snapshots, seed, None)?;
            (
                certify_subspace(&inst.a, &inst.x0, &inst.lambda0, cfg.tolerance)?.is_certified(),
                inst,
            )
        }
        Mode::JointSparse => {
            let m = cfg.m.expect("validated");
            let inst = random_instance(cfg.n, m, snapshots, seed, Some(dim))?;
            (
                certify_joint_sparse(&inst.a, &inst.x0, &inst.lambda0, dim, certify_opts)?.is_certified(),
                inst,
            )
        }
    };
    if !cfg.cross_check_recovery || !certified {
        return Ok(certified);
    }
    let y = inst.forward()?;
    let res = match cfg.mode {
        Mode::Subspace => recover(&y, &inst.a, recover_opts),
        Mode::JointSparse => recover_joint_sparse(&y, &inst.a, dim, recover_opts),
    };
    Ok(matches!(res, Ok(r) if r.status == RecoveryStatus::Unique))
}

fn run_cell(cfg: &SweepConfig, dim: usize, snapshots: usize) -> Result<PhaseCell> {
    let threshold_met = threshold(cfg.mode, cfg.n, dim).is_some_and(|t| snapshots >= t);
    let mut cell = PhaseCell {
        mode: cfg.mode,
        n: cfg.n,
        dim,
        snapshots,
        threshold_met,
        trials: 0,
        successes: 0,
        rate: 0.0,
        mean_runtime_ms: 0.0,
        skipped_reason: skip_reason(cfg, dim, snapshots),
    };
    if cell.skipped_reason.is_some() {
        return Ok(cell);
    }
    let outcomes = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let start = Instant::now();
            let ok = run_trial(cfg, dim, snapshots, t)?;
            Ok((ok, start.elapsed().as_secs_f64() * 1e3))
        })
        .collect::<Result<Vec<_>>>()?;
    cell.trials = cfg.trials;
    cell.successes = outcomes.iter().filter(|(ok, _)| *ok).count();
    cell.rate = cell.successes as f64 / cell.trials as f64;
    if cfg.record_timing {
        cell.mean_runtime_ms = outcomes.iter().map(|(_, ms)| ms).sum::<f64>() / cell.trials as f64;
    }
    Ok(cell)
}

/// Runs the grid in `dim`-major, `N`-minor order.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<PhaseCell>> {
    cfg.validate()?;
    let grid: Vec<(usize, usize)> = (cfg.dim_range[0]..=cfg.dim_range[1])
        .flat_map(|d| (cfg.n_range[0]..=cfg.n_range[1]).map(move |big_n| (d, big_n)))
        .collect();
    grid.par_iter().map(|&(d, big_n)| run_cell(cfg, d, big_n)).collect()
}

/// Writes cells as CSV with the fixed column order of [`CSV_HEADER`].
pub fn write_csv<W: Write>(cells: &[PhaseCell], out: W) -> Result<()> {
    let io_err = |e: csv::Error| BgpcError::Io {
        path: "<csv>".into(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(io_err)?;
    for c in cells {
        w.write_record([
            c.mode.as_str().to_string(),
            c.n.to_string(),
            c.dim.to_string(),
            c.snapshots.to_string(),
            c.threshold_met.to_string(),
            c.trials.to_string(),
            c.successes.to_string(),
            fmt_f64(c.rate),
            fmt_f64(c.mean_runtime_ms),
            c.skipped_reason.clone().unwrap_or_default(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| BgpcError::Io {
        path: "<csv>".into(),
        source: e,
    })?;
    Ok(())
}

pub fn csv_string(cells: &[PhaseCell]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(cells, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_depend_on_every_coordinate() {
        let s = trial_seed(1, 16, 4, 2, 0);
        assert_eq!(s, trial_seed(1, 16, 4, 2, 0));
        assert_ne!(s, trial_seed(2, 16, 4, 2, 0));
        assert_ne!(s, trial_seed(1, 17, 4, 2, 0));
        assert_ne!(s, trial_seed(1, 16, 5, 2, 0));
        assert_ne!(s, trial_seed(1, 16, 4, 3, 0));
        assert_ne!(s, trial_seed(1, 16, 4, 2, 1));
        // coordinates are not interchangeable
        assert_ne!(trial_seed(1, 16, 4, 2, 0), trial_seed(1, 16, 2, 4, 0));
    }

    #[test]
    fn small_subspace_sweep() {
        let cfg = SweepConfig::subspace(8, [2, 7], [2, 4], 5, 3);
        let cells = run_sweep(&cfg).unwrap();
        assert_eq!(cells.len(), 6 * 3);
        for c in &cells {
            let t = min_samples_subspace(8, c.dim).unwrap();
            assert_eq!(c.threshold_met, c.snapshots >= t);
            if c.threshold_met {
                assert_eq!(c.rate, 1.0, "{c:?}");
            } else {
                assert_eq!(c.rate, 0.0, "{c:?}");
            }
        }
    }

    #[test]
    fn skipped_cells_are_kept() {
        let cfg = SweepConfig::subspace(6, [5, 7], [1, 2], 2, 0);
        let cells = run_sweep(&cfg).unwrap();
        assert_eq!(cells.len(), 6);
        let skipped: Vec<_> = cells.iter().filter(|c| c.skipped_reason.is_some()).collect();
        // N = 1 everywhere, plus m = 6, 7 at N = 2
        assert_eq!(skipped.len(), 5);
        assert!(skipped.iter().all(|c| c.trials == 0 && c.rate == 0.0));
        let csv = csv_string(&cells).unwrap();
        assert!(csv.starts_with("mode,n,dim,N,threshold_met,trials,successes,rate,mean_runtime_ms,skipped_reason\n"));
        assert!(csv.contains("n <= m"));
    }

    #[test]
    fn rerun_is_identical() {
        let cfg = SweepConfig::subspace(10, [3, 6], [2, 3], 4, 99);
        let a = csv_string(&run_sweep(&cfg).unwrap()).unwrap();
        let b = csv_string(&run_sweep(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn joint_sparse_cells() {
        let mut cfg = SweepConfig::joint_sparse(16, 8, [2, 3], [2, 2], 3, 1);
        cfg.cross_check_recovery = true;
        let cells = run_sweep(&cfg).unwrap();
        assert_eq!(cells.len(), 2);
        for c in cells {
            assert!(c.threshold_met);
            assert_eq!(c.rate, 1.0);
        }
    }

    #[test]
    fn config_validation_and_json() {
        let mut cfg = SweepConfig::subspace(8, [2, 3], [2, 2], 1, 0);
        cfg.trials = 0;
        assert!(run_sweep(&cfg).is_err());
        let cfg = SweepConfig {
            mode: Mode::JointSparse,
            ..SweepConfig::subspace(8, [2, 3], [2, 2], 1, 0)
        };
        assert!(cfg.validate().is_err());

        let json = r#"{"mode":"Subspace","n":16,"dim_range":[2,12],"N_range":[2,8],"trials":50,"base_seed":7}"#;
        let cfg: SweepConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.support_budget, DEFAULT_SUPPORT_BUDGET);
        assert!(!cfg.record_timing);
    }
}

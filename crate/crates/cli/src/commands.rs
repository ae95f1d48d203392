use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use uinv_core::combs::{spanning_unitary_set, CombMode, CombStructure};
use uinv_core::protocols::{
    adaptive_protocol, affordable_rounds, min_uses_ok, theorem1_probability, theorem2_parallel_bound,
    transposition_parallel_optimum,
};
use uinv_core::quantum::choi_of_unitary;
use uinv_core::sdp::{
    assemble_inversion_sdp, solve_inversion, verify_solution, AssembleConfig, InversionProblem, Solution, SolverConfig,
    VERIFY_SAMPLES,
};
use uinv_core::tensor::{haar_special_unitary, ComplexMatrix};

use crate::config::RunConfig;
use crate::error::CliError;

/// Exactness demanded of the simulated success probability.
pub const SIMULATE_PROB_TOL: f64 = 1e-12;
/// Largest accepted Frobenius distance between the success branch and
/// `p·𝔠(U†)`.
pub const SIMULATE_CHOI_TOL: f64 = 1e-9;
/// Residual and PSD-margin tolerance for re-verifying an optimized point.
pub const VERIFY_TOL: f64 = 1e-4;
/// Slack allowed above the closed-form parallel bound.
pub const BOUND_TOL: f64 = 1e-3;

/// A command's payload plus an optional tolerance failure, which is reported
/// after the payload has been printed.
pub struct Outcome<T> {
    pub result: T,
    pub failure: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct FormulaResult {
    pub d: usize,
    pub k: usize,
    pub rounds: usize,
    pub theorem1: f64,
    pub parallel_bound: f64,
    pub transposition_q_opt: f64,
    pub min_uses_ok: bool,
}

pub fn formula(cfg: &RunConfig) -> FormulaResult {
    let (d, k) = (cfg.d, cfg.k);
    FormulaResult {
        d,
        k,
        rounds: affordable_rounds(d, k),
        theorem1: theorem1_probability(d, k),
        parallel_bound: theorem2_parallel_bound(d, k),
        transposition_q_opt: transposition_parallel_optimum(d, k),
        min_uses_ok: min_uses_ok(d, k),
    }
}

#[derive(Debug, Serialize)]
pub struct SimulateResult {
    pub d: usize,
    pub k: usize,
    pub trials: usize,
    pub rounds_used: usize,
    pub p_exact_min: f64,
    pub p_exact_max: f64,
    pub p_formula: f64,
    pub max_abs_delta: f64,
    pub max_choi_distance: f64,
    pub prob_tol: f64,
    pub choi_tol: f64,
    pub pass: bool,
}

struct Trial {
    rounds: usize,
    p: f64,
    choi_distance: f64,
}

pub fn simulate(cfg: &RunConfig) -> Result<Outcome<SimulateResult>, CliError> {
    let (d, k) = (cfg.d, cfg.k);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let unitaries: Vec<ComplexMatrix> = (0..cfg.trials).map(|_| haar_special_unitary(d, &mut rng)).collect();
    let trials = unitaries
        .par_iter()
        .map(|u| {
            let rep = adaptive_protocol(u, d, k)?;
            let p = rep.success_prob_exact;
            let target = choi_of_unitary(&u.adjoint(), d)?.matrix().scale_real(p);
            Ok(Trial {
                rounds: rep.rounds_used,
                p,
                choi_distance: rep.success_channel_choi.matrix().frobenius_distance(&target),
            })
        })
        .collect::<uinv_core::Result<Vec<Trial>>>()?;
    let p_formula = theorem1_probability(d, k);
    let fold = |f: fn(f64, f64) -> f64, init: f64, g: &dyn Fn(&Trial) -> f64| trials.iter().map(g).fold(init, f);
    let max_abs_delta = fold(f64::max, 0.0, &|t| (t.p - p_formula).abs());
    let max_choi_distance = fold(f64::max, 0.0, &|t| t.choi_distance);
    let pass = max_abs_delta <= SIMULATE_PROB_TOL && max_choi_distance <= SIMULATE_CHOI_TOL;
    let result = SimulateResult {
        d,
        k,
        trials: cfg.trials,
        rounds_used: trials.first().map_or(0, |t| t.rounds),
        p_exact_min: fold(f64::min, f64::INFINITY, &|t| t.p),
        p_exact_max: fold(f64::max, f64::NEG_INFINITY, &|t| t.p),
        p_formula,
        max_abs_delta,
        max_choi_distance,
        prob_tol: SIMULATE_PROB_TOL,
        choi_tol: SIMULATE_CHOI_TOL,
        pass,
    };
    let failure = (!pass).then(|| {
        format!("simulation off formula: |Δp| = {max_abs_delta:.3e}, Choi distance = {max_choi_distance:.3e}")
    });
    Ok(Outcome { result, failure })
}

#[derive(Debug, Serialize)]
pub struct SpanResult {
    pub d: usize,
    pub k: usize,
    pub rank: usize,
    pub samples_drawn: usize,
    /// Trailing samples that did not raise the rank.
    pub saturation_run: usize,
    pub rank_history: Vec<usize>,
    /// Ratio of the largest to smallest Gram–Schmidt pivot.
    pub conditioning: f64,
}

pub fn span(cfg: &RunConfig) -> Result<SpanResult, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let set = spanning_unitary_set(cfg.d, cfg.k, &mut rng, cfg.size_cap)?;
    Ok(SpanResult {
        d: cfg.d,
        k: cfg.k,
        rank: set.rank,
        samples_drawn: set.samples_drawn,
        saturation_run: set.saturation_run(),
        conditioning: set.basis.conditioning()?,
        rank_history: set.rank_history,
    })
}

#[derive(Debug, Serialize)]
pub struct Verification {
    pub samples: usize,
    pub universality_residual: f64,
    pub structure_residual: f64,
    pub psd_margin_s: f64,
    pub psd_margin_slack: f64,
    pub bound: f64,
    pub within_bound: bool,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct OptimizeResult {
    pub d: usize,
    pub k: usize,
    pub mode: String,
    pub side: usize,
    pub spanning_rank: usize,
    pub spanning_samples: usize,
    pub solver_tol: f64,
    pub p_star: f64,
    pub status: String,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub verification: Option<Verification>,
    pub theorem1: f64,
    pub parallel_bound: f64,
    pub exported_program: Option<String>,
    pub dumped: Vec<String>,
}

/// Side-effect requests of a single optimization.
#[derive(Clone, Debug, Default)]
pub struct OptimizeExtras {
    pub export_program: Option<PathBuf>,
    pub dump_prefix: Option<PathBuf>,
    pub strict: bool,
}

fn solver_config(tol: f64, max_iter: usize) -> SolverConfig {
    SolverConfig {
        tol,
        tol_obj: 10.0 * tol,
        max_iter,
        ..SolverConfig::default()
    }
}

/// Refuses up front when the comb side exceeds the cap, before any sampling.
fn check_size(d: usize, k: usize, cap: usize) -> Result<usize, CliError> {
    let side = (d as u128).checked_pow(2 * k as u32 + 2).unwrap_or(u128::MAX);
    if side > cap as u128 {
        return Err(CliError::Resource(format!(
            "d={d}, k={k} needs total dimension {side}, above the size cap {cap} (set UINV_SIZE_CAP or size_cap to raise it)"
        )));
    }
    Ok(side as usize)
}

/// One `(d, k, mode)` instance with its solver settings.
struct Instance {
    d: usize,
    k: usize,
    mode: CombMode,
    seed: u64,
    tol: f64,
    max_iter: usize,
    size_cap: usize,
}

fn solve_cell(inst: &Instance, extras: &OptimizeExtras) -> Result<(OptimizeResult, Solution), CliError> {
    let &Instance {
        d,
        k,
        mode,
        seed,
        tol,
        max_iter,
        size_cap,
    } = inst;
    if k == 0 {
        return Err(CliError::Usage("optimization needs at least one use (k ≥ 1)".into()));
    }
    let side = check_size(d, k, size_cap)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let structure = CombStructure::inversion(d, k, mode)?;
    let spanning = spanning_unitary_set(d, k, &mut rng, size_cap)?;
    let exported_program = match &extras.export_program {
        Some(path) => {
            let config = AssembleConfig {
                size_cap,
                ..AssembleConfig::default()
            };
            let program = assemble_inversion_sdp(&structure, &spanning, None, &config)?;
            std::fs::write(path, program.to_text())?;
            Some(path.display().to_string())
        }
        None => None,
    };
    let problem = InversionProblem::new(&structure, &spanning, size_cap)?;
    let sol = solve_inversion(&problem, &solver_config(tol, max_iter))?;
    let fresh: Vec<ComplexMatrix> = (0..VERIFY_SAMPLES).map(|_| haar_special_unitary(d, &mut rng)).collect();
    let verification = match verify_solution(&sol, &structure, &fresh, BOUND_TOL) {
        Ok(v) => Some(Verification {
            samples: v.samples,
            universality_residual: v.universality_residual,
            structure_residual: v.structure_residual,
            psd_margin_s: v.psd_margin_s,
            psd_margin_slack: v.psd_margin_slack,
            bound: v.bound,
            within_bound: v.within_bound,
            tol: VERIFY_TOL,
            pass: v.passes(VERIFY_TOL),
        }),
        Err(uinv_core::Error::InvalidArgument(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let mut dumped = Vec::new();
    if let (Some(prefix), Some(s), Some(c)) = (&extras.dump_prefix, &sol.s, &sol.c) {
        for (name, m) in [("S", s), ("C", c)] {
            let path = suffixed(prefix, name);
            write_matrix(&path, m)?;
            dumped.push(path.display().to_string());
        }
    }
    let result = OptimizeResult {
        d,
        k,
        mode: mode.to_string(),
        side,
        spanning_rank: spanning.rank,
        spanning_samples: spanning.samples_drawn,
        solver_tol: tol,
        p_star: sol.p_star,
        status: sol.status.to_string(),
        iterations: sol.iterations,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        gap: sol.gap,
        verification,
        theorem1: theorem1_probability(d, k),
        parallel_bound: theorem2_parallel_bound(d, k),
        exported_program,
        dumped,
    };
    Ok((result, sol))
}

fn suffixed(prefix: &Path, name: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(format!(".{name}.txt"));
    PathBuf::from(s)
}

/// Dense text dump: the side on the first line, then one line per row with
/// `re im` pairs.
fn write_matrix(path: &Path, m: &ComplexMatrix) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", m.rows())?;
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|z| format!("{:?} {:?}", z.re, z.im)).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

pub fn optimize(cfg: &RunConfig, extras: &OptimizeExtras) -> Result<Outcome<OptimizeResult>, CliError> {
    let mode = cfg.comb_mode()?;
    let inst = Instance {
        d: cfg.d,
        k: cfg.k,
        mode,
        seed: cfg.seed,
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        size_cap: cfg.size_cap,
    };
    let (result, sol) = solve_cell(&inst, extras)?;
    let failure = match &result.verification {
        Some(v) if !v.pass => Some(format!(
            "verification failed: universality {:.3e}, structure {:.3e}, PSD margins {:.3e}/{:.3e}, within bound: {}",
            v.universality_residual, v.structure_residual, v.psd_margin_s, v.psd_margin_slack, v.within_bound
        )),
        None => Some("solver flagged the problem as infeasible".into()),
        _ if extras.strict && sol.status.as_str() != "optimal" => {
            Some(format!("solver stopped with status {}", sol.status))
        }
        _ => None,
    };
    Ok(Outcome { result, failure })
}

/// One reference value of the success-probability table.
#[derive(Clone, Copy, Debug)]
pub struct TableCell {
    pub d: usize,
    pub k: usize,
    pub mode: CombMode,
    pub target: f64,
    pub tol: f64,
    /// Too slow for the default run.
    pub extended: bool,
}

const fn cell(d: usize, k: usize, mode: CombMode, target: f64, tol: f64, extended: bool) -> TableCell {
    TableCell {
        d,
        k,
        mode,
        target,
        tol,
        extended,
    }
}

use CombMode::{Adaptive, Ico, Parallel};

pub const TABLE1: [TableCell; 15] = [
    cell(2, 1, Parallel, 0.25, 1e-3, false),
    cell(2, 1, Adaptive, 0.25, 1e-3, false),
    cell(2, 1, Ico, 0.25, 1e-3, false),
    cell(2, 2, Parallel, 0.4, 1e-3, false),
    cell(2, 2, Adaptive, 0.4286, 1e-3, false),
    cell(2, 2, Ico, 0.4444, 1e-3, false),
    cell(3, 1, Parallel, 0.0, 1e-4, false),
    cell(3, 1, Adaptive, 0.0, 1e-4, false),
    cell(3, 1, Ico, 0.0, 1e-4, false),
    cell(3, 2, Parallel, 0.1111, 2e-3, false),
    cell(3, 2, Adaptive, 0.1111, 2e-3, false),
    cell(3, 2, Ico, 0.1111, 2e-3, false),
    cell(2, 3, Parallel, 0.5, 5e-3, false),
    cell(2, 3, Adaptive, 0.75, 5e-3, true),
    cell(2, 3, Ico, 0.9416, 5e-3, true),
];

/// Restricts the table to matching cells; `None` matches everything.
#[derive(Clone, Debug, Default)]
pub struct TableFilter {
    pub d: Option<usize>,
    pub k: Option<usize>,
    pub mode: Option<CombMode>,
    pub extended: bool,
}

impl TableFilter {
    fn keeps(&self, c: &TableCell) -> bool {
        (self.extended || !c.extended)
            && self.d.is_none_or(|d| d == c.d)
            && self.k.is_none_or(|k| k == c.k)
            && self.mode.is_none_or(|m| m == c.mode)
    }
}

#[derive(Debug, Serialize)]
pub struct CellResult {
    pub d: usize,
    pub k: usize,
    pub mode: String,
    pub target: f64,
    pub tol: f64,
    pub extended: bool,
    pub p_star: Option<f64>,
    pub abs_error: Option<f64>,
    pub status: String,
    pub iterations: usize,
    pub verified: bool,
    pub pass: bool,
    pub note: Option<String>,
    pub seconds: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct TableResult {
    pub solver_tol: f64,
    pub all_pass: bool,
    /// `p(parallel) ≤ p(adaptive) ≤ p(ico) + 2·tol` wherever all three were solved.
    pub ordering_ok: bool,
    pub cells: Vec<CellResult>,
}

pub fn table1(cfg: &RunConfig, filter: &TableFilter, timing: bool) -> Result<Outcome<TableResult>, CliError> {
    let tol = cfg.tol;
    let mut cells = Vec::new();
    for c in TABLE1.iter().filter(|c| filter.keeps(c)) {
        let start = Instant::now();
        let inst = Instance {
            d: c.d,
            k: c.k,
            mode: c.mode,
            seed: cfg.seed,
            tol,
            max_iter: cfg.max_iter,
            size_cap: cfg.size_cap,
        };
        let solved = solve_cell(&inst, &OptimizeExtras::default());
        let seconds = timing.then(|| start.elapsed().as_secs_f64());
        let row = match solved {
            Ok((r, _)) => {
                let err = (r.p_star - c.target).abs();
                let verified = r.verification.as_ref().is_some_and(|v| v.pass);
                CellResult {
                    d: c.d,
                    k: c.k,
                    mode: c.mode.to_string(),
                    target: c.target,
                    tol: c.tol,
                    extended: c.extended,
                    p_star: Some(r.p_star),
                    abs_error: Some(err),
                    status: r.status,
                    iterations: r.iterations,
                    verified,
                    pass: err <= c.tol && verified,
                    note: None,
                    seconds,
                }
            }
            Err(CliError::Resource(msg)) => CellResult {
                d: c.d,
                k: c.k,
                mode: c.mode.to_string(),
                target: c.target,
                tol: c.tol,
                extended: c.extended,
                p_star: None,
                abs_error: None,
                status: "refused".into(),
                iterations: 0,
                verified: false,
                pass: false,
                note: Some(msg),
                seconds,
            },
            Err(e) => return Err(e),
        };
        log::info!(
            "table cell d={} k={} {}: p*={:?} pass={}",
            row.d,
            row.k,
            row.mode,
            row.p_star,
            row.pass
        );
        cells.push(row);
    }
    let ordering_ok = ordering_holds(&cells, tol);
    let all_pass = cells.iter().all(|c| c.pass) && ordering_ok;
    let failure = (!all_pass).then(|| {
        let bad: Vec<String> = cells
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("d={} k={} {}", c.d, c.k, c.mode))
            .collect();
        format!(
            "table cells outside tolerance: [{}], ordering ok: {ordering_ok}",
            bad.join(", ")
        )
    });
    Ok(Outcome {
        result: TableResult {
            solver_tol: tol,
            all_pass,
            ordering_ok,
            cells,
        },
        failure,
    })
}

fn ordering_holds(cells: &[CellResult], tol: f64) -> bool {
    let value = |d: usize, k: usize, m: &str| {
        cells
            .iter()
            .find(|c| c.d == d && c.k == k && c.mode == m)
            .and_then(|c| c.p_star)
    };
    cells.iter().all(|c| {
        match (
            value(c.d, c.k, "parallel"),
            value(c.d, c.k, "adaptive"),
            value(c.d, c.k, "ico"),
        ) {
            (Some(p), Some(a), Some(i)) => p <= a + 2.0 * tol && a <= i + 2.0 * tol,
            _ => true,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_record_matches_closed_forms() {
        let cfg = RunConfig {
            d: 2,
            k: 2,
            ..RunConfig::default()
        };
        let r = formula(&cfg);
        assert!((r.theorem1 - 0.25).abs() < 1e-15);
        assert!((r.parallel_bound - 0.4).abs() < 1e-15);
        assert!(r.min_uses_ok);
        let r = formula(&RunConfig { d: 3, k: 1, ..cfg });
        assert_eq!(r.theorem1, 0.0);
        assert!(!r.min_uses_ok);
    }

    #[test]
    fn size_check_refuses_before_work() {
        assert_eq!(check_size(2, 2, 64).unwrap(), 64);
        assert!(matches!(check_size(3, 2, 728), Err(CliError::Resource(_))));
        assert!(matches!(check_size(7, 40, usize::MAX), Err(CliError::Resource(_))));
    }

    #[test]
    fn default_table_excludes_extended_cells() {
        let f = TableFilter::default();
        let kept: Vec<_> = TABLE1.iter().filter(|c| f.keeps(c)).collect();
        assert_eq!(kept.len(), 13);
        assert!(kept.iter().all(|c| !c.extended));
        let f = TableFilter {
            d: Some(2),
            k: Some(3),
            extended: true,
            ..Default::default()
        };
        assert_eq!(TABLE1.iter().filter(|c| f.keeps(c)).count(), 3);
    }

    #[test]
    fn ordering_check_spots_inversions() {
        let mk = |mode: &str, p: f64| CellResult {
            d: 2,
            k: 2,
            mode: mode.into(),
            target: 0.0,
            tol: 0.0,
            extended: false,
            p_star: Some(p),
            abs_error: None,
            status: String::new(),
            iterations: 0,
            verified: true,
            pass: true,
            note: None,
            seconds: None,
        };
        let good = [mk("parallel", 0.4), mk("adaptive", 0.43), mk("ico", 0.44)];
        assert!(ordering_holds(&good, 1e-6));
        let bad = [mk("parallel", 0.45), mk("adaptive", 0.43), mk("ico", 0.44)];
        assert!(!ordering_holds(&bad, 1e-6));
    }
}

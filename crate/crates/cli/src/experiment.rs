//! The experiment protocol: for each replicate draw a truth, simulate data,
//! compute the exact posterior and every requested method at every rank, and
//! record the error metrics.

use std::collections::BTreeMap;
use std::time::Instant;

use bayesbt_core::reducers::{restricted_metrics, BoundReport, LisBtReducer, OlrReducer, PdBtReducer, RankUpdate};
use bayesbt_core::smoother::{
    assemble_forward, build_restricted, exact_posterior, generate_data, mahalanobis_sq, sample_prior,
};
use bayesbt_core::{DenseMatrix, ForwardMap, LtiSystem, Method, ObservationSetup, PosteriorApprox, RestrictedProblem};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::config::{ExperimentConfig, PriorKind, SystemSource};
use crate::error::{CliError, CliResult};
use crate::mtx::read_mtx;
use crate::priors::{self, Compatibility, PriorReport};
use crate::synth;

/// Replicate index, or the aggregate over all replicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Replicate {
    Index(usize),
    Mean,
}

impl Serialize for Replicate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Replicate::Index(i) => s.serialize_u64(*i as u64),
            Replicate::Mean => s.serialize_str("mean"),
        }
    }
}

impl<'de> Deserialize<'de> for Replicate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Replicate;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a replicate index or \"mean\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Replicate, E> {
                Ok(Replicate::Index(v as usize))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Replicate, E> {
                if v == "mean" {
                    return Ok(Replicate::Mean);
                }
                v.parse()
                    .map(Replicate::Index)
                    .map_err(|_| E::custom(format!("bad replicate `{v}`")))
            }
        }
        d.deserialize_any(V)
    }
}

impl std::fmt::Display for Replicate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Replicate::Index(i) => write!(f, "{i}"),
            Replicate::Mean => f.write_str("mean"),
        }
    }
}

fn ser_method<S: Serializer>(m: &Method, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(m.as_str())
}

fn de_method<'de, D: Deserializer<'de>>(d: D) -> Result<Method, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(de::Error::custom)
}

/// One output record. `None` marks a failed or not-applicable value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    #[serde(serialize_with = "ser_method", deserialize_with = "de_method")]
    pub method: Method,
    pub rank: usize,
    pub replicate: Replicate,
    pub restricted_forstner: Option<f64>,
    pub restricted_mahalanobis_sq: Option<f64>,
    pub rel_frobenius: Option<f64>,
    pub rel_mse: Option<f64>,
    pub output_error_sq: Option<f64>,
    pub hankel_tail: Option<f64>,
    pub inhom_trace_bound: Option<f64>,
    pub expected_output_error_bound: Option<f64>,
    pub kappa_estimate: Option<f64>,
    pub wallclock_ms: f64,
}

pub const CSV_HEADER: [&str; 13] = [
    "method",
    "rank",
    "replicate",
    "restricted_forstner",
    "restricted_mahalanobis_sq",
    "rel_frobenius",
    "rel_mse",
    "output_error_sq",
    "hankel_tail",
    "inhom_trace_bound",
    "expected_output_error_bound",
    "kappa_estimate",
    "wallclock_ms",
];

impl ResultRow {
    fn empty(method: Method, rank: usize, replicate: Replicate) -> Self {
        Self {
            method,
            rank,
            replicate,
            restricted_forstner: None,
            restricted_mahalanobis_sq: None,
            rel_frobenius: None,
            rel_mse: None,
            output_error_sq: None,
            hankel_tail: None,
            inhom_trace_bound: None,
            expected_output_error_bound: None,
            kappa_estimate: None,
            wallclock_ms: 0.0,
        }
    }

    /// Metric fields in header order (after method, rank, replicate).
    pub fn values(&self) -> [Option<f64>; 10] {
        [
            self.restricted_forstner,
            self.restricted_mahalanobis_sq,
            self.rel_frobenius,
            self.rel_mse,
            self.output_error_sq,
            self.hankel_tail,
            self.inhom_trace_bound,
            self.expected_output_error_bound,
            self.kappa_estimate,
            Some(self.wallclock_ms),
        ]
    }

    fn from_values(method: Method, rank: usize, replicate: Replicate, v: [Option<f64>; 10]) -> Self {
        Self {
            method,
            rank,
            replicate,
            restricted_forstner: v[0],
            restricted_mahalanobis_sq: v[1],
            rel_frobenius: v[2],
            rel_mse: v[3],
            output_error_sq: v[4],
            hankel_tail: v[5],
            inhom_trace_bound: v[6],
            expected_output_error_bound: v[7],
            kappa_estimate: v[8],
            wallclock_ms: v[9].unwrap_or(0.0),
        }
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Run-level facts written next to the rows.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub d: usize,
    pub d_out: usize,
    pub n_times: usize,
    pub system_stable: bool,
    pub prior_kind: String,
    pub prior_rank: usize,
    pub prior_note: String,
    pub prior_compatibility: Compatibility,
    /// True when the prior comes from the invariant-subspace generator
    /// rather than an externally supplied compatible covariance.
    pub prior_is_substitute: bool,
    /// Normalization of the empirical prior covariance, when one is used.
    pub covariance_normalization: Option<&'static str>,
    pub restricted_rank: usize,
    pub attainable_ranks: BTreeMap<String, usize>,
    pub seed: u64,
    pub replicates: usize,
    pub failed_cells: Vec<String>,
}

/// Everything that does not depend on the replicate.
pub struct Problem {
    pub sys: LtiSystem,
    pub prior: PriorReport,
    pub obs: ObservationSetup,
    pub fwd: ForwardMap,
    pub restricted: RestrictedProblem,
    pub truth: Option<DVector<f64>>,
}

/// splitmix64 of `(base, stream, index)`, used to give every random draw
/// its own reproducible seed.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_PRIOR: u64 = 1;
const STREAM_TRUTH: u64 = 2;
const STREAM_NOISE: u64 = 3;

pub fn load_system(cfg: &ExperimentConfig) -> CliResult<LtiSystem> {
    match &cfg.system {
        SystemSource::Files { a, b, c } => synth::load_system(a, b, c),
        SystemSource::Synthetic { d, d_out, spread, seed } => synth::synth_system(*d, *d_out, *spread, *seed),
    }
}

pub fn make_prior(cfg: &ExperimentConfig, sys: &LtiSystem) -> CliResult<PriorReport> {
    let default_seed = derive_seed(cfg.seed, STREAM_PRIOR, 0);
    match &cfg.prior {
        PriorKind::IncompatibleEmpirical { samples, seed } => {
            priors::make_prior_incompatible(sys, *samples, seed.unwrap_or(default_seed))
        }
        PriorKind::LyapunovCompatible { rank, seed } => {
            priors::make_prior_compatible(sys, *rank, seed.unwrap_or(default_seed))
        }
        PriorKind::FromFile { path } => priors::load_prior(sys, path),
    }
}

impl Problem {
    pub fn build(cfg: &ExperimentConfig) -> CliResult<Self> {
        cfg.validate()?;
        let sys = load_system(cfg)?;
        if sys.d_out() != cfg.noise_diag.len() {
            return Err(CliError::Config(format!(
                "noise_diag has {} entries but the system has {} outputs",
                cfg.noise_diag.len(),
                sys.d_out()
            )));
        }
        if let Some(&r) = cfg.ranks.iter().find(|&&r| r > sys.dim()) {
            return Err(CliError::Config(format!(
                "rank {r} exceeds state dimension {}",
                sys.dim()
            )));
        }
        let prior = make_prior(cfg, &sys)?;
        let noise = DenseMatrix::from_diagonal(&DVector::from_column_slice(&cfg.noise_diag));
        let obs = ObservationSetup::equidistant(cfg.times.step, cfg.times.end, noise)?;
        let fwd = assemble_forward(&sys.without_input(), &obs)?;
        let restricted = build_restricted(&prior.belief, &fwd, &obs)?;
        let truth = match &cfg.truth {
            Some(path) => {
                let t = read_mtx(path)?;
                if t.shape() != (sys.dim(), 1) {
                    return Err(CliError::Config(format!("truth must be a {}x1 column", sys.dim())));
                }
                Some(t.column(0).into_owned())
            }
            None => None,
        };
        Ok(Self {
            sys,
            prior,
            obs,
            fwd,
            restricted,
            truth,
        })
    }
}

enum Reducer {
    Olr(OlrReducer),
    LisBt(LisBtReducer),
    PdBt(PdBtReducer),
}

impl Reducer {
    fn new(method: Method, p: &Problem) -> CliResult<Self> {
        let prior = &p.prior.belief;
        Ok(match method {
            Method::Olr => Reducer::Olr(OlrReducer::new(prior, &p.fwd, &p.obs)?),
            Method::LisBt => Reducer::LisBt(LisBtReducer::new(&p.sys, prior, &p.obs)?),
            Method::PdBt => Reducer::PdBt(PdBtReducer::new(&p.sys, prior, &p.obs)?),
            Method::Exact => unreachable!("exact posterior is not a reducer"),
        })
    }

    fn attainable_rank(&self) -> usize {
        match self {
            Reducer::Olr(r) => r.attainable_rank(),
            Reducer::LisBt(r) => r.attainable_rank(),
            Reducer::PdBt(r) => r.attainable_rank(),
        }
    }

    fn rank_update(&self, r: usize) -> bayesbt_core::Result<RankUpdate> {
        match self {
            Reducer::Olr(x) => x.rank_update(r),
            Reducer::LisBt(x) => x.rank_update(r),
            Reducer::PdBt(x) => x.rank_update(r),
        }
    }

    fn bounds(&self, r: usize) -> Option<bayesbt_core::Result<BoundReport>> {
        match self {
            Reducer::PdBt(x) => Some(x.bounds(r)),
            _ => None,
        }
    }
}

/// Replicate-independent state of one (method, rank) cell.
struct Cell {
    method: Method,
    rank: usize,
    ready: Result<ReadyCell, String>,
}

struct ReadyCell {
    update: RankUpdate,
    setup_ms: f64,
    restricted_forstner: Option<f64>,
    rel_frobenius: Option<f64>,
    bounds: Option<BoundReport>,
}

struct Reference {
    exact_cov: DenseMatrix,
    exact_cov_norm: f64,
    restricted_cov: DenseMatrix,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn prepare_cell(method: Method, rank: usize, reducer: &Reducer, p: &Problem, reference: &Reference) -> Cell {
    let start = Instant::now();
    let ready = (|| -> bayesbt_core::Result<ReadyCell> {
        let update = reducer.rank_update(rank)?;
        let setup_ms = ms_since(start);
        let s = p.restricted.rank();
        let zero_post = update.posterior(&DVector::zeros(p.obs.d_obs()));
        let forstner = restricted_metrics(
            &p.restricted,
            &zero_post,
            (&DVector::zeros(s), &reference.restricted_cov),
        )
        .ok()
        .and_then(|m| m.forstner);
        let cov = zero_post.covariance();
        let rel_frobenius = finite((cov - &reference.exact_cov).norm() / reference.exact_cov_norm);
        let bounds = reducer.bounds(rank).transpose()?;
        Ok(ReadyCell {
            update,
            setup_ms,
            restricted_forstner: forstner,
            rel_frobenius,
            bounds,
        })
    })()
    .map_err(|e| e.to_string());
    Cell { method, rank, ready }
}

pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub metadata: RunMetadata,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<ExperimentOutput> {
    let problem = Problem::build(cfg)?;
    run_on(cfg, &problem)
}

/// Runs the protocol on an already built problem.
pub fn run_on(cfg: &ExperimentConfig, p: &Problem) -> CliResult<ExperimentOutput> {
    let methods = cfg.method_list();
    let ranks = cfg.rank_list();
    let reducers: Vec<(Method, Reducer)> = methods
        .iter()
        .map(|&m| Reducer::new(m, p).map(|r| (m, r)))
        .collect::<CliResult<_>>()?;

    let d_obs = p.obs.d_obs();
    let exact0 = exact_posterior(&p.prior.belief, &p.fwd, &p.obs, &DVector::zeros(d_obs))?;
    let (_, restricted_cov) = p.restricted.posterior(&p.obs, &DVector::zeros(d_obs))?;
    let exact_cov = exact0.covariance();
    let reference = Reference {
        exact_cov_norm: exact_cov.norm(),
        exact_cov,
        restricted_cov,
    };

    let jobs: Vec<(Method, usize, &Reducer)> = reducers
        .iter()
        .flat_map(|(m, red)| ranks.iter().map(move |&r| (*m, r, red)))
        .collect();
    let cells: Vec<Cell> = jobs
        .par_iter()
        .map(|&(m, r, red)| prepare_cell(m, r, red, p, &reference))
        .collect();
    let mut failed_cells = Vec::new();
    for c in &cells {
        if let Err(e) = &c.ready {
            log::warn!("{} at rank {} failed: {e}", c.method, c.rank);
            failed_cells.push(format!("{}@{}: {e}", c.method, c.rank));
        }
    }

    let per_replicate: Vec<Vec<ResultRow>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|i| replicate_rows(cfg, p, &cells, &reference, i))
        .collect::<CliResult<_>>()?;
    let mut rows: Vec<ResultRow> = per_replicate.into_iter().flatten().collect();
    rows.extend(aggregate(&rows));

    let attainable_ranks = reducers
        .iter()
        .map(|(m, r)| (m.to_string(), r.attainable_rank()))
        .collect();
    let metadata = RunMetadata {
        d: p.sys.dim(),
        d_out: p.sys.d_out(),
        n_times: p.obs.n_times(),
        system_stable: p.sys.is_stable(),
        prior_kind: match cfg.prior {
            PriorKind::IncompatibleEmpirical { .. } => "incompatible_empirical",
            PriorKind::LyapunovCompatible { .. } => "lyapunov_compatible",
            PriorKind::FromFile { .. } => "from_file",
        }
        .to_string(),
        prior_rank: p.prior.rank(),
        prior_note: p.prior.note.clone(),
        prior_compatibility: p.prior.compatibility,
        prior_is_substitute: matches!(cfg.prior, PriorKind::LyapunovCompatible { .. }),
        covariance_normalization: matches!(cfg.prior, PriorKind::IncompatibleEmpirical { .. })
            .then_some("1/n after centering"),
        restricted_rank: p.restricted.rank(),
        attainable_ranks,
        seed: cfg.seed,
        replicates: cfg.replicates,
        failed_cells,
    };
    Ok(ExperimentOutput { rows, metadata })
}

fn replicate_rows(
    cfg: &ExperimentConfig,
    p: &Problem,
    cells: &[Cell],
    reference: &Reference,
    i: usize,
) -> CliResult<Vec<ResultRow>> {
    let prior = &p.prior.belief;
    let truth = match &p.truth {
        Some(t) => t.clone(),
        None => sample_prior(prior, derive_seed(cfg.seed, STREAM_TRUTH, i as u64)),
    };
    let sys0 = p.sys.without_input();
    let data = generate_data(
        &sys0,
        &p.obs,
        &truth,
        derive_seed(cfg.seed, STREAM_NOISE, i as u64),
        false,
    )?;
    let whitened = p.obs.whiten_vector(&data)?;

    let start = Instant::now();
    let exact = exact_posterior(prior, &p.fwd, &p.obs, &data)?;
    let exact_ms = ms_since(start);

    if cells.is_empty() {
        let mut row = ResultRow::empty(Method::Exact, prior.rank(), Replicate::Index(i));
        row.wallclock_ms = exact_ms;
        return Ok(vec![row]);
    }

    let clean = p.obs.whiten_vector(&p.fwd.apply(&truth)?)?;
    let (mu_hat, _) = p.restricted.posterior(&p.obs, &data)?;
    let mut rows = Vec::with_capacity(cells.len());
    for cell in cells {
        let mut row = ResultRow::empty(cell.method, cell.rank, Replicate::Index(i));
        if let Ok(ready) = &cell.ready {
            let start = Instant::now();
            let approx = ready.update.posterior(&whitened);
            row.wallclock_ms = ready.setup_ms + ms_since(start);
            fill_row(&mut row, ready, &approx, &exact, &mu_hat, p, reference, &clean, &truth);
        }
        rows.push(row);
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn fill_row(
    row: &mut ResultRow,
    ready: &ReadyCell,
    approx: &PosteriorApprox,
    exact: &PosteriorApprox,
    mu_hat: &DVector<f64>,
    p: &Problem,
    reference: &Reference,
    clean: &DVector<f64>,
    truth: &DVector<f64>,
) {
    row.restricted_forstner = ready.restricted_forstner;
    let diff = mu_hat - p.restricted.restrict_vector(&approx.mean);
    row.restricted_mahalanobis_sq = mahalanobis_sq(&diff, &reference.restricted_cov).ok().and_then(finite);
    row.rel_frobenius = ready.rel_frobenius;
    let scale = exact.mean.norm_squared();
    let err = (&approx.mean - &exact.mean).norm_squared();
    row.rel_mse = finite(if scale > 0.0 { err / scale } else { err });
    row.output_error_sq = finite(ready.update.output_error_sq(clean, truth));
    if let Some(b) = &ready.bounds {
        row.hankel_tail = finite(b.hankel_tail);
        row.inhom_trace_bound = finite(b.inhom_trace_bound);
        row.expected_output_error_bound = finite(b.expected_output_error_bound);
        row.kappa_estimate = finite(b.kappa_estimate);
    }
}

/// Mean over replicates per (method, rank), in first-appearance order.
/// Failed values are skipped; a field failed in every replicate stays empty.
pub fn aggregate(rows: &[ResultRow]) -> Vec<ResultRow> {
    let mut order: Vec<(Method, usize)> = Vec::new();
    let mut sums: BTreeMap<(Method, usize), ([f64; 10], [usize; 10])> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.replicate != Replicate::Mean) {
        let key = (row.method, row.rank);
        let entry = sums.entry(key).or_insert_with(|| {
            order.push(key);
            ([0.0; 10], [0; 10])
        });
        for (k, v) in row.values().iter().enumerate() {
            if let Some(v) = v {
                entry.0[k] += v;
                entry.1[k] += 1;
            }
        }
    }
    order
        .into_iter()
        .map(|key| {
            let (sum, count) = sums[&key];
            let mut vals = [None; 10];
            for k in 0..10 {
                if count[k] > 0 {
                    vals[k] = Some(sum[k] / count[k] as f64);
                }
            }
            ResultRow::from_values(key.0, key.1, Replicate::Mean, vals)
        })
        .collect()
}

/// PD-BT bounds over a rank sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub rank: usize,
    pub hankel_tail: f64,
    pub inhom_trace_bound: f64,
    pub expected_output_error_bound: f64,
    pub kappa_estimate: f64,
    pub impulse_error_l2_sq: f64,
    pub sampled_impulse_error_sq: f64,
}

pub fn bounds_sweep(cfg: &ExperimentConfig) -> CliResult<Vec<BoundRow>> {
    let p = Problem::build(cfg)?;
    let pd = PdBtReducer::new(&p.sys, &p.prior.belief, &p.obs)?;
    let ranks = if cfg.ranks.is_empty() {
        (0..=pd.attainable_rank()).collect()
    } else {
        cfg.rank_list()
    };
    ranks
        .par_iter()
        .map(|&r| {
            let b = pd.bounds(r)?;
            Ok(BoundRow {
                rank: r,
                hankel_tail: b.hankel_tail,
                inhom_trace_bound: b.inhom_trace_bound,
                expected_output_error_bound: b.expected_output_error_bound,
                kappa_estimate: b.kappa_estimate,
                impulse_error_l2_sq: b.impulse_error_l2_sq,
                sampled_impulse_error_sq: b.sampled_impulse_error_sq,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(methods: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(&format!(
            r#"{{
            "system": {{"kind": "synthetic", "d": 8, "d_out": 2, "spread": 5.0, "seed": 3}},
            "prior": {{"kind": "incompatible_empirical", "samples": 6}},
            "times": {{"step": 0.25, "end": 4.0}},
            "noise_diag": [0.01, 0.01],
            "ranks": [1, 3, 5],
            "replicates": 3,
            "seed": 11,
            "methods": {methods}
        }}"#
        ))
        .unwrap()
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(0, 1, 0), derive_seed(0, 1, 1));
        assert_ne!(derive_seed(0, 1, 0), derive_seed(0, 2, 0));
        assert_eq!(derive_seed(5, 2, 9), derive_seed(5, 2, 9));
    }

    #[test]
    fn row_count_and_order() {
        let cfg = toy(r#"["PdBT", "OLR", "LisBT"]"#);
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows.len(), 3 * 3 * 3 + 3 * 3);
        let first: Vec<(Method, usize)> = out.rows[..9].iter().map(|r| (r.method, r.rank)).collect();
        assert_eq!(first[0], (Method::Olr, 1));
        assert_eq!(first[3], (Method::LisBt, 1));
        assert_eq!(first[8], (Method::PdBt, 5));
        assert!(out.rows.iter().all(|r| cfg.ranks.contains(&r.rank)));
        assert_eq!(out.metadata.prior_rank, 5);
        let means = out.rows.iter().filter(|r| r.replicate == Replicate::Mean).count();
        assert_eq!(means, 9);
    }

    #[test]
    fn olr_dominates_on_emitted_rows() {
        let out = run_experiment(&toy(r#"["OLR", "LisBT", "PdBT"]"#)).unwrap();
        for olr in out.rows.iter().filter(|r| r.method == Method::Olr) {
            for other in out
                .rows
                .iter()
                .filter(|r| r.method != Method::Olr && r.rank == olr.rank && r.replicate == olr.replicate)
            {
                assert!(olr.restricted_forstner.unwrap() <= other.restricted_forstner.unwrap() + 1e-10);
            }
        }
    }

    #[test]
    fn bounds_only_on_pd_rows() {
        let out = run_experiment(&toy(r#"["OLR", "PdBT"]"#)).unwrap();
        for r in &out.rows {
            assert_eq!(r.inhom_trace_bound.is_some(), r.method == Method::PdBt);
        }
    }

    #[test]
    fn no_methods_gives_exact_timing_rows() {
        let out = run_experiment(&toy("[]")).unwrap();
        assert_eq!(out.rows.len(), 3 + 1);
        assert!(out
            .rows
            .iter()
            .all(|r| r.method == Method::Exact && r.restricted_forstner.is_none()));
    }

    #[test]
    fn deterministic_apart_from_timing() {
        let cfg = toy(r#"["OLR", "PdBT"]"#);
        let strip = |rows: Vec<ResultRow>| {
            rows.into_iter()
                .map(|mut r| {
                    r.wallclock_ms = 0.0;
                    r
                })
                .collect::<Vec<_>>()
        };
        let a = strip(run_experiment(&cfg).unwrap().rows);
        let b = strip(run_experiment(&cfg).unwrap().rows);
        assert_eq!(a, b);
    }

    #[test]
    fn rank_beyond_attainable_is_recorded_not_fatal() {
        let mut cfg = toy(r#"["OLR"]"#);
        cfg.ranks = vec![2, 7];
        let out = run_experiment(&cfg).unwrap();
        let bad: Vec<&ResultRow> = out.rows.iter().filter(|r| r.rank == 7).collect();
        assert!(bad
            .iter()
            .all(|r| r.restricted_forstner.is_none() && r.rel_mse.is_none()));
        assert_eq!(out.metadata.failed_cells.len(), 1);
        assert!(out.rows.iter().filter(|r| r.rank == 2).all(|r| r.rel_mse.is_some()));
    }

    #[test]
    fn rank_above_dimension_is_config_error() {
        let mut cfg = toy(r#"["OLR"]"#);
        cfg.ranks = vec![9];
        assert_eq!(run_experiment(&cfg).err().unwrap().exit_code(), 2);
    }

    #[test]
    fn bounds_sweep_defaults_to_all_ranks() {
        let mut cfg = toy("[]");
        cfg.ranks.clear();
        let rows = bounds_sweep(&cfg).unwrap();
        assert_eq!(rows.first().unwrap().rank, 0);
        let last = rows.last().unwrap();
        assert_eq!(last.inhom_trace_bound, 0.0);
    }
}

use std::fs;
use std::path::{Path, PathBuf};

use klfactor::algebra::{self, make_algebra, AlgebraSpec, ClassFlags, Element};
use klfactor::correlation::{
    self, build_correlation_capped, cholesky_factor, companion_gram, eig_decompose_with, eig_sqrt_factor,
    kl_truncate, snapshot_factor, spectral_root, unitary_connect, CorrelationOp, FactorKind, Factorization,
    SnapshotSet,
};
use klfactor::galerkin::{assemble_truncated, reference_compare, solve, ErrorReport, ProblemSpec};
use klfactor::spectral::{self, Atom, FnSpec};
use klfactor::weak_dist::{self, autocov_check, synth_stationary, AutocovReport, StationaryModel};
use klfactor::{io, Error};
use log::info;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::{AlgebraArgs, Command, GalerkinArgs, MercerArgs, PodArgs, RunConfig, SynthArgs};

/// Failure of one invocation; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Lib(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }

    pub fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Lib(e) => e.to_string(),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Every tolerance in effect, whether fixed or overridden.
#[derive(Debug, Serialize)]
struct Tolerances {
    classify_tol: f64,
    rank_tol: f64,
    dim_cap: usize,
    merge_tol: f64,
    real_residue: f64,
    reorth_tol: f64,
    faithful_floor: f64,
    psd_slack: f64,
    cholesky_stop: f64,
    max_independence_degree: usize,
    z_flag: f64,
    min_paths: usize,
}

impl Tolerances {
    fn of(cfg: &RunConfig) -> Self {
        Tolerances {
            classify_tol: cfg.tol,
            rank_tol: cfg.rank_tol,
            dim_cap: cfg.dim_cap,
            merge_tol: spectral::MERGE_TOL,
            real_residue: spectral::REAL_RESIDUE,
            reorth_tol: spectral::REORTH_TOL,
            faithful_floor: algebra::FAITHFUL_FLOOR,
            psd_slack: correlation::PSD_SLACK,
            cholesky_stop: correlation::CHOLESKY_STOP,
            max_independence_degree: algebra::MAX_INDEPENDENCE_DEGREE,
            z_flag: weak_dist::Z_FLAG,
            min_paths: weak_dist::MIN_PATHS,
        }
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    version: &'static str,
    subcommand: &'static str,
    config: &'a RunConfig,
    tolerances: Tolerances,
    #[serde(flatten)]
    result: T,
}

pub fn dispatch(cfg: &RunConfig) -> Outcome<()> {
    check_inputs(cfg)?;
    fs::create_dir_all(&cfg.out)
        .map_err(|e| Failure::Usage(format!("cannot create output directory {}: {e}", cfg.out.display())))?;
    info!("running {} into {}", cfg.command.name(), cfg.out.display());
    match &cfg.command {
        Command::Pod(a) => {
            let r = pod(cfg, a)?;
            write_report(cfg, "pod_report.json", r)
        }
        Command::Mercer(a) => {
            let r = mercer(cfg, a)?;
            write_report(cfg, "mercer_report.json", r)
        }
        Command::Algebra(a) => {
            let r = algebra_cmd(cfg, a)?;
            write_report(cfg, "algebra_report.json", r)
        }
        Command::Synth(a) => {
            let r = synth(cfg, a)?;
            write_report(cfg, "synth_report.json", r)
        }
        Command::Galerkin(a) => {
            let r = galerkin(cfg, a)?;
            write_report(cfg, "galerkin_report.json", r)
        }
    }
}

fn write_report<T: Serialize>(cfg: &RunConfig, name: &str, result: T) -> Outcome<()> {
    let report = Report {
        version: klfactor::VERSION,
        subcommand: cfg.command.name(),
        config: cfg,
        tolerances: Tolerances::of(cfg),
        result,
    };
    let path = cfg.out.join(name);
    io::write_report_json(&path, &report)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn check_inputs(cfg: &RunConfig) -> Outcome<()> {
    let mut inputs: Vec<&PathBuf> = Vec::new();
    match &cfg.command {
        Command::Pod(a) => {
            inputs.push(&a.input.snapshots);
            inputs.extend(&a.input.weights);
        }
        Command::Mercer(a) => {
            inputs.extend(&a.snapshots);
            inputs.extend(&a.weights);
            inputs.extend(&a.correlation);
        }
        Command::Algebra(a) => {
            inputs.push(&a.spec);
            inputs.push(&a.element);
            inputs.extend(&a.element2);
        }
        Command::Synth(a) => {
            inputs.push(&a.model);
            inputs.push(&a.times);
        }
        Command::Galerkin(a) => inputs.push(&a.problem),
    }
    for p in inputs {
        if !p.is_file() {
            return Err(Failure::Usage(format!("input file {} does not exist or is not a file", p.display())));
        }
    }
    if !(cfg.tol > 0.0 && cfg.tol.is_finite()) {
        return Err(Failure::Usage(format!("--tol must be positive and finite, got {}", cfg.tol)));
    }
    if !(cfg.rank_tol >= 0.0 && cfg.rank_tol < 1.0) {
        return Err(Failure::Usage(format!("--rank-tol must lie in [0, 1), got {}", cfg.rank_tol)));
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum WeightsFile {
    List(Vec<f64>),
    Object { weights: Vec<f64> },
}

fn load_snapshots(snapshots: &Path, weights: Option<&Path>, uniform: bool) -> Outcome<SnapshotSet> {
    let (labels, data) = io::load_labelled_matrix_csv(snapshots)?;
    let m = data.ncols();
    let w = match (weights, uniform) {
        (Some(p), false) => match io::load_json::<WeightsFile>(p)? {
            WeightsFile::List(w) | WeightsFile::Object { weights: w } => w,
        },
        (None, true) => vec![1.0 / m as f64; m],
        _ => return Err(Failure::Usage("give either --weights or --uniform-weights".into())),
    };
    let snap = match labels {
        Some(l) => SnapshotSet::with_labels(data, w, l)?,
        None => SnapshotSet::new(data, w)?,
    };
    info!("loaded {} snapshots of dimension {}", snap.count(), snap.dim());
    Ok(snap)
}

#[derive(Serialize)]
struct PodResult {
    lambda: Vec<f64>,
    modes_csv: String,
    coeffs_csv: String,
    discarded_energy: f64,
    rank: usize,
    numerical_rank: usize,
    trace: f64,
    spectrum: Vec<f64>,
    weighted_error: f64,
    labels: Vec<String>,
}

fn pod(cfg: &RunConfig, a: &PodArgs) -> Outcome<PodResult> {
    let snap = load_snapshots(&a.input.snapshots, a.input.weights.as_deref(), a.input.uniform_weights)?;
    let c = build_correlation_capped(&snap, cfg.dim_cap)?;
    let svd = eig_decompose_with(&c, &snap, cfg.rank_tol)?;
    let n = a.rank.unwrap_or(svd.rank());
    let kl = kl_truncate(&svd, n)?;
    let approx = kl.reconstruct();
    io::write_matrix_csv(cfg.out.join("modes.csv"), &kl.modes)?;
    io::write_matrix_csv(cfg.out.join("coeffs.csv"), &kl.coeffs)?;
    Ok(PodResult {
        lambda: svd.eigenvalues.clone(),
        modes_csv: "modes.csv".into(),
        coeffs_csv: "coeffs.csv".into(),
        discarded_energy: kl.discarded_energy,
        rank: n,
        numerical_rank: svd.rank(),
        trace: svd.trace,
        spectrum: svd.spectrum.clone(),
        weighted_error: snap.weighted_error(&approx),
        labels: snap.labels().to_vec(),
    })
}

#[derive(Serialize)]
struct FactorSummary {
    kind: FactorKind,
    rows: usize,
    residual: f64,
}

#[derive(Serialize)]
struct Connection {
    from: FactorKind,
    to: FactorKind,
    /// Deviation of `X` from an isometry on its smaller side.
    isometry_defect: f64,
    /// `max |X B_from − B_to|`.
    transfer_residual: f64,
}

#[derive(Serialize)]
struct CompanionSummary {
    companion_eigenvalues: Vec<f64>,
    correlation_eigenvalues: Vec<f64>,
    spectrum_deviation: f64,
    mode_deviation: f64,
    kernel_csv: String,
    companion_coeffs_csv: String,
}

#[derive(Serialize)]
struct MercerResult {
    dim: usize,
    trace: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    companion: Option<CompanionSummary>,
    factorizations: Vec<FactorSummary>,
    connections: Vec<Connection>,
}

fn isometry_defect(x: &DMatrix<f64>) -> f64 {
    let g = if x.nrows() >= x.ncols() {
        x.transpose() * x
    } else {
        x * x.transpose()
    };
    let id = DMatrix::identity(g.nrows(), g.ncols());
    (g - id).amax()
}

fn mercer(cfg: &RunConfig, a: &MercerArgs) -> Outcome<MercerResult> {
    let (c, snap) = match (&a.correlation, &a.snapshots) {
        (Some(p), _) => {
            let m = io::load_matrix_csv(p)?;
            if m.nrows() > cfg.dim_cap {
                return Err(Error::DimensionOverflow {
                    dim: m.nrows(),
                    cap: cfg.dim_cap,
                }
                .into());
            }
            (CorrelationOp::from_matrix(m)?, None)
        }
        (None, Some(s)) => {
            let snap = load_snapshots(s, a.weights.as_deref(), a.uniform_weights)?;
            (build_correlation_capped(&snap, cfg.dim_cap)?, Some(snap))
        }
        (None, None) => return Err(Failure::Usage("give --snapshots or --correlation".into())),
    };

    let mut factors: Vec<Factorization> = vec![spectral_root(&c)?, cholesky_factor(&c)?, eig_sqrt_factor(&c)?];
    let mut companion = None;
    if let Some(snap) = &snap {
        factors.push(snapshot_factor(snap));
        let svd = eig_decompose_with(&c, snap, cfg.rank_tol)?;
        let cg = companion_gram(snap);
        let k = cg.eigenvalues.len().min(svd.eigenvalues.len());
        let mut spectrum_deviation = (0..k)
            .map(|i| (cg.eigenvalues[i] - svd.eigenvalues[i]).abs())
            .fold(0.0, f64::max);
        // eigenvalues kept on one side only must be negligible on the other
        for extra in cg.eigenvalues[k..].iter().chain(&svd.eigenvalues[k..]) {
            spectrum_deviation = spectrum_deviation.max(extra.abs());
        }
        let cm = cg.modes(snap);
        let mode_deviation = (0..k)
            .flat_map(|m| (0..cm.nrows()).map(move |r| (r, m)))
            .map(|(r, m)| (cm[(r, m)] - svd.modes[(r, m)]).abs())
            .fold(0.0, f64::max);
        io::write_matrix_csv(cfg.out.join("kernel.csv"), &cg.gram)?;
        io::write_matrix_csv(cfg.out.join("companion_coeffs.csv"), &cg.coeff_eigvecs)?;
        companion = Some(CompanionSummary {
            companion_eigenvalues: cg.eigenvalues.clone(),
            correlation_eigenvalues: svd.eigenvalues.clone(),
            spectrum_deviation,
            mode_deviation,
            kernel_csv: "kernel.csv".into(),
            companion_coeffs_csv: "companion_coeffs.csv".into(),
        });
    }

    let factorizations = factors
        .iter()
        .map(|f| FactorSummary {
            kind: f.kind,
            rows: f.rows(),
            residual: f.residual(&c),
        })
        .collect();
    let base = factors.remove(0);
    let connections = factors
        .iter()
        .map(|f| {
            let x = unitary_connect(&base, f)?;
            let transfer_residual = if x.is_empty() { 0.0 } else { (&x * &base.b - &f.b).amax() };
            Ok(Connection {
                from: base.kind,
                to: f.kind,
                isometry_defect: if x.is_empty() { 0.0 } else { isometry_defect(&x) },
                transfer_residual,
            })
        })
        .collect::<Outcome<Vec<_>>>()?;

    Ok(MercerResult {
        dim: c.dim(),
        trace: c.trace(),
        companion,
        factorizations,
        connections,
    })
}

fn re_im(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

#[derive(Serialize)]
struct NormEntry {
    p: String,
    value: f64,
}

#[derive(Serialize)]
struct MomentEntry {
    k: u32,
    law: f64,
    state: f64,
}

#[derive(Serialize)]
struct SpectralSummary {
    spectrum: Vec<f64>,
    eigenvalues: Vec<f64>,
    law: Vec<Atom>,
    moments: Vec<MomentEntry>,
}

#[derive(Serialize)]
struct PairSummary {
    inner_product: [f64; 2],
    covariance: [f64; 2],
    independent: bool,
    degree: usize,
    uncertainty_gap: Option<f64>,
}

#[derive(Serialize)]
struct FnSummary {
    function: FnSpec,
    element_csv: String,
    spectrum: Vec<f64>,
    expectation: [f64; 2],
}

#[derive(Serialize)]
struct AlgebraResult {
    model: &'static str,
    label: String,
    dim: usize,
    expectation: [f64; 2],
    flags: ClassFlags,
    variance: f64,
    norms: Vec<NormEntry>,
    gns_dim: usize,
    gns_operator_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    spectral: Option<SpectralSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pair: Option<PairSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    function: Option<FnSummary>,
}

fn parse_exponent(s: &str) -> Outcome<f64> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" => Ok(f64::INFINITY),
        t => t
            .parse()
            .map_err(|_| Failure::Usage(format!("--p: '{s}' is not a number or 'inf'"))),
    }
}

fn algebra_cmd(cfg: &RunConfig, a: &AlgebraArgs) -> Outcome<AlgebraResult> {
    let mut spec: AlgebraSpec = io::load_json(&a.spec)?;
    spec.auto_normalise |= a.auto_normalise;
    let alg = make_algebra(&spec)?;
    let x = io::load_element_csv(&a.element, &alg)?;
    let flags = alg.classify(&x, cfg.tol)?;

    let norms = a
        .exponents
        .iter()
        .map(|s| {
            let p = parse_exponent(s)?;
            Ok(NormEntry {
                p: s.trim().to_string(),
                value: spectral::lp_norm(&alg, &x, p)?,
            })
        })
        .collect::<Outcome<Vec<_>>>()?;
    let gns = spectral::gns_rep(&alg, &x)?;

    let spectral = if flags.self_adjoint {
        let law = spectral::law(&alg, &x)?;
        let moments = (1..=a.moments)
            .map(|k| {
                Ok(MomentEntry {
                    k,
                    law: law.moment(k),
                    state: alg.expectation(&x.hermitian_part().pow(k))?.re,
                })
            })
            .collect::<Outcome<Vec<_>>>()?;
        Some(SpectralSummary {
            spectrum: spectral::spectrum(&alg, &x)?,
            eigenvalues: spectral::eigenvalues(&alg, &x)?,
            law: law.atoms,
            moments,
        })
    } else {
        None
    };

    let pair = match &a.element2 {
        Some(p) => {
            let y = io::load_element_csv(p, &alg)?;
            let both_sa = flags.self_adjoint && alg.classify(&y, cfg.tol)?.self_adjoint;
            Some(PairSummary {
                inner_product: re_im(alg.inner2(&x, &y)?),
                covariance: re_im(alg.covariance(&x, &y)?),
                independent: alg.independence_test(&x, &y, a.degree, cfg.tol)?,
                degree: a.degree,
                uncertainty_gap: if both_sa { Some(alg.uncertainty_gap(&x, &y)?) } else { None },
            })
        }
        None => None,
    };

    let function = match &a.function {
        Some(text) => {
            let f: FnSpec =
                serde_json::from_str(text).map_err(|e| Failure::Usage(format!("--fn is not a function spec: {e}")))?;
            let fx = spectral::apply_fn(&alg, &x, &f)?;
            write_element(&cfg.out.join("fn_element.csv"), &fx)?;
            Some(FnSummary {
                spectrum: spectral::spectrum(&alg, &fx)?,
                expectation: re_im(alg.expectation(&fx)?),
                function: f,
                element_csv: "fn_element.csv".into(),
            })
        }
        None => None,
    };

    Ok(AlgebraResult {
        model: if alg.is_function_model() { "function" } else { "matrix" },
        label: alg.label().to_string(),
        dim: alg.dim(),
        expectation: re_im(alg.expectation(&x)?),
        flags,
        variance: alg.variance(&x)?,
        norms,
        gns_dim: gns.dim(),
        gns_operator_norm: gns.operator_norm(),
        spectral,
        pair,
        function,
    })
}

fn write_element(path: &Path, e: &Element) -> Outcome<()> {
    let m = match e {
        Element::Function(v) => DMatrix::from_row_slice(1, v.len(), v.as_slice()),
        Element::Matrix(m) => m.clone(),
    };
    io::write_complex_matrix_csv(path, &m)?;
    Ok(())
}

#[derive(Serialize)]
struct SynthResult {
    seed: u64,
    n_paths: usize,
    n_times: usize,
    variance: f64,
    paths_csv: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    autocov: Option<AutocovReport>,
    any_flagged: bool,
}

fn load_times(path: &Path) -> Outcome<Vec<f64>> {
    let m = io::load_matrix_csv(path)?;
    if m.nrows() != 1 && m.ncols() != 1 {
        return Err(Error::Format {
            path: path.display().to_string(),
            msg: format!("times must be a single row or column, found {}x{}", m.nrows(), m.ncols()),
        }
        .into());
    }
    Ok(m.iter().copied().collect())
}

fn synth(cfg: &RunConfig, a: &SynthArgs) -> Outcome<SynthResult> {
    let mut model: StationaryModel = io::load_json(&a.model)?;
    if let Some(seed) = a.seed {
        model.seed = seed;
    }
    let times = load_times(&a.times)?;
    let paths = synth_stationary(&model, &times, a.paths)?;
    io::write_matrix_csv(cfg.out.join("paths.csv"), &paths)?;
    let autocov = if a.lags.is_empty() {
        None
    } else {
        Some(autocov_check(&paths, &times, &model, &a.lags)?)
    };
    Ok(SynthResult {
        seed: model.seed,
        n_paths: paths.nrows(),
        n_times: times.len(),
        variance: model.variance(),
        paths_csv: "paths.csv".into(),
        any_flagged: autocov.as_ref().is_some_and(AutocovReport::any_flagged),
        autocov,
    })
}

#[derive(Serialize)]
struct GalerkinResult {
    atoms: usize,
    keep: usize,
    steps: usize,
    t_end: f64,
    stiffness: Vec<Vec<f64>>,
    final_coeffs: Vec<f64>,
    errors: ErrorReport,
    trajectory_csv: String,
    solution_csv: String,
}

fn galerkin(cfg: &RunConfig, a: &GalerkinArgs) -> Outcome<GalerkinResult> {
    let mut problem: ProblemSpec = io::load_json(&a.problem)?;
    problem.auto_normalise |= a.auto_normalise;
    let (alg, kappa, forcing, u0) = problem.inputs()?;
    let keep = problem.keep.unwrap_or(alg.dim());
    let sys = assemble_truncated(&alg, &kappa, &forcing, &u0, keep)?;
    let traj = solve(&sys, problem.t_end, problem.steps)?;
    let errors = reference_compare(&alg, &kappa, &forcing, &u0, &sys, &traj)?;

    let nt = traj.times.len();
    let coeffs = DMatrix::from_fn(nt, keep + 1, |k, j| if j == 0 { traj.times[k] } else { traj.state(k)[j - 1] });
    let mut header = vec!["t".to_string()];
    header.extend((0..keep).map(|j| format!("u{j}")));
    io::write_labelled_matrix_csv(cfg.out.join("trajectory.csv"), &header, &coeffs)?;

    let atoms = alg.dim();
    let values = DMatrix::from_fn(nt, atoms + 1, |k, i| {
        if i == 0 {
            traj.times[k]
        } else {
            sys.reconstruct(&traj.state(k))[i - 1]
        }
    });
    let mut header = vec!["t".to_string()];
    header.extend((0..atoms).map(|i| format!("v{i}")));
    io::write_labelled_matrix_csv(cfg.out.join("solution.csv"), &header, &values)?;

    Ok(GalerkinResult {
        atoms,
        keep,
        steps: problem.steps,
        t_end: problem.t_end,
        stiffness: sys.stiffness.row_iter().map(|r| r.iter().copied().collect()).collect(),
        final_coeffs: traj.state(nt - 1).iter().copied().collect(),
        errors,
        trajectory_csv: "trajectory.csv".into(),
        solution_csv: "solution.csv".into(),
    })
}

//! One function per subcommand.

use crate::{
    CliError, EnergyArg, FactorArgs, ForwardArgs, GreenArgs, IntegralsArgs, InvertArgs, KernelArg, RoundtripArgs,
    SetsArgs, SignArg, TMode, TSource, VerifyCheck, Which,
};
use crate::Command;
use layerstrip::boundary_jets::{BoundaryPatch, ComplexEnergy};
use layerstrip::dataset::{synthesize, FactorMode, ForwardConfig, SymbolDataset};
use layerstrip::hyperbolic_model::{green_residual_check, GreenResidualReport, HalfSpaceGrid, KernelForm, SpectralSign};
use layerstrip::inversion::{layer_strip_driver, DriverConfig, FactorSource, RecoveryReport, Residuals};
use layerstrip::model_quadrature::{
    green_kernel, i_full_integral, j_integral, t_limit_integral, t_limit_integral_towards, QuadratureSpec,
};
use layerstrip::spectral_sets::{is_admissible, zero_scan, Admissibility, ExceptionalSet, Region, ZeroEstimate, ZeroScanOptions};
use layerstrip::synth::{compare, EnergyKind, RoundTripErrors, SynthOptions, SyntheticCase};
use num_complex::Complex64;
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const SCAN_CAVEAT: &str =
    "zero scan is a grid search: zeros closer together than the step may be merged or missed";

pub fn run(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Forward(a) => forward(a),
        Command::Invert(a) => invert(a),
        Command::Sets(a) => sets(a),
        Command::Integrals(a) => integrals(a),
        Command::Verify { check: VerifyCheck::Green(a) } => verify_green(a),
        Command::Roundtrip(a) => roundtrip(a),
    }
}

fn numeric<E: Into<layerstrip::Error>>(e: E) -> CliError {
    CliError::from(e.into())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn read_patch(path: &Path) -> Result<BoundaryPatch, CliError> {
    BoundaryPatch::from_json(&read_text(path)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    text
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty JSON to `out`, or to stdout.
fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let text = json(value);
    match out {
        Some(p) => write_file(p, &text),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|source| CliError::Io {
            path: PathBuf::from("<stdout>"),
            source,
        }),
    }
}

fn write_csv(path: &Path, header: Vec<String>, rows: Vec<Vec<String>>) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(&header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn factor_mode(mode: TMode, f: &FactorArgs) -> FactorMode {
    match mode {
        TMode::Injected => FactorMode::Injected { t1: f.t1, t2: f.t2 },
        TMode::Quadrature => FactorMode::Quadrature {
            spec: QuadratureSpec::with_rel_tol(f.t_tol),
        },
    }
}

fn forward(a: ForwardArgs) -> Result<ExitCode, CliError> {
    let p1 = read_patch(&a.patch1)?;
    let p2 = a.patch2.as_deref().map(read_patch).transpose()?;
    let mut cfg = ForwardConfig::new(a.lambdas.iter().map(|&l| ComplexEnergy::new(l)).collect());
    if let Some(s) = a.scales {
        cfg.scales = s;
    }
    cfg.prefactor = a.prefactor;
    cfg.factors = factor_mode(a.t_mode, &a.factors);
    cfg.singularity_energy = a.singularity_energy;
    cfg.user_excluded = a.exclude;
    cfg.k_max = a.k_max;
    log::info!("forward: S(ξ) = 2^(n−2σ) Γ(n/2 − σ)/Γ(σ − n/2) |ξ|^(2σ−n), σ = n/2 + √((n/2)² + (V₀ − λ² − n²/4)/α²)");
    let ds = synthesize(&p1, p2.as_ref(), &cfg).map_err(numeric)?;
    emit(&ds, a.out.as_deref())?;
    if let Some(path) = a.csv {
        let n = p1.n();
        let mut header: Vec<String> = vec!["y_index".into()];
        header.extend((0..n).map(|k| format!("y{k}")));
        for e in 0..ds.energies.len() {
            header.push(format!("sigma_re_{e}"));
            header.push(format!("sigma_im_{e}"));
        }
        let rows = (0..p1.len())
            .map(|i| {
                let mut r = vec![i.to_string()];
                r.extend(p1.point(i).iter().map(f64::to_string));
                for field in &ds.sigma_field {
                    r.push(field[i].re.to_string());
                    r.push(field[i].im.to_string());
                }
                r
            })
            .collect();
        write_csv(&path, header, rows)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn invert(a: InvertArgs) -> Result<ExitCode, CliError> {
    let text = read_text(&a.dataset)?;
    let mut ds: SymbolDataset = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: not a symbol dataset: {e}", a.dataset.display())))?;
    if let Some(p) = a.prefactor {
        ds.prefactor = p;
    }
    let factors = match a.t_source {
        TSource::Dataset => FactorSource::Dataset,
        TSource::Injected => FactorSource::Override {
            factors: factor_mode(TMode::Injected, &a.factors),
        },
        TSource::Quadrature => FactorSource::Override {
            factors: factor_mode(TMode::Quadrature, &a.factors),
        },
    };
    let cfg = DriverConfig {
        alpha_known: a.alpha_known,
        margin: a.margin,
        factors,
    };
    let report = layer_strip_driver(&ds, &cfg).map_err(numeric)?;
    emit(&report, a.out.as_deref())?;
    if let Some(path) = a.csv {
        write_report_csv(&path, &ds, &report)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn write_report_csv(path: &Path, ds: &SymbolDataset, report: &RecoveryReport) -> Result<(), CliError> {
    let n = report.n;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let mut header: Vec<String> = vec!["y_index".into()];
    header.extend((0..n).map(|k| format!("y{k}")));
    header.extend(["alpha_sq".into(), "v0".into()]);
    header.extend(pairs.iter().map(|(i, j)| format!("h0_{i}{j}")));
    header.extend(pairs.iter().map(|(i, j)| format!("h_{i}{j}")));
    header.push("w1".into());
    let opt = |v: &Option<Vec<f64>>, i: usize| v.as_ref().map_or(String::new(), |v| v[i].to_string());
    let rows = (0..report.grid_len)
        .map(|i| {
            let mut r = vec![i.to_string()];
            let y = ds.symbols.iter().find(|s| s.y_index == i).map(|s| s.y.clone()).unwrap_or_default();
            r.extend(y.iter().map(f64::to_string));
            r.push(opt(&report.alpha_sq, i));
            r.push(opt(&report.v0, i));
            r.extend(pairs.iter().map(|&(a, b)| report.h0[i][(a, b)].to_string()));
            match report.first_order.iter().find(|f| f.y_index == i) {
                Some(f) => {
                    r.extend(pairs.iter().map(|&(a, b)| f.recovery.h[(a, b)].to_string()));
                    r.push(f.recovery.w1.to_string());
                }
                None => r.extend(std::iter::repeat_n(String::new(), pairs.len() + 1)),
            }
            r
        })
        .collect();
    write_csv(path, header, rows)
}

#[derive(Serialize)]
struct AdmissibilityEntry {
    #[serde(serialize_with = "pair")]
    lambda: Complex64,
    #[serde(flatten)]
    result: Admissibility,
}

#[derive(Serialize)]
struct Zeros {
    #[serde(rename = "T1")]
    t1: Vec<ZeroEstimate>,
    #[serde(rename = "T2")]
    t2: Vec<ZeroEstimate>,
}

#[derive(Serialize)]
struct ScanInfo {
    region: Region,
    step: f64,
    n: usize,
    caveat: &'static str,
}

#[derive(Serialize)]
struct SetsOutput {
    interval: [f64; 2],
    modes: Vec<f64>,
    exceptional_set: ExceptionalSet,
    admissibility: Vec<AdmissibilityEntry>,
    zeros: Zeros,
    scan: Option<ScanInfo>,
}

fn pair<S: serde::Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
    [z.re, z.im].serialize(s)
}

fn sets(a: SetsArgs) -> Result<ExitCode, CliError> {
    let patch = read_patch(&a.patch)?;
    let es = ExceptionalSet::from_patch(&patch, a.k_max, a.exclude);
    let admissibility = a
        .lambdas
        .iter()
        .map(|&l| {
            is_admissible(&ComplexEnergy::new(l), &es, a.margin)
                .map(|result| AdmissibilityEntry { lambda: l, result })
                .map_err(numeric)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut zeros = Zeros {
        t1: Vec::new(),
        t2: Vec::new(),
    };
    let mut scan = None;
    if let Some([r0, r1, i0, i1]) = a.scan {
        let n = a.scan_n.unwrap_or(patch.n());
        let region = Region::new([r0, r1], [i0, i1]);
        let spec = QuadratureSpec::with_rel_tol(a.tol);
        let opts = ZeroScanOptions {
            zero_tol: a.zero_tol,
            ..ZeroScanOptions::default()
        };
        eprintln!("note: {SCAN_CAVEAT} (step {})", a.step);
        for (l, slot) in [(1u32, &mut zeros.t1), (2, &mut zeros.t2)] {
            let f = |s: Complex64| t_limit_integral(l, s, n, &spec).map(|v| v.value);
            *slot = zero_scan(&f, region, a.step, &opts).map_err(numeric)?;
        }
        scan = Some(ScanInfo {
            region,
            step: a.step,
            n,
            caveat: SCAN_CAVEAT,
        });
    }
    let out = SetsOutput {
        interval: es.interval_lambda_sq,
        modes: es.distinct_mode_values(),
        exceptional_set: es,
        admissibility,
        zeros,
        scan,
    };
    emit(&out, a.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct IntegralOutput {
    which: &'static str,
    #[serde(serialize_with = "pair")]
    sigma: Complex64,
    n: usize,
    #[serde(serialize_with = "pair")]
    value: Complex64,
    err: f64,
    evals: usize,
    converged: bool,
}

fn integrals(a: IntegralsArgs) -> Result<ExitCode, CliError> {
    if a.n == 0 {
        return Err(CliError::Config("--n must be at least 1".into()));
    }
    let spec = QuadratureSpec::with_rel_tol(a.tol);
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let z = a.z.clone().unwrap_or_else(|| vec![0.0; a.n]);
    if z.len() != a.n {
        return Err(CliError::Config(format!("--z needs {} entries", a.n)));
    }
    let (name, v) = match a.which {
        Which::T1 | Which::T2 => {
            let l = if a.which == Which::T1 { 1 } else { 2 };
            let v = match &a.target {
                Some(t) if t.len() != a.n => return Err(CliError::Config(format!("--target needs {} entries", a.n))),
                Some(t) => t_limit_integral_towards(l, a.sigma, t, &spec),
                None => t_limit_integral(l, a.sigma, a.n, &spec),
            };
            (if l == 1 { "T1" } else { "T2" }, v.map_err(numeric)?)
        }
        Which::J => ("J", j_integral(a.l, a.k, a.sigma, a.n, &spec).map_err(numeric)?),
        Which::I => {
            let spec = QuadratureSpec {
                abs_tol: 1e-300,
                ..spec
            };
            ("I", i_full_integral(a.l, a.sigma, a.s, &z, &spec).map_err(numeric)?)
        }
        Which::G => {
            let value = green_kernel(a.s, &z, a.sigma, a.n).map_err(numeric)?;
            let out = IntegralOutput {
                which: "G",
                sigma: a.sigma,
                n: a.n,
                value,
                err: 0.0,
                evals: 1,
                converged: true,
            };
            emit(&out, a.out.as_deref())?;
            return Ok(ExitCode::SUCCESS);
        }
    };
    let out = IntegralOutput {
        which: name,
        sigma: a.sigma,
        n: a.n,
        value: v.value,
        err: v.est_error,
        evals: v.n_evals,
        converged: v.converged,
    };
    emit(&out, a.out.as_deref())?;
    Ok(if v.converged { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

#[derive(Serialize)]
struct GreenOutput {
    #[serde(flatten)]
    report: GreenResidualReport,
    expected_ratio: [f64; 2],
    second_order: bool,
}

fn verify_green(a: GreenArgs) -> Result<ExitCode, CliError> {
    let grid = HalfSpaceGrid::new(
        a.n,
        [-a.tau_half_width, a.tau_half_width],
        a.grid_size,
        a.z_half_width,
        a.grid_size,
        a.exclusion,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let kernel = match a.kernel {
        KernelArg::Leading => KernelForm::LeadingTerm,
        KernelArg::Full => KernelForm::Full,
    };
    let sign = match a.sign {
        SignArg::Annihilating => SpectralSign::Annihilating,
        SignArg::Reversed => SpectralSign::Reversed,
    };
    log::info!("verify green: (Δ₀ − c)K with c = σ(n − σ) or σ(σ − n), coarse and refined grid");
    let report = green_residual_check(a.sigma, &grid, kernel, sign).map_err(numeric)?;
    let expected_ratio = [3.5, 4.5];
    let second_order = (expected_ratio[0]..=expected_ratio[1]).contains(&report.refinement_ratio);
    emit(
        &GreenOutput {
            report,
            expected_ratio,
            second_order,
        },
        a.out.as_deref(),
    )?;
    if a.strict && !second_order {
        eprintln!("error: refinement ratio outside [3.5, 4.5]");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct RoundtripSummary {
    seed: u64,
    n: usize,
    points_per_axis: usize,
    t_mode: &'static str,
    energies: Vec<ComplexEnergy>,
    errors: RoundTripErrors,
    zeroth_order_error: f64,
    first_order_error: f64,
    tolerance: f64,
    passed: bool,
    design_rank: Option<usize>,
    /// Smallest singular value along the `H ∝ h₀⁻¹` direction over all points.
    identity_direction_gain: Option<f64>,
    residuals: Residuals,
}

fn roundtrip(a: RoundtripArgs) -> Result<ExitCode, CliError> {
    if !(1..=3).contains(&a.n) {
        return Err(CliError::Config("--n must be 1, 2 or 3".into()));
    }
    let opts = SynthOptions {
        points_per_axis: a.points_per_axis,
        energy_kind: match a.energy_kind {
            EnergyArg::Complex => EnergyKind::Complex,
            EnergyArg::Imaginary => EnergyKind::Imaginary,
        },
        ..SynthOptions::default()
    };
    let case = SyntheticCase::generate(a.seed, a.n, &opts).map_err(numeric)?;
    let mut cfg = ForwardConfig::new(case.energies.clone());
    let unit = FactorArgs {
        t1: Complex64::new(1.0, 0.0),
        t2: Complex64::new(1.0, 0.0),
        t_tol: 1e-10,
    };
    cfg.factors = factor_mode(a.t_mode, &unit);
    if let Some(k) = a.singular_points {
        cfg.singularity_points = Some((0..k.min(case.patch1.len())).collect());
    }
    let ds = synthesize(&case.patch1, Some(&case.patch2), &cfg).map_err(numeric)?;
    let report = layer_strip_driver(&ds, &DriverConfig::default()).map_err(numeric)?;
    let errors = compare(&report, &case.truth);
    let (zeroth, first) = (errors.zeroth_order(), errors.first_order());
    let passed = zeroth <= a.tol && first <= a.tol;
    let summary = RoundtripSummary {
        seed: a.seed,
        n: a.n,
        points_per_axis: a.points_per_axis,
        t_mode: match a.t_mode {
            TMode::Injected => "injected",
            TMode::Quadrature => "quadrature",
        },
        energies: case.energies.clone(),
        errors,
        zeroth_order_error: zeroth,
        first_order_error: first,
        tolerance: a.tol,
        passed,
        design_rank: report.design_rank,
        identity_direction_gain: report
            .first_order
            .iter()
            .map(|f| f.recovery.identity_direction_gain)
            .reduce(f64::min),
        residuals: report.residuals,
    };
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.clone(),
            source,
        })?;
        write_file(&dir.join("patch1.json"), &json(&case.patch1.to_spec()))?;
        write_file(&dir.join("patch2.json"), &json(&case.patch2.to_spec()))?;
        write_file(&dir.join("dataset.json"), &json(&ds))?;
        write_file(&dir.join("report.json"), &json(&report))?;
        write_file(&dir.join("summary.json"), &json(&summary))?;
    }
    emit(&summary, None)?;
    if !passed {
        eprintln!("error: recovery error {:.3e} exceeds tolerance {:.1e}", zeroth.max(first), a.tol);
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

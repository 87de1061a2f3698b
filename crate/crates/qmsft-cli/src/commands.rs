use std::io::Write;

use serde::Serialize;

use qmsft::inequalities::{
    decay_table, decoherence_time_bound, nogo_sequence, spectral_gap, uniform_convexity_defect,
    universal_constants, ConvexityDefect, DecayRow, GapReport, NoGoPoint,
};
use qmsft::linalg::eigh;
use qmsft::norms::{amalgamated_norm, NormQuery, NormSummary, Variant};
use qmsft::qms::{check_detailed_balance, BalanceKind};
use qmsft::structure::{analyze, ConditionalExpectation};
use qmsft::{random, Error};

use crate::model::{self, Loaded};
use crate::{verify, Cli, Command, Failure, Format, Global, ModelArgs, VariantArg};

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let g = &cli.global;
    match &cli.command {
        Command::Analyze { model, eps } => cmd_analyze(g, model, eps),
        Command::Verify {
            model,
            suite,
            samples,
            c_scale,
            restarts,
        } => {
            let loaded = model::load(model)?;
            let opts = verify::Options {
                suite: *suite,
                samples: *samples,
                c_scale: *c_scale,
                restarts: *restarts,
                seed: g.seed,
                tol: g.tol,
            };
            let report = verify::run(&loaded, &opts)?;
            emit_json(g, &report)?;
            if report.passed {
                Ok(())
            } else {
                Err(Failure::Property)
            }
        }
        Command::Norm {
            model,
            x,
            q,
            p,
            variant,
        } => cmd_norm(g, model, x, *q, *p, *variant),
        Command::Nogo {
            model,
            k,
            epsilon,
            p,
        } => cmd_nogo(g, model, k, *epsilon, p),
        Command::Wcd {
            n,
            eps,
            t_max,
            points,
            states,
        } => cmd_wcd(g, *n, eps, *t_max, *points, *states),
    }
}

pub fn emit(g: &Global, text: &str) -> Result<(), Failure> {
    match &g.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Failure::Input(format!("cannot write to stdout: {e}")))
        }
    }
}

pub fn emit_json<T: Serialize>(g: &Global, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("report serialization");
    text.push('\n');
    emit(g, &text)
}

#[derive(Serialize)]
struct BlockRow {
    d_h: usize,
    d_k: usize,
    tau_spectrum: Vec<f64>,
}

#[derive(Serialize)]
struct BalanceRow {
    holds: bool,
    residual: f64,
}

#[derive(Serialize)]
struct Balance {
    kms: BalanceRow,
    gns: BalanceRow,
}

#[derive(Serialize)]
struct Constants {
    /// Strong log-Sobolev constant `(ln‖σ_Tr^{-1}‖ + 2)/(2λ)`.
    c: f64,
    /// Weak constant `ln√2`.
    d: f64,
    /// `ln√2 + ln|I|`, the weak constant used for hypercontractivity.
    hc_d: f64,
}

#[derive(Serialize)]
struct TimeRow {
    eps: f64,
    t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

#[derive(Serialize, Default)]
struct AnalysisReport {
    model: String,
    dim: usize,
    seed: u64,
    tol: f64,
    blocks: Option<Vec<BlockRow>>,
    sigma_tr_spectrum: Option<Vec<f64>>,
    detailed_balance: Option<Balance>,
    spectral_gap: Option<GapReport>,
    universal: Option<Constants>,
    decoherence_times: Option<Vec<TimeRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn fill_analysis(
    report: &mut AnalysisReport,
    loaded: &Loaded,
    g: &Global,
    eps: &[f64],
) -> Result<(), Error> {
    let ce = analyze(&loaded.gen)?;
    report.blocks = Some(
        ce.structure
            .blocks
            .iter()
            .map(|b| BlockRow {
                d_h: b.d_h,
                d_k: b.d_k,
                tau_spectrum: eigh(&b.tau).values,
            })
            .collect(),
    );
    report.sigma_tr_spectrum = Some(ce.sigma_eig().values.clone());
    let row = |kind| -> Result<BalanceRow, Error> {
        let b = check_detailed_balance(&loaded.gen, &ce.sigma_tr, kind, g.seed)?;
        Ok(BalanceRow {
            holds: b.residual <= g.tol,
            residual: b.residual,
        })
    };
    report.detailed_balance = Some(Balance {
        kms: row(BalanceKind::Kms)?,
        gns: row(BalanceKind::Gns)?,
    });
    let gap = spectral_gap(&loaded.gen, &ce)?;
    let lambda = gap.gap;
    report.spectral_gap = Some(gap);
    let (c, d) = universal_constants(&ce, lambda)?;
    let hc_d = d + (ce.n_blocks() as f64).ln();
    report.universal = Some(Constants { c, d, hc_d });
    let mut times = Vec::with_capacity(eps.len());
    for &e in eps {
        match decoherence_time_bound(c, hc_d, lambda, &ce, e) {
            Ok(t) => times.push(TimeRow {
                eps: e,
                t: Some(t),
                note: None,
            }),
            Err(Error::PreconditionFailed(msg)) => times.push(TimeRow {
                eps: e,
                t: None,
                note: Some(msg),
            }),
            Err(err) => return Err(err),
        }
    }
    report.decoherence_times = Some(times);
    Ok(())
}

fn cmd_analyze(g: &Global, args: &ModelArgs, eps: &[f64]) -> Result<(), Failure> {
    let loaded = model::load(args)?;
    let mut report = AnalysisReport {
        model: loaded.name.clone(),
        dim: loaded.gen.dim(),
        seed: g.seed,
        tol: g.tol,
        ..Default::default()
    };
    match fill_analysis(&mut report, &loaded, g, eps) {
        Ok(()) => emit_json(g, &report),
        Err(e) => {
            let failure = Failure::from(e.clone());
            if matches!(failure, Failure::Numerical(_)) {
                report.error = Some(e.to_string());
                emit_json(g, &report)?;
            }
            Err(failure)
        }
    }
}

#[derive(Serialize)]
struct NormReport {
    model: String,
    q: f64,
    p: f64,
    variant: &'static str,
    result: NormSummary,
}

fn cmd_norm(
    g: &Global,
    args: &ModelArgs,
    x_path: &std::path::Path,
    q: f64,
    p: f64,
    variant: VariantArg,
) -> Result<(), Failure> {
    let loaded = model::load(args)?;
    let ce = analyze(&loaded.gen)?;
    let x = model::load_matrix(x_path, ce.dim())?;
    let (v, name) = match variant {
        VariantArg::Exact => (Variant::Exact, "exact"),
        VariantArg::TripleBar => (Variant::TripleBar, "triple-bar"),
    };
    let r = amalgamated_norm(&NormQuery::new(&x, q, p, &ce).with_variant(v))?;
    emit_json(
        g,
        &NormReport {
            model: loaded.name,
            q,
            p,
            variant: name,
            result: r.summary(),
        },
    )?;
    if r.converged {
        Ok(())
    } else {
        Err(Failure::Numerical(Error::NotConverged {
            iterations: r.iterations,
            residual: r.stationarity_residual,
        }))
    }
}

#[derive(Serialize)]
struct NoGoReport {
    model: String,
    skipped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
    epsilon: f64,
    points: Vec<NoGoPoint>,
    convexity: Vec<ConvexityDefect>,
}

fn nogo_points(
    ce: &ConditionalExpectation,
    ks: &[u64],
    eps: f64,
    ps: &[f64],
) -> Result<(Vec<NoGoPoint>, Vec<ConvexityDefect>), Error> {
    let mut points = Vec::with_capacity(ks.len());
    let mut convexity = Vec::new();
    for &k in ks {
        points.push(nogo_sequence(ce, k, eps)?);
        for &p in ps {
            convexity.push(uniform_convexity_defect(ce, k, p, 0.9)?);
        }
    }
    Ok((points, convexity))
}

fn cmd_nogo(
    g: &Global,
    args: &ModelArgs,
    ks: &[u64],
    eps: f64,
    ps: &[f64],
) -> Result<(), Failure> {
    let loaded = model::load(args)?;
    let ce = analyze(&loaded.gen)?;
    let mut report = NoGoReport {
        model: loaded.name,
        skipped: false,
        reason: None,
        epsilon: eps,
        points: Vec::new(),
        convexity: Vec::new(),
    };
    match nogo_points(&ce, ks, eps, ps) {
        Ok((points, convexity)) => {
            report.points = points;
            report.convexity = convexity;
        }
        Err(Error::TrivialAlgebra(why)) => {
            report.skipped = true;
            report.reason = Some(why.to_string());
        }
        Err(e) => return Err(e.into()),
    }
    emit_json(g, &report)
}

#[derive(Serialize)]
struct TimeBound {
    eps: f64,
    t: Option<f64>,
}

#[derive(Serialize)]
struct DecayReport {
    model: String,
    seed: u64,
    lambda: f64,
    c: f64,
    d: f64,
    time_bounds: Vec<TimeBound>,
    rows: Vec<DecayRow>,
}

fn cmd_wcd(
    g: &Global,
    n: usize,
    eps: &[f64],
    t_max: f64,
    points: usize,
    states: usize,
) -> Result<(), Failure> {
    if points < 2 || !(t_max > 0.0) {
        return Err(Failure::Input("need --points >= 2 and --t-max > 0".into()));
    }
    let gen = qmsft::qms::build_generator(&qmsft::models::wcd_generator(n)?)?;
    let ce = analyze(&gen)?;
    let lambda = spectral_gap(&gen, &ce)?.gap;
    let (c, d0) = universal_constants(&ce, lambda)?;
    let d = d0 + (ce.n_blocks() as f64).ln();
    let mut rng = random::rng(g.seed);
    let rhos: Vec<_> = (0..states.max(1))
        .map(|_| random::density(ce.dim(), &mut rng))
        .collect();
    let times: Vec<f64> = (0..points)
        .map(|i| t_max * i as f64 / (points - 1) as f64)
        .collect();
    let rows = decay_table(&gen, &ce, &rhos, &times, (c, d, lambda))?;
    if g.format == Format::Csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &rows {
            w.serialize(r)
                .map_err(|e| Failure::Input(format!("csv: {e}")))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Failure::Input(format!("csv: {e}")))?;
        return emit(g, &String::from_utf8(bytes).expect("csv output is UTF-8"));
    }
    let time_bounds = eps
        .iter()
        .map(|&e| TimeBound {
            eps: e,
            t: decoherence_time_bound(c, d, lambda, &ce, e).ok(),
        })
        .collect();
    emit_json(
        g,
        &DecayReport {
            model: format!("wcd-{n}"),
            seed: g.seed,
            lambda,
            c,
            d,
            time_bounds,
            rows,
        },
    )
}

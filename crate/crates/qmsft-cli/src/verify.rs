//! Property suites behind `qmsft verify`.

use serde::Serialize;

use qmsft::inequalities::{
    almost_convexity_check, entropy_domination_slack, estimate_lsi_constant,
    gross_derivative_check, hc_check, lp_relative_entropy, nogo_sequence,
    quantum_relative_entropy, spectral_gap, uniform_convexity_defect, universal_constants,
    variance, HcOptions, LsiOptions, NOGO_EPS,
};
use qmsft::linalg::{self, eigh, hermitize, CMat};
use qmsft::norms::{amalgamated_norm, gamma, weighted_norm, NormQuery};
use qmsft::qms::{GeneratorPair, Picture};
use qmsft::structure::{analyze, ConditionalExpectation};
use qmsft::{random, Error, Result};

use crate::model::Loaded;
use crate::{Failure, Suite};

/// Agreement required between an optimized norm and its closed form.
const NORM_TOL: f64 = 1e-6;
/// Relative residual allowed between the finite-difference and closed-form derivatives.
const GROSS_TOL: f64 = 1e-4;
/// Relative mismatch allowed between the numeric and analytic no-go ratios.
const NOGO_TOL: f64 = 0.02;

pub struct Options {
    pub suite: Suite,
    pub samples: usize,
    pub c_scale: f64,
    pub restarts: usize,
    pub seed: u64,
    pub tol: f64,
}

#[derive(Serialize)]
pub struct CheckRow {
    suite: &'static str,
    check: &'static str,
    /// `None` for informational rows.
    passed: Option<bool>,
    samples: usize,
    /// Worst violation measure; at most the tolerance when the check passes.
    worst: f64,
    tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

#[derive(Serialize)]
pub struct Skip {
    suite: &'static str,
    reason: String,
}

#[derive(Serialize)]
pub struct VerifyReport {
    model: String,
    seed: u64,
    tol: f64,
    samples: usize,
    checks: Vec<CheckRow>,
    skipped: Vec<Skip>,
    pub passed: bool,
}

fn row(
    suite: &'static str,
    check: &'static str,
    samples: usize,
    worst: f64,
    tolerance: f64,
) -> CheckRow {
    CheckRow {
        suite,
        check,
        passed: Some(worst <= tolerance),
        samples,
        worst,
        tolerance,
        note: None,
    }
}

pub fn run(loaded: &Loaded, opts: &Options) -> std::result::Result<VerifyReport, Failure> {
    let gen = &loaded.gen;
    let ce = analyze(gen)?;
    let mut checks = Vec::new();
    let mut skipped = Vec::new();
    let want = |s: Suite| opts.suite == Suite::All || opts.suite == s;
    if want(Suite::Norms) {
        checks.extend(norms_suite(gen, &ce, opts)?);
    }
    if want(Suite::Entropy) {
        checks.extend(entropy_suite(gen, &ce, opts)?);
    }
    if want(Suite::Hc) {
        checks.extend(hc_suite(gen, &ce, opts)?);
    }
    if want(Suite::Nogo) {
        match nogo_suite(&ce, opts) {
            Ok(rows) => checks.extend(rows),
            Err(Error::TrivialAlgebra(why)) => skipped.push(Skip {
                suite: "nogo",
                reason: why.to_string(),
            }),
            Err(e) => return Err(e.into()),
        }
    }
    let passed = checks.iter().all(|c| c.passed != Some(false));
    Ok(VerifyReport {
        model: loaded.name.clone(),
        seed: opts.seed,
        tol: opts.tol,
        samples: opts.samples,
        checks,
        skipped,
        passed,
    })
}

fn norm(x: &CMat, q: f64, p: f64, ce: &ConditionalExpectation) -> Result<f64> {
    Ok(amalgamated_norm(&NormQuery::new(x, q, p, ce))?.value)
}

fn norms_suite(
    gen: &GeneratorPair,
    ce: &ConditionalExpectation,
    opts: &Options,
) -> Result<Vec<CheckRow>> {
    const PAIRS: [(f64, f64); 4] = [(1.5, 3.0), (2.0, 4.0), (3.0, 1.5), (4.0, 2.0)];
    let n = opts.samples;
    let s = &ce.sigma_tr;
    let d = ce.dim();
    let mut rng = random::substream(opts.seed, 1);
    let (mut holder, mut ordering, mut fubini, mut restriction, mut contraction) =
        (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0f64, 0.0f64, f64::NEG_INFINITY);
    for i in 0..n {
        let (q, p) = PAIRS[i % PAIRS.len()];
        let x = random::positive_definite(d, 0.01, &mut rng);
        let y = random::psd_of_rank(d, 1 + i % d, &mut rng);
        let nx = norm(&x, q, p, ce)?;
        let ny = norm(&y, q / (q - 1.0), p / (p - 1.0), ce)?;
        let pair = linalg::hs_inner(&x, &gamma(ce, &y, 1.0)).re;
        holder = holder.max(pair / (nx * ny) - 1.0);

        let nq = weighted_norm(&x, q, s)?;
        let np = weighted_norm(&x, p, s)?;
        ordering = ordering.max((nq.min(np) / nx - 1.0).max(nx / nq.max(np) - 1.0));
        fubini = fubini.max((norm(&x, q, q, ce)? / nq - 1.0).abs());

        let xn = hermitize(&ce.apply(&x));
        restriction = restriction.max((norm(&xn, q, p, ce)? / weighted_norm(&xn, q, s)? - 1.0).abs());

        let t = [0.1, 0.5, 2.0][i % 3];
        let moved = hermitize(&gen.flow(t, &x, Picture::Heisenberg));
        contraction = contraction.max(norm(&moved, q, p, ce)? / nx - 1.0);
    }
    Ok(vec![
        row("norms", "holder", n, holder, opts.tol),
        row("norms", "ordering", n, ordering, opts.tol),
        row("norms", "fubini", n, fubini, opts.tol),
        row("norms", "restriction", n, restriction, NORM_TOL),
        row("norms", "contractivity", n, contraction, opts.tol),
    ])
}

fn entropy_suite(
    gen: &GeneratorPair,
    ce: &ConditionalExpectation,
    opts: &Options,
) -> Result<Vec<CheckRow>> {
    let n = opts.samples;
    let d = ce.dim();
    let s = &ce.sigma_tr;
    let mut rng = random::substream(opts.seed, 2);
    let (mut ladder, mut domination, mut pythagoras, mut convexity, mut gross) =
        (0.0f64, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY, 0.0f64);
    for i in 0..n {
        let rho = random::density(d, &mut rng);
        let div = quantum_relative_entropy(&rho, &ce.apply_predual(&rho))?;
        for q in [1.0, 2.0, 3.0] {
            let root = eigh(&rho).reconstruct_with(|v| v.max(0.0).powf(1.0 / q));
            let x = hermitize(&gamma(ce, &root, -1.0 / q));
            ladder = ladder.max((lp_relative_entropy(&x, q, ce)? - div / q).abs());
        }

        let x = random::positive_definite(d, 0.05, &mut rng);
        domination = domination.max(-entropy_domination_slack(&x, ce)?);

        let ex = hermitize(&ce.apply(&x));
        let total = weighted_norm(&x, 2.0, s)?.powi(2);
        let split = variance(&x, ce) + weighted_norm(&ex, 2.0, s)?.powi(2);
        pythagoras = pythagoras.max((split / total - 1.0).abs());

        let a = ce.random_density_in_n(&mut rng);
        let p = 1.0 + random::uniform(&mut rng);
        convexity = convexity.max(-almost_convexity_check(&x, &a, p, ce)?);

        let q = [2.0, 1.5, 3.0][i % 3];
        gross = gross.max(gross_derivative_check(&x, gen, ce, q, 2.0)?.residual);
    }
    Ok(vec![
        row("entropy", "ladder", n, ladder, opts.tol),
        row("entropy", "domination", n, domination, opts.tol),
        row("entropy", "pythagoras", n, pythagoras, opts.tol),
        row("entropy", "almost-convexity", n, convexity, opts.tol),
        row("entropy", "gross-derivative", n, gross, GROSS_TOL),
    ])
}

fn hc_suite(
    gen: &GeneratorPair,
    ce: &ConditionalExpectation,
    opts: &Options,
) -> Result<Vec<CheckRow>> {
    let lambda = spectral_gap(gen, ce)?.gap;
    let (c, d0) = universal_constants(ce, lambda)?;
    let d = d0 + (ce.n_blocks() as f64).ln();
    let hc_opts = HcOptions {
        samples_per_point: opts.samples,
        seed: opts.seed,
        ..HcOptions::default()
    };
    let c_used = c * opts.c_scale;
    let r = hc_check(gen, ce, 2.0, c_used, d, &hc_opts)?;
    let mut hc = row("hc", "hypercontractivity", r.samples.len(), r.failures as f64, 0.0);
    hc.passed = Some(r.all_pass);
    hc.note = Some(format!(
        "c = {c_used:.6}, d = {d:.6}; {} failures, {} inconclusive",
        r.failures, r.inconclusive
    ));

    let lsi_opts = LsiOptions {
        restarts: opts.restarts,
        seed: opts.seed,
        ..LsiOptions::default()
    };
    let l = estimate_lsi_constant(gen, ce, 2.0, d0, lsi_opts)?;
    let mut lsi = row(
        "hc",
        "universal-lsi-bound",
        l.restarts,
        l.c - l.universal_bound,
        0.0,
    );
    lsi.note = Some(format!(
        "best ratio {:.6} against bound {:.6}",
        l.c, l.universal_bound
    ));
    Ok(vec![hc, lsi])
}

fn nogo_suite(ce: &ConditionalExpectation, _opts: &Options) -> Result<Vec<CheckRow>> {
    let ks = [10u64, 100, 1000];
    let pts = ks
        .iter()
        .map(|&k| nogo_sequence(ce, k, NOGO_EPS))
        .collect::<Result<Vec<_>>>()?;
    let rise = pts
        .windows(2)
        .map(|w| w[1].analytic_ratio / w[0].analytic_ratio - 1.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut decreasing = row("nogo", "ratio-decreasing", ks.len(), rise, 0.0);
    decreasing.passed = Some(rise < 0.0);
    let mismatch = pts[..2]
        .iter()
        .map(|p| p.numeric_ratio.map_or(f64::INFINITY, |n| (n / p.analytic_ratio - 1.0).abs()))
        .fold(0.0f64, f64::max);
    let numeric = row("nogo", "numeric-ratio", 2, mismatch, NOGO_TOL);
    let u = uniform_convexity_defect(ce, 1000, 1.5, 0.9)?;
    let info = CheckRow {
        suite: "nogo",
        check: "uniform-convexity-defect",
        passed: None,
        samples: 1,
        worst: u.defect,
        tolerance: 0.0,
        note: Some(format!(
            "k = 1000, p = 1.5; negative values violate uniform convexity (certified: {})",
            u.certified
        )),
    };
    Ok(vec![decreasing, numeric, info])
}

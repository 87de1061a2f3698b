//! Multi-start search for the strong log-Sobolev constant at a fixed weak constant.

use serde::Serialize;

use super::entropy::{dirichlet_form, lp_relative_entropy};
use super::gap::{spectral_gap, universal_constants};
use crate::error::{Error, Result};
use crate::linalg::{c, eigh, frechet, hermitize, identity, CMat, C64};
use crate::models::serialize_grid_opt;
use crate::norms::{gamma, weighted_norm_ce};
use crate::optim::{bfgs, bfgs_numeric, BfgsOptions};
use crate::qms::GeneratorPair;
use crate::structure::ConditionalExpectation;
use crate::{par, random};

/// Largest spread `max − min` allowed in the spectrum of `ln X`.
const LOG_SPREAD: f64 = 40.0;

#[derive(Clone, Copy, Debug)]
pub struct LsiOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iters: usize,
}

impl Default for LsiOptions {
    fn default() -> Self {
        LsiOptions {
            restarts: 64,
            seed: 0x15,
            max_iters: 150,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LsiReport {
    pub q: f64,
    /// Best ratio found, a lower bound on the optimal strong constant.
    pub c: f64,
    pub d: f64,
    #[serde(serialize_with = "serialize_grid_opt")]
    pub witness: Option<CMat>,
    pub method: String,
    /// `(ln‖σ^{-1}‖ + 2)/(2λ)`.
    pub universal_bound: f64,
    pub gap: f64,
    pub restarts: usize,
    /// Restarts that reached at least one admissible point.
    pub valid_restarts: usize,
    pub seed: u64,
}

/// Hermitian matrix from `d²` real coordinates.
fn hermitian_from(v: &[f64], d: usize) -> CMat {
    let mut h = CMat::zeros(d, d);
    let mut k = d;
    for i in 0..d {
        h[(i, i)] = c(v[i]);
        for j in i + 1..d {
            let z = C64::new(v[k], v[k + 1]);
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
            k += 2;
        }
    }
    h
}

fn coords_of(h: &CMat) -> Vec<f64> {
    let d = h.nrows();
    let mut v: Vec<f64> = (0..d).map(|i| h[(i, i)].re).collect();
    for i in 0..d {
        for j in i + 1..d {
            v.push(h[(i, j)].re);
            v.push(h[(i, j)].im);
        }
    }
    v
}

/// `exp(H − max H)` with the spectrum clipped to a spread of [`LOG_SPREAD`].
fn exp_clipped(h: &CMat) -> CMat {
    let e = eigh(h);
    let top = e.max();
    e.reconstruct_with(|v| (v - top).max(-LOG_SPREAD).exp())
}

/// `(Ent_q(X) − (2d/q)‖X‖_q^q) / E_q(X)`, or `None` where `E_q(X)` is negligible.
pub fn lsi_ratio(
    x: &CMat,
    gen: &GeneratorPair,
    ce: &ConditionalExpectation,
    q: f64,
    weak_d: f64,
) -> Option<f64> {
    let norm_q = weighted_norm_ce(ce, x, q).powf(q);
    let ent = lp_relative_entropy(x, q, ce).ok()?;
    let e = dirichlet_form(x, q, gen, ce).ok()?;
    if !(e > 1e-12 * norm_q) {
        return None;
    }
    let r = (ent - 2.0 * weak_d / q * norm_q) / e;
    r.is_finite().then_some(r)
}

/// Gradient of `−ratio` in the coordinates of `H`, for `q > 1` and `X = exp_clipped(H)`.
///
/// With `W = Γ^{1/q}X` and `Z = E_N Γ^{-1}(W^q)`, the `X`-gradients are
/// `Ent: Γ^{1/q}(φ′(W) − (1/q) D(W^q)[ln σ + ln Z + I])` with `φ(w) = w^q ln w`,
/// `‖X‖_q^q: q Γ^{1/q}(W^{q−1})` and
/// `E: −q/(2(q−1)) [Γ^{1/q}(D(W^{q−1})[Γ^{1/q} L X]) + L_*(Γ^{1/q} W^{q−1})]`.
fn ratio_gradient(
    v: &[f64],
    gen: &GeneratorPair,
    ce: &ConditionalExpectation,
    q: f64,
    weak_d: f64,
) -> Option<Vec<f64>> {
    let d = ce.dim();
    let he = eigh(&hermitian_from(v, d));
    let top = he.max();
    let fx = |t: f64| (t - top).max(-LOG_SPREAD).exp();
    let dfx = |t: f64| if t - top > -LOG_SPREAD { (t - top).exp() } else { 0.0 };
    let x = he.reconstruct_with(fx);
    let r = lsi_ratio(&x, gen, ce, q, weak_d)?;

    let g = |m: &CMat, s: f64| hermitize(&gamma(ce, m, s));
    let we = eigh(&g(&x, 1.0 / q));
    if !(we.min() > 0.0) {
        return None;
    }
    let wq = we.reconstruct_with(|w| w.powf(q));
    let m = g(&we.reconstruct_with(|w| w.powf(q - 1.0)), 1.0 / q);
    let ze = eigh(&hermitize(&ce.apply(&g(&wq, -1.0))));
    if !(ze.min() > 0.0) {
        return None;
    }
    let b = ce.log_sigma() + ze.reconstruct_with(f64::ln) + identity(d);
    let dphi = we.reconstruct_with(|w| q * w.powf(q - 1.0) * w.ln() + w.powf(q - 1.0));
    let dpow = frechet(&we, |w| w.powf(q), |w| q * w.powf(q - 1.0), &b);
    let grad_ent = g(&(dphi - dpow * c(1.0 / q)), 1.0 / q);
    let grad_norm = &m * c(q);

    let lx = hermitize(&gen.apply(&x));
    let cq = q / (2.0 * (q - 1.0));
    let e = -cq * crate::linalg::hs_inner(&m, &lx).re;
    let inner = frechet(
        &we,
        |w| w.powf(q - 1.0),
        |w| (q - 1.0) * w.powf(q - 2.0),
        &g(&lx, 1.0 / q),
    );
    let grad_e = (g(&inner, 1.0 / q) + hermitize(&gen.apply_predual(&m))) * c(-cq);

    let k = 2.0 * weak_d / q;
    let grad_x = (grad_ent - grad_norm * c(k) - grad_e * c(r)) * c(1.0 / e);
    let gh = frechet(&he, fx, dfx, &grad_x);
    let mut out: Vec<f64> = (0..d).map(|i| -gh[(i, i)].re).collect();
    for i in 0..d {
        for j in i + 1..d {
            out.push(-2.0 * gh[(i, j)].re);
            out.push(-2.0 * gh[(i, j)].im);
        }
    }
    out.iter().all(|t| t.is_finite()).then_some(out)
}

fn starting_point(d: usize, index: usize, rng: &mut random::Rng) -> CMat {
    match index % 4 {
        // Nearly pure states probe the large-entropy corner.
        3 => {
            let v = random::psd_of_rank(d, 1, rng);
            let t = crate::linalg::trace_re(&v).max(1e-12);
            v * c(12.0 / t)
        }
        k => random::hermitian(d, rng) * c([0.5, 2.0, 5.0][k]),
    }
}

/// Best ratio over `X = exp(H)`, `H` Hermitian, from `opts.restarts` seeded starting points.
pub fn estimate_lsi_constant(
    gen: &GeneratorPair,
    ce: &ConditionalExpectation,
    q: f64,
    weak_d: f64,
    opts: LsiOptions,
) -> Result<LsiReport> {
    if !(q >= 1.0) || q.is_infinite() {
        return Err(Error::InvalidExponent(format!("{q}")));
    }
    if !(weak_d >= 0.0) {
        return Err(Error::InvalidConstant(format!("weak constant {weak_d}")));
    }
    let gap = spectral_gap(gen, ce)?;
    let (universal_bound, _) = universal_constants(ce, gap.gap)?;
    let d = ce.dim();
    let bfgs_opts = BfgsOptions {
        max_iters: opts.max_iters,
        grad_tol: 1e-9,
        cost_tol: 1e-12,
        ..Default::default()
    };
    let runs = par::map_indexed(opts.restarts, |i| {
        let mut rng = random::substream(opts.seed, i as u64);
        let h0 = starting_point(d, i, &mut rng);
        let cost = |v: &[f64]| {
            let x = exp_clipped(&hermitian_from(v, d));
            lsi_ratio(&x, gen, ce, q, weak_d).map_or(f64::NAN, |r| -r)
        };
        let m = if q > 1.0 {
            let grad = |v: &[f64]| {
                ratio_gradient(v, gen, ce, q, weak_d).unwrap_or_else(|| vec![f64::NAN; v.len()])
            };
            bfgs(cost, grad, coords_of(&h0), bfgs_opts)
        } else {
            bfgs_numeric(&cost, coords_of(&h0), bfgs_opts)
        };
        m.value
            .is_finite()
            .then(|| (-m.value, exp_clipped(&hermitian_from(&m.x, d))))
    });
    let valid_restarts = runs.iter().filter(|r| r.is_some()).count();
    if valid_restarts == 0 {
        return Err(Error::SearchFailed);
    }
    let best = runs
        .into_iter()
        .flatten()
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one valid restart");
    let (c_est, witness) = if best.0 > 0.0 {
        let x = &best.1;
        let scale = weighted_norm_ce(ce, x, 1.0);
        (best.0, Some(hermitize(&(x / c(scale)))))
    } else {
        (0.0, None)
    };
    Ok(LsiReport {
        q,
        c: c_est,
        d: weak_d,
        witness,
        method: format!("bfgs over ln X, {} restarts", opts.restarts),
        universal_bound,
        gap: gap.gap,
        restarts: opts.restarts,
        valid_restarts,
        seed: opts.seed,
    })
}

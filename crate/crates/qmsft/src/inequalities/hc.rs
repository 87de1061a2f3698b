//! Weak hypercontractivity checks and the derivative of `t ↦ ‖P_t X‖_{(q,p(t))}`.

use serde::Serialize;

use super::entropy::{dirichlet_form, lp_relative_entropy};
use super::gap::slowest_mode;
use crate::error::{Error, Result};
use crate::linalg::{c, eigh, hermitize, identity, CMat};
use crate::norms::{amalgamated_norm, weighted_norm_ce, Form, NormQuery};
use crate::qms::{GeneratorPair, Picture};
use crate::structure::ConditionalExpectation;
use crate::{par, random};

/// Relative margin for `lhs ≤ rhs`.
pub const HC_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct HcOptions {
    pub t_points: usize,
    /// The grid runs log-uniformly over `[t_min, t_max]·c`.
    pub t_min: f64,
    pub t_max: f64,
    pub samples_per_point: usize,
    pub seed: u64,
    /// Extra test points, e.g. an LSI witness.
    pub extra: Vec<CMat>,
}

impl Default for HcOptions {
    fn default() -> Self {
        HcOptions {
            t_points: 20,
            t_min: 1e-3,
            t_max: 2.0,
            samples_per_point: 20,
            seed: 0x4c,
            extra: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// Solver did not converge and the estimate does not decide the comparison.
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct HcSample {
    pub t: f64,
    pub x_id: usize,
    pub p: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct HcReport {
    pub q: f64,
    pub c: f64,
    pub d: f64,
    pub samples: Vec<HcSample>,
    pub all_pass: bool,
    pub failures: usize,
    pub inconclusive: usize,
    pub seed: u64,
}

/// `p(t) = 1 + (q − 1) e^{2t/c}`.
pub fn hc_exponent(q: f64, c_strong: f64, t: f64) -> f64 {
    1.0 + (q - 1.0) * (2.0 * t / c_strong).exp()
}

/// Test points: a slow mode on top of `I`, nearly pure states, elements of `N` nudged off
/// the algebra, then generic positive definite matrices.
fn test_points(
    gen: &GeneratorPair,
    ce: &ConditionalExpectation,
    n: usize,
    seed: u64,
) -> Vec<CMat> {
    let d = ce.dim();
    let mut rng = random::rng(seed);
    let slow = slowest_mode(gen, ce).ok();
    (0..n)
        .map(|k| match k {
            0 | 1 if slow.is_some() => {
                let s = if k == 0 { 0.9 } else { -0.9 };
                identity(d) + slow.as_ref().unwrap() * c(s)
            }
            2 | 3 => {
                let r = random::psd_of_rank(d, 1, &mut rng);
                r + identity(d) * c(1e-3)
            }
            4 | 5 => {
                let a = ce.random_density_in_n(&mut rng) * c(d as f64);
                let h = random::hermitian(d, &mut rng);
                let off = &h - ce.apply(&h);
                let e = eigh(&a).min();
                let off_norm = crate::linalg::schatten_herm(&hermitize(&off), f64::INFINITY);
                let scale = 0.5 * e / off_norm.max(1e-300);
                hermitize(&(a + off * c(scale)))
            }
            _ => random::positive_definite(d, 0.01, &mut rng),
        })
        .collect()
}

/// `‖P_t X‖_{(q,p(t)),N} ≤ exp{2d(1/q − 1/p(t))} ‖X‖_{q,σ}` over a log grid of times.
pub fn hc_check(
    gen: &GeneratorPair,
    ce: &ConditionalExpectation,
    q: f64,
    c_strong: f64,
    d: f64,
    opts: &HcOptions,
) -> Result<HcReport> {
    if !(q > 1.0) || q.is_infinite() {
        return Err(Error::InvalidExponent(format!("{q}")));
    }
    if !(c_strong > 0.0) || !(d >= 0.0) {
        return Err(Error::InvalidConstant(format!(
            "need c > 0 and d >= 0, got c = {c_strong}, d = {d}"
        )));
    }
    let mut xs = test_points(gen, ce, opts.samples_per_point, opts.seed);
    xs.extend(opts.extra.iter().cloned());
    let ts: Vec<f64> = (0..opts.t_points)
        .map(|i| {
            let f = if opts.t_points > 1 {
                i as f64 / (opts.t_points - 1) as f64
            } else {
                0.0
            };
            c_strong * (opts.t_min.ln() + f * (opts.t_max / opts.t_min).ln()).exp()
        })
        .collect();
    let nx = xs.len();
    let samples = par::map_indexed(ts.len() * nx, |idx| {
        let (ti, xi) = (idx / nx, idx % nx);
        let t = ts[ti];
        let x = &xs[xi];
        let p = hc_exponent(q, c_strong, t);
        let rhs = (2.0 * d * (1.0 / q - 1.0 / p)).exp() * weighted_norm_ce(ce, x, q);
        let y = hermitize(&gen.flow(t, x, Picture::Heisenberg));
        let (lhs, verdict) = match amalgamated_norm(&NormQuery::new(&y, q, p, ce)) {
            Ok(r) => {
                let ok = r.value <= rhs * (1.0 + HC_TOL);
                // The infimum form evaluates a feasible dressing, so its value bounds the norm
                // from above; the supremum form bounds it from below.
                let decided = r.converged
                    || match r.form {
                        Form::Inf => ok,
                        Form::Sup => !ok,
                        Form::Fubini => true,
                    };
                let v = match (decided, ok) {
                    (false, _) => Verdict::Inconclusive,
                    (true, true) => Verdict::Pass,
                    (true, false) => Verdict::Fail,
                };
                (r.value, v)
            }
            Err(_) => (f64::NAN, Verdict::Inconclusive),
        };
        HcSample {
            t,
            x_id: xi,
            p,
            lhs,
            rhs,
            verdict,
        }
    });
    let failures = samples.iter().filter(|s| s.verdict == Verdict::Fail).count();
    let inconclusive = samples
        .iter()
        .filter(|s| s.verdict == Verdict::Inconclusive)
        .count();
    Ok(HcReport {
        q,
        c: c_strong,
        d,
        all_pass: failures == 0 && inconclusive == 0,
        samples,
        failures,
        inconclusive,
        seed: opts.seed,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GrossCheck {
    /// Finite-difference derivative of `t ↦ ‖P_t X‖_{(q,p(t))}` at `0`.
    pub numeric: f64,
    /// `p′/(q‖X‖^{q−1}) (Ent_q(X) − (2(q−1)/p′) E_q(X))`.
    pub closed_form: f64,
    /// `∂_p ‖X‖_{(q,p)}` at `p = q`, by finite differences.
    pub numeric_dp: f64,
    /// `Ent_q(X)/(q‖X‖^{q−1})`.
    pub closed_form_dp: f64,
    pub residual: f64,
}

fn richardson(f: &dyn Fn(f64) -> Result<f64>, h1: f64) -> Result<f64> {
    let h2 = h1 / 10.0;
    let d1 = (f(h1)? - f(-h1)?) / (2.0 * h1);
    let d2 = (f(h2)? - f(-h2)?) / (2.0 * h2);
    Ok((100.0 * d2 - d1) / 99.0)
}

fn norm_value(x: &CMat, q: f64, p: f64, ce: &ConditionalExpectation) -> Result<f64> {
    let r = amalgamated_norm(&NormQuery::new(x, q, p, ce))?;
    if !r.converged {
        return Err(Error::NotConverged {
            iterations: r.iterations,
            residual: r.stationarity_residual,
        });
    }
    Ok(r.value)
}

/// Compares the derivative at `t = 0` with its closed form, for `p(t) = 1 + (q−1)e^{p′t/(q−1)}`.
pub fn gross_derivative_check(
    x: &CMat,
    gen: &GeneratorPair,
    ce: &ConditionalExpectation,
    q: f64,
    pprime0: f64,
) -> Result<GrossCheck> {
    if !(q > 1.0) || q.is_infinite() {
        return Err(Error::InvalidExponent(format!("{q}")));
    }
    if !(pprime0 > 0.0) {
        return Err(Error::InvalidConstant(format!("p'(0) = {pprime0}")));
    }
    let x = hermitize(x);
    if eigh(&x).min() <= 0.0 {
        return Err(Error::NonPsdInput(eigh(&x).min()));
    }
    let p_of = |t: f64| 1.0 + (q - 1.0) * (pprime0 * t / (q - 1.0)).exp();
    let along_t = |t: f64| {
        let y = hermitize(&gen.flow(t, &x, Picture::Heisenberg));
        norm_value(&y, q, p_of(t), ce)
    };
    let along_p = |h: f64| norm_value(&x, q, q + h, ce);
    let numeric = richardson(&along_t, 1e-3)?;
    let numeric_dp = richardson(&along_p, 1e-3)?;
    let nx = weighted_norm_ce(ce, &x, q);
    let ent = lp_relative_entropy(&x, q, ce)?;
    let e = dirichlet_form(&x, q, gen, ce)?;
    let denom = q * nx.powf(q - 1.0);
    let closed_form = pprime0 / denom * (ent - 2.0 * (q - 1.0) / pprime0 * e);
    let closed_form_dp = ent / denom;
    let r1 = (numeric - closed_form).abs() / closed_form.abs().max(1e-6 * nx * pprime0);
    let r2 = (numeric_dp - closed_form_dp).abs() / closed_form_dp.abs().max(1e-6 * nx);
    Ok(GrossCheck {
        numeric,
        closed_form,
        numeric_dp,
        closed_form_dp,
        residual: r1.max(r2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::models::{depolarizing_generator, n_decoherent_generator, wcd_generator};
    use crate::qms::build_generator;
    use crate::structure::{analyze, BlockStructure};

    #[test]
    fn identity_has_zero_derivative() {
        let gen = build_generator(&wcd_generator(2).unwrap()).unwrap();
        let ce = analyze(&gen).unwrap();
        let g = gross_derivative_check(&identity(4), &gen, &ce, 2.0, 1.0).unwrap();
        assert!(g.numeric.abs() < 1e-8 && g.closed_form.abs() < 1e-12, "{g:?}");
        assert!(g.residual < 1e-4);
    }

    #[test]
    fn derivative_matches_closed_form() {
        let ce = ConditionalExpectation::from_structure(
            BlockStructure::factor(2, 2, linalg::diag(&[0.6, 0.4])).unwrap(),
        );
        let gen = n_decoherent_generator(&ce);
        let mut rng = random::rng(8);
        for q in [2.0, 3.0] {
            let x = random::positive_definite(4, 0.05, &mut rng);
            let g = gross_derivative_check(&x, &gen, &ce, q, 1.3).unwrap();
            assert!(g.residual < 1e-4, "q={q}: {g:?}");
        }
    }

    #[test]
    fn primitive_case_is_the_weighted_norm_derivative() {
        let sigma = linalg::diag(&[0.7, 0.3]);
        let gen = depolarizing_generator(&sigma).unwrap();
        let ce = analyze(&gen).unwrap();
        let x = random::positive_definite(2, 0.1, &mut random::rng(2));
        let pp = 2.0;
        let g = gross_derivative_check(&x, &gen, &ce, 2.0, pp).unwrap();
        let f = |t: f64| {
            let y = gen.flow(t, &x, Picture::Heisenberg);
            weighted_norm_ce(&ce, &y, 1.0 + (pp * t).exp())
        };
        let h = 1e-4;
        let direct = (f(h) - f(-h)) / (2.0 * h);
        assert!((direct - g.numeric).abs() < 1e-6, "{direct} {g:?}");
    }

    #[test]
    fn hc_at_time_zero_is_equality() {
        let gen = build_generator(&wcd_generator(2).unwrap()).unwrap();
        let ce = analyze(&gen).unwrap();
        assert_eq!(hc_exponent(2.0, 1.0, 0.0), 2.0);
        let opts = HcOptions {
            t_points: 1,
            t_min: 1e-12,
            t_max: 1e-12,
            samples_per_point: 6,
            ..Default::default()
        };
        let r = hc_check(&gen, &ce, 2.0, 1.0, 0.0, &opts).unwrap();
        for s in &r.samples {
            assert!((s.lhs - s.rhs).abs() < 1e-8 * s.rhs, "{s:?}");
        }
    }
}

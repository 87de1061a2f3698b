//! Relative entropies and `L_p` Dirichlet forms.

use crate::error::{Error, Result};
use crate::linalg::{self, eigh, hermitize, CMat, Eigh};
use crate::norms::{gamma, weighted_norm_ce};
use crate::qms::GeneratorPair;
use crate::structure::ConditionalExpectation;

/// `Tr[A ln B]` with `ln` taken on the support of `B` (PSD `B`).
fn trace_log_on_support(a: &CMat, b: &Eigh) -> f64 {
    let scale = b.max().max(1e-300);
    let lb = b.reconstruct_with(|v| if v > 1e-14 * scale { v.ln() } else { 0.0 });
    linalg::hs_inner(a, &lb).re
}

fn x_log_x(v: f64) -> f64 {
    if v > 0.0 {
        v * v.ln()
    } else {
        0.0
    }
}

/// `D(ρ‖σ) = Tr ρ(ln ρ − ln σ)` in nats; `+∞` when `ρ` leaves the support of `σ`.
pub fn quantum_relative_entropy(rho: &CMat, sigma: &CMat) -> Result<f64> {
    linalg::check_hermitian(rho)?;
    linalg::check_hermitian(sigma)?;
    let se = eigh(sigma);
    let scale = se.max().max(1e-300);
    let outside = se.reconstruct_with(|v| if v > 1e-14 * scale { 0.0 } else { 1.0 });
    let leak = linalg::trace_re(&(&outside * rho));
    if leak > 1e-12 * linalg::trace_re(rho).abs().max(1e-300) {
        return Ok(f64::INFINITY);
    }
    let re = eigh(rho);
    let ent: f64 = re.values.iter().map(|&v| x_log_x(v.max(0.0))).sum();
    Ok(ent - trace_log_on_support(rho, &se))
}

fn validate_psd(x: &CMat, d: usize) -> Result<Eigh> {
    linalg::check_square(x, d)?;
    linalg::check_hermitian(x)?;
    let e = eigh(x);
    let scale = e.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::ZeroInput);
    }
    if e.min() < -1e-10 * scale {
        return Err(Error::NonPsdInput(e.min()));
    }
    Ok(e)
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) || p.is_infinite() {
        return Err(Error::InvalidExponent(format!("{p} must be finite and at least 1")));
    }
    Ok(())
}

/// `Ent_{p,N}(X)` for positive semidefinite `X`.
///
/// With `W = Γ^{1/p}(X)`:
/// `Tr[W^p ln W] − (1/p)Tr[W^p ln σ] − (1/p)Tr[W^p ln E_N[Γ^{-1}(W^p)]]`.
pub fn lp_relative_entropy(x: &CMat, p: f64, ce: &ConditionalExpectation) -> Result<f64> {
    check_p(p)?;
    validate_psd(x, ce.dim())?;
    let w = eigh(&hermitize(&gamma(ce, &hermitize(x), 1.0 / p)));
    let wp = w.reconstruct_with(|v| v.max(0.0).powf(p));
    let t1: f64 = w
        .values
        .iter()
        .map(|&v| {
            let v = v.max(0.0);
            if v > 0.0 {
                v.powf(p) * v.ln()
            } else {
                0.0
            }
        })
        .sum();
    let t2 = linalg::hs_inner(&wp, &ce.log_sigma()).re / p;
    let z = eigh(&hermitize(&ce.apply(&gamma(ce, &wp, -1.0))));
    let t3 = trace_log_on_support(&wp, &z) / p;
    Ok(t1 - t2 - t3)
}

/// Primitive entropy `Ent_{p,σ}(X)`: the same expression with `E_N` replaced by `Tr(σ ·) I`.
pub fn primitive_entropy(x: &CMat, p: f64, ce: &ConditionalExpectation) -> Result<f64> {
    check_p(p)?;
    validate_psd(x, ce.dim())?;
    let w = eigh(&hermitize(&gamma(ce, &hermitize(x), 1.0 / p)));
    let wp = w.reconstruct_with(|v| v.max(0.0).powf(p));
    let norm_p = linalg::trace_re(&wp);
    let t1: f64 = w
        .values
        .iter()
        .map(|&v| if v > 0.0 { v.powf(p) * v.ln() } else { 0.0 })
        .sum();
    let t2 = linalg::hs_inner(&wp, &ce.log_sigma()).re / p;
    Ok(t1 - t2 - norm_p * norm_p.ln() / p)
}

/// `E_{p,L}(X) = −(p/(2(p−1))) ⟨I_{p̂,p}(X), L(X)⟩_σ` for Hermitian `X`, with `p̂` the
/// conjugate exponent. For indefinite `X` the power is the odd extension
/// `sgn(W)|W|^{p−1}`. At `p = 1` the logarithmic form `−½ Tr[Γ(L X)(ln Γ(X) − ln σ)]`
/// is used and `X` must be positive definite.
pub fn dirichlet_form(
    x: &CMat,
    p: f64,
    gen: &GeneratorPair,
    ce: &ConditionalExpectation,
) -> Result<f64> {
    check_p(p)?;
    linalg::check_square(x, ce.dim())?;
    linalg::check_hermitian(x)?;
    let x = hermitize(x);
    let lx = gen.apply(&x);
    if p == 1.0 {
        let gx = eigh(&hermitize(&gamma(ce, &x, 1.0)));
        if gx.min() <= 0.0 {
            return Err(Error::DomainError {
                what: "p = 1 Dirichlet form needs positive definite input",
                value: gx.min(),
            });
        }
        let log_diff = gx.reconstruct_with(f64::ln) - ce.log_sigma();
        return Ok(-0.5 * linalg::hs_inner(&gamma(ce, &lx, 1.0), &log_diff).re);
    }
    let w = eigh(&hermitize(&gamma(ce, &x, 1.0 / p)));
    let s = w.reconstruct_with(|v| v.signum() * v.abs().powf(p - 1.0));
    let pair = linalg::hs_inner(&gamma(ce, &s, 1.0 / p), &lx).re;
    Ok(-p / (2.0 * (p - 1.0)) * pair)
}

/// `Var_N(X) = ‖X − E_N X‖²_{2,σ}`.
pub fn variance(x: &CMat, ce: &ConditionalExpectation) -> f64 {
    let r = x - ce.apply(x);
    weighted_norm_ce(ce, &r, 2.0).powi(2)
}

/// `|Z|_2 = Γ^{-1/2}|Γ^{1/2}(Z)|`.
pub fn abs2(z: &CMat, ce: &ConditionalExpectation) -> CMat {
    let a = linalg::abs_power(&hermitize(&gamma(ce, z, 0.5)), 1.0);
    hermitize(&gamma(ce, &a, -0.5))
}

/// Slack of `Ent_2(X) ≤ Ent_2(|X − E_N X|_2) + Var_N(X) + ln√2 ‖X‖²_{2,σ}` (nonnegative when it holds).
pub fn entropy_domination_slack(x: &CMat, ce: &ConditionalExpectation) -> Result<f64> {
    let lhs = lp_relative_entropy(x, 2.0, ce)?;
    let r = hermitize(&(x - ce.apply(x)));
    let ent_r = match lp_relative_entropy(&abs2(&r, ce), 2.0, ce) {
        Ok(v) => v,
        Err(Error::ZeroInput) => 0.0,
        Err(e) => return Err(e),
    };
    let rhs = ent_r
        + variance(x, ce)
        + std::f64::consts::LN_2 / 2.0 * weighted_norm_ce(ce, x, 2.0).powi(2);
    Ok(rhs - lhs)
}

/// `Φ(Z, A, p) = ‖A^{-1/2r} Z A^{-1/2r}‖_p` with `1/r = |1/2 − 1/p|`.
pub fn phi(z: &CMat, a: &CMat, p: f64) -> f64 {
    let inv_r = (0.5 - 1.0 / p).abs();
    let h = eigh(a).reconstruct_with(|v| v.max(1e-300).powf(-inv_r / 2.0));
    let m = hermitize(&(&h * z * &h));
    linalg::schatten_herm(&m, p)
}

/// Slack of the almost-uniform-convexity inequality
/// `Φ(Γ^{1/p}X)² ≥ (p−1)Φ(Γ^{1/p}(X − E_N X))² + Φ(Γ^{1/p}E_N X)²`.
pub fn almost_convexity_check(
    x: &CMat,
    a: &CMat,
    p: f64,
    ce: &ConditionalExpectation,
) -> Result<f64> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::InvalidExponent(format!("{p} is outside [1, 2]")));
    }
    validate_psd(x, ce.dim())?;
    let ae = linalg::herm_eig(a)?;
    if ae.min() <= 0.0 {
        return Err(Error::NonPsdInput(ae.min()));
    }
    let x = hermitize(x);
    let ex = hermitize(&ce.apply(&x));
    let g = |z: &CMat| hermitize(&gamma(ce, z, 1.0 / p));
    let full = phi(&g(&x), a, p).powi(2);
    let fluct = phi(&g(&(&x - &ex)), a, p).powi(2);
    let mean = phi(&g(&ex), a, p).powi(2);
    Ok(full - (p - 1.0) * fluct - mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, diag, identity, kron, trace_re};
    use crate::models::{n_decoherent_generator, wcd_generator};
    use crate::qms::build_generator;
    use crate::random;
    use crate::structure::{analyze, BlockStructure};

    fn factor_ce(seed: u64) -> ConditionalExpectation {
        let mut rng = random::rng(seed);
        let tau = random::density(2, &mut rng);
        let tau = (tau + identity(2) * c(0.2)) / c(1.4);
        ConditionalExpectation::from_structure(BlockStructure::factor(2, 2, tau).unwrap())
    }

    #[test]
    fn relative_entropy_basics() {
        let mut rng = random::rng(1);
        let rho = random::density(3, &mut rng);
        assert!(quantum_relative_entropy(&rho, &rho).unwrap().abs() < 1e-12);
        let pure = diag(&[1.0, 0.0]);
        assert_eq!(quantum_relative_entropy(&(identity(2) / c(2.0)), &pure).unwrap(), f64::INFINITY);
        // maximally coherent state against its pinching
        let v = crate::linalg::CVec::from_element(4, c(0.5));
        let omega = &v * v.adjoint();
        let pinched = identity(4) / c(4.0);
        let d = quantum_relative_entropy(&omega, &pinched).unwrap();
        assert!((d - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_vanishes_on_n() {
        let ce = factor_ce(2);
        let a = random::positive_definite(2, 0.1, &mut random::rng(3));
        let x = kron(&a, &identity(2));
        for p in [1.0, 1.5, 2.0, 3.0] {
            assert!(lp_relative_entropy(&x, p, &ce).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_ladder_and_half_divergence() {
        let ce = factor_ce(4);
        let mut rng = random::rng(5);
        for _ in 0..5 {
            let rho = random::density(4, &mut rng);
            let d = quantum_relative_entropy(&rho, &ce.apply_predual(&rho)).unwrap();
            for q in [1.0, 2.0, 3.0] {
                let x = gamma(&ce, &linalg::psd_power(&rho, 1.0 / q).unwrap(), -1.0 / q);
                let e = lp_relative_entropy(&x, q, &ce).unwrap();
                assert!((e - d / q).abs() < 1e-10, "q={q}: {e} vs {}", d / q);
            }
        }
    }

    #[test]
    fn entropy_reduces_to_two() {
        let ce = factor_ce(6);
        let mut rng = random::rng(7);
        let x = random::positive_definite(4, 0.05, &mut rng);
        let sigma = ce.sigma_tr.clone();
        for p in [1.5, 3.0] {
            let lhs = lp_relative_entropy(&x, p, &ce).unwrap();
            let i2p = crate::norms::iqp_map(&x, 2.0, p, &sigma).unwrap();
            let rhs = 2.0 / p * lp_relative_entropy(&i2p, 2.0, &ce).unwrap();
            assert!((lhs - rhs).abs() < 1e-10);
            assert!(lhs <= primitive_entropy(&x, p, &ce).unwrap() + 1e-12);
        }
        assert!(matches!(lp_relative_entropy(&(x * c(0.0)), 2.0, &ce), Err(Error::ZeroInput)));
    }

    #[test]
    fn dirichlet_forms() {
        let ce = factor_ce(8);
        let gen = n_decoherent_generator(&ce);
        let mut rng = random::rng(9);
        let x = random::positive_definite(4, 0.05, &mut rng);
        let e2 = dirichlet_form(&x, 2.0, &gen, &ce).unwrap();
        assert!((e2 - variance(&x, &ce)).abs() < 1e-12);
        let n = kron(&random::hermitian(2, &mut rng), &identity(2));
        assert!(dirichlet_form(&n, 2.0, &gen, &ce).unwrap().abs() < 1e-12);
        let e1 = dirichlet_form(&x, 1.0, &gen, &ce).unwrap();
        let e1b = dirichlet_form(&x, 1.0001, &gen, &ce).unwrap();
        assert!((e1 - e1b).abs() < 1e-4 * e1.abs().max(1.0), "{e1} {e1b}");
    }

    #[test]
    fn wcd_dirichlet_nonnegative() {
        let gen = build_generator(&wcd_generator(2).unwrap()).unwrap();
        let ce = analyze(&gen).unwrap();
        let mut rng = random::rng(10);
        for _ in 0..10 {
            let x = random::hermitian(4, &mut rng);
            for p in [1.5, 2.0, 4.0] {
                assert!(dirichlet_form(&x, p, &gen, &ce).unwrap() >= -1e-12);
            }
        }
    }

    #[test]
    fn almost_convexity_edge_cases() {
        let ce = factor_ce(11);
        let mut rng = random::rng(12);
        let x = random::positive_definite(4, 0.05, &mut rng);
        let a = ce.random_density_in_n(&mut rng);
        assert!(almost_convexity_check(&x, &a, 2.0, &ce).unwrap().abs() < 1e-10);
        let n = kron(&random::positive_definite(2, 0.1, &mut rng), &identity(2));
        for p in [1.0, 1.3, 1.8] {
            assert!(almost_convexity_check(&n, &a, p, &ce).unwrap().abs() < 1e-10);
        }
        assert!(trace_re(&(&ce.sigma_tr * &a)) - 1.0 < 1e-12);
    }
}

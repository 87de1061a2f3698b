//! Sequences on which the strong log-Sobolev ratio of `L_N = E_N − id` tends to zero.

use serde::Serialize;

use super::entropy::{quantum_relative_entropy, variance};
use crate::error::{Error, Result};
use crate::linalg::{c, eigh, hermitize, psd_sqrt, CMat, CVec};
use crate::norms::{amalgamated_norm, amalgamated_norm_two_sided, gamma, NormQuery};
use crate::structure::ConditionalExpectation;

/// Default perturbation size for the numeric ratio.
pub const NOGO_EPS: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// One block with `d_H ≥ 2` and `d_K ≥ 2`.
    Factor,
    /// Two blocks.
    TwoBlock,
}

#[derive(Clone, Debug, Serialize)]
pub struct NoGoPoint {
    pub k: u64,
    pub branch: Branch,
    pub lambda1: f64,
    pub lambda2: f64,
    /// `2 f(x, y)/g(x, y)` at `x = λ₁/k`, `y = (1 − 1/k)λ₂`.
    pub analytic_ratio: f64,
    /// `2π² f(x, y)/g(x, y)`, the prefactor as printed alongside the expansion.
    pub analytic_ratio_stated: f64,
    /// `E_{2,L_N}(σ^{-1/4}√ρ σ^{-1/4}) / D(ρ‖ρ_N)` at `ρ = ρ_N + εΔ`, extrapolated to `ε → 0`.
    pub numeric_ratio: Option<f64>,
    pub epsilon: f64,
}

/// `(√x − √y)²/(x − y)²`, i.e. `1/(√x + √y)²`.
pub fn nogo_f(x: f64, y: f64) -> f64 {
    if x == y {
        return 1.0 / (4.0 * x);
    }
    1.0 / (x.sqrt() + y.sqrt()).powi(2)
}

/// `(ln x − ln y)/(x − y)`.
pub fn nogo_g(x: f64, y: f64) -> f64 {
    if x == y {
        return 1.0 / x;
    }
    let u = (x - y) / y;
    if u.abs() < 1e-6 {
        // ln(1 + u)/u to third order.
        return (1.0 - u / 2.0 + u * u / 3.0) / y;
    }
    (x / y).ln() / (x - y)
}

/// The pieces of the construction for a fixed `k`.
struct Construction {
    branch: Branch,
    rho_n: CMat,
    delta: CMat,
    lambda1: f64,
    lambda2: f64,
}

fn block_vector(ce: &ConditionalExpectation, block: usize, h: usize, kvec: &CVec) -> CVec {
    let s = &ce.structure;
    let b = &s.blocks[block];
    let mut v = CVec::zeros(s.dim);
    for m in 0..b.d_k {
        v[b.offset + h * b.d_k + m] = kvec[m];
    }
    &s.unitary * v
}

fn construct(ce: &ConditionalExpectation, k: u64) -> Result<Construction> {
    if k < 2 {
        return Err(Error::DomainError {
            what: "k",
            value: k as f64,
        });
    }
    let s = &ce.structure;
    let kf = k as f64;
    let taus: Vec<CMat> = s.blocks.iter().map(|b| b.tau.clone()).collect();
    let zero_parts = || -> Vec<CMat> {
        s.blocks
            .iter()
            .map(|b| CMat::zeros(b.d_h, b.d_h))
            .collect()
    };
    let (branch, parts, e1, e2) = if s.len() > 1 {
        let mut parts = zero_parts();
        let b0 = &s.blocks[0];
        let b1 = &s.blocks[1];
        parts[0] = CMat::identity(b0.d_h, b0.d_h) * c(1.0 / (kf * b0.d_h as f64));
        parts[1] = CMat::identity(b1.d_h, b1.d_h) * c((1.0 - 1.0 / kf) / b1.d_h as f64);
        let t0 = eigh(&b0.tau).vectors.column(0).into_owned();
        let t1 = eigh(&b1.tau).vectors.column(0).into_owned();
        (
            Branch::TwoBlock,
            parts,
            block_vector(ce, 0, 0, &t0),
            block_vector(ce, 1, 0, &t1),
        )
    } else {
        let b = &s.blocks[0];
        if b.d_h < 2 || b.d_k < 2 {
            return Err(Error::TrivialAlgebra(if b.d_h < 2 {
                "N = C·I: the semigroup is primitive"
            } else {
                "N = B(H): the semigroup is unitary"
            }));
        }
        let mut parts = zero_parts();
        let mut p = CMat::zeros(b.d_h, b.d_h);
        p[(0, 0)] = c(1.0 / kf);
        p[(1, 1)] = c(1.0 - 1.0 / kf);
        parts[0] = p;
        let te = eigh(&b.tau);
        let t0 = te.vectors.column(0).into_owned();
        let t1 = te.vectors.column(1).into_owned();
        (
            Branch::Factor,
            parts,
            block_vector(ce, 0, 0, &t0),
            block_vector(ce, 0, 1, &t1),
        )
    };
    let rho_n = hermitize(&s.embed(&parts, Some(&taus)));
    let delta = &e1 * e2.adjoint() + &e2 * e1.adjoint();
    let lambda1 = kf * (e1.adjoint() * &rho_n * &e1)[(0, 0)].re;
    let lambda2 = kf / (kf - 1.0) * (e2.adjoint() * &rho_n * &e2)[(0, 0)].re;
    Ok(Construction {
        branch,
        rho_n,
        delta,
        lambda1,
        lambda2,
    })
}

/// `Γ^{-1/2}(√ρ)` for `ρ = ρ_N + εΔ`.
fn perturbed_point(ce: &ConditionalExpectation, con: &Construction, eps: f64) -> Result<(CMat, CMat)> {
    let rho = hermitize(&(&con.rho_n + &con.delta * c(eps)));
    let min = eigh(&rho).min();
    if min < -1e-14 {
        return Err(Error::NonPsdInput(min));
    }
    let z = hermitize(&gamma(ce, &psd_sqrt(&rho)?, -0.5));
    Ok((rho, z))
}

fn ratio_at(ce: &ConditionalExpectation, con: &Construction, eps: f64) -> Result<f64> {
    let (rho, z) = perturbed_point(ce, con, eps)?;
    let num = variance(&z, ce);
    let den = quantum_relative_entropy(&rho, &con.rho_n)?;
    Ok(num / den)
}

/// Point `k` of the sequence, with the numeric ratio at perturbation `eps`.
///
/// The ratio is even in `ε`, so `(4r(ε/2) − r(ε))/3` removes the leading correction.
pub fn nogo_sequence(ce: &ConditionalExpectation, k: u64, eps: f64) -> Result<NoGoPoint> {
    let con = construct(ce, k)?;
    let kf = k as f64;
    let x = con.lambda1 / kf;
    let y = (1.0 - 1.0 / kf) * con.lambda2;
    let base = nogo_f(x, y) / nogo_g(x, y);
    // The perturbed matrix stays positive while ε < √(xy).
    let numeric_ratio = if eps > 0.0 && eps < 0.5 * (x * y).sqrt() {
        let r1 = ratio_at(ce, &con, eps)?;
        let r2 = ratio_at(ce, &con, eps / 2.0)?;
        Some((4.0 * r2 - r1) / 3.0)
    } else {
        None
    };
    Ok(NoGoPoint {
        k,
        branch: con.branch,
        lambda1: con.lambda1,
        lambda2: con.lambda2,
        analytic_ratio: 2.0 * base,
        analytic_ratio_stated: 2.0 * std::f64::consts::PI.powi(2) * base,
        numeric_ratio,
        epsilon: eps,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvexityDefect {
    pub k: u64,
    pub p: f64,
    pub epsilon: f64,
    /// `‖X‖²_{(2,p)}`.
    pub total: f64,
    /// `‖E_N X‖²_{(2,p)}`.
    pub projected: f64,
    /// `‖X − E_N X‖²_{(2,p)}`, a lower estimate from the two-sided search.
    pub fluctuation: f64,
    /// `total − projected − (p − 1) fluctuation`; negative values violate uniform convexity.
    pub defect: f64,
    /// The total norm converged, so a negative defect is certified.
    pub certified: bool,
}

/// Uniform convexity `‖X‖² ≥ ‖E_N X‖² + (p − 1)‖X − E_N X‖²` in `L_2(N, L_p(σ))`, tested on
/// `X = Γ^{-1/2}(√ρ_{k,ε})` from the no-go construction, with `ε` a fraction `eps_rel` of `√(xy)`.
pub fn uniform_convexity_defect(
    ce: &ConditionalExpectation,
    k: u64,
    p: f64,
    eps_rel: f64,
) -> Result<ConvexityDefect> {
    if !(1.0..2.0).contains(&p) {
        return Err(Error::InvalidExponent(format!("{p} must lie in [1, 2)")));
    }
    let con = construct(ce, k)?;
    let kf = k as f64;
    let eps = eps_rel * (con.lambda1 / kf * (1.0 - 1.0 / kf) * con.lambda2).sqrt();
    let (_, x) = perturbed_point(ce, &con, eps)?;
    let ex = hermitize(&ce.apply(&x));
    let fl = hermitize(&(&x - &ex));
    let total = amalgamated_norm(&NormQuery::new(&x, 2.0, p, ce))?;
    let projected = amalgamated_norm(&NormQuery::new(&ex, 2.0, p, ce))?;
    let fluct = amalgamated_norm_two_sided(&NormQuery::new(&fl, 2.0, p, ce))?;
    let defect =
        total.value.powi(2) - projected.value.powi(2) - (p - 1.0) * fluct.value.powi(2);
    Ok(ConvexityDefect {
        k,
        p,
        epsilon: eps,
        total: total.value.powi(2),
        projected: projected.value.powi(2),
        fluctuation: fluct.value.powi(2),
        defect,
        certified: total.converged && projected.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::structure::BlockStructure;

    fn diagonal2() -> ConditionalExpectation {
        ConditionalExpectation::from_structure(BlockStructure::diagonal(2))
    }

    #[test]
    fn f_and_g_branches() {
        assert_eq!(nogo_f(1.0, 1.0), 0.25);
        assert_eq!(nogo_g(2.0, 2.0), 0.5);
        let (x, y): (f64, f64) = (0.3, 0.7);
        let f = (x.sqrt() - y.sqrt()).powi(2) / (x - y).powi(2);
        assert!((nogo_f(x, y) - f).abs() < 1e-14);
        assert!((nogo_g(0.5, 0.5 + 1e-9) - 2.0).abs() < 1e-8);
    }

    #[test]
    fn diagonal_ratio_decreases() {
        let ce = diagonal2();
        let r: Vec<NoGoPoint> = [10, 100, 1000]
            .iter()
            .map(|&k| nogo_sequence(&ce, k, NOGO_EPS).unwrap())
            .collect();
        assert_eq!(r[0].branch, Branch::TwoBlock);
        assert!((r[0].lambda1 - 1.0).abs() < 1e-14 && (r[0].lambda2 - 1.0).abs() < 1e-14);
        assert!(r[0].analytic_ratio > r[1].analytic_ratio);
        assert!(r[1].analytic_ratio > r[2].analytic_ratio);
        let n = r[0].numeric_ratio.unwrap();
        assert!((n / r[0].analytic_ratio - 1.0).abs() < 1e-6, "{:?}", r[0]);
    }

    #[test]
    fn factor_branch_matches() {
        let ce = ConditionalExpectation::from_structure(
            BlockStructure::factor(2, 2, linalg::diag(&[0.65, 0.35])).unwrap(),
        );
        let pt = nogo_sequence(&ce, 10, NOGO_EPS).unwrap();
        assert_eq!(pt.branch, Branch::Factor);
        assert!((pt.lambda1 - 0.35).abs() < 1e-12 && (pt.lambda2 - 0.65).abs() < 1e-12);
        let n = pt.numeric_ratio.unwrap();
        assert!((n / pt.analytic_ratio - 1.0).abs() < 1e-4, "{pt:?}");
    }

    #[test]
    fn trivial_algebras_are_rejected() {
        let prim = ConditionalExpectation::from_structure(
            BlockStructure::trivial(&linalg::diag(&[0.6, 0.4])).unwrap(),
        );
        assert!(matches!(nogo_sequence(&prim, 10, NOGO_EPS), Err(Error::TrivialAlgebra(_))));
        let full = ConditionalExpectation::from_structure(
            BlockStructure::factor(3, 1, linalg::identity(1)).unwrap(),
        );
        assert!(matches!(nogo_sequence(&full, 10, NOGO_EPS), Err(Error::TrivialAlgebra(_))));
    }

    #[test]
    fn uniform_convexity_fails_far_along_the_sequence() {
        let factor = ConditionalExpectation::from_structure(
            BlockStructure::factor(2, 2, linalg::diag(&[0.65, 0.35])).unwrap(),
        );
        for ce in [diagonal2(), factor] {
            for p in [1.2, 1.5, 1.9] {
                let u = uniform_convexity_defect(&ce, 1000, p, 0.9).unwrap();
                assert!(u.certified && u.defect < 0.0, "{u:?}");
            }
        }
    }
}

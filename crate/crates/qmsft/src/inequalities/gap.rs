//! Spectral gap, universal constants and regularity.

use serde::Serialize;

use super::entropy::{dirichlet_form, variance};
use crate::error::{Error, Result};
use crate::linalg::{self, c, eigh, hermitize, kron, CMat, Eigh};
use crate::norms::{iqp_ce, weighted_norm_ce};
use crate::qms::{check_detailed_balance, BalanceKind, GeneratorPair, CHECK_SEED};
use crate::random;
use crate::structure::ConditionalExpectation;

#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    pub gap: f64,
    /// KMS detailed balance holds; otherwise the gap is that of the symmetrized generator.
    pub reversible: bool,
    /// `‖(L + L̂)/2‖` as an operator on the KMS Hilbert space.
    pub symmetric_norm: f64,
}

/// `G^{1/2} L G^{-1/2}` with `G = (σ^{1/2})ᵀ ⊗ σ^{1/2}`: `L` in KMS-orthonormal coordinates.
fn kms_coordinates(gen: &GeneratorPair, ce: &ConditionalExpectation) -> (CMat, CMat) {
    let q = ce.sigma_power(0.25);
    let qi = ce.sigma_power(-0.25);
    let g_half = kron(&q.transpose(), &q);
    let g_half_inv = kron(&qi.transpose(), &qi);
    let m = &g_half * &gen.heisenberg.mat * g_half_inv;
    (m, g_half)
}

/// `−P H̃ P + s V V†` with `V` an orthonormal basis of `G^{1/2} vec(N)`, so its lowest eigenpair
/// is the gap and the slowest mode.
struct GapProblem {
    reversible: bool,
    symmetric_norm: f64,
    shifted: Eigh,
    g_half: CMat,
}

fn gap_problem(gen: &GeneratorPair, ce: &ConditionalExpectation) -> Result<GapProblem> {
    if gen.dim() != ce.dim() {
        return Err(Error::DimensionMismatch {
            expected: ce.dim(),
            got: gen.dim(),
        });
    }
    let reversible =
        check_detailed_balance(gen, &ce.sigma_tr, BalanceKind::Kms, CHECK_SEED)?.holds;
    let (m, g_half) = kms_coordinates(gen, ce);
    let sym = hermitize(&m);
    let symmetric_norm = eigh(&sym)
        .values
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    let basis = ce.structure.algebra_basis().basis;
    let cols: Vec<linalg::CVec> = basis.iter().map(|b| &g_half * linalg::vec(b)).collect();
    let v = orthonormal_columns(&cols);
    let n2 = sym.nrows();
    let proj = CMat::identity(n2, n2) - &v * v.adjoint();
    let shift = 2.0 * symmetric_norm + 1.0;
    let k = -(&proj * &sym * &proj) + &v * v.adjoint() * c(shift);
    Ok(GapProblem {
        reversible,
        symmetric_norm,
        shifted: eigh(&k),
        g_half,
    })
}

/// Smallest eigenvalue of `−(L + L̂)/2` on the KMS-orthogonal complement of `N`.
pub fn spectral_gap(gen: &GeneratorPair, ce: &ConditionalExpectation) -> Result<GapReport> {
    let prob = gap_problem(gen, ce)?;
    let gap = prob.shifted.min();
    if gap <= 1e-12 {
        return Err(Error::NonpositiveGap(gap));
    }
    Ok(GapReport {
        gap,
        reversible: prob.reversible,
        symmetric_norm: prob.symmetric_norm,
    })
}

/// Hermitian eigenmode attaining the gap, normalized in `‖·‖_{∞}`.
pub fn slowest_mode(gen: &GeneratorPair, ce: &ConditionalExpectation) -> Result<CMat> {
    let prob = gap_problem(gen, ce)?;
    let w = prob.shifted.vectors.column(0).into_owned();
    let g_inv = prob
        .g_half
        .clone()
        .try_inverse()
        .ok_or(Error::SingularState(ce.sigma_eig().min()))?;
    let y = linalg::unvec(&(g_inv * w), ce.dim());
    let re = hermitize(&y);
    let im = hermitize(&(&y * linalg::I));
    let h = if linalg::fro_norm(&re) >= linalg::fro_norm(&im) { re } else { im };
    let scale = linalg::schatten_herm(&h, f64::INFINITY);
    Ok(h / c(scale))
}

fn orthonormal_columns(cols: &[linalg::CVec]) -> CMat {
    let n = cols.first().map(|v| v.len()).unwrap_or(0);
    let mut out: Vec<linalg::CVec> = Vec::with_capacity(cols.len());
    for col in cols {
        let mut w = col.clone();
        for _ in 0..2 {
            for u in &out {
                let proj = u.dotc(&w);
                w -= u * proj;
            }
        }
        let nw = w.norm();
        if nw > 1e-10 {
            out.push(w / c(nw));
        }
    }
    CMat::from_fn(n, out.len(), |i, j| out[j][i])
}

/// `((ln‖σ^{-1}‖ + 2)/(2λ), ln√2)`.
pub fn universal_constants(ce: &ConditionalExpectation, lambda: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0) {
        return Err(Error::NonpositiveGap(lambda));
    }
    let c_univ = (ce.sigma_inv_norm().ln() + 2.0) / (2.0 * lambda);
    Ok((c_univ, std::f64::consts::LN_2 / 2.0))
}

/// `(c, d, λ) ↦ (c + (d + 1)/λ, ln√2)`.
pub fn weak_constant_transfer(c_strong: f64, d: f64, lambda: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0) {
        return Err(Error::NonpositiveGap(lambda));
    }
    if !(c_strong > 0.0) || !(d >= 0.0) {
        return Err(Error::InvalidConstant(format!(
            "need c > 0 and d >= 0, got c = {c_strong}, d = {d}"
        )));
    }
    Ok((c_strong + (d + 1.0) / lambda, std::f64::consts::LN_2 / 2.0))
}

/// `(p t_p/(p−2), p ln(M_p)/(p−2))`.
pub fn interpolation_lsi_bound(t_p: f64, m_p: f64, p: f64) -> Result<(f64, f64)> {
    if !(p > 2.0) {
        return Err(Error::InvalidExponent(format!("{p} must exceed 2")));
    }
    if !(t_p >= 0.0) || !(m_p >= 1.0) {
        return Err(Error::InvalidConstant(format!(
            "need t_p >= 0 and M_p >= 1, got t_p = {t_p}, M_p = {m_p}"
        )));
    }
    Ok((p * t_p / (p - 2.0), p * m_p.ln() / (p - 2.0)))
}

/// `(λ E_{2,L_N}(X), E_{2,L}(X), ‖(L + L̂)/2‖ E_{2,L_N}(X))`.
pub fn dirichlet_comparison(
    x: &CMat,
    gen: &GeneratorPair,
    ce: &ConditionalExpectation,
    gap: &GapReport,
) -> Result<(f64, f64, f64)> {
    let var = variance(x, ce);
    let e = dirichlet_form(x, 2.0, gen, ce)?;
    Ok((gap.gap * var, e, gap.symmetric_norm * var))
}

/// `‖L‖_{2→2,σ} + 1`.
pub fn regularity_constant(gen: &GeneratorPair, ce: &ConditionalExpectation) -> f64 {
    let (m, _) = kms_coordinates(gen, ce);
    linalg::singular_values(&m)[0] + 1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularity {
    Weak,
    Strong,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityReport {
    pub holds: bool,
    pub worst_slack: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Checks weak or strong `L_p` regularity on random positive definite samples.
///
/// Weak: `E_p(X) ≥ κ (E_2(I_{2,p}X) − d0‖X‖_p^p)` with `κ = 1` for `p ≤ 2`, `p − 1` above.
/// Strong: `d0‖X‖_p^p + (p/2)E_p(X) ≥ E_2(I_{2,p}X)`.
pub fn regularity_check(
    gen: &GeneratorPair,
    ce: &ConditionalExpectation,
    p: f64,
    d0: f64,
    kind: Regularity,
    samples: usize,
    seed: u64,
) -> Result<RegularityReport> {
    if !(p >= 1.0) || p.is_infinite() {
        return Err(Error::InvalidExponent(format!("{p}")));
    }
    let d = ce.dim();
    let mut rng = random::rng(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let x = random::positive_definite(d, 0.02, &mut rng);
        let ep = dirichlet_form(&x, p, gen, ce)?;
        let e2 = dirichlet_form(&iqp_ce(ce, &x, 2.0, p), 2.0, gen, ce)?;
        let np = weighted_norm_ce(ce, &x, p).powf(p);
        let slack = match kind {
            Regularity::Weak => {
                let kappa = if p <= 2.0 { 1.0 } else { p - 1.0 };
                ep - kappa * (e2 - d0 * np)
            }
            Regularity::Strong => d0 * np + p / 2.0 * ep - e2,
        };
        let scale = e2.abs().max(np).max(1e-300);
        worst = worst.min(slack / scale);
    }
    Ok(RegularityReport {
        holds: worst >= -1e-9,
        worst_slack: worst,
        samples,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{depolarizing_generator, n_decoherent_generator, wcd_generator};
    use crate::qms::build_generator;
    use crate::structure::{analyze, BlockStructure};

    #[test]
    fn gaps_of_builtins() {
        let wcd = build_generator(&wcd_generator(2).unwrap()).unwrap();
        let ce = analyze(&wcd).unwrap();
        let r = spectral_gap(&wcd, &ce).unwrap();
        assert!((r.gap - 2.0).abs() < 1e-9 && r.reversible);
        let ce3 = ConditionalExpectation::from_structure(BlockStructure::diagonal(3));
        let nd = n_decoherent_generator(&ce3);
        assert!((spectral_gap(&nd, &ce3).unwrap().gap - 1.0).abs() < 1e-10);
        let dep = depolarizing_generator(&linalg::diag(&[0.75, 0.25])).unwrap();
        let ced = analyze(&dep).unwrap();
        assert!((spectral_gap(&dep, &ced).unwrap().gap - 1.0).abs() < 1e-10);
        let (cu, _) = universal_constants(&ced, 1.0).unwrap();
        assert!((cu - (4f64.ln() + 2.0) / 2.0).abs() < 1e-12);
        assert!((cu - 1.6931).abs() < 1e-4);
    }

    #[test]
    fn poincare_on_wcd() {
        let gen = build_generator(&wcd_generator(2).unwrap()).unwrap();
        let ce = analyze(&gen).unwrap();
        let gap = spectral_gap(&gen, &ce).unwrap();
        let mut rng = random::rng(3);
        for _ in 0..100 {
            let x = random::hermitian(4, &mut rng);
            let (lo, e, hi) = dirichlet_comparison(&x, &gen, &ce, &gap).unwrap();
            assert!(lo <= e * (1.0 + 1e-10) + 1e-12 && e <= hi * (1.0 + 1e-10) + 1e-12);
        }
    }

    #[test]
    fn constant_arithmetic() {
        let (c1, d1) = weak_constant_transfer(1.0, 0.0, 1.0).unwrap();
        assert!((c1 - 2.0).abs() < 1e-15 && (d1 - 0.34657359).abs() < 1e-8);
        let ln_sqrt2 = std::f64::consts::LN_2 / 2.0;
        let (c2, _) = weak_constant_transfer(0.5, ln_sqrt2, 2.0).unwrap();
        assert!((c2 - (0.5 + (ln_sqrt2 + 1.0) / 2.0)).abs() < 1e-15);
        assert!(weak_constant_transfer(1.0, -0.1, 1.0).is_err());
        assert!(matches!(weak_constant_transfer(1.0, 0.0, 0.0), Err(Error::NonpositiveGap(_))));
        let (ci, di) = interpolation_lsi_bound(1.0, std::f64::consts::E, 4.0).unwrap();
        assert!((ci - 2.0).abs() < 1e-15 && (di - 2.0).abs() < 1e-15);
        assert_eq!(interpolation_lsi_bound(0.3, 1.0, 3.0).unwrap().1, 0.0);
        let s: f64 = 7.0;
        let (c0, d0) = interpolation_lsi_bound(0.0, s.powf(0.25), 4.0).unwrap();
        assert!(c0 == 0.0 && (d0 - 0.5 * s.ln()).abs() < 1e-14);
        assert!(interpolation_lsi_bound(1.0, 2.0, 2.0).is_err());
    }

    #[test]
    fn regularity_examples() {
        let ce = ConditionalExpectation::from_structure(
            BlockStructure::factor(2, 2, linalg::diag(&[0.7, 0.3])).unwrap(),
        );
        let nd = n_decoherent_generator(&ce);
        for p in [1.5, 2.0, 3.0] {
            let r = regularity_check(&nd, &ce, p, 0.0, Regularity::Strong, 20, 1).unwrap();
            assert!(r.holds, "p={p}: {}", r.worst_slack);
        }
        let wcd = build_generator(&wcd_generator(2).unwrap()).unwrap();
        let cw = analyze(&wcd).unwrap();
        let d0 = regularity_constant(&wcd, &cw);
        for p in [1.5, 3.0] {
            let r = regularity_check(&wcd, &cw, p, d0, Regularity::Strong, 20, 2).unwrap();
            assert!(r.holds);
            let r = regularity_check(&wcd, &cw, p, d0, Regularity::Weak, 20, 2).unwrap();
            assert!(r.holds);
        }
        let r = regularity_check(&wcd, &cw, 2.0, 0.0, Regularity::Strong, 10, 3).unwrap();
        assert!(r.worst_slack.abs() < 1e-10);
    }
}

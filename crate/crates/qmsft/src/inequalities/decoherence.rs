//! Decoherence distances and time bounds.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, hermitize, CMat};
use crate::qms::{GeneratorPair, Picture};
use crate::structure::ConditionalExpectation;

/// `‖P_{*t}(ρ − E_{N*}ρ)‖₁`.
pub fn decoherence_distance(
    gen: &GeneratorPair,
    ce: &ConditionalExpectation,
    rho: &CMat,
    t: f64,
) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    linalg::check_square(rho, ce.dim())?;
    linalg::check_hermitian(rho)?;
    let off = hermitize(&(rho - ce.apply_predual(rho)));
    let evolved = gen.flow(t, &off, Picture::Schrodinger);
    Ok(linalg::trace_norm_herm(&hermitize(&evolved)))
}

fn check_constants(c: f64, d: f64, lambda: f64) -> Result<()> {
    if !(lambda > 0.0) {
        return Err(Error::NonpositiveGap(lambda));
    }
    if !(c >= 0.0) || !(d >= 0.0) {
        return Err(Error::InvalidConstant(format!(
            "need c >= 0 and d >= 0, got c = {c}, d = {d}"
        )));
    }
    Ok(())
}

fn ln_ln_sigma_inv(ce: &ConditionalExpectation) -> Result<f64> {
    let n = ce.sigma_inv_norm();
    if n < std::f64::consts::E {
        return Err(Error::PreconditionFailed(format!(
            "‖σ_Tr^-1‖ = {n:.6} is below e"
        )));
    }
    Ok(n.ln().ln())
}

fn max_sqrt_dh(ce: &ConditionalExpectation) -> f64 {
    (ce.structure.max_d_h() as f64).sqrt()
}

/// `[ln(max_i √d_{H_i}/ε) + 1 + d]/λ + (c/2) ln ln ‖σ_Tr^{-1}‖`, for `HC_{2,N}(c, d)`.
pub fn decoherence_time_bound(
    c: f64,
    d: f64,
    lambda: f64,
    ce: &ConditionalExpectation,
    epsilon: f64,
) -> Result<f64> {
    check_constants(c, d, lambda)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::DomainError {
            what: "epsilon",
            value: epsilon,
        });
    }
    let ll = ln_ln_sigma_inv(ce)?;
    Ok(((max_sqrt_dh(ce) / epsilon).ln() + 1.0 + d) / lambda + c / 2.0 * ll)
}

/// `max_i √d_{H_i} e^{1 + d − κ}` with `t = (c/2) ln ln ‖σ_Tr^{-1}‖ + κ/λ`, capped at `2`.
pub fn hc_decay_bound(
    c: f64,
    d: f64,
    lambda: f64,
    ce: &ConditionalExpectation,
    t: f64,
) -> Result<f64> {
    check_constants(c, d, lambda)?;
    let kappa = lambda * (t - c / 2.0 * ln_ln_sigma_inv(ce)?);
    if kappa <= 0.0 {
        return Ok(2.0);
    }
    Ok((max_sqrt_dh(ce) * (1.0 + d - kappa).exp()).min(2.0))
}

/// `√‖σ_Tr^{-1}‖ e^{−λt}`, capped at `2`.
pub fn gap_decay_bound(lambda: f64, ce: &ConditionalExpectation, t: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::NonpositiveGap(lambda));
    }
    Ok((ce.sigma_inv_norm().sqrt() * (-lambda * t).exp()).min(2.0))
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayRow {
    pub t: f64,
    /// Worst distance over the sampled states.
    pub distance: f64,
    pub gap_bound: f64,
    pub hc_bound: f64,
}

/// Decay table over `times`, with the distance maximized over `states`.
pub fn decay_table(
    gen: &GeneratorPair,
    ce: &ConditionalExpectation,
    states: &[CMat],
    times: &[f64],
    constants: (f64, f64, f64),
) -> Result<Vec<DecayRow>> {
    let (c, d, lambda) = constants;
    times
        .iter()
        .map(|&t| {
            let mut distance = 0.0f64;
            for rho in states {
                distance = distance.max(decoherence_distance(gen, ce, rho, t)?);
            }
            Ok(DecayRow {
                t,
                distance,
                gap_bound: gap_decay_bound(lambda, ce, t)?,
                hc_bound: hc_decay_bound(c, d, lambda, ce, t).unwrap_or(f64::NAN),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inequalities::{spectral_gap, universal_constants};
    use crate::linalg::{c, identity};
    use crate::models::wcd_generator;
    use crate::qms::build_generator;
    use crate::random;
    use crate::structure::{analyze, BlockStructure};

    #[test]
    fn plus_state_decays_at_rate_two() {
        let gen = build_generator(&wcd_generator(1).unwrap()).unwrap();
        let ce = analyze(&gen).unwrap();
        let plus = (identity(2) + linalg::pauli_x()) * c(0.5);
        for t in [0.0, 0.3, 1.0, 2.5] {
            let dist = decoherence_distance(&gen, &ce, &plus, t).unwrap();
            assert!((dist - (-2.0 * t).exp()).abs() < 1e-9, "t={t}: {dist}");
        }
        assert!(matches!(
            decoherence_distance(&gen, &ce, &plus, -1.0),
            Err(Error::NegativeTime(_))
        ));
        let diag = linalg::diag(&[0.3, 0.7]);
        assert!(decoherence_distance(&gen, &ce, &diag, 1.0).unwrap() < 1e-15);
    }

    #[test]
    fn long_times_decohere() {
        let gen = build_generator(&wcd_generator(2).unwrap()).unwrap();
        let ce = analyze(&gen).unwrap();
        let lambda = spectral_gap(&gen, &ce).unwrap().gap;
        let rho = random::density(4, &mut random::rng(2));
        assert!(decoherence_distance(&gen, &ce, &rho, 40.0 / lambda).unwrap() < 1e-10);
    }

    #[test]
    fn time_bound_arithmetic() {
        let gen = build_generator(&wcd_generator(2).unwrap()).unwrap();
        let ce = analyze(&gen).unwrap();
        let (cu, du) = universal_constants(&ce, 2.0).unwrap();
        let d = du + 3f64.ln();
        let t = decoherence_time_bound(cu, d, 2.0, &ce, 0.1).unwrap();
        let want = ((2f64.sqrt() / 0.1).ln() + 1.0 + d) / 2.0 + cu / 2.0 * 4f64.ln().ln();
        assert!((t - want).abs() < 1e-12);

        let one = ConditionalExpectation::from_structure(
            BlockStructure::trivial(&linalg::diag(&[0.9, 0.1])).unwrap(),
        );
        let near = decoherence_time_bound(1.0, 0.0, 1.0, &one, 1.0 - 1e-12).unwrap();
        assert!((near - (1.0 + 0.5 * 10f64.ln().ln())).abs() < 1e-9);

        let full = ConditionalExpectation::from_structure(
            BlockStructure::factor(2, 1, identity(1)).unwrap(),
        );
        assert!(matches!(
            decoherence_time_bound(1.0, 0.0, 1.0, &full, 0.1),
            Err(Error::PreconditionFailed(_))
        ));
    }
}

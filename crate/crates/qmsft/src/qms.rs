//! GKLS generators, semigroup evolution and detailed balance.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::linalg::{
    self, c, eigh, fro_norm, hermitian_basis, hermitize, hs_inner, identity, kron, CMat, Superop, I,
};
use crate::random;

/// Relative singular-value threshold below which a direction counts as kernel.
pub const KERNEL_TOL: f64 = 1e-10;
/// Default seed for randomized residual checks.
pub const CHECK_SEED: u64 = 0x51_4d_53;
/// Number of random pairs in residual checks.
pub const CHECK_PAIRS: usize = 50;

/// Hamiltonian plus jump operators.
#[derive(Clone, Debug)]
pub struct Lindbladian {
    pub dim: usize,
    pub hamiltonian: CMat,
    pub lindblad_ops: Vec<CMat>,
}

impl Lindbladian {
    pub fn new(hamiltonian: CMat, lindblad_ops: Vec<CMat>) -> Result<Self> {
        let dim = hamiltonian.nrows();
        linalg::check_square(&hamiltonian, dim)?;
        linalg::check_finite(&hamiltonian)?;
        linalg::check_hermitian(&hamiltonian)?;
        for op in &lindblad_ops {
            linalg::check_square(op, dim)?;
            linalg::check_finite(op)?;
        }
        Ok(Lindbladian {
            dim,
            hamiltonian,
            lindblad_ops,
        })
    }

    /// H = 0 and every jump operator self-adjoint.
    pub fn is_self_adjoint_dissipative(&self) -> bool {
        linalg::max_abs(&self.hamiltonian) == 0.0
            && self
                .lindblad_ops
                .iter()
                .all(|l| linalg::hermiticity_residual(l) <= linalg::HERMITIAN_TOL)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Picture {
    Heisenberg,
    Schrodinger,
}

/// Heisenberg generator `L` and its trace dual `L_*`.
#[derive(Clone, Debug)]
pub struct GeneratorPair {
    pub heisenberg: Superop,
    pub schrodinger: Superop,
    pub model: Option<Lindbladian>,
    spectral: OnceLock<Option<Spectral>>,
}

/// `L = S⁻¹ V diag(λ) V† S` with real `λ`.
#[derive(Clone, Debug)]
struct Spectral {
    s: CMat,
    s_inv: CMat,
    vectors: CMat,
    values: Vec<f64>,
}

impl GeneratorPair {
    pub fn from_heisenberg(heisenberg: Superop) -> Self {
        let schrodinger = heisenberg.hs_adjoint();
        GeneratorPair {
            heisenberg,
            schrodinger,
            model: None,
            spectral: OnceLock::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.heisenberg.dim
    }

    pub fn apply(&self, x: &CMat) -> CMat {
        self.heisenberg.apply(x)
    }

    pub fn apply_predual(&self, rho: &CMat) -> CMat {
        self.schrodinger.apply(rho)
    }

    fn spectral(&self) -> Option<&Spectral> {
        self.spectral
            .get_or_init(|| {
                let l = &self.heisenberg.mat;
                let d = self.dim();
                let candidates: Vec<CMat> = if linalg::hermiticity_residual(l) <= 1e-12 {
                    vec![identity(d) / c(d as f64)]
                } else {
                    faithful_invariant_state(self).into_iter().collect()
                };
                for sigma in candidates {
                    let e = eigh(&sigma);
                    if e.min() <= 1e-12 {
                        continue;
                    }
                    let q = e.reconstruct_with(|x| x.powf(0.25));
                    let qi = e.reconstruct_with(|x| x.powf(-0.25));
                    let s = kron(&q.transpose(), &q);
                    let s_inv = kron(&qi.transpose(), &qi);
                    let m = &s * l * &s_inv;
                    if linalg::hermiticity_residual(&m) > 1e-10 {
                        continue;
                    }
                    let eig = eigh(&m);
                    return Some(Spectral {
                        s,
                        s_inv,
                        vectors: eig.vectors,
                        values: eig.values,
                    });
                }
                None
            })
            .as_ref()
    }

    /// `exp(tL)` as a superoperator; negative `t` is allowed here.
    pub fn propagator(&self, t: f64) -> Superop {
        let d = self.dim();
        let mat = match self.spectral() {
            Some(sp) => {
                let mut v = sp.vectors.clone();
                for (j, lam) in sp.values.iter().enumerate() {
                    let f = c((lam * t).exp());
                    for i in 0..v.nrows() {
                        v[(i, j)] *= f;
                    }
                }
                &sp.s_inv * v * sp.vectors.adjoint() * &sp.s
            }
            None => linalg::expm(&(&self.heisenberg.mat * c(t))),
        };
        Superop { dim: d, mat }
    }

    /// Apply `exp(tL)` (Heisenberg) or `exp(tL_*)` (Schrödinger) for any real `t`.
    pub fn flow(&self, t: f64, x: &CMat, picture: Picture) -> CMat {
        let p = self.propagator(t);
        match picture {
            Picture::Heisenberg => p.apply(x),
            Picture::Schrodinger => p.hs_adjoint().apply(x),
        }
    }
}

/// Heisenberg generator `X ↦ i[H,X] + ½Σ(2L†XL − {L†L, X})` and its predual.
pub fn build_generator(model: &Lindbladian) -> Result<GeneratorPair> {
    let d = model.dim;
    linalg::check_square(&model.hamiltonian, d)?;
    let id = identity(d);
    let h = &model.hamiltonian;
    let mut mat = (kron(&id, h) - kron(&h.transpose(), &id)) * I;
    for l in &model.lindblad_ops {
        linalg::check_square(l, d)?;
        let ld = l.adjoint();
        let ldl = &ld * l;
        mat += kron(&l.transpose(), &ld);
        mat -= kron(&id, &ldl) * c(0.5);
        mat -= kron(&ldl.transpose(), &id) * c(0.5);
    }
    let mut pair = GeneratorPair::from_heisenberg(Superop { dim: d, mat });
    pair.model = Some(model.clone());
    Ok(pair)
}

/// Semigroup evolution for `t ≥ 0`.
pub fn evolve(gen: &GeneratorPair, t: f64, x: &CMat, picture: Picture) -> Result<CMat> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    linalg::check_square(x, gen.dim())?;
    Ok(gen.flow(t, x, picture))
}

fn checked_state_powers(sigma: &CMat) -> Result<linalg::Eigh> {
    let e = linalg::herm_eig(sigma)?;
    if e.min() < 1e-12 {
        return Err(Error::SingularState(e.min()));
    }
    Ok(e)
}

/// KMS inner product `Tr[σ^{1/2} X† σ^{1/2} Y]`.
pub fn kms_inner(x: &CMat, y: &CMat, sigma_half: &CMat) -> linalg::C64 {
    hs_inner(x, &(sigma_half * y * sigma_half))
}

/// GNS inner product `Tr[σ X† Y]`.
pub fn gns_inner(x: &CMat, y: &CMat, sigma: &CMat) -> linalg::C64 {
    hs_inner(x, &(y * sigma))
}

/// Adjoint of `L` in the KMS inner product of `σ`.
pub fn kms_adjoint(gen: &GeneratorPair, sigma: &CMat) -> Result<Superop> {
    let e = checked_state_powers(sigma)?;
    let h = e.reconstruct_with(f64::sqrt);
    let hi = e.reconstruct_with(|x| 1.0 / x.sqrt());
    let g = kron(&h.transpose(), &h);
    let gi = kron(&hi.transpose(), &hi);
    Ok(Superop {
        dim: gen.dim(),
        mat: gi * gen.heisenberg.mat.adjoint() * g,
    })
}

/// Adjoint of `L` in the GNS inner product of `σ`.
pub fn gns_adjoint(gen: &GeneratorPair, sigma: &CMat) -> Result<Superop> {
    let e = checked_state_powers(sigma)?;
    let d = gen.dim();
    let s = e.reconstruct_with(|x| x);
    let si = e.reconstruct_with(|x| 1.0 / x);
    let id = identity(d);
    let g = kron(&s.transpose(), &id);
    let gi = kron(&si.transpose(), &id);
    Ok(Superop {
        dim: d,
        mat: gi * gen.heisenberg.mat.adjoint() * g,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BalanceKind {
    Kms,
    Gns,
}

#[derive(Clone, Copy, Debug)]
pub struct BalanceCheck {
    pub holds: bool,
    pub residual: f64,
    pub seed: u64,
}

/// Self-adjointness of `L` in the chosen inner product, tested on random pairs.
pub fn check_detailed_balance(
    gen: &GeneratorPair,
    sigma: &CMat,
    kind: BalanceKind,
    seed: u64,
) -> Result<BalanceCheck> {
    let e = checked_state_powers(sigma)?;
    let d = gen.dim();
    let half = e.reconstruct_with(f64::sqrt);
    let inner = |x: &CMat, y: &CMat| match kind {
        BalanceKind::Kms => kms_inner(x, y, &half),
        BalanceKind::Gns => gns_inner(x, y, sigma),
    };
    let norm = |x: &CMat| inner(x, x).re.max(0.0).sqrt();
    let mut rng = random::rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..CHECK_PAIRS {
        let x = random::ginibre(d, &mut rng);
        let y = random::ginibre(d, &mut rng);
        let lx = gen.apply(&x);
        let ly = gen.apply(&y);
        let diff = (inner(&x, &ly) - inner(&lx, &y)).norm();
        let scale = norm(&x) * norm(&ly) + norm(&lx) * norm(&y);
        if scale > 0.0 {
            worst = worst.max(diff / scale);
        }
    }
    Ok(BalanceCheck {
        holds: worst < 1e-9,
        residual: worst,
        seed,
    })
}

/// Orthonormal Hermitian basis of `ker L_*`.
pub fn invariant_states(gen: &GeneratorPair) -> Vec<CMat> {
    let d = gen.dim();
    let m = &gen.schrodinger.mat;
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let smax = svd.singular_values.iter().fold(0.0f64, |a, &b| a.max(b));
    let mats: Vec<CMat> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] <= KERNEL_TOL * smax.max(1e-300))
        .map(|k| linalg::unvec(&vt.row(k).adjoint(), d))
        .collect();
    hermitian_basis(&mats, 1e-8)
}

/// Projection of `I/d` onto `ker L_*`, normalized; `None` unless positive definite.
pub fn faithful_invariant_state(gen: &GeneratorPair) -> Option<CMat> {
    let d = gen.dim();
    let basis = invariant_states(gen);
    let target = identity(d) / c(d as f64);
    let mut rho = linalg::zeros(d);
    for b in &basis {
        rho += b * hs_inner(b, &target);
    }
    let rho = hermitize(&rho);
    let tr = linalg::trace_re(&rho);
    if tr.abs() < 1e-14 {
        return None;
    }
    let rho = rho / c(tr);
    let e = eigh(&rho);
    if e.min() <= 1e-10 * e.max() {
        return None;
    }
    Some(rho)
}

/// `‖X − Y‖_F / max(‖X‖_F, ‖Y‖_F)`.
pub fn rel_diff(x: &CMat, y: &CMat) -> f64 {
    let s = fro_norm(x).max(fro_norm(y));
    if s == 0.0 {
        0.0
    } else {
        fro_norm(&(x - y)) / s
    }
}

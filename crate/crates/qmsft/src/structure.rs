//! Decoherence-free algebra, its block decomposition and the compatible conditional expectation.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::linalg::{
    self, c, eigh, fro_norm, hermitian_basis, hermitize, hs_inner, identity, kron, CMat, Eigh,
    Superop, C64,
};
use crate::qms::{self, GeneratorPair};
use crate::random;

/// Peripheral eigenvalues satisfy `|Re λ| < PERIPHERAL_TOL · ρ(L)`.
pub const PERIPHERAL_TOL: f64 = 1e-9;
/// Tolerance for algebra closure.
pub const CLOSURE_TOL: f64 = 1e-9;
/// Tolerance for the block-form reconstruction.
pub const BLOCK_TOL: f64 = 1e-8;
/// Smallest admissible eigenvalue of a block state.
pub const TAU_TOL: f64 = 1e-10;
const SEED_RETRIES: u64 = 5;
const WEDDERBURN_SEED: u64 = 0x57_45_44;

/// Hilbert–Schmidt orthonormal Hermitian basis of a `*`-subalgebra of `B(C^d)`.
#[derive(Clone, Debug)]
pub struct AlgebraBasis {
    pub dim: usize,
    pub basis: Vec<CMat>,
}

impl AlgebraBasis {
    /// Orthonormalize `mats` and check the algebra axioms.
    pub fn new(dim: usize, mats: &[CMat]) -> Result<Self> {
        let alg = AlgebraBasis {
            dim,
            basis: hermitian_basis(mats, 1e-8),
        };
        let r = alg.closure_residual();
        if r > CLOSURE_TOL {
            return Err(Error::NotAnAlgebra(r));
        }
        Ok(alg)
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// Orthogonal projection onto the span.
    pub fn project(&self, x: &CMat) -> CMat {
        let mut out = linalg::zeros(self.dim);
        for b in &self.basis {
            out += b * hs_inner(b, x);
        }
        out
    }

    /// `‖X − Π(X)‖ / ‖X‖`.
    pub fn membership_residual(&self, x: &CMat) -> f64 {
        let n = fro_norm(x);
        if n == 0.0 {
            return 0.0;
        }
        fro_norm(&(x - self.project(x))) / n
    }

    /// Worst relative residual of products and of the identity.
    /// All pairs for small bases; random products otherwise.
    pub fn closure_residual(&self) -> f64 {
        let d = self.dim;
        let mut worst = self.membership_residual(&identity(d));
        if self.basis.len() <= 24 {
            for a in &self.basis {
                for b in &self.basis {
                    worst = worst.max(self.membership_residual(&(a * b)));
                }
            }
        } else {
            let mut rng = random::rng(0xC105);
            for _ in 0..8 {
                let x = self.random_element(&mut rng);
                let y = self.random_element(&mut rng);
                worst = worst.max(self.membership_residual(&(&x * &y)));
            }
        }
        worst
    }

    /// Random complex combination of the basis.
    pub fn random_element(&self, rng: &mut random::Rng) -> CMat {
        let mut out = linalg::zeros(self.dim);
        for b in &self.basis {
            out += b * C64::new(random::normal(rng), random::normal(rng));
        }
        out
    }

    /// Random real combination of the basis (Hermitian).
    pub fn random_hermitian(&self, rng: &mut random::Rng) -> CMat {
        let mut out = linalg::zeros(self.dim);
        for b in &self.basis {
            out += b * c(random::normal(rng));
        }
        hermitize(&out)
    }
}

/// Commutant `{X : [X, A] = 0 for all A in ops ∪ ops†}`.
pub fn commutant(dim: usize, ops: &[CMat]) -> Result<AlgebraBasis> {
    let id = identity(dim);
    let n = dim * dim;
    let mut gram = CMat::zeros(n, n);
    for a in ops {
        for m in [a.clone(), a.adjoint()] {
            let cm = kron(&id, &m) - kron(&m.transpose(), &id);
            gram += cm.adjoint() * cm;
        }
    }
    let null = linalg::psd_null_space(&gram, 1e-12);
    let mats: Vec<CMat> = null.iter().map(|v| linalg::unvec(v, dim)).collect();
    AlgebraBasis::new(dim, &mats)
}

/// Span of the peripheral eigenvectors of the Heisenberg generator.
pub fn df_algebra(gen: &GeneratorPair) -> Result<AlgebraBasis> {
    let d = gen.dim();
    qms::faithful_invariant_state(gen).ok_or(Error::NoFaithfulInvariantState)?;
    let l = &gen.heisenberg.mat;
    let mut mats: Vec<CMat> = Vec::new();
    if linalg::hermiticity_residual(l) <= 1e-12 {
        let e = eigh(l);
        let rho = e.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (j, v) in e.values.iter().enumerate() {
            if v.abs() <= PERIPHERAL_TOL * rho.max(1e-300) || rho == 0.0 {
                mats.push(linalg::unvec(&e.vectors.column(j).into_owned(), d));
            }
        }
    } else {
        let ev = linalg::eigenvalues_general(l)?;
        let rho = ev.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        let mut freqs: Vec<f64> = ev
            .iter()
            .filter(|z| z.re.abs() < PERIPHERAL_TOL * rho.max(1e-300) || rho == 0.0)
            .map(|z| z.im)
            .collect();
        freqs.sort_by(f64::total_cmp);
        let cluster_tol = 1e-7 * rho.max(1e-300);
        let mut clusters: Vec<Vec<f64>> = Vec::new();
        for w in freqs {
            match clusters.last_mut() {
                Some(cl) if (w - cl[cl.len() - 1]).abs() <= cluster_tol => cl.push(w),
                _ => clusters.push(vec![w]),
            }
        }
        let n = d * d;
        for cl in clusters {
            let w = cl.iter().sum::<f64>() / cl.len() as f64;
            let shifted = l - identity(n) * C64::new(0.0, w);
            let (vecs, vals) = linalg::smallest_right_singular(&shifted, cl.len());
            if let Some(worst) = vals.iter().copied().reduce(f64::max) {
                if worst > 1e-7 * rho {
                    return Err(Error::NonDiagonalizable(format!(
                        "peripheral eigenvalue {w:.3e}i has defective eigenspace (residual {worst:.3e})"
                    )));
                }
            }
            mats.extend(vecs.iter().map(|v| linalg::unvec(v, d)));
        }
    }
    let alg = AlgebraBasis::new(d, &mats)?;
    if let Some(model) = &gen.model {
        if model.is_self_adjoint_dissipative() {
            let com = commutant(d, &model.lindblad_ops)?;
            let mismatch = com
                .basis
                .iter()
                .map(|b| alg.membership_residual(b))
                .chain(alg.basis.iter().map(|b| com.membership_residual(b)))
                .fold(0.0f64, f64::max);
            if com.len() != alg.len() || mismatch > 1e-8 {
                return Err(Error::NotAnAlgebra(mismatch.max(1.0)));
            }
        }
    }
    Ok(alg)
}

/// One Wedderburn block `B(H_i) ⊗ I_{K_i}` with its state `τ_i` on `K_i`.
#[derive(Clone, Debug)]
pub struct Block {
    pub d_h: usize,
    pub d_k: usize,
    pub tau: CMat,
    /// Projector onto the block, in the original basis.
    pub projector: CMat,
    /// Offset of the block in the block basis.
    pub offset: usize,
}

impl Block {
    pub fn size(&self) -> usize {
        self.d_h * self.d_k
    }
}

/// `U† N U = ⊕_i B(H_i) ⊗ I_{K_i}`, with block basis index `a·d_K + m`.
#[derive(Clone, Debug)]
pub struct BlockStructure {
    pub dim: usize,
    pub unitary: CMat,
    pub blocks: Vec<Block>,
}

impl BlockStructure {
    /// Assemble from a unitary and `(d_H, d_K, τ)` triples in block order.
    pub fn new(unitary: CMat, dims: &[(usize, usize, CMat)]) -> Result<Self> {
        let d = unitary.nrows();
        linalg::check_square(&unitary, d)?;
        let total: usize = dims.iter().map(|(h, k, _)| h * k).sum();
        if total != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: total,
            });
        }
        let mut blocks = Vec::with_capacity(dims.len());
        let mut offset = 0;
        for (i, (d_h, d_k, tau)) in dims.iter().enumerate() {
            linalg::check_square(tau, *d_k)?;
            let m = d_h * d_k;
            let v = unitary.columns(offset, m).into_owned();
            blocks.push(Block {
                d_h: *d_h,
                d_k: *d_k,
                tau: tau.clone(),
                projector: hermitize(&(&v * v.adjoint())),
                offset,
            });
            check_tau(i, tau)?;
            offset += m;
        }
        Ok(BlockStructure {
            dim: d,
            unitary,
            blocks,
        })
    }

    /// `B(C^{d_h}) ⊗ I_{d_k}` in the standard basis, with state `τ` on the second factor.
    pub fn factor(d_h: usize, d_k: usize, tau: CMat) -> Result<Self> {
        BlockStructure::new(identity(d_h * d_k), &[(d_h, d_k, tau)])
    }

    /// Diagonal algebra with one-dimensional blocks.
    pub fn diagonal(d: usize) -> Self {
        let dims: Vec<(usize, usize, CMat)> = (0..d).map(|_| (1, 1, identity(1))).collect();
        BlockStructure::new(identity(d), &dims).expect("consistent diagonal structure")
    }

    /// `C·I` with state `σ` (primitive case).
    pub fn trivial(sigma: &CMat) -> Result<Self> {
        let d = sigma.nrows();
        BlockStructure::factor(1, d, sigma.clone())
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn max_d_h(&self) -> usize {
        self.blocks.iter().map(|b| b.d_h).max().unwrap_or(1)
    }

    /// `(d_H, d_K)` per block.
    pub fn dims(&self) -> Vec<(usize, usize)> {
        self.blocks.iter().map(|b| (b.d_h, b.d_k)).collect()
    }

    /// Dimension of the algebra, `Σ d_H²`.
    pub fn algebra_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.d_h * b.d_h).sum()
    }

    pub fn to_block_basis(&self, x: &CMat) -> CMat {
        self.unitary.adjoint() * x * &self.unitary
    }

    pub fn from_block_basis(&self, y: &CMat) -> CMat {
        &self.unitary * y * self.unitary.adjoint()
    }

    /// Diagonal block `i` of `U† X U`.
    pub fn block_of(&self, y: &CMat, i: usize) -> CMat {
        let b = &self.blocks[i];
        y.view((b.offset, b.offset), (b.size(), b.size()))
            .into_owned()
    }

    /// Embed `x_i ⊗ I_{d_K}` (or `x_i ⊗ k_i` when given) into the original basis.
    pub fn embed(&self, parts: &[CMat], right: Option<&[CMat]>) -> CMat {
        let mut y = CMat::zeros(self.dim, self.dim);
        for (i, b) in self.blocks.iter().enumerate() {
            let k = match right {
                Some(r) => r[i].clone(),
                None => identity(b.d_k),
            };
            let m = kron(&parts[i], &k);
            y.view_mut((b.offset, b.offset), (b.size(), b.size()))
                .copy_from(&m);
        }
        self.from_block_basis(&y)
    }

    /// Replace the block states.
    pub fn with_states(&self, taus: Vec<CMat>) -> Result<Self> {
        let dims: Vec<(usize, usize, CMat)> = self
            .blocks
            .iter()
            .zip(taus)
            .map(|(b, t)| (b.d_h, b.d_k, t))
            .collect();
        BlockStructure::new(self.unitary.clone(), &dims)
    }

    /// Orthonormal Hermitian basis of the algebra, built from matrix units.
    pub fn algebra_basis(&self) -> AlgebraBasis {
        let mut mats = Vec::with_capacity(self.algebra_dim());
        for (i, b) in self.blocks.iter().enumerate() {
            for a in 0..b.d_h {
                for cc in 0..b.d_h {
                    let mut parts: Vec<CMat> = self
                        .blocks
                        .iter()
                        .map(|bb| CMat::zeros(bb.d_h, bb.d_h))
                        .collect();
                    parts[i][(a, cc)] = c(1.0);
                    mats.push(self.embed(&parts, None));
                }
            }
        }
        AlgebraBasis {
            dim: self.dim,
            basis: hermitian_basis(&mats, 1e-8),
        }
    }

    /// Residual of `x` against the form `⊕ x_i ⊗ I` (relative).
    pub fn form_residual(&self, x: &CMat) -> f64 {
        let n = fro_norm(x);
        if n == 0.0 {
            return 0.0;
        }
        let y = self.to_block_basis(x);
        let parts: Vec<CMat> = (0..self.len())
            .map(|i| {
                partial_trace_k(
                    &self.block_of(&y, i),
                    self.blocks[i].d_h,
                    self.blocks[i].d_k,
                ) / c(self.blocks[i].d_k as f64)
            })
            .collect();
        let proj = self.embed(&parts, None);
        fro_norm(&(x - proj)) / n
    }
}

fn check_tau(block: usize, tau: &CMat) -> Result<()> {
    linalg::check_hermitian(tau)?;
    let tr = linalg::trace_re(tau);
    if (tr - 1.0).abs() > 1e-9 {
        return Err(Error::DomainError {
            what: "trace of a block state",
            value: tr,
        });
    }
    let e = eigh(tau);
    if e.min() < TAU_TOL {
        return Err(Error::RankDeficientTau {
            block,
            min_eig: e.min(),
        });
    }
    Ok(())
}

/// `Tr_K` of an operator on `C^{d_h} ⊗ C^{d_k}` (index `a·d_k + m`).
pub fn partial_trace_k(b: &CMat, d_h: usize, d_k: usize) -> CMat {
    CMat::from_fn(d_h, d_h, |a, cc| {
        (0..d_k).map(|m| b[(a * d_k + m, cc * d_k + m)]).sum()
    })
}

/// `Tr_H` of an operator on `C^{d_h} ⊗ C^{d_k}`.
pub fn partial_trace_h(b: &CMat, d_h: usize, d_k: usize) -> CMat {
    CMat::from_fn(d_k, d_k, |m, n| {
        (0..d_h).map(|a| b[(a * d_k + m, a * d_k + n)]).sum()
    })
}

/// `Σ_{m,n} B[(a,m),(c,n)] τ[n,m]`.
fn weighted_trace_k(b: &CMat, tau: &CMat, d_h: usize, d_k: usize) -> CMat {
    CMat::from_fn(d_h, d_h, |a, cc| {
        let mut s = C64::new(0.0, 0.0);
        for m in 0..d_k {
            for n in 0..d_k {
                s += b[(a * d_k + m, cc * d_k + n)] * tau[(n, m)];
            }
        }
        s
    })
}

/// Eigenvalue clusters of an ascending spectrum, split at gaps larger than `tol`.
fn clusters(values: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (j, v) in values.iter().enumerate() {
        match out.last_mut() {
            Some(cl) if (v - values[cl[cl.len() - 1]]).abs() <= tol => cl.push(j),
            _ => out.push(vec![j]),
        }
    }
    out
}

fn center(alg: &AlgebraBasis, rng: &mut random::Rng) -> Result<Vec<CMat>> {
    let d = alg.dim;
    let n = alg.len();
    let gens: Vec<CMat> = (0..3).map(|_| alg.random_element(rng)).collect();
    let mut gram = CMat::zeros(n, n);
    for g in &gens {
        let cols: Vec<linalg::CVec> = alg
            .basis
            .iter()
            .map(|b| linalg::vec(&(b * g - g * b)))
            .collect();
        let m = CMat::from_columns(&cols);
        gram += m.adjoint() * m;
    }
    // Absolute threshold: for a commutative algebra the whole Gram matrix is round-off.
    let scale: f64 = gens.iter().map(|g| fro_norm(g).powi(2)).sum();
    let ge = eigh(&gram);
    let null: Vec<linalg::CVec> = (0..n)
        .filter(|&j| ge.values[j] <= 1e-18 * scale)
        .map(|j| ge.vectors.column(j).into_owned())
        .collect();
    let mats: Vec<CMat> = null
        .iter()
        .map(|v| {
            let mut z = linalg::zeros(d);
            for (k, b) in alg.basis.iter().enumerate() {
                z += b * v[k];
            }
            z
        })
        .collect();
    let z = hermitian_basis(&mats, 1e-8);
    for zb in &z {
        for b in &alg.basis {
            let r = fro_norm(&(zb * b - b * zb));
            if r > 1e-8 {
                return Err(Error::DecompositionFailed(format!(
                    "center element fails to commute (residual {r:.3e})"
                )));
            }
        }
    }
    Ok(z)
}

struct RawBlock {
    columns: CMat,
    d_h: usize,
    d_k: usize,
    first: usize,
}

fn split_block(alg: &AlgebraBasis, v: &CMat, rng: &mut random::Rng) -> Result<RawBlock> {
    let m = v.ncols();
    let restricted: Vec<CMat> = alg.basis.iter().map(|b| v.adjoint() * b * v).collect();
    let rank = linalg::orthonormalize(&restricted, 1e-8).len();
    let d_h = (rank as f64).sqrt().round() as usize;
    if d_h == 0 || d_h * d_h != rank || m % d_h != 0 {
        return Err(Error::DecompositionFailed(format!(
            "block of size {m} carries an algebra of dimension {rank}"
        )));
    }
    let d_k = m / d_h;
    let first = (0..v.nrows())
        .find(|&i| (0..m).map(|j| v[(i, j)].norm_sqr()).sum::<f64>() > 1e-6)
        .unwrap_or(0);
    if d_h == 1 {
        return Ok(RawBlock {
            columns: v.clone(),
            d_h,
            d_k,
            first,
        });
    }
    let random_in = |rng: &mut random::Rng, herm: bool| {
        let mut out = CMat::zeros(m, m);
        for r in &restricted {
            let w = if herm {
                c(random::normal(rng))
            } else {
                C64::new(random::normal(rng), random::normal(rng))
            };
            out += r * w;
        }
        out
    };
    for _ in 0..SEED_RETRIES {
        let h = hermitize(&random_in(rng, true));
        let e = eigh(&h);
        let scale = e.values.iter().fold(1e-300f64, |a, x| a.max(x.abs()));
        let cl = clusters(&e.values, 1e-7 * scale);
        if cl.len() != d_h || cl.iter().any(|g| g.len() != d_k) {
            continue;
        }
        let q: Vec<CMat> = cl
            .iter()
            .map(|g| CMat::from_fn(m, d_k, |i, j| e.vectors[(i, g[j])]))
            .collect();
        let g = random_in(rng, false);
        let mut aligned: Vec<CMat> = Vec::with_capacity(d_h);
        let mut ok = true;
        for qa in &q {
            let t = qa * (qa.adjoint() * &g * &q[0]);
            let s = (fro_norm(&t).powi(2) / d_k as f64).sqrt();
            if s < 1e-6 * fro_norm(&g) {
                ok = false;
                break;
            }
            aligned.push(t / c(s));
        }
        if !ok {
            continue;
        }
        let w = CMat::from_fn(m, m, |i, j| aligned[j / d_k][(i, j % d_k)]);
        return Ok(RawBlock {
            columns: v * w,
            d_h,
            d_k,
            first,
        });
    }
    Err(Error::DecompositionFailed(
        "no generic element split the block".into(),
    ))
}

fn try_wedderburn(alg: &AlgebraBasis, rng: &mut random::Rng) -> Result<BlockStructure> {
    let d = alg.dim;
    let z = center(alg, rng)?;
    let mut zr = linalg::zeros(d);
    for b in &z {
        zr += b * c(random::normal(rng));
    }
    let e = eigh(&zr);
    let scale = e.values.iter().fold(1e-300f64, |a, x| a.max(x.abs()));
    let cl = clusters(&e.values, 1e-7 * scale);
    if cl.len() != z.len() {
        return Err(Error::DecompositionFailed(format!(
            "central element has {} eigenvalue clusters for a center of dimension {}",
            cl.len(),
            z.len()
        )));
    }
    let mut raw: Vec<RawBlock> = Vec::with_capacity(cl.len());
    for g in &cl {
        let v = CMat::from_fn(d, g.len(), |i, j| e.vectors[(i, g[j])]);
        raw.push(split_block(alg, &v, rng)?);
    }
    raw.sort_by_key(|b| b.first);
    let cols: Vec<linalg::CVec> = raw
        .iter()
        .flat_map(|b| (0..b.columns.ncols()).map(move |j| b.columns.column(j).into_owned()))
        .collect();
    let unitary = CMat::from_columns(&cols);
    let dims: Vec<(usize, usize, CMat)> = raw
        .iter()
        .map(|b| (b.d_h, b.d_k, identity(b.d_k) / c(b.d_k as f64)))
        .collect();
    let s = BlockStructure::new(unitary, &dims)?;
    let unit_res = fro_norm(&(s.unitary.adjoint() * &s.unitary - identity(d)));
    if unit_res > 1e-8 {
        return Err(Error::DecompositionFailed(format!(
            "basis change is not unitary (residual {unit_res:.3e})"
        )));
    }
    let worst = alg
        .basis
        .iter()
        .map(|b| s.form_residual(b))
        .fold(0.0f64, f64::max);
    if worst > BLOCK_TOL || s.algebra_dim() != alg.len() {
        return Err(Error::DecompositionFailed(format!(
            "block form residual {worst:.3e}"
        )));
    }
    Ok(s)
}

/// Block decomposition of a `*`-algebra. Block states are set to `I/d_K`;
/// [`conditional_expectation`] replaces them with the invariant-state marginals.
pub fn wedderburn(alg: &AlgebraBasis) -> Result<BlockStructure> {
    let mut last = Error::DecompositionFailed("no attempt".into());
    for k in 0..SEED_RETRIES {
        let mut rng = random::rng(WEDDERBURN_SEED + k);
        match try_wedderburn(alg, &mut rng) {
            Ok(s) => return Ok(s),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// `E_N` and its predual for a block structure with block states `τ_i`.
#[derive(Debug)]
pub struct ConditionalExpectation {
    pub structure: BlockStructure,
    pub sigma_tr: CMat,
    sigma_eig: Eigh,
    heisenberg: OnceLock<Superop>,
    schrodinger: OnceLock<Superop>,
}

impl Clone for ConditionalExpectation {
    fn clone(&self) -> Self {
        ConditionalExpectation::from_structure(self.structure.clone())
    }
}

impl ConditionalExpectation {
    pub fn from_structure(structure: BlockStructure) -> Self {
        let d = structure.dim;
        let parts: Vec<CMat> = structure
            .blocks
            .iter()
            .map(|b| identity(b.d_h) * c(b.d_k as f64 / d as f64))
            .collect();
        let taus: Vec<CMat> = structure.blocks.iter().map(|b| b.tau.clone()).collect();
        let sigma_tr = hermitize(&structure.embed(&parts, Some(&taus)));
        let sigma_eig = eigh(&sigma_tr);
        ConditionalExpectation {
            structure,
            sigma_tr,
            sigma_eig,
            heisenberg: OnceLock::new(),
            schrodinger: OnceLock::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.structure.dim
    }

    pub fn n_blocks(&self) -> usize {
        self.structure.len()
    }

    /// `E_N[X]`.
    pub fn apply(&self, x: &CMat) -> CMat {
        let s = &self.structure;
        let y = s.to_block_basis(x);
        let parts: Vec<CMat> = s
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| weighted_trace_k(&s.block_of(&y, i), &b.tau, b.d_h, b.d_k))
            .collect();
        s.embed(&parts, None)
    }

    /// `E_{N*}(ρ) = Σ_i Tr_{K_i}(P_i ρ P_i) ⊗ τ_i`.
    pub fn apply_predual(&self, rho: &CMat) -> CMat {
        let s = &self.structure;
        let y = s.to_block_basis(rho);
        let parts: Vec<CMat> = s
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| partial_trace_k(&s.block_of(&y, i), b.d_h, b.d_k))
            .collect();
        let taus: Vec<CMat> = s.blocks.iter().map(|b| b.tau.clone()).collect();
        s.embed(&parts, Some(&taus))
    }

    /// Hilbert–Schmidt orthogonal projection onto `N`.
    pub fn project_hs(&self, x: &CMat) -> CMat {
        let s = &self.structure;
        let y = s.to_block_basis(x);
        let parts: Vec<CMat> = s
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| partial_trace_k(&s.block_of(&y, i), b.d_h, b.d_k) / c(b.d_k as f64))
            .collect();
        s.embed(&parts, None)
    }

    /// Blocks `x_i` of an element `⊕ x_i ⊗ I` of `N` (of its projection otherwise).
    pub fn components(&self, x: &CMat) -> Vec<CMat> {
        let s = &self.structure;
        let y = s.to_block_basis(x);
        s.blocks
            .iter()
            .enumerate()
            .map(|(i, b)| partial_trace_k(&s.block_of(&y, i), b.d_h, b.d_k) / c(b.d_k as f64))
            .collect()
    }

    /// `‖X − Π_N X‖ / ‖X‖`.
    pub fn membership_residual(&self, x: &CMat) -> f64 {
        self.structure.form_residual(x)
    }

    pub fn sigma_eig(&self) -> &Eigh {
        &self.sigma_eig
    }

    /// `σ_Tr^a`.
    pub fn sigma_power(&self, a: f64) -> CMat {
        self.sigma_eig.reconstruct_with(|x| x.powf(a))
    }

    pub fn log_sigma(&self) -> CMat {
        self.sigma_eig.reconstruct_with(f64::ln)
    }

    /// `‖σ_Tr^{-1}‖_∞`.
    pub fn sigma_inv_norm(&self) -> f64 {
        1.0 / self.sigma_eig.min()
    }

    pub fn heisenberg(&self) -> &Superop {
        self.heisenberg
            .get_or_init(|| Superop::from_map(self.dim(), |x| self.apply(x)))
    }

    pub fn schrodinger(&self) -> &Superop {
        self.schrodinger
            .get_or_init(|| Superop::from_map(self.dim(), |x| self.apply_predual(x)))
    }

    /// Random Hermitian element of `N`.
    pub fn random_hermitian(&self, rng: &mut random::Rng) -> CMat {
        let parts: Vec<CMat> = self
            .structure
            .blocks
            .iter()
            .map(|b| random::hermitian(b.d_h, rng))
            .collect();
        hermitize(&self.structure.embed(&parts, None))
    }

    /// Random positive definite element of `N` with `Tr(σ_Tr A) = 1`.
    pub fn random_density_in_n(&self, rng: &mut random::Rng) -> CMat {
        let parts: Vec<CMat> = self
            .structure
            .blocks
            .iter()
            .map(|b| random::positive_definite(b.d_h, 0.05, rng))
            .collect();
        let a = hermitize(&self.structure.embed(&parts, None));
        let t = linalg::trace_re(&(&self.sigma_tr * &a));
        a / c(t)
    }
}

/// Build `E_N` with block states taken from the faithful invariant state of `gen`.
pub fn conditional_expectation(
    gen: &GeneratorPair,
    structure: &BlockStructure,
) -> Result<ConditionalExpectation> {
    let rho = qms::faithful_invariant_state(gen).ok_or(Error::NoFaithfulInvariantState)?;
    let y = structure.to_block_basis(&rho);
    let taus: Vec<CMat> = structure
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let t = partial_trace_h(&structure.block_of(&y, i), b.d_h, b.d_k);
            let tr = linalg::trace_re(&t);
            hermitize(&(t / c(tr)))
        })
        .collect();
    let s = structure.with_states(taus)?;
    Ok(ConditionalExpectation::from_structure(s))
}

/// `σ_Tr = E_{N*}(I/d)`.
pub fn reference_state(ce: &ConditionalExpectation) -> CMat {
    ce.sigma_tr.clone()
}

/// Full pipeline: algebra, blocks and conditional expectation of a generator.
pub fn analyze(gen: &GeneratorPair) -> Result<ConditionalExpectation> {
    let alg = df_algebra(gen)?;
    let s = wedderburn(&alg)?;
    conditional_expectation(gen, &s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diag, pauli_z, zeros};
    use crate::qms::{build_generator, Lindbladian};

    fn wcd2() -> GeneratorPair {
        let z1 = kron(&pauli_z(), &identity(2));
        let z2 = kron(&identity(2), &pauli_z());
        build_generator(&Lindbladian::new(zeros(4), vec![z1 + z2]).unwrap()).unwrap()
    }

    #[test]
    fn primitive_models_give_the_trivial_algebra() {
        for sigma in [linalg::diag(&[0.75, 0.25]), linalg::diag(&[0.5, 0.3, 0.2])] {
            let d = sigma.nrows();
            let gen = crate::models::depolarizing_generator(&sigma).unwrap();
            let ce = analyze(&gen).unwrap();
            assert_eq!(ce.structure.dims(), vec![(1, d)]);
        }
    }

    #[test]
    fn wcd2_blocks() {
        let g = wcd2();
        let alg = df_algebra(&g).unwrap();
        assert_eq!(alg.len(), 6);
        let s = wedderburn(&alg).unwrap();
        assert_eq!(s.dims(), vec![(1, 1), (2, 1), (1, 1)]);
        let ce = conditional_expectation(&g, &s).unwrap();
        assert!(qms::rel_diff(&ce.sigma_tr, &(identity(4) / c(4.0))) < 1e-12);
    }

    #[test]
    fn factor_algebra() {
        let mut rng = random::rng(3);
        let mats: Vec<CMat> = (0..4)
            .map(|_| kron(&random::hermitian(2, &mut rng), &identity(2)))
            .collect();
        let u = random::unitary(4, &mut rng);
        let mats: Vec<CMat> = mats.iter().map(|m| &u * m * u.adjoint()).collect();
        let alg = AlgebraBasis::new(4, &mats).unwrap();
        let s = wedderburn(&alg).unwrap();
        assert_eq!(s.dims(), vec![(2, 2)]);
    }

    #[test]
    fn diagonal_algebra_pinching() {
        let mats: Vec<CMat> = (0..3)
            .map(|i| {
                let mut v = vec![0.0; 3];
                v[i] = 1.0;
                diag(&v)
            })
            .collect();
        let alg = AlgebraBasis::new(3, &mats).unwrap();
        let s = wedderburn(&alg).unwrap();
        assert_eq!(s.dims(), vec![(1, 1); 3]);
        let ce = ConditionalExpectation::from_structure(s);
        let mut rng = random::rng(5);
        let x = random::ginibre(3, &mut rng);
        let p = ce.apply(&x);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { x[(i, j)] } else { c(0.0) };
                assert!((p[(i, j)] - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn non_algebra_rejected() {
        let a = CMat::from_fn(3, 3, |i, j| c(if i + j == 1 { 1.0 } else { 0.0 }));
        assert!(matches!(
            AlgebraBasis::new(3, &[identity(3), a]),
            Err(Error::NotAnAlgebra(_))
        ));
    }
}

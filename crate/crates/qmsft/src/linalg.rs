//! Dense complex matrix kernel.
//!
//! Superoperators act on column-stacked matrices: `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.
//! nalgebra stores matrices column-major, so `vec` is a plain reinterpretation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Relative tolerance for Hermiticity checks.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalues in `[-PSD_CLAMP, 0)` are treated as round-off and clamped to zero.
pub const PSD_CLAMP: f64 = 1e-12;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn zeros(d: usize) -> CMat {
    CMat::zeros(d, d)
}

pub fn diag(values: &[f64]) -> CMat {
    let d = values.len();
    CMat::from_fn(d, d, |i, j| if i == j { c(values[i]) } else { ZERO })
}

pub fn pauli_x() -> CMat {
    CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> CMat {
    CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> CMat {
    diag(&[1.0, -1.0])
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest entry of `M − M†` relative to the largest entry of `M`.
pub fn hermiticity_residual(m: &CMat) -> f64 {
    let scale = max_abs(m);
    if scale == 0.0 {
        return 0.0;
    }
    max_abs(&(m - m.adjoint())) / scale
}

pub fn check_square(m: &CMat, d: usize) -> Result<()> {
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: m.nrows().max(m.ncols()),
        });
    }
    Ok(())
}

pub fn check_finite(m: &CMat) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Parse("non-finite matrix entry".into()))
    }
}

pub fn check_hermitian(m: &CMat) -> Result<()> {
    let r = hermiticity_residual(m);
    if r > HERMITIAN_TOL {
        Err(Error::NonHermitianInput(r))
    } else {
        Ok(())
    }
}

/// Hilbert–Schmidt inner product `Tr(A† B)`.
pub fn hs_inner(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn fro_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace_re(m: &CMat) -> f64 {
    m.trace().re
}

pub fn vec(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

pub fn unvec(v: &CVec, d: usize) -> CMat {
    CMat::from_column_slice(d, d, v.as_slice())
}

/// Ascending eigen-decomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl Eigh {
    pub fn reconstruct_with<F: Fn(f64) -> f64>(&self, f: F) -> CMat {
        let d = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..d {
            let fj = c(f(self.values[j]));
            for i in 0..d {
                scaled[(i, j)] *= fj;
            }
        }
        hermitize(&(scaled * self.vectors.adjoint()))
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

/// Eigen-decomposition of the Hermitian part of `m`, skipping the symmetry check.
pub fn eigh(m: &CMat) -> Eigh {
    let h = hermitize(m);
    let se = nalgebra::linalg::SymmetricEigen::new(h.clone());
    let finite = se.eigenvalues.iter().all(|v| v.is_finite())
        && se.eigenvectors.iter().all(|z| z.re.is_finite() && z.im.is_finite());
    if !finite {
        return eigh_real_embedding(&h);
    }
    let d = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let values = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let vectors = CMat::from_fn(d, d, |i, j| se.eigenvectors[(i, order[j])]);
    Eigh { values, vectors }
}

// The complex solver occasionally returns NaN on exactly structured inputs.
// `A + iB` is decomposed through the real symmetric `[[A, -B], [B, A]]`, whose
// eigenvectors `(u; v)` give complex eigenvectors `u + iv` in pairs.
fn eigh_real_embedding(h: &CMat) -> Eigh {
    let d = h.nrows();
    let big = DMatrix::<f64>::from_fn(2 * d, 2 * d, |i, j| {
        let z = h[(i % d, j % d)];
        match (i < d, j < d) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let se = nalgebra::linalg::SymmetricEigen::new(big);
    let mut order: Vec<usize> = (0..2 * d).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let mut accepted: Vec<CVec> = Vec::with_capacity(d);
    for &k in &order {
        if accepted.len() == d {
            break;
        }
        let col = se.eigenvectors.column(k);
        let mut z = CVec::from_fn(d, |i, _| C64::new(col[i], col[i + d]));
        for a in &accepted {
            let overlap = a.dotc(&z);
            z -= a * overlap;
        }
        let n = z.norm();
        if n > 1e-3 {
            accepted.push(z / c(n));
        }
    }
    let vectors = CMat::from_columns(&accepted);
    let mut pairs: Vec<(f64, usize)> = (0..accepted.len())
        .map(|j| ((vectors.column(j).adjoint() * h * vectors.column(j))[(0, 0)].re, j))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Eigh {
        values: pairs.iter().map(|p| p.0).collect(),
        vectors: CMat::from_fn(d, d, |i, j| vectors[(i, pairs[j].1)]),
    }
}

/// Hermitian eigen-decomposition with ascending eigenvalues.
pub fn herm_eig(m: &CMat) -> Result<Eigh> {
    check_hermitian(m)?;
    Ok(eigh(m))
}

/// `U f(Λ) U†`, re-Hermitized. Non-finite values of `f` on the spectrum are domain errors.
pub fn matrix_function<F: Fn(f64) -> f64>(m: &CMat, f: F) -> Result<CMat> {
    check_hermitian(m)?;
    apply_fn(&eigh(m), "f", f)
}

fn apply_fn<F: Fn(f64) -> f64>(e: &Eigh, what: &'static str, f: F) -> Result<CMat> {
    for &v in &e.values {
        if !f(v).is_finite() {
            return Err(Error::DomainError { what, value: v });
        }
    }
    Ok(e.reconstruct_with(f))
}

fn clamp_scale(e: &Eigh) -> f64 {
    PSD_CLAMP * e.values.iter().fold(1.0f64, |a, v| a.max(v.abs()))
}

/// Clamp round-off negativity; genuine negativity is an error.
pub fn clamp_psd(e: &Eigh) -> Result<Eigh> {
    let tol = clamp_scale(e);
    let mut out = e.clone();
    for v in out.values.iter_mut() {
        if *v < -tol {
            return Err(Error::DomainError {
                what: "fractional power",
                value: *v,
            });
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(out)
}

/// `M^a` for positive semidefinite `M` (positive definite when `a < 0`).
pub fn psd_power(m: &CMat, a: f64) -> Result<CMat> {
    let e = clamp_psd(&eigh(m))?;
    apply_fn(&e, "power", |x| x.powf(a))
}

pub fn psd_sqrt(m: &CMat) -> Result<CMat> {
    psd_power(m, 0.5)
}

/// Matrix logarithm of a positive definite matrix.
pub fn log_pd(m: &CMat) -> Result<CMat> {
    let e = eigh(m);
    apply_fn(&e, "log", |x| if x > 0.0 { x.ln() } else { f64::NAN })
}

pub fn exp_herm(m: &CMat) -> CMat {
    eigh(m).reconstruct_with(f64::exp)
}

/// `|M|^a` for Hermitian `M`.
pub fn abs_power(m: &CMat, a: f64) -> CMat {
    eigh(m).reconstruct_with(|x| x.abs().powf(a))
}

/// Singular values, descending.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `(Σ s^p)^{1/p}` computed with the largest value factored out.
pub fn lp_of(values: &[f64], p: f64) -> f64 {
    if values.iter().any(|v| v.is_nan()) {
        return f64::NAN;
    }
    let m = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    if p.is_infinite() {
        return m;
    }
    m * values
        .iter()
        .map(|v| (v.abs() / m).powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidExponent(format!("p = {p} < 1")));
    }
    Ok(())
}

/// Schatten p-norm; `p = f64::INFINITY` gives the operator norm.
pub fn schatten_norm(m: &CMat, p: f64) -> Result<f64> {
    check_exponent(p)?;
    if hermiticity_residual(m) <= HERMITIAN_TOL {
        Ok(lp_of(&eigh(m).values, p))
    } else {
        Ok(lp_of(&singular_values(m), p))
    }
}

/// Schatten norm of a Hermitian matrix via its eigenvalues.
pub fn schatten_herm(m: &CMat, p: f64) -> f64 {
    lp_of(&eigh(m).values, p)
}

/// Trace norm of a Hermitian matrix.
pub fn trace_norm_herm(m: &CMat) -> f64 {
    eigh(m).values.iter().map(|v| v.abs()).sum()
}

/// Daleckii–Krein: directional derivative of `A ↦ f(A)` at Hermitian `A` along `Z`.
pub fn frechet<F, G>(e: &Eigh, f: F, fprime: G, z: &CMat) -> CMat
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let d = e.values.len();
    let u = &e.vectors;
    let mut zt = u.adjoint() * z * u;
    let scale = e.values.iter().fold(1e-300f64, |a, v| a.max(v.abs()));
    for i in 0..d {
        for j in 0..d {
            let (a, b) = (e.values[i], e.values[j]);
            let dd = if (a - b).abs() <= 1e-9 * scale {
                fprime(0.5 * (a + b))
            } else {
                (f(a) - f(b)) / (a - b)
            };
            zt[(i, j)] *= c(dd);
        }
    }
    u * zt * u.adjoint()
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &CMat) -> CMat {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * c(0.5f64.powi(s));
    let id = identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let bc = |k: usize| c(B[k]);
    let u_inner = &a6 * (&a6 * bc(13) + &a4 * bc(11) + &a2 * bc(9))
        + &a6 * bc(7)
        + &a4 * bc(5)
        + &a2 * bc(3)
        + &id * bc(1);
    let u = &a * u_inner;
    let v = &a6 * (&a6 * bc(12) + &a4 * bc(10) + &a2 * bc(8))
        + &a6 * bc(6)
        + &a4 * bc(4)
        + &a2 * bc(2)
        + &id * bc(0);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Padé denominator is nonsingular");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Eigenvalues of a general square matrix from its complex Schur form.
pub fn eigenvalues_general(m: &CMat) -> Result<Vec<C64>> {
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::NonDiagonalizable("Schur iteration did not converge".into()))?;
    let ev = schur
        .eigenvalues()
        .ok_or_else(|| Error::NonDiagonalizable("Schur form not triangular".into()))?;
    Ok(ev.iter().copied().collect())
}

/// Right singular vectors of `m` with the `k` smallest singular values, plus those values.
pub fn smallest_right_singular(m: &CMat, k: usize) -> (Vec<CVec>, Vec<f64>) {
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let n = svd.singular_values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let mut vecs = Vec::with_capacity(k);
    let mut vals = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        vecs.push(vt.row(idx).adjoint());
        vals.push(svd.singular_values[idx]);
    }
    (vecs, vals)
}

/// Orthonormal basis of the null space of a Hermitian positive semidefinite Gram matrix.
pub fn psd_null_space(g: &CMat, rel_tol: f64) -> Vec<CVec> {
    let e = eigh(g);
    let scale = e.max().abs().max(1e-300);
    (0..e.values.len())
        .filter(|&j| e.values[j] <= rel_tol * scale)
        .map(|j| e.vectors.column(j).into_owned())
        .collect()
}

/// Modified Gram–Schmidt (two passes) under the Hilbert–Schmidt inner product.
pub fn orthonormalize(mats: &[CMat], tol: f64) -> Vec<CMat> {
    let mut out: Vec<CMat> = Vec::new();
    for m in mats {
        let mut v = m.clone();
        for _ in 0..2 {
            for b in &out {
                let proj = hs_inner(b, &v);
                v -= b * proj;
            }
        }
        let n = fro_norm(&v);
        if n > tol {
            out.push(v / c(n));
        }
    }
    out
}

/// Orthonormal Hermitian basis for a `*`-closed span.
pub fn hermitian_basis(mats: &[CMat], tol: f64) -> Vec<CMat> {
    let mut parts = Vec::with_capacity(2 * mats.len());
    for m in mats {
        parts.push(hermitize(m));
        parts.push((m - m.adjoint()) * C64::new(0.0, -0.5));
    }
    orthonormalize(&parts, tol)
}

/// A linear map on `d×d` matrices stored as a `d²×d²` matrix on column-stacked vectors.
#[derive(Clone, Debug)]
pub struct Superop {
    pub dim: usize,
    pub mat: CMat,
}

impl Superop {
    pub fn from_map<F: Fn(&CMat) -> CMat>(dim: usize, f: F) -> Self {
        let n = dim * dim;
        let mut mat = CMat::zeros(n, n);
        for j in 0..dim {
            for i in 0..dim {
                let mut e = zeros(dim);
                e[(i, j)] = ONE;
                let col = f(&e);
                mat.column_mut(j * dim + i).copy_from_slice(col.as_slice());
            }
        }
        Superop { dim, mat }
    }

    pub fn identity(dim: usize) -> Self {
        Superop {
            dim,
            mat: identity(dim * dim),
        }
    }

    /// `X ↦ A X B`.
    pub fn sandwich(a: &CMat, b: &CMat) -> Self {
        Superop {
            dim: a.nrows(),
            mat: kron(&b.transpose(), a),
        }
    }

    pub fn apply(&self, x: &CMat) -> CMat {
        unvec(&(&self.mat * vec(x)), self.dim)
    }

    /// Adjoint with respect to the Hilbert–Schmidt inner product.
    pub fn hs_adjoint(&self) -> Self {
        Superop {
            dim: self.dim,
            mat: self.mat.adjoint(),
        }
    }

    pub fn compose(&self, other: &Superop) -> Self {
        Superop {
            dim: self.dim,
            mat: &self.mat * &other.mat,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Superop {
            dim: self.dim,
            mat: &self.mat * c(s),
        }
    }

    pub fn add(&self, other: &Superop) -> Self {
        Superop {
            dim: self.dim,
            mat: &self.mat + &other.mat,
        }
    }

    pub fn sub(&self, other: &Superop) -> Self {
        Superop {
            dim: self.dim,
            mat: &self.mat - &other.mat,
        }
    }

    pub fn exp(&self, t: f64) -> Self {
        Superop {
            dim: self.dim,
            mat: expm(&(&self.mat * c(t))),
        }
    }

    /// Choi matrix `Σ_ij E_ij ⊗ Φ(E_ij)`.
    pub fn choi(&self) -> CMat {
        let d = self.dim;
        let mut out = CMat::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                let mut e = zeros(d);
                e[(i, j)] = ONE;
                let img = self.apply(&e);
                for a in 0..d {
                    for b in 0..d {
                        out[(i * d + a, j * d + b)] = img[(a, b)];
                    }
                }
            }
        }
        out
    }

    /// Spectral norm of the matrix representation (Hilbert–Schmidt operator norm).
    pub fn norm_2(&self) -> f64 {
        singular_values(&self.mat)[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_embedding_matches_complex_solver() {
        let mut h = CMat::from_fn(4, 4, |i, j| C64::new((i * j) as f64 - 1.0, i as f64 - j as f64));
        h = hermitize(&h);
        // Doubly degenerate spectrum.
        let h = kron(&identity(2), &h);
        let a = eigh(&h);
        let b = eigh_real_embedding(&h);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-10);
        }
        assert!(fro_norm(&(b.reconstruct_with(|v| v) - &h)) < 1e-10);
        let gram = b.vectors.adjoint() * &b.vectors;
        assert!(fro_norm(&(gram - identity(8))) < 1e-10);
    }

    #[test]
    fn column_stacking_convention() {
        let a = CMat::from_fn(2, 2, |i, j| C64::new((i + 2 * j) as f64, 1.0));
        let b = CMat::from_fn(2, 2, |i, j| C64::new(1.0, (3 * i + j) as f64));
        let x = CMat::from_fn(2, 2, |i, j| C64::new((i * j) as f64 + 0.5, -(i as f64)));
        let direct = &a * &x * &b;
        let via = Superop::sandwich(&a, &b).apply(&x);
        assert!(fro_norm(&(direct - via)) < 1e-12);
    }

    #[test]
    fn diagonal_eig() {
        let e = herm_eig(&diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn pauli_x_spectrum() {
        let e = herm_eig(&pauli_x()).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn non_hermitian_rejected() {
        let m = CMat::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        assert!(matches!(herm_eig(&m), Err(Error::NonHermitianInput(_))));
    }

    #[test]
    fn functions_on_simple_inputs() {
        let sq = matrix_function(&diag(&[2.0, 3.0]), |x| x * x).unwrap();
        assert!(fro_norm(&(sq - diag(&[4.0, 9.0]))) < 1e-12);
        let l = log_pd(&identity(3)).unwrap();
        assert!(fro_norm(&l) < 1e-14);
        assert!(matches!(
            log_pd(&diag(&[1.0, 0.0])),
            Err(Error::DomainError { .. })
        ));
        assert!(psd_power(&diag(&[1.0, -1e-13]), 0.5).is_ok());
        assert!(psd_power(&diag(&[1.0, -1e-6]), 0.5).is_err());
    }

    #[test]
    fn schatten_simple() {
        assert!((schatten_norm(&identity(3), 1.0).unwrap() - 3.0).abs() < 1e-14);
        assert!((schatten_norm(&diag(&[3.0, -4.0]), f64::INFINITY).unwrap() - 4.0).abs() < 1e-14);
        assert!(schatten_norm(&identity(2), 0.5).is_err());
    }

    #[test]
    fn expm_matches_diagonal() {
        let e = expm(&(diag(&[1.0, -2.0, 0.5]) * c(3.0)));
        let want = diag(&[3f64.exp(), (-6f64).exp(), 1.5f64.exp()]);
        assert!(fro_norm(&(e - &want)) / fro_norm(&want) < 1e-13);
    }
}

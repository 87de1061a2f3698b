//! Weighted `L_p(σ)` norms, the `Γ` and `I_{q,p}` maps, and amalgamated `L_q(N, L_p(σ))` norms.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use argmin_math::ArgminScaledAdd;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    self, c, eigh, fro_norm, hermitize, identity, kron, lp_of, CMat, Eigh, Superop,
};
use crate::optim::{self, BfgsOptions};
use crate::par;
use crate::random;
use crate::structure::{BlockStructure, ConditionalExpectation};

/// Convergence thresholds for the amalgamated-norm optimizer.
pub const STATIONARITY_TOL: f64 = 1e-8;
pub const CHANGE_TOL: f64 = 1e-10;
pub const MAX_FIXED_POINT_ITERS: usize = 500;
const CONTINUATION: [f64; 7] = [8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0];

fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidExponent(format!("{p} is below 1")));
    }
    Ok(())
}

fn checked_sigma(sigma: &CMat) -> Result<Eigh> {
    let e = linalg::herm_eig(sigma)?;
    if e.min() < 1e-12 {
        return Err(Error::SingularState(e.min()));
    }
    Ok(e)
}

/// `σ^{s/2} X σ^{s/2}`.
pub fn gamma_power(x: &CMat, sigma: &CMat, s: f64) -> Result<CMat> {
    let e = checked_sigma(sigma)?;
    linalg::check_square(x, sigma.nrows())?;
    let h = e.reconstruct_with(|v| v.powf(s / 2.0));
    Ok(&h * x * &h)
}

/// `Γ^s` with the reference state of `ce`.
pub fn gamma(ce: &ConditionalExpectation, x: &CMat, s: f64) -> CMat {
    let h = ce.sigma_power(s / 2.0);
    &h * x * &h
}

/// `‖X‖_{p,σ} = ‖σ^{1/2p} X σ^{1/2p}‖_p`.
pub fn weighted_norm(x: &CMat, p: f64, sigma: &CMat) -> Result<f64> {
    check_exponent(p)?;
    let y = gamma_power(x, sigma, 1.0 / p)?;
    linalg::schatten_norm(&y, p)
}

pub(crate) fn weighted_norm_ce(ce: &ConditionalExpectation, x: &CMat, p: f64) -> f64 {
    let y = gamma(ce, x, 1.0 / p);
    if linalg::hermiticity_residual(&y) <= 1e-10 {
        linalg::schatten_herm(&y, p)
    } else {
        lp_of(&linalg::singular_values(&y), p)
    }
}

/// `I_{q,p}(X) = Γ^{-1/q}(|Γ^{1/p}(X)|^{p/q})`.
pub fn iqp_map(x: &CMat, q: f64, p: f64, sigma: &CMat) -> Result<CMat> {
    check_exponent(q)?;
    check_exponent(p)?;
    linalg::check_hermitian(x)?;
    let y = gamma_power(x, sigma, 1.0 / p)?;
    gamma_power(&linalg::abs_power(&y, p / q), sigma, -1.0 / q)
}

pub(crate) fn iqp_ce(ce: &ConditionalExpectation, x: &CMat, q: f64, p: f64) -> CMat {
    let y = gamma(ce, x, 1.0 / p);
    hermitize(&gamma(ce, &linalg::abs_power(&y, p / q), -1.0 / q))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Variant {
    Exact,
    TripleBar,
}

/// Which expression produced the value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    /// `q = p`, no optimization.
    Fubini,
    /// `q < p`, infimum over the dressing.
    Inf,
    /// `q > p`, supremum over the dressing.
    Sup,
}

#[derive(Clone, Debug)]
pub struct NormQuery<'a> {
    pub q: f64,
    pub p: f64,
    pub x: &'a CMat,
    pub ce: &'a ConditionalExpectation,
    pub variant: Variant,
}

impl<'a> NormQuery<'a> {
    pub fn new(x: &'a CMat, q: f64, p: f64, ce: &'a ConditionalExpectation) -> Self {
        NormQuery {
            q,
            p,
            x,
            ce,
            variant: Variant::Exact,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }
}

#[derive(Clone, Debug)]
pub struct NormResult {
    pub value: f64,
    /// Dressing `A ∈ N`, normalized by `‖A‖_{1,σ} = 1` (blockwise for the triple-bar variant).
    pub optimizer: Option<CMat>,
    pub iterations: usize,
    pub converged: bool,
    pub stationarity_residual: f64,
    pub form: Form,
    /// Two-sided optimization with no global-optimality guarantee.
    pub best_effort: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct NormSummary {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub stationarity_residual: f64,
    pub form: Form,
    pub best_effort: bool,
    pub optimizer_eigenvalues: Vec<f64>,
}

impl NormResult {
    pub fn summary(&self) -> NormSummary {
        NormSummary {
            value: self.value,
            converged: self.converged,
            iterations: self.iterations,
            stationarity_residual: self.stationarity_residual,
            form: self.form,
            best_effort: self.best_effort,
            optimizer_eigenvalues: self
                .optimizer
                .as_ref()
                .map(|a| eigh(a).values)
                .unwrap_or_default(),
        }
    }

    fn exact(value: f64, form: Form) -> Self {
        NormResult {
            value,
            optimizer: None,
            iterations: 0,
            converged: true,
            stationarity_residual: 0.0,
            form,
            best_effort: false,
        }
    }
}

/// The dressing problem `A ↦ ‖A^{e/2} Y A^{e/2}‖_p` over positive `A ∈ N`,
/// with `e = −s` (infimum) or `e = s` (supremum).
struct Dressing<'a> {
    ce: &'a ConditionalExpectation,
    basis: Vec<CMat>,
    /// `(P_g, n_g)`: group projector and the count used in its normalization.
    groups: Vec<(CMat, f64)>,
    y: CMat,
    y_half: CMat,
    exponent: f64,
    p: f64,
    /// +1 to minimize `log Φ`, −1 to maximize it.
    sense: f64,
}

impl<'a> Dressing<'a> {
    fn new(
        ce: &'a ConditionalExpectation,
        y: CMat,
        exponent: f64,
        p: f64,
        variant: Variant,
    ) -> Result<Self> {
        let y = hermitize(&y);
        let y_half = linalg::psd_sqrt(&y)?;
        let d = ce.dim();
        let groups = match variant {
            Variant::Exact => vec![(identity(d), 1.0)],
            Variant::TripleBar => {
                let n = ce.n_blocks() as f64;
                ce.structure
                    .blocks
                    .iter()
                    .map(|b| (b.projector.clone(), n))
                    .collect()
            }
        };
        Ok(Dressing {
            ce,
            basis: ce.structure.algebra_basis().basis,
            groups,
            y,
            y_half,
            exponent,
            p,
            sense: if exponent < 0.0 { 1.0 } else { -1.0 },
        })
    }

    fn d(&self) -> f64 {
        self.ce.dim() as f64
    }

    /// Scale each group to `Tr(σ P_g A) = 1/n_g`.
    fn normalize(&self, a: &CMat) -> CMat {
        if self.groups.len() == 1 {
            let t = linalg::trace_re(a) / self.d();
            return hermitize(&(a / c(t)));
        }
        let mut out = linalg::zeros(a.nrows());
        for (pg, n) in &self.groups {
            let part = pg * a * pg;
            let t = linalg::trace_re(&part) / self.d();
            out += part / c(n * t);
        }
        hermitize(&out)
    }

    fn dress(&self, e: &Eigh, power: f64) -> CMat {
        e.reconstruct_with(|v| v.max(1e-300).powf(power))
    }

    /// `Φ(A)` for normalized `A`.
    fn value(&self, a: &CMat) -> f64 {
        let f = self.dress(&eigh(a), self.exponent);
        let m = &self.y_half * f * &self.y_half;
        lp_of(&eigh(&m).values, self.p)
    }

    /// Normalized `E_N[Γ^{-1}(W^p)]` with `W = A^{e/2} Y A^{e/2}`.
    fn fixed_point_map(&self, a: &CMat) -> CMat {
        let h = self.dress(&eigh(a), self.exponent / 2.0);
        let w = eigh(&(&h * &self.y * &h));
        let wmax = w.max().max(1e-300);
        let wp = w.reconstruct_with(|v| (v.max(0.0) / wmax).powf(self.p));
        let t = hermitize(&self.ce.apply(&gamma(self.ce, &wp, -1.0)));
        let te = eigh(&t);
        let floor = 1e-13 * te.max().max(1e-300);
        self.normalize(&te.reconstruct_with(|v| v.max(floor)))
    }

    fn coords(&self, l: &CMat) -> Vec<f64> {
        self.basis
            .iter()
            .map(|b| linalg::hs_inner(b, l).re)
            .collect()
    }

    fn log_matrix(&self, v: &[f64]) -> CMat {
        let mut l = linalg::zeros(self.ce.dim());
        for (b, x) in self.basis.iter().zip(v) {
            l += b * c(*x);
        }
        hermitize(&l)
    }

    /// `exp(L − λ_max(L))`; the shift cancels in the normalization.
    fn exp_shifted(&self, v: &[f64]) -> (Eigh, CMat) {
        let mut le = eigh(&self.log_matrix(v));
        let top = le.max();
        le.values.iter_mut().for_each(|x| *x -= top);
        let a = le.reconstruct_with(f64::exp);
        (le, a)
    }

    fn point(&self, v: &[f64]) -> (Eigh, CMat) {
        let (le, a) = self.exp_shifted(v);
        (le, self.normalize(&a))
    }

    /// `±log Φ` at `A = normalize(exp(Σ v_k B_k))`.
    fn objective(&self, v: &[f64]) -> f64 {
        let (_, a) = self.point(v);
        let phi = self.value(&a);
        if !(phi.is_finite() && phi > 0.0) {
            return f64::INFINITY;
        }
        self.sense * phi.ln()
    }

    fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let (le, a_raw) = self.exp_shifted(v);
        let a = self.normalize(&a_raw);
        let ae = eigh(&a);
        let e = self.exponent;
        let f = self.dress(&ae, e);
        let m = eigh(&(&self.y_half * f * &self.y_half));
        let mmax = m.max().max(1e-300);
        let fsum: f64 = m
            .values
            .iter()
            .map(|x| (x.max(0.0) / mmax).powf(self.p))
            .sum();
        let mp1 = m.reconstruct_with(|x| (x.max(0.0) / mmax).powf(self.p - 1.0));
        let k = &self.y_half * mp1 * &self.y_half;
        let df = linalg::frechet(
            &ae,
            |x| x.max(1e-300).powf(e),
            |x| e * x.max(1e-300).powf(e - 1.0),
            &k,
        );
        let g_norm = self.ce.project_hs(&hermitize(&df)) * c(self.sense / (mmax * fsum));
        let d = self.d();
        let mut g_a = linalg::zeros(a.nrows());
        for (pg, n) in &self.groups {
            let part = pg * &a_raw * pg;
            let t = linalg::trace_re(&part) / d;
            let gp = pg * &g_norm * pg;
            let inner = linalg::hs_inner(&gp, &part).re;
            g_a += gp / c(n * t) - pg * c(inner / (n * t * t * d));
        }
        let g_l = linalg::frechet(&le, f64::exp, f64::exp, &hermitize(&g_a));
        self.coords(&hermitize(&g_l))
    }

    /// `‖T(A) − A‖_F / ‖A‖_F`.
    fn residual(&self, a: &CMat) -> f64 {
        let t = self.fixed_point_map(a);
        fro_norm(&(t - a)) / fro_norm(a)
    }
}

/// Quasi-Newton polish in log coordinates. Returns the best point and the iteration count.
fn polish(dr: &Dressing, v0: Vec<f64>, max_iters: usize) -> (Vec<f64>, usize) {
    let opts = BfgsOptions {
        max_iters,
        grad_tol: 1e-13,
        cost_tol: 0.0,
        ..Default::default()
    };
    let m = optim::bfgs(|v| dr.objective(v), |v| dr.gradient(v), v0, opts);
    (m.x, m.iterations)
}

fn matrix_log_pd(a: &CMat) -> CMat {
    eigh(a).reconstruct_with(|v| v.max(1e-300).ln())
}

struct Solved {
    a: CMat,
    value: f64,
    iterations: usize,
    residual: f64,
    change: f64,
}

fn solve_dressing(dr: &Dressing, a0: &CMat, theta: f64) -> Solved {
    let mut a = dr.normalize(a0);
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    let mut residual = f64::INFINITY;
    let mut rising = 0;
    for _ in 0..MAX_FIXED_POINT_ITERS {
        let t = dr.fixed_point_map(&a);
        let r = fro_norm(&(&t - &a)) / fro_norm(&a);
        iterations += 1;
        if r > residual * (1.0 + 1e-3) {
            rising += 1;
        } else {
            rising = 0;
        }
        residual = r;
        if r < 1e-14 {
            change = theta * r;
            break;
        }
        if rising >= 5 {
            break;
        }
        let next = dr.normalize(&((&a * c(1.0 - theta)) + t * c(theta)));
        change = fro_norm(&(&next - &a)) / fro_norm(&a);
        a = next;
        if change < 1e-15 {
            break;
        }
    }
    if residual > 1e-13 {
        let v0 = dr.coords(&matrix_log_pd(&a));
        let (v, it) = polish(dr, v0, 400);
        iterations += it;
        let (_, ap) = dr.point(&v);
        let better = dr.objective(&v) <= dr.sense * dr.value(&a).ln();
        if better {
            change = fro_norm(&(&ap - &a)) / fro_norm(&a);
            a = ap;
        }
        for _ in 0..50 {
            let t = dr.fixed_point_map(&a);
            let next = dr.normalize(&((&a * c(1.0 - theta)) + t * c(theta)));
            if dr.sense * dr.value(&next).ln() > dr.sense * dr.value(&a).ln() {
                break;
            }
            change = fro_norm(&(&next - &a)) / fro_norm(&a);
            a = next;
            iterations += 1;
            if change < 1e-15 {
                break;
            }
        }
        residual = dr.residual(&a);
    }
    let value = dr.value(&a);
    Solved {
        a,
        value,
        iterations,
        residual,
        change,
    }
}

fn validate_psd(x: &CMat, d: usize) -> Result<Eigh> {
    linalg::check_square(x, d)?;
    linalg::check_finite(x)?;
    linalg::check_hermitian(x)?;
    let e = eigh(x);
    let scale = e.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if e.min() < -1e-12 * scale.max(1.0) {
        return Err(Error::NonPsdInput(e.min()));
    }
    Ok(e)
}

/// Amalgamated norm `‖X‖_{(q,p),N}` of a positive semidefinite `X`.
pub fn amalgamated_norm(query: &NormQuery) -> Result<NormResult> {
    let (q, p, ce) = (query.q, query.p, query.ce);
    check_exponent(q)?;
    check_exponent(p)?;
    let xe = validate_psd(query.x, ce.dim())?;
    let x = hermitize(query.x);
    if xe.max() <= 0.0 {
        return Ok(NormResult::exact(0.0, Form::Fubini));
    }
    if q == p || (q.is_finite() && p.is_finite() && (q - p).abs() < 1e-15) {
        return Ok(NormResult::exact(weighted_norm_ce(ce, &x, q), Form::Fubini));
    }
    if query.variant == Variant::TripleBar && q > p {
        return Err(Error::PreconditionFailed(
            "the triple-bar variant is defined for the infimum form (q < p)".into(),
        ));
    }
    if p.is_infinite() {
        return inf_form_at_infinity(&x, q, ce, query.variant);
    }
    if q.is_infinite() {
        return sup_form_at_infinity(&x, p, ce);
    }
    solve_finite(&x, q, p, ce, query.variant, None)
}

fn initial_dressing(ce: &ConditionalExpectation, x: &CMat, p: f64) -> CMat {
    let y = gamma(ce, x, 1.0 / p);
    let ye = eigh(&y);
    let ymax = ye.max().max(1e-300);
    let yp = ye.reconstruct_with(|v| (v.max(0.0) / ymax).powf(p));
    let a = hermitize(&ce.apply(&gamma(ce, &yp, -1.0)));
    let ae = eigh(&a);
    let floor = 1e-10 * ae.max().max(1e-300);
    ae.reconstruct_with(|v| v.max(floor))
}

fn solve_finite(
    x: &CMat,
    q: f64,
    p: f64,
    ce: &ConditionalExpectation,
    variant: Variant,
    warm: Option<&CMat>,
) -> Result<NormResult> {
    let s = (1.0 / q - 1.0 / p).abs();
    let inf = q < p;
    let exponent = if inf { -s } else { s };
    let dr = Dressing::new(ce, gamma(ce, x, 1.0 / p), exponent, p, variant)?;
    let a0 = match warm {
        Some(a) => a.clone(),
        None => initial_dressing(ce, x, p),
    };
    let theta = (q / p).min(1.0);
    let sol = solve_dressing(&dr, &a0, theta);
    Ok(NormResult {
        value: sol.value,
        optimizer: Some(sol.a),
        iterations: sol.iterations,
        converged: sol.residual < STATIONARITY_TOL && sol.change < CHANGE_TOL,
        stationarity_residual: sol.residual,
        form: if inf { Form::Inf } else { Form::Sup },
        best_effort: false,
    })
}

struct Sharp<'a, 'b> {
    dr: &'b Dressing<'a>,
    x: CMat,
    s: f64,
}

impl Sharp<'_, '_> {
    fn value_at(&self, v: &[f64]) -> f64 {
        let (_, a) = self.dr.point(v);
        let h = eigh(&a).reconstruct_with(|t| t.max(1e-300).powf(-self.s / 2.0));
        let m = &h * &self.x * &h;
        eigh(&m)
            .values
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }
}

impl CostFunction for Sharp<'_, '_> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, v: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.value_at(v))
    }
}

/// `p = ∞`: continuation in `p`, then a direct search on the operator-norm objective.
fn inf_form_at_infinity(
    x: &CMat,
    q: f64,
    ce: &ConditionalExpectation,
    variant: Variant,
) -> Result<NormResult> {
    let mut warm: Option<CMat> = None;
    let mut iterations = 0;
    for &pk in CONTINUATION.iter().filter(|&&pk| pk > 2.0 * q) {
        let r = solve_finite(x, q, pk, ce, variant, warm.as_ref())?;
        iterations += r.iterations;
        warm = r.optimizer;
    }
    let s = 1.0 / q;
    let dr = Dressing::new(ce, x.clone(), -s, 2.0, variant)?;
    let a0 = match warm {
        Some(a) => a,
        None => dr.normalize(&initial_dressing(ce, x, 8.0)),
    };
    let v0 = dr.coords(&matrix_log_pd(&a0));
    let sharp = Sharp {
        dr: &dr,
        x: x.clone(),
        s,
    };
    let start = sharp.value_at(&v0);
    let mut best = (v0.clone(), start);
    let mut converged = false;
    let mut last_gain = f64::INFINITY;
    for scale in [0.1, 0.01, 0.001] {
        let mut simplex = vec![best.0.clone()];
        for k in 0..best.0.len() {
            let mut e_k = vec![0.0; best.0.len()];
            e_k[k] = 1.0;
            simplex.push(best.0.scaled_add(&scale, &e_k));
        }
        let nm = match NelderMead::new(simplex).with_sd_tolerance(1e-15) {
            Ok(nm) => nm,
            Err(_) => break,
        };
        let sharp = Sharp {
            dr: &dr,
            x: x.clone(),
            s,
        };
        if let Ok(res) = Executor::new(sharp, nm)
            .configure(|st| st.max_iters(4000))
            .run()
        {
            let st = res.state();
            iterations += st.get_iter() as usize;
            converged = st.get_iter() < 4000;
            if let Some(v) = st.get_best_param() {
                if st.get_best_cost() <= best.1 {
                    last_gain = (best.1 - st.get_best_cost()) / best.1.max(1e-300);
                    best = (v.clone(), st.get_best_cost());
                } else {
                    last_gain = 0.0;
                }
            }
        }
    }
    let (_, a) = dr.point(&best.0);
    Ok(NormResult {
        value: best.1,
        optimizer: Some(a),
        iterations,
        converged: converged && last_gain < STATIONARITY_TOL,
        stationarity_residual: last_gain,
        form: Form::Inf,
        best_effort: false,
    })
}

/// `q = ∞`: values at `q = 256, 512` extrapolated linearly in `1/q`.
fn sup_form_at_infinity(x: &CMat, p: f64, ce: &ConditionalExpectation) -> Result<NormResult> {
    let r1 = solve_finite(x, 256.0_f64.max(4.0 * p), p, ce, Variant::Exact, None)?;
    let q1 = 256.0_f64.max(4.0 * p);
    let q2 = 2.0 * q1;
    let r2 = solve_finite(x, q2, p, ce, Variant::Exact, r1.optimizer.as_ref())?;
    let value = 2.0 * r2.value - r1.value;
    Ok(NormResult {
        value,
        optimizer: r2.optimizer,
        iterations: r1.iterations + r2.iterations,
        converged: r1.converged && r2.converged,
        stationarity_residual: r1.stationarity_residual.max(r2.stationarity_residual),
        form: Form::Sup,
        best_effort: false,
    })
}

/// Two-sided dressing `A^{e/2} Y B^{e/2}` for Hermitian `X`, optimized alternately.
pub fn amalgamated_norm_two_sided(query: &NormQuery) -> Result<NormResult> {
    let (q, p, ce) = (query.q, query.p, query.ce);
    check_exponent(q)?;
    check_exponent(p)?;
    linalg::check_square(query.x, ce.dim())?;
    linalg::check_hermitian(query.x)?;
    let x = hermitize(query.x);
    if q == p {
        return Ok(NormResult::exact(weighted_norm_ce(ce, &x, q), Form::Fubini));
    }
    if !q.is_finite() || !p.is_finite() {
        return Err(Error::InvalidExponent(
            "two-sided optimization needs finite indices".into(),
        ));
    }
    let s = (1.0 / q - 1.0 / p).abs();
    let inf = q < p;
    let e = if inf { -s } else { s };
    let sense = if inf { 1.0 } else { -1.0 };
    let y = gamma(ce, &x, 1.0 / p);
    let basis = ce.structure.algebra_basis().basis;
    let d = ce.dim() as f64;
    let build = |v: &[f64]| {
        let mut l = linalg::zeros(ce.dim());
        for (b, t) in basis.iter().zip(v) {
            l += b * c(*t);
        }
        let a = eigh(&hermitize(&l)).reconstruct_with(f64::exp);
        let t = linalg::trace_re(&a) / d;
        eigh(&(a / c(t))).reconstruct_with(|v| v.powf(e / 2.0))
    };
    let value = |va: &[f64], vb: &[f64]| {
        let z = build(va) * &y * build(vb);
        lp_of(&linalg::singular_values(&z), p)
    };
    let m = basis.len();
    let mut va = vec![0.0; m];
    let mut vb = vec![0.0; m];
    let mut iterations = 0;
    let mut current = value(&va, &vb);
    let mut change = f64::INFINITY;
    for _ in 0..30 {
        for side in 0..2 {
            let fixed = if side == 0 { vb.clone() } else { va.clone() };
            let f = |v: &[f64]| {
                let val = if side == 0 {
                    value(v, &fixed)
                } else {
                    value(&fixed, v)
                };
                sense * val.max(1e-300).ln()
            };
            let start = if side == 0 { va.clone() } else { vb.clone() };
            let m = optim::bfgs_numeric(&f, start, BfgsOptions::default());
            let (v, it) = (m.x, m.iterations);
            iterations += it;
            if side == 0 {
                va = v;
            } else {
                vb = v;
            }
        }
        let next = value(&va, &vb);
        change = (next - current).abs() / current.max(1e-300);
        current = next;
        if change < 1e-12 {
            break;
        }
    }
    Ok(NormResult {
        value: current,
        optimizer: None,
        iterations,
        converged: change < 1e-10,
        stationarity_residual: change,
        form: if inf { Form::Inf } else { Form::Sup },
        best_effort: true,
    })
}

/// `(max_i d_{H_i})^{1/p − 1/q}`, the norm of the identity from `(p,q)` to `(q,q)`.
pub fn identity_norm_bound(structure: &BlockStructure, p: f64, q: f64) -> Result<f64> {
    check_exponent(p)?;
    check_exponent(q)?;
    if p > q {
        return Err(Error::InvalidExponent(format!("p = {p} exceeds q = {q}")));
    }
    let inv_q = if q.is_infinite() { 0.0 } else { 1.0 / q };
    Ok((structure.max_d_h() as f64).powf(1.0 / p - inv_q))
}

/// One entry of a fixed-ancilla CB-norm profile.
#[derive(Clone, Debug)]
pub struct CbNormPoint {
    pub k: usize,
    pub value: f64,
    pub witness: CMat,
    pub evaluations: usize,
    pub converged: bool,
}

/// `(id_k ⊗ Λ)(Y)` with block index `a·d + m`.
pub fn amplify(map: &Superop, k: usize, y: &CMat) -> CMat {
    let d = map.dim;
    let mut out = CMat::zeros(k * d, k * d);
    for a in 0..k {
        for b in 0..k {
            let blk = y.view((a * d, b * d), (d, d)).into_owned();
            out.view_mut((a * d, b * d), (d, d))
                .copy_from(&map.apply(&blk));
        }
    }
    out
}

struct Ancilla {
    ce: ConditionalExpectation,
    q: f64,
    p: f64,
    k: usize,
}

impl Ancilla {
    fn new(sigma: &CMat, q: f64, p: f64, k: usize) -> Result<Self> {
        let d = sigma.nrows();
        let s = BlockStructure::factor(k, d, sigma.clone())?;
        Ok(Ancilla {
            ce: ConditionalExpectation::from_structure(s),
            q,
            p,
            k,
        })
    }

    fn ratio(&self, map: &Superop, y: &CMat) -> Result<(f64, bool)> {
        let den = weighted_norm_ce(&self.ce, y, self.q);
        if den <= 0.0 {
            return Ok((0.0, true));
        }
        let out = hermitize(&amplify(map, self.k, y));
        let r = amalgamated_norm(&NormQuery::new(&out, self.q, self.p, &self.ce))?;
        Ok((r.value / den, r.converged || r.form == Form::Fubini))
    }
}

fn rank_one(v: &linalg::CVec) -> CMat {
    hermitize(&(v * v.adjoint()))
}

/// Lower bound on the weighted CB norm at ancilla dimension `k`:
/// the best ratio over sampled and locally improved positive `Y`.
pub fn cb_norm_fixed_ancilla(
    map: &Superop,
    q: f64,
    p: f64,
    sigma: &CMat,
    k: usize,
    seed: u64,
    seeds: &[CMat],
) -> Result<CbNormPoint> {
    if k == 0 {
        return Err(Error::InvalidConstant(
            "ancilla dimension must be positive".into(),
        ));
    }
    checked_sigma(sigma)?;
    let d = map.dim;
    let n = k * d;
    let anc = Ancilla::new(sigma, q, p, k)?;
    let mut candidates: Vec<CMat> = seeds.to_vec();
    let se = eigh(sigma);
    for j in 0..d {
        let v = se.vectors.column(j).into_owned();
        candidates.push(kron(&identity(k), &rank_one(&v)));
        let mut e0 = CMat::zeros(k, k);
        e0[(0, 0)] = c(1.0);
        candidates.push(kron(&e0, &rank_one(&v)));
    }
    let mut rng = random::rng(seed);
    for r in 0..12 {
        let rank = 1 + r % n;
        candidates.push(random::psd_of_rank(n, rank, &mut rng));
    }
    let scored: Vec<Result<(f64, bool)>> =
        par::map_indexed(candidates.len(), |i| anc.ratio(map, &candidates[i]));
    let mut best = (0.0f64, candidates[0].clone(), true);
    let mut evaluations = candidates.len();
    for (cand, s) in candidates.iter().zip(scored) {
        let (v, ok) = s?;
        if v > best.0 {
            best = (v, cand.clone(), ok);
        }
    }
    for step in [0.3, 0.1, 0.03] {
        let trials: Vec<CMat> = (0..8)
            .map(|_| {
                let g = random::psd_of_rank(n, 1, &mut rng);
                let g = &g / c(linalg::trace_re(&g));
                let y = &best.1 / c(linalg::trace_re(&best.1));
                hermitize(&(y * c(1.0 - step) + g * c(step)))
            })
            .collect();
        let scored: Vec<Result<(f64, bool)>> =
            par::map_indexed(trials.len(), |i| anc.ratio(map, &trials[i]));
        evaluations += trials.len();
        for (cand, s) in trials.into_iter().zip(scored) {
            let (v, ok) = s?;
            if v > best.0 {
                best = (v, cand, ok);
            }
        }
    }
    Ok(CbNormPoint {
        k,
        value: best.0,
        witness: best.1,
        evaluations,
        converged: best.2,
    })
}

/// Profile over increasing `k`; witnesses at `k` are carried to `k'` as `I_{k'/k} ⊗ Y`.
pub fn cb_norm_profile(
    map: &Superop,
    q: f64,
    p: f64,
    sigma: &CMat,
    ks: &[usize],
    seed: u64,
) -> Result<Vec<CbNormPoint>> {
    let mut out: Vec<CbNormPoint> = Vec::with_capacity(ks.len());
    for (i, &k) in ks.iter().enumerate() {
        let seeds: Vec<CMat> = out
            .iter()
            .filter(|pt| k % pt.k == 0)
            .map(|pt| kron(&identity(k / pt.k), &pt.witness))
            .collect();
        out.push(cb_norm_fixed_ancilla(
            map,
            q,
            p,
            sigma,
            k,
            seed.wrapping_add(i as u64),
            &seeds,
        )?);
    }
    Ok(out)
}

//! Benchmark problems: non-negative PCA, a rotated quadratic and a separable
//! quartic, plus power iteration for spectral norms.

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::objective::{norm, CompositeObjective, NonsmoothOracle, RealVector, SmoothOracle};
use crate::prox::{NonNegative, NonNegativeBall, ZeroRegularizer};
use crate::rng;

/// `f_i(x) = ½ w_i ‖x‖²`, so `f = ½ mean(w) ‖x‖²`. Small hand-checkable test
/// objective with an arbitrary number of components.
#[derive(Debug, Clone)]
pub struct IsotropicQuadratic {
    dim: usize,
    weights: Vec<f64>,
    mean: f64,
}

impl IsotropicQuadratic {
    pub fn new(dim: usize, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || weights.is_empty() {
            return Err(Error::InvalidInput("dimension and weights must be nonempty".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidInput("weights must be finite".into()));
        }
        let mean = weights.iter().sum::<f64>() / weights.len() as f64;
        if !(mean > 0.0) {
            return Err(Error::InvalidInput("mean weight must be positive".into()));
        }
        Ok(IsotropicQuadratic { dim, weights, mean })
    }
}

impl SmoothOracle for IsotropicQuadratic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: ArrayView1<f64>) -> f64 {
        0.5 * self.mean * x.dot(&x)
    }

    fn gradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        &x * self.mean
    }

    fn n_components(&self) -> usize {
        self.weights.len()
    }

    fn component_gradient(&self, i: usize, x: ArrayView1<f64>) -> Array1<f64> {
        &x * self.weights[i]
    }

    fn lipschitz(&self) -> f64 {
        self.mean
    }
}

/// Feasible set used with the NN-PCA objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NnpcaConstraint {
    /// `{x ≥ 0}`. The objective is unbounded below on this set whenever
    /// `λ_max(Σ z_i z_iᵀ) > 2γ`; kept for experimentation only.
    Orthant,
    /// `{x ≥ 0, ‖x‖ ≤ radius}`.
    OrthantBall { radius: f64 },
}

impl Default for NnpcaConstraint {
    fn default() -> Self {
        NnpcaConstraint::OrthantBall { radius: 1.0 }
    }
}

impl NnpcaConstraint {
    pub fn regularizer(&self) -> Result<Arc<dyn NonsmoothOracle>> {
        Ok(match *self {
            NnpcaConstraint::Orthant => Arc::new(NonNegative),
            NnpcaConstraint::OrthantBall { radius } => Arc::new(NonNegativeBall::new(radius)?),
        })
    }
}

/// Unit-norm samples `z_i` (rows of `samples`) and the ridge weight `γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct NnpcaInstance {
    samples: Array2<f64>,
    gamma: f64,
    lipschitz: f64,
}

const UNIT_TOL: f64 = 1e-12;

impl NnpcaInstance {
    /// Validates that every row has unit norm and computes `L`.
    pub fn from_samples(samples: Array2<f64>, gamma: f64) -> Result<Self> {
        let (n, d) = samples.dim();
        if n == 0 || d == 0 {
            return Err(Error::InvalidInput("sample matrix must be nonempty".into()));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidInput(format!("gamma must be nonnegative, got {gamma}")));
        }
        for (i, row) in samples.axis_iter(Axis(0)).enumerate() {
            let r = norm(&row);
            if !((r - 1.0).abs() <= UNIT_TOL) {
                return Err(Error::InvalidInput(format!("sample {i} has norm {r}, expected 1")));
            }
        }
        let lipschitz = nnpca_lipschitz(samples.view(), gamma)?;
        Ok(NnpcaInstance { samples, gamma, lipschitz })
    }

    pub fn n(&self) -> usize {
        self.samples.nrows()
    }

    pub fn d(&self) -> usize {
        self.samples.ncols()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn samples(&self) -> ArrayView2<'_, f64> {
        self.samples.view()
    }

    pub fn objective(&self, constraint: NnpcaConstraint) -> Result<CompositeObjective> {
        Ok(CompositeObjective::new(Arc::new(NnpcaSmooth { inst: self.clone() }), constraint.regularizer()?))
    }

    /// Header `n d γ`, then `n` rows of `d` values, all with 17 significant digits.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {} {:.16e}", self.n(), self.d(), self.gamma)?;
        for row in self.samples.axis_iter(Axis(0)) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(s) if s.trim().is_empty() => None,
            other => Some((i + 1, other)),
        });
        let (ln, header) = lines.next().ok_or_else(|| Error::Config { line: 1, message: "missing header".into() })?;
        let header = header?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Config { line: ln, message: "header must be `n d gamma`".into() });
        }
        let bad = |m: &str| Error::Config { line: ln, message: m.to_string() };
        let n: usize = fields[0].parse().map_err(|_| bad("invalid n"))?;
        let d: usize = fields[1].parse().map_err(|_| bad("invalid d"))?;
        let gamma: f64 = fields[2].parse().map_err(|_| bad("invalid gamma"))?;
        let mut data = Vec::with_capacity(n * d);
        for row in 0..n {
            let (ln, line) = lines.next().ok_or_else(|| Error::Config {
                line: ln + row + 1,
                message: format!("expected {n} sample rows, found {row}"),
            })?;
            let line = line?;
            let before = data.len();
            for tok in line.split_whitespace() {
                data.push(
                    tok.parse::<f64>()
                        .map_err(|_| Error::Config { line: ln, message: format!("invalid number `{tok}`") })?,
                );
            }
            if data.len() - before != d {
                return Err(Error::Config {
                    line: ln,
                    message: format!("expected {d} values, found {}", data.len() - before),
                });
            }
        }
        if let Some((ln, _)) = lines.next() {
            return Err(Error::Config { line: ln, message: "trailing data".into() });
        }
        let samples = Array2::from_shape_vec((n, d), data).map_err(|e| Error::InvalidInput(e.to_string()))?;
        Self::from_samples(samples, gamma)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_text(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_text(std::io::BufReader::new(f))
    }
}

/// `f(x) = −½ ‖Zx‖² + γ‖x‖²` with components
/// `f_i(x) = −(n/2)(z_iᵀx)² + γ‖x‖²` so that `f = (1/n) Σ f_i`.
#[derive(Debug, Clone)]
pub struct NnpcaSmooth {
    inst: NnpcaInstance,
}

impl NnpcaSmooth {
    pub fn instance(&self) -> &NnpcaInstance {
        &self.inst
    }
}

impl SmoothOracle for NnpcaSmooth {
    fn dim(&self) -> usize {
        self.inst.d()
    }

    fn value(&self, x: ArrayView1<f64>) -> f64 {
        let zx = self.inst.samples.dot(&x);
        -0.5 * zx.dot(&zx) + self.inst.gamma * x.dot(&x)
    }

    fn gradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let zx = self.inst.samples.dot(&x);
        let mut g = self.inst.samples.t().dot(&zx);
        g *= -1.0;
        g.scaled_add(2.0 * self.inst.gamma, &x);
        g
    }

    fn n_components(&self) -> usize {
        self.inst.n()
    }

    fn component_gradient(&self, i: usize, x: ArrayView1<f64>) -> Array1<f64> {
        let z = self.inst.samples.row(i);
        let s = -(self.inst.n() as f64) * z.dot(&x);
        let mut g = &z * s;
        g.scaled_add(2.0 * self.inst.gamma, &x);
        g
    }

    fn lipschitz(&self) -> f64 {
        self.inst.lipschitz
    }
}

/// Random NN-PCA instance constrained to the nonnegative unit ball.
pub fn generate_nnpca(n: usize, d: usize, gamma: f64, seed: u64) -> Result<(NnpcaInstance, CompositeObjective)> {
    generate_nnpca_with(n, d, gamma, seed, NnpcaConstraint::default())
}

/// Samples are standard normal rows normalized to unit length.
pub fn generate_nnpca_with(
    n: usize,
    d: usize,
    gamma: f64,
    seed: u64,
    constraint: NnpcaConstraint,
) -> Result<(NnpcaInstance, CompositeObjective)> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput("n and d must be at least 1".into()));
    }
    let mut g = rng::seeded(seed, rng::STREAM_SAMPLER);
    let mut samples = Array2::zeros((n, d));
    for mut row in samples.axis_iter_mut(Axis(0)) {
        row.assign(&rng::unit_vector(&mut g, d));
    }
    let inst = NnpcaInstance::from_samples(samples, gamma)?;
    let obj = inst.objective(constraint)?;
    Ok((inst, obj))
}

/// Seeded random point on the unit sphere with nonnegative entries.
pub fn nonneg_unit_start(d: usize, seed: u64) -> Result<RealVector> {
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    let mut g = rng::seeded(seed, rng::STREAM_SAMPLER);
    RealVector::from_array(rng::unit_vector(&mut g, d).mapv(f64::abs))
}

/// `λ_max(Σ z_i z_iᵀ) + 2γ`. The power-iteration estimate is a Rayleigh
/// quotient, hence a lower bound on `λ_max`; the final residual norm is added
/// so the returned value is an upper bound.
pub fn nnpca_lipschitz(samples: ArrayView2<f64>, gamma: f64) -> Result<f64> {
    if samples.nrows() == 0 || samples.ncols() == 0 {
        return Err(Error::InvalidInput("sample matrix must be nonempty".into()));
    }
    let apply = |x: ArrayView1<f64>| samples.t().dot(&samples.dot(&x));
    let (lambda, residual) = power_iteration_residual(&apply, samples.ncols(), 1e-12, 0)?;
    Ok(lambda + residual + 2.0 * gamma)
}

const POWER_MAX_STEPS: usize = 10_000;

/// Largest eigenvalue of a symmetric positive semidefinite operator. Stops once
/// `‖Av − λv‖ ≤ tol·λ` for the unit iterate `v` and `λ = vᵀAv`.
pub fn power_iteration(apply: &dyn Fn(ArrayView1<f64>) -> Array1<f64>, dim: usize, tol: f64, seed: u64) -> Result<f64> {
    power_iteration_residual(apply, dim, tol, seed).map(|(l, _)| l)
}

fn power_iteration_residual(
    apply: &dyn Fn(ArrayView1<f64>) -> Array1<f64>,
    dim: usize,
    tol: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if dim == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tol must be positive, got {tol}")));
    }
    let mut g = rng::seeded(seed, rng::STREAM_SAMPLER);
    let mut v = rng::unit_vector(&mut g, dim);
    for _ in 0..POWER_MAX_STEPS {
        let av = apply(v.view());
        let lambda = v.dot(&av);
        let av_norm = norm(&av.view());
        if av_norm == 0.0 {
            return Ok((0.0, 0.0));
        }
        if !av_norm.is_finite() {
            return Err(Error::Numerical("power iteration overflowed".into()));
        }
        let mut r = av.clone();
        r.scaled_add(-lambda, &v);
        let res = norm(&r.view());
        if res <= tol * lambda.abs() {
            return Ok((lambda, res));
        }
        v = av / av_norm;
    }
    Err(Error::Numerical(format!("power iteration did not converge within {POWER_MAX_STEPS} steps")))
}

/// `f(x) = ½ xᵀAx` with `A = Qᵀ diag(eigs) Q` for a seeded Haar-random
/// orthogonal `Q`. Component `i` is `f_i = (n/2)·eig_i·(q_iᵀx)²` with `q_i` the
/// `i`-th row of `Q` and `n = dim`.
#[derive(Debug, Clone)]
pub struct RotatedQuadratic {
    q: Array2<f64>,
    a: Array2<f64>,
    eigs: Vec<f64>,
}

impl RotatedQuadratic {
    pub fn new(eigs: &[f64], seed: u64) -> Result<Self> {
        if eigs.is_empty() {
            return Err(Error::InvalidInput("at least one eigenvalue is required".into()));
        }
        if eigs.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidInput("eigenvalues must be positive and finite".into()));
        }
        let d = eigs.len();
        let mut g = rng::seeded(seed, rng::STREAM_SAMPLER);
        let raw = rng::standard_normal_vector(&mut g, d * d);
        let m = DMatrix::from_row_slice(d, d, raw.as_slice().expect("contiguous"));
        let qr = m.qr();
        let (qm, r) = (qr.q(), qr.r());
        let mut q = Array2::zeros((d, d));
        for i in 0..d {
            // Sign fix on R's diagonal makes the distribution Haar.
            let s = if r[(i, i)] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..d {
                q[(i, j)] = s * qm[(j, i)];
            }
        }
        let scaled = Array2::from_shape_fn((d, d), |(i, j)| eigs[i] * q[(i, j)]);
        let a = q.t().dot(&scaled);
        Ok(RotatedQuadratic { q, a, eigs: eigs.to_vec() })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigs
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.a.view()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigs.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

impl SmoothOracle for RotatedQuadratic {
    fn dim(&self) -> usize {
        self.eigs.len()
    }

    fn value(&self, x: ArrayView1<f64>) -> f64 {
        0.5 * x.dot(&self.a.dot(&x))
    }

    fn gradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.a.dot(&x)
    }

    fn n_components(&self) -> usize {
        self.eigs.len()
    }

    fn component_gradient(&self, i: usize, x: ArrayView1<f64>) -> Array1<f64> {
        let qi = self.q.row(i);
        let s = self.eigs.len() as f64 * self.eigs[i] * qi.dot(&x);
        &qi * s
    }

    fn lipschitz(&self) -> f64 {
        self.eigs.iter().cloned().fold(0.0, f64::max)
    }
}

/// Rotated quadratic with `g` the indicator of `{x ≥ 0}`. `F* = 0` at `x* = 0`.
pub fn quadratic_problem(eigs: &[f64], seed: u64) -> Result<CompositeObjective> {
    quadratic_problem_with(eigs, seed, Arc::new(NonNegative))
}

pub fn quadratic_problem_with(
    eigs: &[f64],
    seed: u64,
    nonsmooth: Arc<dyn NonsmoothOracle>,
) -> Result<CompositeObjective> {
    Ok(CompositeObjective::new(Arc::new(RotatedQuadratic::new(eigs, seed)?), nonsmooth))
}

/// `f(x) = Σ x_i⁴` split into `f_i = d·x_i⁴`. The Hessian is `diag(12 x_i²)`,
/// so `L = 12R²` is valid on the box `|x_i| ≤ R`.
#[derive(Debug, Clone)]
pub struct Quartic {
    dim: usize,
    radius: f64,
}

impl Quartic {
    pub fn new(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
        }
        Ok(Quartic { dim, radius })
    }
}

impl SmoothOracle for Quartic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: ArrayView1<f64>) -> f64 {
        x.iter().map(|v| v.powi(4)).sum()
    }

    fn gradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        x.mapv(|v| 4.0 * v.powi(3))
    }

    fn n_components(&self) -> usize {
        self.dim
    }

    fn component_gradient(&self, i: usize, x: ArrayView1<f64>) -> Array1<f64> {
        let mut g = Array1::zeros(self.dim);
        g[i] = 4.0 * self.dim as f64 * x[i].powi(3);
        g
    }

    fn lipschitz(&self) -> f64 {
        12.0 * self.radius * self.radius
    }
}

/// Quartic with `g = 0` and start radius 1.
pub fn quartic_problem(d: usize) -> Result<CompositeObjective> {
    quartic_problem_with_radius(d, 1.0)
}

pub fn quartic_problem_with_radius(d: usize, radius: f64) -> Result<CompositeObjective> {
    Ok(CompositeObjective::new(Arc::new(Quartic::new(d, radius)?), Arc::new(ZeroRegularizer)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{finite_diff_gradient, mean_gradient_check};
    use ndarray::array;

    #[test]
    fn nnpca_samples_are_unit() {
        let (inst, obj) = generate_nnpca(4, 3, 1e-3, 7).unwrap();
        for row in inst.samples().axis_iter(Axis(0)) {
            assert!((norm(&row) - 1.0).abs() <= 1e-12);
        }
        let x = array![0.3, 0.1, 0.5];
        assert!(mean_gradient_check(&obj, x.view()) <= 1e-12);
    }

    #[test]
    fn lipschitz_examples() {
        let e1e1 = array![[1.0, 0.0], [1.0, 0.0]];
        assert_eq!(nnpca_lipschitz(e1e1.view(), 0.0).unwrap(), 2.0);
        let id = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(nnpca_lipschitz(id.view(), 0.0).unwrap(), 1.0);
        let e1 = array![[1.0, 0.0]];
        assert_eq!(nnpca_lipschitz(e1.view(), 0.5).unwrap(), 2.0);
    }

    #[test]
    fn power_iteration_examples() {
        let diag = |d: Vec<f64>| move |x: ArrayView1<f64>| &x * &Array1::from(d.clone());
        let f = diag(vec![1.0, 5.0]);
        assert!((power_iteration(&f, 2, 1e-10, 3).unwrap() - 5.0).abs() <= 1e-9);
        let f = diag(vec![1.0; 3]);
        assert_eq!(power_iteration(&f, 3, 1e-10, 3).unwrap(), 1.0);
        let f = diag(vec![2.0; 2]);
        assert_eq!(power_iteration(&f, 2, 1e-10, 3).unwrap(), 2.0);
        let zero = |x: ArrayView1<f64>| Array1::zeros(x.len());
        assert_eq!(power_iteration(&zero, 4, 1e-10, 3).unwrap(), 0.0);
    }

    #[test]
    fn quadratic_examples() {
        let obj = quadratic_problem_with(&[1.0], 0, Arc::new(ZeroRegularizer)).unwrap();
        assert_eq!(obj.eval(array![0.0].view()), 0.0);
        let obj = quadratic_problem(&[1.0, 10.0], 5).unwrap();
        assert_eq!(obj.lipschitz(), 10.0);
        let x = array![0.4, 0.7];
        assert!(mean_gradient_check(&obj, x.view()) <= 1e-12);
        let fd = finite_diff_gradient(&obj, x.view(), 1e-6);
        let g = obj.smooth().gradient(x.view());
        assert!((&fd - &g).iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn quartic_examples() {
        let obj = quartic_problem(1).unwrap();
        assert_eq!(obj.eval(array![2.0].view()), 16.0);
        assert_eq!(obj.smooth().gradient(array![2.0].view())[0], 32.0);
        let z = obj.smooth().gradient(array![0.0].view());
        assert_eq!(z[0], 0.0);
        let obj = quartic_problem(3).unwrap();
        assert_eq!(mean_gradient_check(&obj, array![0.5, -1.0, 0.25].view()), 0.0);
    }

    #[test]
    fn instance_text_roundtrip() {
        let (inst, _) = generate_nnpca(5, 4, 1e-3, 11).unwrap();
        let mut buf = Vec::new();
        inst.write_text(&mut buf).unwrap();
        let back = NnpcaInstance::read_text(buf.as_slice()).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn instance_text_errors_carry_lines() {
        let text = "2 2 0.0\n1 0\n0 1 5\n";
        match NnpcaInstance::read_text(text.as_bytes()) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}

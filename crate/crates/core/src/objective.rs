//! Composite objectives `F = f + g` and the oracle contracts the solvers rely on.
//!
//! `f` is smooth with an `L`-Lipschitz gradient and is written as a finite sum
//! `f = (1/n) Σ f_i`; `g` is possibly nonsmooth (and possibly an indicator, in
//! which case it takes the value `+∞` outside its domain) and is accessed only
//! through its value and its proximal map.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};

/// A dense vector of finite 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct RealVector(Array1<f64>);

impl RealVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        Self::from_array(Array1::from(entries))
    }

    pub fn from_array(entries: Array1<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidInput("vector must have at least one entry".into()));
        }
        if let Some(i) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("entry {i} is not finite ({})", entries[i])));
        }
        Ok(RealVector(entries))
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::from_array(Array1::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array1<f64> {
        self.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.to_vec()
    }
}

impl Deref for RealVector {
    type Target = Array1<f64>;

    fn deref(&self) -> &Array1<f64> {
        &self.0
    }
}

/// Smooth part `f = (1/n) Σ_i f_i`.
pub trait SmoothOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: ArrayView1<f64>) -> f64;

    fn gradient(&self, x: ArrayView1<f64>) -> Array1<f64>;

    /// Number of finite-sum components `n`.
    fn n_components(&self) -> usize;

    /// Gradient of the `i`-th component, `i` in `0..n`. Callers validate the index.
    fn component_gradient(&self, i: usize, x: ArrayView1<f64>) -> Array1<f64>;

    /// Lipschitz constant `L` of the full gradient.
    fn lipschitz(&self) -> f64;
}

/// Classification used by diagnostics that need closed-form subdifferentials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegularizerKind {
    Zero,
    NonNegative,
    NonNegativeBall { radius: f64 },
    L1 { lambda: f64 },
    Other,
}

/// Nonsmooth part `g`, accessed through its value and proximal map.
pub trait NonsmoothOracle: Send + Sync {
    /// `g(x)`, or `f64::INFINITY` outside the domain.
    fn value(&self, x: ArrayView1<f64>) -> f64;

    /// `argmin_z g(z) + ‖z − y‖² / (2η)`. Always returns a point where `g` is finite.
    fn prox(&self, y: ArrayView1<f64>, eta: f64) -> Array1<f64>;

    fn is_convex(&self) -> bool;

    fn kind(&self) -> RegularizerKind {
        RegularizerKind::Other
    }

    /// Turns a perturbation direction at a feasible point into one along which
    /// small steps stay feasible (or are at least not undone by
    /// [`restore_feasibility`](Self::restore_feasibility)).
    fn feasible_direction(&self, _at: ArrayView1<f64>, dir: Array1<f64>) -> Array1<f64> {
        dir
    }

    /// Maps a point back into the domain of `g`.
    fn restore_feasibility(&self, x: Array1<f64>) -> Array1<f64> {
        x
    }
}

/// `F = f + g` over `ℝ^dim`.
#[derive(Clone)]
pub struct CompositeObjective {
    smooth: Arc<dyn SmoothOracle>,
    nonsmooth: Arc<dyn NonsmoothOracle>,
}

impl fmt::Debug for CompositeObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CompositeObjective")
            .field("dim", &self.dim())
            .field("n_components", &self.smooth.n_components())
            .field("lipschitz", &self.smooth.lipschitz())
            .field("regularizer", &self.nonsmooth.kind())
            .finish()
    }
}

impl CompositeObjective {
    pub fn new(smooth: Arc<dyn SmoothOracle>, nonsmooth: Arc<dyn NonsmoothOracle>) -> Self {
        CompositeObjective { smooth, nonsmooth }
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    pub fn smooth(&self) -> &dyn SmoothOracle {
        self.smooth.as_ref()
    }

    pub fn nonsmooth(&self) -> &dyn NonsmoothOracle {
        self.nonsmooth.as_ref()
    }

    pub fn lipschitz(&self) -> f64 {
        self.smooth.lipschitz()
    }

    pub fn n_components(&self) -> usize {
        self.smooth.n_components()
    }

    /// Same objective with a different nonsmooth part.
    pub fn with_nonsmooth(&self, nonsmooth: Arc<dyn NonsmoothOracle>) -> Self {
        CompositeObjective { smooth: Arc::clone(&self.smooth), nonsmooth }
    }

    /// `F(x)` without a dimension check. Returns `+∞` exactly when `g(x) = +∞`.
    pub fn eval(&self, x: ArrayView1<f64>) -> f64 {
        let g = self.nonsmooth.value(x);
        if g == f64::INFINITY {
            return f64::INFINITY;
        }
        self.smooth.value(x) + g
    }

    pub fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got });
        }
        Ok(())
    }
}

/// `F(x) = f(x) + g(x)`, propagating `+∞` for infeasible points.
pub fn eval_objective(obj: &CompositeObjective, x: &RealVector) -> Result<f64> {
    obj.check_dim(x.dim())?;
    Ok(obj.eval(x.view()))
}

/// `‖(1/n) Σ_i ∇f_i(x) − ∇f(x)‖∞`.
pub fn mean_gradient_check(obj: &CompositeObjective, x: ArrayView1<f64>) -> f64 {
    let smooth = obj.smooth();
    let n = smooth.n_components();
    let mut sum = Array1::<f64>::zeros(x.len());
    for i in 0..n {
        sum += &smooth.component_gradient(i, x);
    }
    sum /= n as f64;
    let full = smooth.gradient(x);
    sum.iter().zip(full.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Central differences of `f` with step `h` along each coordinate.
pub fn finite_diff_gradient(obj: &CompositeObjective, x: ArrayView1<f64>, h: f64) -> Array1<f64> {
    finite_diff(|z| obj.smooth().value(z), x, h)
}

pub(crate) fn finite_diff(f: impl Fn(ArrayView1<f64>) -> f64, x: ArrayView1<f64>, h: f64) -> Array1<f64> {
    let mut probe = x.to_owned();
    Array1::from_shape_fn(x.len(), |i| {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(probe.view());
        probe[i] = orig - h;
        let down = f(probe.view());
        probe[i] = orig;
        (up - down) / (2.0 * h)
    })
}

/// `‖∇f(x) − ∇f(y)‖ / ‖x − y‖`; compare against `L`.
pub fn gradient_lipschitz_ratio(smooth: &dyn SmoothOracle, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    let dx = norm(&(&x - &y).view());
    if dx == 0.0 {
        return 0.0;
    }
    let dg = smooth.gradient(x) - smooth.gradient(y);
    norm(&dg.view()) / dx
}

pub(crate) fn norm(x: &ArrayView1<f64>) -> f64 {
    x.dot(x).sqrt()
}

pub(crate) fn dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

type ValueFn = Box<dyn Fn(ArrayView1<f64>) -> f64 + Send + Sync>;
type GradFn = Box<dyn Fn(ArrayView1<f64>) -> Array1<f64> + Send + Sync>;

/// A smooth oracle assembled from closures. Without explicit components it is
/// treated as a single-component sum.
pub struct ClosureSmooth {
    dim: usize,
    lipschitz: f64,
    value: ValueFn,
    gradient: GradFn,
    components: Vec<GradFn>,
}

impl ClosureSmooth {
    pub fn new(
        dim: usize,
        lipschitz: f64,
        value: impl Fn(ArrayView1<f64>) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(ArrayView1<f64>) -> Array1<f64> + Send + Sync + 'static,
    ) -> Self {
        ClosureSmooth { dim, lipschitz, value: Box::new(value), gradient: Box::new(gradient), components: Vec::new() }
    }

    pub fn with_component(mut self, grad: impl Fn(ArrayView1<f64>) -> Array1<f64> + Send + Sync + 'static) -> Self {
        self.components.push(Box::new(grad));
        self
    }
}

impl SmoothOracle for ClosureSmooth {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: ArrayView1<f64>) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        (self.gradient)(x)
    }

    fn n_components(&self) -> usize {
        self.components.len().max(1)
    }

    fn component_gradient(&self, i: usize, x: ArrayView1<f64>) -> Array1<f64> {
        if self.components.is_empty() {
            (self.gradient)(x)
        } else {
            (self.components[i])(x)
        }
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::IsotropicQuadratic;
    use crate::prox::{NonNegative, ZeroRegularizer};
    use ndarray::array;

    fn half_square(g: Arc<dyn NonsmoothOracle>, dim: usize) -> CompositeObjective {
        CompositeObjective::new(Arc::new(IsotropicQuadratic::new(dim, vec![1.0]).unwrap()), g)
    }

    #[test]
    fn real_vector_rejects_non_finite() {
        assert!(RealVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(RealVector::new(vec![f64::INFINITY]).is_err());
        assert!(RealVector::new(vec![]).is_err());
        assert_eq!(RealVector::new(vec![1.0, 2.0]).unwrap().dim(), 2);
    }

    #[test]
    fn eval_objective_examples() {
        let obj = half_square(Arc::new(ZeroRegularizer), 1);
        let x = RealVector::new(vec![2.0]).unwrap();
        assert_eq!(eval_objective(&obj, &x).unwrap(), 2.0);

        let zero_f = ClosureSmooth::new(1, 0.0, |_| 0.0, |x| Array1::zeros(x.len()));
        let ind = CompositeObjective::new(Arc::new(zero_f), Arc::new(NonNegative));
        let x = RealVector::new(vec![-1.0]).unwrap();
        assert_eq!(eval_objective(&ind, &x).unwrap(), f64::INFINITY);

        let obj = half_square(Arc::new(NonNegative), 2);
        let x = RealVector::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(eval_objective(&obj, &x).unwrap(), 1.0);
    }

    #[test]
    fn eval_objective_dimension_mismatch() {
        let obj = half_square(Arc::new(ZeroRegularizer), 2);
        let x = RealVector::new(vec![1.0]).unwrap();
        assert_eq!(eval_objective(&obj, &x), Err(Error::DimensionMismatch { expected: 2, got: 1 }));
    }

    #[test]
    fn mean_gradient_single_component_is_exact() {
        let obj = half_square(Arc::new(ZeroRegularizer), 3);
        assert_eq!(mean_gradient_check(&obj, array![0.3, -1.2, 7.0].view()), 0.0);
    }

    #[test]
    fn mean_gradient_symmetric_split() {
        // ½x² written as the mean of two copies of ½x².
        let f = IsotropicQuadratic::new(1, vec![1.0, 1.0]).unwrap();
        let obj = CompositeObjective::new(Arc::new(f), Arc::new(ZeroRegularizer));
        assert!(mean_gradient_check(&obj, array![2.5].view()) <= 1e-15);
    }

    #[test]
    fn finite_differences_on_simple_functions() {
        let obj = half_square(Arc::new(ZeroRegularizer), 1);
        let g = finite_diff_gradient(&obj, array![2.0].view(), 1e-6);
        assert!((g[0] - 2.0).abs() <= 1e-6);

        let cube = ClosureSmooth::new(1, 6.0, |x| x[0].powi(3), |x| x.mapv(|v| 3.0 * v * v));
        let obj = CompositeObjective::new(Arc::new(cube), Arc::new(ZeroRegularizer));
        let g = finite_diff_gradient(&obj, array![1.0].view(), 1e-5);
        assert!((g[0] - 3.0).abs() <= 1e-8);
    }
}

use apgnc_core::problems::*;
use apgnc_core::prox::prox_gradient_step;
use apgnc_core::CompositeObjective;
use ndarray::{array, Array1};

const H: f64 = 1e-3;

// Brute-force minimizer of g(z) + ‖z − w‖²/(2η) over the grid H·ℤ² ∩ [0, span]².
fn grid_prox(obj: &CompositeObjective, w: &Array1<f64>, eta: f64, span: f64) -> (Array1<f64>, f64) {
    let steps = (span / H).round() as usize;
    let mut best = (Array1::zeros(2), f64::INFINITY);
    for i in 0..=steps {
        for j in 0..=steps {
            let z = array![i as f64 * H, j as f64 * H];
            let g = obj.nonsmooth().value(z.view());
            if !g.is_finite() {
                continue;
            }
            let v = g + (&z - w).mapv(|t| t * t).sum() / (2.0 * eta);
            if v < best.1 {
                best = (z, v);
            }
        }
    }
    best
}

#[test]
fn nnpca_toy_prox_step_matches_grid() {
    for (constraint, span) in [(NnpcaConstraint::default(), 1.0), (NnpcaConstraint::Orthant, 2.5)] {
        let (_, obj) = generate_nnpca_with(6, 2, 1e-3, 31, constraint).unwrap();
        let eta = 0.5 / obj.lipschitz();
        for t in [0.0, 0.2, 0.5, 0.9, 1.0] {
            let y = array![t, 1.0 - t];
            let x = prox_gradient_step(&obj, y.view(), eta);
            let w = &y - &(obj.smooth().gradient(y.view()) * eta);
            let (z, pz) = grid_prox(&obj, &w, eta, span);
            let px = obj.nonsmooth().value(x.view()) + (&x - &w).mapv(|t| t * t).sum() / (2.0 * eta);
            assert!(px <= pz + 1e-12, "{constraint:?} t={t}: prox {x} worse than grid {z}");
            // 1/η-strong convexity: ‖z − x‖² ≤ 2η (P(z) − P(x)).
            let dist = (&x - &z).mapv(|t| t * t).sum().sqrt();
            assert!(dist <= (2.0 * eta * (pz - px)).sqrt() + 1e-9, "{constraint:?} t={t}: {dist}");
            assert!(dist <= 0.01, "{constraint:?} t={t}: prox {x} grid {z}");
        }
    }
}

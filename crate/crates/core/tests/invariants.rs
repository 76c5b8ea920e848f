//! Cross-module properties that need more than one module in play.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zerorate::calibration::{saddle_step, smoothness_energy, stiffness, ModelPricer};
use zerorate::grid::reconnection_weights;
use zerorate::marketdata::{black_swaption_price, instruments_on_grid, DiscountCurve, OptionSide, VolMatrix};
use zerorate::products::{DealSpec, Engine};
use zerorate::vega::{instrument_jacobian, market_vegas, model_vegas, solve_bucket_vegas, VegaInputs};
use zerorate::{ModelConfig, VolSurface};

const GRID: Engine = Engine::Grid { intervals: 30 };

fn payer(notional: f64, expiry: f64, tenor: f64, strike: f64) -> DealSpec {
    DealSpec::EuropeanSwaption { notional, expiry, tenor, strike, fixed_frequency: 2, side: OptionSide::Payer }
}

struct Setup {
    curve: DiscountCurve,
    model: ModelConfig,
    surface: VolSurface,
    a: DMatrix<f64>,
    g: Vec<f64>,
}

fn setup() -> Setup {
    let curve = DiscountCurve::flat(0.02, 12.0);
    let model = ModelConfig::one_factor_normal(0.25, 10.0);
    let quotes = VolMatrix::new(vec![1.0, 3.0], vec![2.0, 5.0], vec![0.40, 0.35, 0.33, 0.30]).unwrap();
    let instruments = instruments_on_grid(&curve, &quotes, &[1.0, 3.0], &[2.0, 5.0], 2).unwrap();
    let surface = VolSurface::uniform_mesh(3, 3, 4.0, 0.0, 8.0, 0.008).unwrap();
    let pricer = ModelPricer::for_instruments(curve.clone(), model.clone(), GRID, &instruments);
    let a = instrument_jacobian(&pricer, &surface, 1e-4).unwrap();
    let g = market_vegas(&instruments).unwrap();
    Setup { curve, model, surface, a, g }
}

#[test]
fn bucket_vegas_are_linear_and_scale_with_notional() {
    let s = setup();
    let d1 = payer(1000.0, 2.0, 4.0, 0.021);
    let d2 = payer(2000.0, 1.0, 5.0, 0.019);
    let b1 = model_vegas(&d1, &s.curve, &s.surface, &s.model, &GRID, 1e-4).unwrap();
    let b2 = model_vegas(&d2, &s.curve, &s.surface, &s.model, &GRID, 1e-4).unwrap();
    let solve = |b: Vec<f64>| solve_bucket_vegas(&VegaInputs { b, a: s.a.clone(), g: s.g.clone() }).unwrap().x;

    let x1 = solve(b1.clone());
    let x2 = solve(b2.clone());
    let both = solve(b1.iter().zip(&b2).map(|(u, v)| u + v).collect());
    let scale = both.iter().map(|v| v.abs()).fold(0.0, f64::max);
    for m in 0..both.len() {
        assert!((both[m] - x1[m] - x2[m]).abs() <= 1e-10 * scale);
    }

    let doubled = payer(2000.0, 2.0, 4.0, 0.021);
    let bd = model_vegas(&doubled, &s.curve, &s.surface, &s.model, &GRID, 1e-4).unwrap();
    let xd = solve(bd.clone());
    for k in 0..b1.len() {
        assert!((bd[k] - 2.0 * b1[k]).abs() <= 1e-9 * b1.iter().map(|v| v.abs()).fold(0.0, f64::max));
    }
    for m in 0..x1.len() {
        assert!((xd[m] - 2.0 * x1[m]).abs() <= 1e-9 * scale);
    }
}

#[test]
fn pruning_zero_rows_leaves_the_solution_unchanged() {
    let s = setup();
    let b = model_vegas(&payer(1000.0, 2.0, 4.0, 0.021), &s.curve, &s.surface, &s.model, &GRID, 1e-4).unwrap();
    let base = solve_bucket_vegas(&VegaInputs { b: b.clone(), a: s.a.clone(), g: s.g.clone() }).unwrap();

    let k = b.len();
    let m = s.g.len();
    let mut padded_b = b.clone();
    padded_b.extend([0.0, 0.0]);
    let padded_a = DMatrix::from_fn(k + 2, m, |r, c| if r < k { s.a[(r, c)] } else { 0.0 });
    let padded = solve_bucket_vegas(&VegaInputs { b: padded_b, a: padded_a, g: s.g.clone() }).unwrap();
    assert_eq!(padded.pruned, base.pruned + 2);
    let scale = base.x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    for (u, v) in base.x.iter().zip(&padded.x) {
        assert!((u - v).abs() <= 1e-12 * scale);
    }
}

#[test]
fn saddle_step_minimises_energy_within_the_constraints() {
    let surface = VolSurface::uniform_mesh(4, 4, 5.0, 0.0, 10.0, 0.01).unwrap();
    let k = surface.len();
    let m = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let jac = DMatrix::from_fn(m, k, |_, _| rng.random_range(-1.0..1.0));
    let current: Vec<f64> = (0..k).map(|_| rng.random_range(0.005..0.015)).collect();
    let errors: Vec<f64> = (0..m).map(|_| rng.random_range(-0.1..0.1)).collect();
    let stiff = stiffness(&surface);
    let (next, _) = saddle_step(&stiff, &jac, &current, &errors).unwrap();

    let x = DVector::from_column_slice(&next);
    let target = &jac * DVector::from_column_slice(&current) - DVector::from_column_slice(&errors);
    assert!((&jac * &x - &target).amax() <= 1e-12);

    // The iterate may leave the admissible range, so use the quadratic form.
    let energy = |v: &DVector<f64>| 0.5 * v.dot(&(&stiff * v));
    let sigma = DVector::from_column_slice(&current);
    assert!((energy(&sigma) - smoothness_energy(&surface.with_values(current.clone()).unwrap())).abs() <= 1e-15);
    let best = energy(&x);
    let gram = (&jac * jac.transpose()).try_inverse().unwrap();
    for _ in 0..50 {
        let r = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
        // Project onto the nullspace of the constraints.
        let d = &r - jac.transpose() * (&gram * (&jac * &r));
        assert!((&jac * &d).amax() <= 1e-12);
        let eps = 1e-3;
        assert!(energy(&(&x + &d * eps)) >= best);
        assert!(energy(&(&x - &d * eps)) >= best);
    }
}

proptest! {
    #[test]
    fn black_price_rises_with_vol_and_expiry(
        forward in 0.005..0.08f64,
        vol in 0.05..0.8f64,
        dv in 0.001..0.2f64,
        expiry in 0.25..15.0f64,
        dt in 0.01..5.0f64,
    ) {
        for side in [OptionSide::Payer, OptionSide::Receiver] {
            let base = black_swaption_price(forward, forward, vol, expiry, 1.0, side).unwrap();
            let more_vol = black_swaption_price(forward, forward, vol + dv, expiry, 1.0, side).unwrap();
            let longer = black_swaption_price(forward, forward, vol, expiry + dt, 1.0, side).unwrap();
            prop_assert!(more_vol > base);
            prop_assert!(longer > base);
        }
    }

    #[test]
    fn reconnection_weights_stay_bounded(xi in -0.5..=0.5f64) {
        let w = reconnection_weights(xi);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-15);
        prop_assert!(w.iter().all(|v| *v >= -0.125));
        prop_assert!(w.iter().filter(|v| **v < 0.0).count() <= 1);
    }
}

//! Bucket vegas.
//!
//! Model vegas `b_k = ∂U/∂σ_k` of a deal are mapped onto market buckets
//! `x_m = ∂U/∂v_m` through the instruments' model Jacobian
//! `A_km = ∂V_m/∂σ_k` and their Black vegas `g_m`: the least-squares
//! solution of `A G⁻¹ x = b`, computed by SVD.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::calibration::SwaptionPricer;
use crate::error::{Error, Result};
use crate::linalg::svd_least_squares;
use crate::marketdata::{DiscountCurve, SwaptionInstrument};
use crate::model::{ModelConfig, VolSurface};
use crate::products::{price_all, DealSpec, Engine};

/// Relative singular-value cutoff for the bucket solve.
pub const SVD_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct VegaInputs {
    /// `∂U/∂σ_k`, length K.
    pub b: Vec<f64>,
    /// `∂V_m/∂σ_k`, K×M.
    pub a: DMatrix<f64>,
    /// Black vegas, length M.
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VegaReport {
    /// Bucket vegas per +1.00 of lognormal vol.
    pub x: Vec<f64>,
    /// `‖A G⁻¹ x − b‖₂`.
    pub residual: f64,
    /// Singular values below the cutoff.
    pub discarded: usize,
    /// Surface parameters dropped because neither the deal nor any
    /// instrument depends on them.
    pub pruned: usize,
}

/// Central finite-difference vegas of a deal to every surface node.
pub fn model_vegas(
    deal: &DealSpec,
    curve: &DiscountCurve,
    surface: &VolSurface,
    model: &ModelConfig,
    engine: &Engine,
    bump: f64,
) -> Result<Vec<f64>> {
    let deals = std::slice::from_ref(deal);
    (0..surface.len())
        .into_par_iter()
        .map(|k| {
            let up = price_all(deals, curve, &surface.bumped(k, bump), model, engine)?[0].pv;
            let dn = price_all(deals, curve, &surface.bumped(k, -bump), model, engine)?[0].pv;
            Ok((up - dn) / (2.0 * bump))
        })
        .collect()
}

/// Central finite-difference instrument Jacobian `∂V_m/∂σ_k` (K×M).
pub fn instrument_jacobian(pricer: &dyn SwaptionPricer, surface: &VolSurface, bump: f64) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = (0..surface.len())
        .into_par_iter()
        .map(|k| -> Result<Vec<f64>> {
            let up = pricer.prices(&surface.bumped(k, bump))?;
            let dn = pricer.prices(&surface.bumped(k, -bump))?;
            Ok(up.iter().zip(&dn).map(|(a, b)| (a - b) / (2.0 * bump)).collect())
        })
        .collect::<Result<_>>()?;
    let m = rows.first().map_or(0, |r| r.len());
    Ok(DMatrix::from_fn(rows.len(), m, |k, j| rows[k][j]))
}

/// Black vegas of the instruments at their quoted vols.
pub fn market_vegas(instruments: &[SwaptionInstrument]) -> Result<Vec<f64>> {
    instruments
        .iter()
        .map(|i| {
            let g = i.market_vega()?;
            if !(g > 0.0) {
                return Err(Error::invalid(format!("zero market vega for {}x{}", i.expiry, i.tenor)));
            }
            Ok(g)
        })
        .collect()
}

/// Least-squares bucket vegas.
pub fn solve_bucket_vegas(inputs: &VegaInputs) -> Result<VegaReport> {
    let k = inputs.b.len();
    let m = inputs.g.len();
    if inputs.a.nrows() != k || inputs.a.ncols() != m {
        return Err(Error::invalid("vega inputs shape mismatch"));
    }
    if let Some(g) = inputs.g.iter().find(|g| **g == 0.0) {
        return Err(Error::invalid(format!("degenerate market vega {g}")));
    }
    let keep: Vec<usize> = (0..k)
        .filter(|&r| inputs.b[r] != 0.0 || inputs.a.row(r).iter().any(|v| *v != 0.0))
        .collect();
    let scaled = DMatrix::from_fn(keep.len(), m, |r, c| inputs.a[(keep[r], c)] / inputs.g[c]);
    let rhs = DVector::from_iterator(keep.len(), keep.iter().map(|&r| inputs.b[r]));
    let (x, discarded) = svd_least_squares(&scaled, &rhs, SVD_CUTOFF)?;
    let residual = (&scaled * &x - &rhs).norm();
    Ok(VegaReport {
        x: x.iter().copied().collect(),
        residual,
        discarded,
        pruned: k - keep.len(),
    })
}

/// Places bucket vegas on the expiry×tenor matrix; cells without an
/// instrument are zero.
pub fn reshape_report(x: &[f64], instruments: &[SwaptionInstrument], expiries: &[f64], tenors: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; tenors.len()]; expiries.len()];
    for (v, inst) in x.iter().zip(instruments) {
        let i = expiries.iter().position(|e| (e - inst.expiry).abs() < 1e-9);
        let j = tenors.iter().position(|t| (t - inst.tenor).abs() < 1e-9);
        if let (Some(i), Some(j)) = (i, j) {
            out[i][j] = *v;
        }
    }
    out
}

/// Writes the matrix with `expiry` rows and tenor columns.
pub fn write_matrix_csv<W: std::io::Write>(mut w: W, matrix: &[Vec<f64>], expiries: &[f64], tenors: &[f64]) -> Result<()> {
    use crate::marketdata::tenor_label;
    let header: Vec<String> = tenors.iter().map(|t| tenor_label(*t)).collect();
    writeln!(w, "expiry,{}", header.join(","))?;
    for (e, row) in expiries.iter().zip(matrix) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
        writeln!(w, "{},{}", tenor_label(*e), cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_case() {
        let b = vec![1.5, -2.0, 0.25];
        let r = solve_bucket_vegas(&VegaInputs { b: b.clone(), a: DMatrix::identity(3, 3), g: vec![1.0; 3] }).unwrap();
        assert_eq!(r.x, b);
    }

    #[test]
    fn diagonal_case() {
        let b = vec![1.5, -2.0, 0.25];
        let g = vec![3.0, 0.5, 7.0];
        let r = solve_bucket_vegas(&VegaInputs { b: b.clone(), a: DMatrix::identity(3, 3), g: g.clone() }).unwrap();
        for m in 0..3 {
            assert!((r.x[m] - g[m] * b[m]).abs() < 1e-12);
        }
    }

    #[test]
    fn least_squares_is_optimal_and_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = DMatrix::from_fn(8, 3, |_, _| rng.random_range(-1.0..1.0));
        let g = vec![2.0, 3.0, 0.5];
        let b: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = solve_bucket_vegas(&VegaInputs { b: b.clone(), a: a.clone(), g: g.clone() }).unwrap();
        let scaled = DMatrix::from_fn(8, 3, |i, j| a[(i, j)] / g[j]);
        let rb = DVector::from_column_slice(&b);
        for _ in 0..20 {
            let dx = DVector::from_fn(3, |_, _| rng.random_range(-1e-3..1e-3));
            let x = DVector::from_column_slice(&r.x) + dx;
            assert!((&scaled * x - &rb).norm() >= r.residual - 1e-15);
        }
        let b2: Vec<f64> = b.iter().map(|v| 2.0 * v).collect();
        let r2 = solve_bucket_vegas(&VegaInputs { b: b2, a, g }).unwrap();
        for (u, v) in r2.x.iter().zip(&r.x) {
            assert!((u - 2.0 * v).abs() < 1e-12);
        }
    }

    #[test]
    fn pruning_drops_unrelated_rows_only() {
        let mut a = DMatrix::zeros(4, 2);
        a[(0, 0)] = 1.0;
        a[(1, 1)] = 2.0;
        a[(2, 0)] = 0.5;
        let r = solve_bucket_vegas(&VegaInputs { b: vec![1.0, 1.0, 0.5, 0.0], a, g: vec![1.0, 1.0] }).unwrap();
        assert_eq!(r.pruned, 1);
        assert!((r.x[0] - 1.0).abs() < 1e-12 && (r.x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_deal_gives_zero_matrix() {
        let r = solve_bucket_vegas(&VegaInputs { b: vec![0.0; 3], a: DMatrix::identity(3, 2), g: vec![1.0, 1.0] }).unwrap();
        assert!(r.x.iter().all(|v| *v == 0.0));
    }
}

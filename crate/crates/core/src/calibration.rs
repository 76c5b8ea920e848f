//! Global calibration of the volatility surface to a swaption matrix.
//!
//! The surface is a bilinear finite-element mesh. Among all surfaces that
//! satisfy the linearised repricing conditions `E(σ̇) + ∂E/∂σ · (σ − σ̇) = 0`
//! the update picks the one with least smoothness energy, which is the
//! saddle-point system
//!
//! ```text
//! [ S  Jᵀ ] [σ]   [        0        ]
//! [ J  0  ] [λ] = [ J σ̇ − E(σ̇) ]
//! ```
//!
//! with `S` the stiffness matrix of the energy and `J` the Jacobian of the
//! relative repricing errors.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::marketdata::{DiscountCurve, OptionSide, SwaptionInstrument};
use crate::model::{ModelConfig, VolSurface};
use crate::products::{price_all, DealSpec, Engine};

/// Model prices for a fixed list of instruments.
pub trait SwaptionPricer: Sync {
    fn prices(&self, surface: &VolSurface) -> Result<Vec<f64>>;
}

/// Prices payer swaptions at the instruments' forward swap rates on a
/// chosen engine.
#[derive(Debug, Clone)]
pub struct ModelPricer {
    pub curve: DiscountCurve,
    pub model: ModelConfig,
    pub engine: Engine,
    pub deals: Vec<DealSpec>,
}

impl ModelPricer {
    pub fn for_instruments(curve: DiscountCurve, model: ModelConfig, engine: Engine, instruments: &[SwaptionInstrument]) -> Self {
        let deals = instruments.iter().map(instrument_deal).collect();
        Self { curve, model, engine, deals }
    }
}

/// The unit-notional ATM payer swaption behind an instrument.
pub fn instrument_deal(inst: &SwaptionInstrument) -> DealSpec {
    DealSpec::EuropeanSwaption {
        notional: 1.0,
        expiry: inst.expiry,
        tenor: inst.tenor,
        strike: inst.forward_swap_rate,
        fixed_frequency: inst.fixed_frequency,
        side: OptionSide::Payer,
    }
}

impl SwaptionPricer for ModelPricer {
    fn prices(&self, surface: &VolSurface) -> Result<Vec<f64>> {
        Ok(price_all(&self.deals, &self.curve, surface, &self.model, &self.engine)?
            .into_iter()
            .map(|v| v.pv)
            .collect())
    }
}

/// Element geometry: corner indices (t0,s0), (t1,s0), (t1,s1), (t0,s1) and
/// spacings in `t` and `s`.
fn elements(surface: &VolSurface) -> Vec<([usize; 4], f64, f64)> {
    let (tn, sn) = (surface.t_nodes(), surface.s_nodes());
    let mut out = Vec::new();
    for i in 0..tn.len().saturating_sub(1) {
        for j in 0..sn.len().saturating_sub(1) {
            let c = [surface.index(i, j), surface.index(i + 1, j), surface.index(i + 1, j + 1), surface.index(i, j + 1)];
            out.push((c, tn[i + 1] - tn[i], sn[j + 1] - sn[j]));
        }
    }
    out
}

/// `J = Σ (3/2) ∬ (σ_t² + σ_s²) dt ds` over bilinear elements.
pub fn smoothness_energy(surface: &VolSurface) -> f64 {
    let v = surface.values();
    elements(surface)
        .iter()
        .map(|(c, tau, delta)| {
            let [p1, p2, p3, p4] = c.map(|k| v[k]);
            let (a, b) = (p2 - p1, p3 - p4);
            let (cc, d) = (p4 - p1, p3 - p2);
            0.5 * ((delta / tau) * (a * a + a * b + b * b) + (tau / delta) * (cc * cc + cc * d + d * d))
        })
        .sum()
}

/// Hessian `S` of the energy, so that `J = ½ σᵀ S σ`.
pub fn stiffness(surface: &VolSurface) -> DMatrix<f64> {
    let k = surface.len();
    let mut s = DMatrix::zeros(k, k);
    // Difference rows: t-direction (a, b) and s-direction (c, d).
    const T_ROWS: [[f64; 4]; 2] = [[-1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, -1.0]];
    const S_ROWS: [[f64; 4]; 2] = [[-1.0, 0.0, 0.0, 1.0], [0.0, -1.0, 1.0, 0.0]];
    const H: [[f64; 2]; 2] = [[1.0, 0.5], [0.5, 1.0]];
    for (c, tau, delta) in elements(surface) {
        for (rows, w) in [(T_ROWS, delta / tau), (S_ROWS, tau / delta)] {
            for p in 0..4 {
                for q in 0..4 {
                    let mut e = 0.0;
                    for (u, hu) in H.iter().enumerate() {
                        for (v, h) in hu.iter().enumerate() {
                            e += rows[u][p] * h * rows[v][q];
                        }
                    }
                    s[(c[p], c[q])] += w * e;
                }
            }
        }
    }
    s
}

pub fn smoothness_gradient(surface: &VolSurface) -> DVector<f64> {
    stiffness(surface) * DVector::from_column_slice(surface.values())
}

/// Relative errors `E_m = V_m / V̂_m − 1` and `‖E‖ = sqrt(mean E_m²)`.
pub fn error_vector(prices: &[f64], targets: &[f64]) -> Result<(Vec<f64>, f64)> {
    if prices.len() != targets.len() || targets.is_empty() {
        return Err(Error::invalid("price and target counts differ"));
    }
    let mut e = Vec::with_capacity(targets.len());
    for (v, t) in prices.iter().zip(targets) {
        if *t == 0.0 {
            return Err(Error::invalid("zero target price"));
        }
        e.push(v / t - 1.0);
    }
    let norm = (e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64).sqrt();
    Ok((e, norm))
}

/// Finite-difference Jacobian `∂E_m/∂σ_k` (M×K), one-sided with bump
/// `bump`, or central when `central` is set. Columns are computed in
/// parallel.
pub fn jacobian(
    pricer: &dyn SwaptionPricer,
    surface: &VolSurface,
    targets: &[f64],
    base_errors: &[f64],
    bump: f64,
    central: bool,
) -> Result<DMatrix<f64>> {
    let k = surface.len();
    let m = targets.len();
    let cols: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|j| -> Result<Vec<f64>> {
            let up = error_vector(&pricer.prices(&surface.bumped(j, bump))?, targets)?.0;
            if central {
                let dn = error_vector(&pricer.prices(&surface.bumped(j, -bump))?, targets)?.0;
                Ok(up.iter().zip(&dn).map(|(a, b)| (a - b) / (2.0 * bump)).collect())
            } else {
                Ok(up.iter().zip(base_errors).map(|(a, b)| (a - b) / bump).collect())
            }
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(m, k, |r, c| cols[c][r]))
}

/// Solves the saddle system for the next surface values and multipliers.
pub fn saddle_step(
    stiffness: &DMatrix<f64>,
    jac: &DMatrix<f64>,
    current: &[f64],
    errors: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = stiffness.nrows();
    let m = jac.nrows();
    if jac.ncols() != k || current.len() != k || errors.len() != m {
        return Err(Error::invalid("saddle system shape mismatch"));
    }
    if m > k {
        return Err(Error::invalid(format!("{m} instruments exceed {k} surface parameters")));
    }
    let mut a = DMatrix::zeros(k + m, k + m);
    a.view_mut((0, 0), (k, k)).copy_from(stiffness);
    a.view_mut((0, k), (k, m)).copy_from(&jac.transpose());
    a.view_mut((k, 0), (m, k)).copy_from(jac);
    let mut rhs = DVector::zeros(k + m);
    let js = jac * DVector::from_column_slice(current);
    for r in 0..m {
        rhs[k + r] = js[r] - errors[r];
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular("saddle system: Jacobian rows are degenerate".into()))?;
    Ok((sol.rows(0, k).iter().copied().collect(), sol.rows(k, m).iter().copied().collect()))
}

#[derive(Debug, Clone)]
pub struct CalibrationSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Absolute vol bump for the Jacobian.
    pub bump: f64,
    /// Lower bound applied to every node after a step.
    pub vol_floor: f64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self { tolerance: 1e-3, max_iterations: 5, bump: 1e-4, vol_floor: 1e-4 }
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub surface: VolSurface,
    /// `‖E‖` before each iteration and after the last.
    pub history: Vec<f64>,
    pub errors: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Nodes raised to the floor over the whole run.
    pub clipped: usize,
}

/// One iteration: Jacobian at `surface`, saddle solve, floor. Returns the
/// new surface, the multipliers and the number of clipped nodes.
pub fn solve_iteration(
    pricer: &dyn SwaptionPricer,
    surface: &VolSurface,
    targets: &[f64],
    errors: &[f64],
    settings: &CalibrationSettings,
) -> Result<(VolSurface, Vec<f64>, usize)> {
    let jac = jacobian(pricer, surface, targets, errors, settings.bump, false)?;
    let (mut next, lambda) = saddle_step(&stiffness(surface), &jac, surface.values(), errors)?;
    let mut clipped = 0;
    for v in next.iter_mut() {
        if *v < settings.vol_floor {
            *v = settings.vol_floor;
            clipped += 1;
        }
    }
    Ok((surface.with_values(next)?, lambda, clipped))
}

/// Iterates [`solve_iteration`] until `‖E‖ < tolerance` or the iteration
/// budget is spent. Returns the best iterate seen.
pub fn calibrate(
    pricer: &dyn SwaptionPricer,
    initial: &VolSurface,
    targets: &[f64],
    settings: &CalibrationSettings,
) -> Result<CalibrationResult> {
    let mut surface = initial.clone();
    let (mut errors, mut norm) = error_vector(&pricer.prices(&surface)?, targets)?;
    let mut history = vec![norm];
    let mut multipliers = vec![0.0; targets.len()];
    let mut clipped = 0;
    let mut iterations = 0;
    let mut best = (norm, surface.clone(), errors.clone());
    while norm >= settings.tolerance && iterations < settings.max_iterations {
        let (next, lambda, c) = solve_iteration(pricer, &surface, targets, &errors, settings)?;
        iterations += 1;
        clipped += c;
        surface = next;
        multipliers = lambda;
        (errors, norm) = error_vector(&pricer.prices(&surface)?, targets)?;
        history.push(norm);
        if norm < best.0 {
            best = (norm, surface.clone(), errors.clone());
        }
    }
    Ok(CalibrationResult {
        converged: best.0 < settings.tolerance,
        surface: best.1,
        errors: best.2,
        history,
        multipliers,
        iterations,
        clipped,
    })
}

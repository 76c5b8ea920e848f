//! One-factor Krasker grid.
//!
//! A driving state `x` with zero drift and volatility `σ₀(t) = σ(t, s₁)`
//! lives on slices of `2I + 1` equally spaced points whose half-width is four
//! standard deviations of `x(t^n)`. Each node branches to four points with
//! offsets `σ₀·{±√(3h), ±√(h/3)}` and probabilities `{1/8, 3/8, 3/8, 1/8}`;
//! every branch point is reconnected to its nearest node and the two
//! neighbours with quadratic interpolation weights.
//!
//! Short rates `r_i = x_i + μ^n` and zero rates `(y_k)_i = i·Δy_k + μ_k^n`
//! share the node index. The shifts are fitted to today's curve with
//! Arrow-Debreu prices, so every slice reprices `df⁰(t^n)` and
//! `df⁰(t^n + s_k)` exactly.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::pairwise_sum;
use crate::marketdata::DiscountCurve;
use crate::model::{ModelConfig, Process, VolSurface};
use crate::montecarlo::snap_to_grid;

/// Branch offsets per unit volatility for a step `h`.
pub fn branch_offsets(h: f64) -> [f64; 4] {
    let a = (3.0 * h).sqrt();
    let b = (h / 3.0).sqrt();
    [-a, -b, b, a]
}

pub const BRANCH_PROBS: [f64; 4] = [0.125, 0.375, 0.375, 0.125];

/// Quadratic reconnection weights on nodes `j − 1, j, j + 1` for a point at
/// offset `ξ` (in node spacings) from node `j`.
pub fn reconnection_weights(xi: f64) -> [f64; 3] {
    let xi2 = xi * xi;
    [0.5 * (xi2 - xi), 1.0 - xi2, 0.5 * (xi2 + xi)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    /// Points on each side of the centre.
    pub intervals: usize,
    pub steps: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { intervals: 40, steps: 0 }
    }
}

/// One time slice of the grid.
#[derive(Debug, Clone)]
pub struct GridSlice {
    pub step: usize,
    pub time: f64,
    /// Node spacing in `x`; zero for a collapsed single-node slice.
    pub dx: f64,
    /// Node positions `x_i`, symmetric about 0.
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    pub mu: f64,
    pub short_rates: Vec<f64>,
    /// Zero-rate node spacings `Δy_k` and shifts `μ_k`, per model term.
    pub dy: Vec<f64>,
    pub mu_k: Vec<f64>,
    /// Row-major `i · K + k`.
    pub zero_rates: Vec<f64>,
    terms: Vec<f64>,
}

impl GridSlice {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Centre index of the slice.
    pub fn centre(&self) -> usize {
        self.x.len() / 2
    }

    pub fn zero_rate(&self, i: usize, k: usize) -> f64 {
        self.zero_rates[i * (self.terms.len() - 1) + k]
    }

    /// Local discount curve at node `i`, anchored at the slice time.
    pub fn node_curve(&self, i: usize) -> DiscountCurve {
        let kk = self.terms.len() - 1;
        let mut logs = Vec::with_capacity(kk + 1);
        logs.push(0.0);
        for k in 0..kk {
            logs.push(-self.zero_rates[i * kk + k] * self.terms[k + 1]);
        }
        DiscountCurve::from_log_dfs(self.time, self.terms.clone(), logs)
    }
}

/// Sparse transition rows from one slice to the next.
#[derive(Debug, Clone, Default)]
pub struct Transitions {
    row_start: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

impl Transitions {
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_start[i], self.row_start[i + 1]);
        self.cols[a..b].iter().copied().zip(self.weights[a..b].iter().copied())
    }

    pub fn rows(&self) -> usize {
        self.row_start.len() - 1
    }
}

/// The fitted grid.
#[derive(Debug, Clone)]
pub struct Grid {
    h: f64,
    slices: Vec<GridSlice>,
    /// `transitions[n]` maps slice `n` to slice `n + 1`.
    transitions: Vec<Transitions>,
    clamp_events: usize,
}

/// Builds the transition row of a point `x0` branching with volatility
/// `vol` onto `next`. Returns merged `(node, weight)` pairs and whether
/// any branch point fell beyond the reconnectable range.
pub fn transition_row(x0: f64, vol: f64, h: f64, next_dx: f64, intervals: usize) -> (Vec<(usize, f64)>, bool) {
    if next_dx == 0.0 {
        return (vec![(0, 1.0)], false);
    }
    let i = intervals as i64;
    let mut acc: Vec<(usize, f64)> = Vec::with_capacity(12);
    let mut clamped = false;
    for (off, p) in branch_offsets(h).iter().zip(BRANCH_PROBS) {
        let target = x0 + vol * off;
        let nearest = (target / next_dx).round() as i64;
        let j = nearest.clamp(-i + 1, i - 1);
        clamped |= j != nearest;
        let xi = target / next_dx - j as f64;
        for (d, w) in reconnection_weights(xi).iter().enumerate() {
            let col = (j + i - 1 + d as i64) as usize;
            match acc.iter_mut().find(|(c, _)| *c == col) {
                Some(e) => e.1 += p * w,
                None => acc.push((col, p * w)),
            }
        }
    }
    acc.sort_by_key(|e| e.0);
    (acc, clamped)
}

impl Grid {
    /// Builds and fits the grid out to `config.steps` steps of length `model.h`.
    pub fn build(curve: &DiscountCurve, surface: &VolSurface, model: &ModelConfig, config: &GridConfig) -> Result<Grid> {
        if model.process != Process::Normal {
            return Err(Error::invalid("the grid engine supports the normal process only"));
        }
        if model.factors.n_factors() != 1 {
            return Err(Error::invalid("the grid engine is one-factor; use Monte Carlo"));
        }
        if config.intervals < 1 {
            return Err(Error::invalid("grid needs at least one interval"));
        }
        let h = model.h;
        let big_i = config.intervals;
        let s_terms = &model.s_grid;
        let kk = s_terms.len();
        let mut terms = Vec::with_capacity(kk + 1);
        terms.push(0.0);
        terms.extend_from_slice(s_terms);

        let mut slices: Vec<GridSlice> = Vec::with_capacity(config.steps + 1);
        let mut transitions = Vec::with_capacity(config.steps);
        let mut var_x = 0.0;
        let mut var_y = vec![0.0; kk];
        let mut q = vec![1.0];
        let mut x = vec![0.0];
        let mut dx = 0.0;
        let mut clamp_events = 0;

        for n in 0..=config.steps {
            let t = n as f64 * h;
            let slice = fit_slice(n, t, h, dx, x, q, &var_y, big_i, &terms, curve);
            if n == config.steps {
                slices.push(slice);
                break;
            }
            // Next slice geometry.
            let vol0 = surface.vol_at(t, s_terms[0]);
            var_x += vol0 * vol0 * h;
            for (k, v) in var_y.iter_mut().enumerate() {
                let s = surface.vol_at(t, s_terms[k]);
                *v += s * s * h;
            }
            let (next_x, next_dx) = slice_points(var_x, big_i);
            let rows: Vec<(Vec<(usize, f64)>, bool)> = slice
                .x
                .par_iter()
                .map(|&x0| transition_row(x0, vol0, h, next_dx, big_i))
                .collect();
            let mut tr = Transitions {
                row_start: vec![0],
                ..Default::default()
            };
            for (row, clamped) in &rows {
                clamp_events += *clamped as usize;
                for &(c, w) in row {
                    tr.cols.push(c);
                    tr.weights.push(w);
                }
                tr.row_start.push(tr.cols.len());
            }
            // Forward induction of state prices.
            let mut next_q = vec![0.0; next_x.len()];
            for (i, (qi, ri)) in slice.q.iter().zip(&slice.short_rates).enumerate() {
                let carry = qi * (-ri * h).exp();
                for (j, w) in tr.row(i) {
                    next_q[j] += carry * w;
                }
            }
            transitions.push(tr);
            slices.push(slice);
            x = next_x;
            dx = next_dx;
            q = next_q;
        }
        Ok(Grid {
            h,
            slices,
            transitions,
            clamp_events,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn steps(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.h
    }

    pub fn slice(&self, n: usize) -> &GridSlice {
        &self.slices[n]
    }

    pub fn transitions(&self, n: usize) -> &Transitions {
        &self.transitions[n]
    }

    /// Branch points that fell beyond the outermost reconnectable node.
    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    pub fn snap(&self, t: f64) -> Result<usize> {
        snap_to_grid(t, self.h, self.steps())
    }

    /// `v_i^{n−1} = exp(−r_i^{n−1} h) Σ_j p_ij v_j^n`.
    pub fn rollback(&self, n: usize, values: &[f64]) -> Vec<f64> {
        assert!(n >= 1 && values.len() == self.slices[n].len());
        let prev = &self.slices[n - 1];
        let tr = &self.transitions[n - 1];
        prev.short_rates
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let e: f64 = tr.row(i).map(|(j, w)| w * values[j]).sum();
                (-r * self.h).exp() * e
            })
            .collect()
    }

    /// Forward step of state-price-like weights from slice `n` to `n + 1`:
    /// `w'_j = Σ_i w_i exp(−r_i h) p_ij`.
    pub fn propagate(&self, n: usize, weights: &[f64]) -> Vec<f64> {
        let s = &self.slices[n];
        let tr = &self.transitions[n];
        let mut out = vec![0.0; self.slices[n + 1].len()];
        for (i, (w, r)) in weights.iter().zip(&s.short_rates).enumerate() {
            let carry = w * (-r * self.h).exp();
            for (j, p) in tr.row(i) {
                out[j] += carry * p;
            }
        }
        out
    }

    /// `Σ_i Q_i^n v_i`: today's value of a payoff known on slice `n`.
    pub fn expectation(&self, n: usize, values: &[f64]) -> f64 {
        let q = &self.slices[n].q;
        let terms: Vec<f64> = q.iter().zip(values).map(|(a, b)| a * b).collect();
        pairwise_sum(&terms)
    }

    /// Writes `step,node,x,short_rate,state_price` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,node,x,short_rate,state_price")?;
        for s in &self.slices {
            for i in 0..s.len() {
                writeln!(w, "{},{},{:e},{:e},{:e}", s.step, i, s.x[i], s.short_rates[i], s.q[i])?;
            }
        }
        Ok(())
    }
}

fn slice_points(var: f64, big_i: usize) -> (Vec<f64>, f64) {
    if var <= 0.0 {
        return (vec![0.0], 0.0);
    }
    let dx = 4.0 * var.sqrt() / big_i as f64;
    let i = big_i as i64;
    ((-i..=i).map(|j| j as f64 * dx).collect(), dx)
}

#[allow(clippy::too_many_arguments)]
fn fit_slice(
    n: usize,
    t: f64,
    h: f64,
    dx: f64,
    x: Vec<f64>,
    q: Vec<f64>,
    var_y: &[f64],
    big_i: usize,
    terms: &[f64],
    curve: &DiscountCurve,
) -> GridSlice {
    let kk = terms.len() - 1;
    let centre = (x.len() / 2) as f64;
    let mu = {
        let w: Vec<f64> = q.iter().zip(&x).map(|(qi, xi)| qi * (-xi * h).exp()).collect();
        (pairwise_sum(&w) / curve.df(t + h)).ln() / h
    };
    let short_rates: Vec<f64> = x.iter().map(|xi| xi + mu).collect();
    let mut dy = vec![0.0; kk];
    let mut mu_k = vec![0.0; kk];
    for k in 0..kk {
        let s = terms[k + 1];
        dy[k] = if x.len() > 1 { 4.0 * var_y[k].sqrt() / big_i as f64 } else { 0.0 };
        let w: Vec<f64> = q
            .iter()
            .enumerate()
            .map(|(i, qi)| qi * (-(i as f64 - centre) * dy[k] * s).exp())
            .collect();
        mu_k[k] = (pairwise_sum(&w) / curve.df(t + s)).ln() / s;
    }
    let mut zero_rates = vec![0.0; x.len() * kk];
    for i in 0..x.len() {
        for k in 0..kk {
            zero_rates[i * kk + k] = (i as f64 - centre) * dy[k] + mu_k[k];
        }
    }
    GridSlice {
        step: n,
        time: t,
        dx,
        x,
        q,
        mu,
        short_rates,
        dy,
        mu_k,
        zero_rates,
        terms: terms.to_vec(),
    }
}

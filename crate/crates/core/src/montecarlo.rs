//! Monte Carlo probability field of deflated discount-factor curves.
//!
//! Each path carries a curve `df^n(s, p)` over the terms `{0, s_1, …, s_K}`
//! stored as numeraire-deflated log discount factors, so `df^n(0, p)` is
//! the reciprocal bank account along the path. A step
//!
//! 1. reads the short rate `r^n = (1/h) log(df^n(0) / df^n(h))`,
//! 2. rolls the root `df^{n+1}(0) = df^n(h)`,
//! 3. evolves each zero rate `y_k` with the arbitrage-free drift, and
//! 4. rescales every term by a per-term constant `c_k` so that the cross-path
//!    mean of `df^{n+1}(s_k, ·)` equals today's `df⁰(t^{n+1} + s_k)`.
//!
//! Curves between terms are log-linear; beyond `s_K` the last forward is
//! extended flat.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::pairwise_sum;
use crate::marketdata::{log_linear, DiscountCurve};
use crate::model::{drift_lognormal, drift_normal, ModelConfig, Process, VolSurface};

/// Paths, horizon and random-number settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub paths: usize,
    /// Number of time steps of length `h` (the model step).
    pub steps: usize,
    pub seed: u64,
    /// Pair path `2j + 1` with the negated shocks of path `2j`.
    pub antithetic: bool,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths < 2 {
            return Err(Error::invalid("at least two paths are required"));
        }
        if self.antithetic && self.paths % 2 != 0 {
            return Err(Error::invalid("antithetic sampling needs an even path count"));
        }
        Ok(())
    }

    /// Steps needed to reach `horizon` with step `h`.
    pub fn steps_for(horizon: f64, h: f64) -> usize {
        (horizon / h - 1e-9).ceil().max(0.0) as usize
    }
}

/// One path's curve at one step, as deflated log discount factors.
#[derive(Debug, Clone, Copy)]
pub struct PathState<'a> {
    pub step: usize,
    pub terms: &'a [f64],
    pub log_dfs: &'a [f64],
}

impl PathState<'_> {
    pub fn log_df(&self, s: f64) -> f64 {
        log_linear(self.terms, self.log_dfs, s)
    }

    /// Deflated discount factor at term `s`.
    pub fn df(&self, s: f64) -> f64 {
        self.log_df(s).exp()
    }

    /// `r^n = (1/h) log(df^n(0) / df^n(h))`. The deflator cancels.
    pub fn short_rate(&self, h: f64) -> f64 {
        (self.log_dfs[0] - self.log_df(h)) / h
    }

    /// Root of the next curve: `df^n(0) · exp(−r^n h) = df^n(h)` (log).
    pub fn advance_root(&self, h: f64) -> f64 {
        self.log_dfs[0] - self.short_rate(h) * h
    }

    /// Zero rate of the local (undeflated) curve at term index `k ≥ 1`.
    pub fn zero_rate(&self, k: usize) -> f64 {
        -(self.log_dfs[k] - self.log_dfs[0]) / self.terms[k]
    }

    /// `f_k^n = (1/h) log(df^n(s_k) / df^n(s_k + h))`.
    pub fn forward(&self, k: usize, h: f64) -> f64 {
        (self.log_dfs[k] - self.log_df(self.terms[k] + h)) / h
    }
}

/// Evolves the zero rates of one path over one step:
/// `y_k^{n+1} = y_k^n + μ_k h + ⟨σ⃗(t_n, s_k) · Δw⃗⟩` with the normal or
/// lognormal drift. `dw` holds per-factor increments with variance `h`.
pub fn evolve_zero_rates(
    state: &PathState<'_>,
    surface: &VolSurface,
    model: &ModelConfig,
    t_n: f64,
    dw: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let h = model.h;
    let r = state.short_rate(h);
    for (k, y_next) in out.iter_mut().enumerate() {
        let idx = k + 1;
        let s = state.terms[idx];
        let y = state.zero_rate(idx);
        let f = state.forward(idx, h);
        let sigma = surface.vol_at(t_n, s);
        *y_next = match model.process {
            Process::Normal => {
                y + drift_normal(f, r, s, sigma)? * h + model.factors.diffusion(sigma, t_n, s, dw)
            }
            Process::Lognormal => {
                y + drift_lognormal(f, r, s, y, sigma)? * h
                    + y * model.factors.diffusion(sigma, t_n, s, dw)
            }
        };
    }
    Ok(())
}

/// Applies the cross-path fit to one step. `logs` holds `P` rows of
/// `K + 1` unadjusted deflated log discount factors
/// (`log df^{n+1}(0) − y_k^{n+1} s_k`); every column `k ≥ 1` is shifted by
/// `log c_k` so that its cross-path mean equals `df⁰(t_next + s_k)`.
/// Returns the constants `c_k` (index 0 is 1).
pub fn refit_and_rebuild(
    logs: &mut [f64],
    terms: &[f64],
    initial: &DiscountCurve,
    t_next: f64,
) -> Result<Vec<f64>> {
    let width = terms.len();
    if width == 0 || logs.len() % width != 0 {
        return Err(Error::invalid("refit: ragged path matrix"));
    }
    let paths = logs.len() / width;
    if paths == 0 {
        return Err(Error::invalid("refit: no paths"));
    }
    let mut c = vec![1.0; width];
    let mut column = vec![0.0; paths];
    for k in 1..width {
        for (p, v) in column.iter_mut().enumerate() {
            *v = logs[p * width + k].exp();
        }
        let mean = pairwise_sum(&column) / paths as f64;
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(Error::Numerical(format!("refit: degenerate mean at term {}", terms[k])));
        }
        let target = initial.df(t_next + terms[k]);
        c[k] = target / mean;
        let shift = c[k].ln();
        for p in 0..paths {
            logs[p * width + k] += shift;
        }
    }
    Ok(c)
}

/// Draws standard normals by inverse-CDF of 53-bit uniforms from a ChaCha8
/// stream. Stable across platforms for a given seed and stream.
struct NormalStream {
    rng: ChaCha8Rng,
    normal: Normal,
}

impl NormalStream {
    fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            rng,
            normal: Normal::standard(),
        }
    }

    fn next(&mut self) -> f64 {
        let bits = self.rng.next_u64() >> 11;
        let u = (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
        self.normal.inverse_cdf(u)
    }
}

/// The full simulated field `{df^n(s_k, p)}`.
#[derive(Debug, Clone)]
pub struct Field {
    h: f64,
    terms: Vec<f64>,
    paths: usize,
    steps: usize,
    antithetic: bool,
    /// `(n · P + p) · (K + 1) + k`, deflated log discount factors.
    data: Vec<f64>,
    /// Per step, the refit constants `c_k`.
    fit_constants: Vec<Vec<f64>>,
}

impl Field {
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn terms(&self) -> &[f64] {
        &self.terms
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn antithetic(&self) -> bool {
        self.antithetic
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.h
    }

    pub fn fit_constants(&self, n: usize) -> &[f64] {
        &self.fit_constants[n]
    }

    /// Nearest step to `t`, rejecting times more than `h/2` away from the grid.
    pub fn snap(&self, t: f64) -> Result<usize> {
        snap_to_grid(t, self.h, self.steps)
    }

    /// Last step at or before `t`.
    pub fn step_at_or_before(&self, t: f64) -> Result<usize> {
        if t < -1e-12 || t > self.time(self.steps) + 1e-9 {
            return Err(Error::Domain {
                what: "field time",
                value: t,
                lo: 0.0,
                hi: self.time(self.steps),
            });
        }
        Ok(((t / self.h) + 1e-9).floor().max(0.0) as usize)
    }

    pub fn state(&self, n: usize, p: usize) -> PathState<'_> {
        let w = self.terms.len();
        let start = (n * self.paths + p) * w;
        PathState {
            step: n,
            terms: &self.terms,
            log_dfs: &self.data[start..start + w],
        }
    }

    /// Deflated discount factor `df^n(s, p)`.
    pub fn deflated_df(&self, n: usize, p: usize, s: f64) -> f64 {
        self.state(n, p).df(s)
    }

    /// `df^n(0, p) = 1 / B(t_n)` along path `p`.
    pub fn deflator(&self, n: usize, p: usize) -> f64 {
        self.state(n, p).log_dfs[0].exp()
    }

    /// Local discount factor `df^n(s, p) / df^n(0, p)`.
    pub fn local_df(&self, n: usize, p: usize, s: f64) -> f64 {
        let st = self.state(n, p);
        (st.log_df(s) - st.log_dfs[0]).exp()
    }

    /// Local (undeflated) curve of path `p` at step `n`, anchored at `t_n`.
    pub fn local_curve(&self, n: usize, p: usize) -> DiscountCurve {
        let st = self.state(n, p);
        let dfs = st.log_dfs.iter().map(|l| (l - st.log_dfs[0]).exp()).collect();
        DiscountCurve::with_anchor(self.time(n), self.terms.clone(), dfs)
            .expect("path curve is valid by construction")
    }

    /// Cross-path mean and standard error of the deflated bond with term `s`
    /// observed at step `n`.
    pub fn mean_deflated(&self, n: usize, s: f64) -> (f64, f64) {
        let v: Vec<f64> = (0..self.paths).map(|p| self.deflated_df(n, p, s)).collect();
        mean_and_se(&v, self.antithetic)
    }

    /// Writes `n,p,s,df` rows (deflated discount factors) as CSV.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,path,term,deflated_df")?;
        for n in 0..=self.steps {
            for p in 0..self.paths {
                let st = self.state(n, p);
                for (s, l) in self.terms.iter().zip(st.log_dfs) {
                    writeln!(w, "{n},{p},{s},{:e}", l.exp())?;
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn snap_to_grid(t: f64, h: f64, steps: usize) -> Result<usize> {
    let n = (t / h).round();
    if n < 0.0 || n as usize > steps || (t - n * h).abs() > 0.5 * h + 1e-9 {
        return Err(Error::Domain {
            what: "date outside time grid",
            value: t,
            lo: 0.0,
            hi: steps as f64 * h,
        });
    }
    Ok(n as usize)
}

/// Sample mean and its standard error. With antithetic pairs the error is
/// computed from the pair averages.
pub fn mean_and_se(values: &[f64], antithetic: bool) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n as f64;
    let samples: Vec<f64> = if antithetic && n % 2 == 0 {
        values.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect()
    } else {
        values.to_vec()
    };
    let m = samples.len();
    if m < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = samples.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (m - 1) as f64;
    (mean, (var / m as f64).sqrt())
}

/// Builds the probability field from today's curve.
pub fn simulate(
    curve: &DiscountCurve,
    surface: &VolSurface,
    model: &ModelConfig,
    sim: &SimulationConfig,
) -> Result<Field> {
    sim.validate()?;
    let h = model.h;
    // The step length is always a simulated term, so the bank-account roll
    // reads a refitted bond and the mean deflator matches today's curve.
    let mut terms = Vec::with_capacity(model.s_grid.len() + 2);
    terms.push(0.0);
    terms.extend_from_slice(&model.s_grid);
    if !terms.iter().any(|s| (s - h).abs() < 1e-12) {
        terms.push(h);
        terms.sort_by(f64::total_cmp);
    }
    let width = terms.len();
    let paths = sim.paths;
    let block = paths * width;
    let nf = model.factors.n_factors();

    let mut data = vec![0.0; (sim.steps + 1) * block];
    let initial_logs: Vec<f64> = terms.iter().map(|&s| curve.log_df(s)).collect();
    for p in 0..paths {
        data[p * width..(p + 1) * width].copy_from_slice(&initial_logs);
    }

    let group = if sim.antithetic { 2 } else { 1 };
    let mut streams: Vec<NormalStream> = (0..paths / group)
        .map(|g| NormalStream::new(sim.seed, g as u64))
        .collect();
    let mut fit_constants = vec![vec![1.0; width]];

    for n in 0..sim.steps {
        let t_n = n as f64 * h;
        let (done, rest) = data.split_at_mut((n + 1) * block);
        let prev = &done[n * block..];
        let next = &mut rest[..block];
        next.par_chunks_mut(group * width)
            .zip(prev.par_chunks(group * width))
            .zip(streams.par_iter_mut())
            .try_for_each(|((out, inp), stream)| -> Result<()> {
                let mut dw = [0.0; 3];
                for d in dw.iter_mut().take(nf) {
                    *d = h.sqrt() * stream.next();
                }
                let mut y = vec![0.0; width - 1];
                for j in 0..group {
                    let sign = if j == 1 { -1.0 } else { 1.0 };
                    let shocks = [sign * dw[0], sign * dw[1], sign * dw[2]];
                    let state = PathState {
                        step: n,
                        terms: &terms,
                        log_dfs: &inp[j * width..(j + 1) * width],
                    };
                    let root = state.advance_root(h);
                    evolve_zero_rates(&state, surface, model, t_n, &shocks[..nf], &mut y)?;
                    let row = &mut out[j * width..(j + 1) * width];
                    row[0] = root;
                    for k in 1..width {
                        row[k] = root - y[k - 1] * terms[k];
                    }
                }
                Ok(())
            })?;
        let c = refit_and_rebuild(next, &terms, curve, (n + 1) as f64 * h)?;
        fit_constants.push(c);
    }

    Ok(Field {
        h,
        terms,
        paths,
        steps: sim.steps,
        antithetic: sim.antithetic,
        data,
        fit_constants,
    })
}

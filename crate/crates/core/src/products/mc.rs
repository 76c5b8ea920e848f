//! Pricing on a Monte Carlo field with least-squares exercise.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{Compiled, DealSpec, ExerciseStyle, FlowKind, LocalPath, PeriodValue, Valuation};
use crate::error::{Error, Result};
use crate::linalg::{pairwise_sum, svd_least_squares};
use crate::montecarlo::{mean_and_se, Field};

fn local(field: &Field, n: usize, p: usize) -> LocalPath<'_> {
    LocalPath(field.state(n, p))
}

/// Deflated realised value of each flow group along one path. Index 0
/// holds flows before the first exercise date, index `j + 1` exercise
/// segment `j`.
fn segment_values(c: &Compiled, field: &Field, p: usize, segments: usize) -> Result<Vec<f64>> {
    let h = field.h();
    let mut out = vec![0.0; segments + 1];
    for f in &c.flows {
        let slot = c.segment(f).map_or(0, |j| j + 1);
        let n = c.determination_step(f, h);
        let t = field.time(n);
        let curve = local(field, n, p);
        let v = match &f.kind {
            FlowKind::RangeAccrual { obs, .. } => {
                let factor = f.local_value(&curve, t)?;
                let mut acc = 0.0;
                for &o in obs {
                    let m = ((o / h).round() as usize).max(n);
                    acc += field.deflator(m, p) * f.observation(&local(field, m, p), field.time(m))?;
                }
                field.deflator(n, p) * factor * acc
            }
            _ => field.deflator(n, p) * f.local_value(&curve, t)?,
        };
        out[slot] += v;
    }
    Ok(out)
}

/// Degree-two polynomial basis in standardised regressors.
fn design(x: &[Vec<f64>]) -> DMatrix<f64> {
    let rows = x.len();
    let d = x.first().map_or(0, |r| r.len());
    let mut mean = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for r in x {
        for k in 0..d {
            mean[k] += r[k] / rows as f64;
        }
    }
    for r in x {
        for k in 0..d {
            sd[k] += (r[k] - mean[k]).powi(2) / rows as f64;
        }
    }
    let sd: Vec<f64> = sd.iter().map(|v| if *v > 0.0 { v.sqrt() } else { 1.0 }).collect();
    let cols = 1 + d + d * (d + 1) / 2;
    DMatrix::from_fn(rows, cols, |i, c| {
        let z: Vec<f64> = (0..d).map(|k| (x[i][k] - mean[k]) / sd[k]).collect();
        if c == 0 {
            return 1.0;
        }
        if c <= d {
            return z[c - 1];
        }
        let mut idx = d;
        for a in 0..d {
            for b in a..d {
                idx += 1;
                if idx == c {
                    return z[a] * z[b];
                }
            }
        }
        unreachable!()
    })
}

/// Fitted continuation values of `y` regressed on `x`.
fn regress(x: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    if y.is_empty() {
        return Ok(vec![]);
    }
    let a = design(x);
    if a.nrows() < 2 * a.ncols() {
        let m = pairwise_sum(y) / y.len() as f64;
        return Ok(vec![m; y.len()]);
    }
    let b = DVector::from_column_slice(y);
    let (coef, _) = svd_least_squares(&a, &b, 1e-12)?;
    Ok((&a * coef).iter().copied().collect())
}

/// Prices a deal on a simulated field. The value is the cross-path mean of
/// deflated realised cash flows; exercise decisions use least-squares
/// continuation estimates.
pub fn price_mc(deal: &DealSpec, field: &Field) -> Result<Valuation> {
    let c = deal.compile()?;
    let h = field.h();
    if c.required_steps(h) > field.steps() {
        return Err(Error::Domain {
            what: "deal horizon beyond simulated field",
            value: c.horizon(),
            lo: 0.0,
            hi: field.time(field.steps()),
        });
    }
    let paths = field.paths();
    let anti = field.antithetic();
    let n_ex = c.exercise.as_ref().map_or(0, |e| e.dates.len());
    let seg: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|p| segment_values(&c, field, p, n_ex))
        .collect::<Result<_>>()?;
    let totals: Vec<f64> = seg.iter().map(|s| pairwise_sum(s)).collect();
    let (swap_pv, swap_se) = mean_and_se(&totals, anti);

    let Some(ex) = &c.exercise else {
        return Ok(Valuation {
            pv: swap_pv,
            std_error: swap_se,
            swap_pv,
            swap_std_error: swap_se,
            option_pv: 0.0,
            periods: vec![],
        });
    };
    let steps = c.exercise_steps(h);
    let mut periods: Vec<PeriodValue> = ex
        .dates
        .iter()
        .enumerate()
        .map(|(j, &d)| PeriodValue {
            period: j + 1,
            exercise_time: d,
            swap_value: pairwise_sum(&seg.iter().map(|s| s[j + 1]).collect::<Vec<_>>()) / paths as f64,
            option_value: 0.0,
        })
        .collect();

    // Regressors and deflators at each exercise date.
    let state_at = |j: usize| -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let n = steps[j];
        let t = field.time(n);
        let x = (0..paths)
            .into_par_iter()
            .map(|p| c.regressors(&local(field, n, p), t, j))
            .collect::<Result<Vec<_>>>()?;
        let d = (0..paths).map(|p| field.deflator(n, p)).collect();
        Ok((x, d))
    };

    let values: Vec<f64> = match ex.style {
        ExerciseStyle::Enter => {
            if c.flows.iter().any(|f| !f.is_vanilla()) {
                return Err(Error::invalid("enter-style exercise needs vanilla underlying flows"));
            }
            let mut cash = vec![0.0; paths];
            let mut when: Vec<Option<usize>> = vec![None; paths];
            for j in (0..n_ex).rev() {
                let n = steps[j];
                let t = field.time(n);
                let intr: Vec<f64> = (0..paths)
                    .into_par_iter()
                    .map(|p| c.intrinsic(&local(field, n, p), t, j))
                    .collect::<Result<_>>()?;
                let (x, defl) = state_at(j)?;
                let itm: Vec<usize> = (0..paths).filter(|&p| intr[p] > 0.0).collect();
                let cont = if j + 1 == n_ex {
                    vec![0.0; itm.len()]
                } else {
                    let xs: Vec<Vec<f64>> = itm.iter().map(|&p| x[p].clone()).collect();
                    let ys: Vec<f64> = itm.iter().map(|&p| cash[p] / defl[p]).collect();
                    regress(&xs, &ys)?
                };
                for (&p, cv) in itm.iter().zip(&cont) {
                    if intr[p] > *cv {
                        cash[p] = intr[p] * defl[p];
                        when[p] = Some(j);
                    }
                }
            }
            for p in 0..paths {
                if let Some(j) = when[p] {
                    periods[j].option_value += cash[p] / paths as f64;
                }
            }
            cash
        }
        ExerciseStyle::Cancel => {
            let mut rem = vec![0.0; paths];
            let mut when: Vec<Option<usize>> = vec![None; paths];
            for j in (0..n_ex).rev() {
                for p in 0..paths {
                    rem[p] += seg[p][j + 1];
                }
                let (x, defl) = state_at(j)?;
                let ys: Vec<f64> = (0..paths).map(|p| rem[p] / defl[p]).collect();
                let cont = regress(&x, &ys)?;
                for p in 0..paths {
                    if cont[p] < 0.0 {
                        rem[p] = 0.0;
                        when[p] = Some(j);
                    }
                }
            }
            for p in 0..paths {
                if let Some(j) = when[p] {
                    let forgone: f64 = seg[p][j + 1..].iter().sum();
                    periods[j].option_value -= forgone / paths as f64;
                }
            }
            (0..paths).map(|p| seg[p][0] + rem[p]).collect()
        }
    };
    let (pv, se) = mean_and_se(&values, anti);
    let option_pv = match ex.style {
        ExerciseStyle::Enter => pv,
        ExerciseStyle::Cancel => pv - swap_pv,
    };
    Ok(Valuation {
        pv,
        std_error: se,
        swap_pv,
        swap_std_error: swap_se,
        option_pv,
        periods,
    })
}

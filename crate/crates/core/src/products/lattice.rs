//! Pricing on the Krasker grid by backward induction.

use std::collections::BTreeMap;

use super::{Compiled, DealSpec, ExerciseStyle, Flow, FlowKind, PeriodValue, Valuation};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::marketdata::DiscountCurve;

struct CurveCache<'g> {
    grid: &'g Grid,
    slices: BTreeMap<usize, Vec<DiscountCurve>>,
}

impl<'g> CurveCache<'g> {
    fn new(grid: &'g Grid) -> Self {
        Self { grid, slices: BTreeMap::new() }
    }

    fn get(&mut self, n: usize) -> &[DiscountCurve] {
        let grid = self.grid;
        self.slices.entry(n).or_insert_with(|| {
            let s = grid.slice(n);
            (0..s.len()).map(|i| s.node_curve(i)).collect()
        })
    }
}

/// Node values of a flow on its determination slice `n`.
fn flow_values(flow: &Flow, n: usize, grid: &Grid, cache: &mut CurveCache<'_>) -> Result<Vec<f64>> {
    let t = grid.time(n);
    let base: Vec<f64> = cache.get(n).iter().map(|c| flow.local_value(c, t)).collect::<Result<_>>()?;
    let FlowKind::RangeAccrual { obs, .. } = &flow.kind else {
        return Ok(base);
    };
    // Expected discounted observation payoffs, rolled back to the fixing slice.
    let h = grid.h();
    let mut at: BTreeMap<usize, usize> = BTreeMap::new();
    for &o in obs {
        *at.entry(((o / h).round() as usize).max(n)).or_default() += 1;
    }
    let last = *at.keys().next_back().unwrap();
    let mut u = vec![0.0; grid.slice(last).len()];
    for m in (n..=last).rev() {
        if m < last {
            u = grid.rollback(m + 1, &u);
        }
        if let Some(&count) = at.get(&m) {
            let tm = grid.time(m);
            for (ui, c) in u.iter_mut().zip(cache.get(m)) {
                *ui += count as f64 * flow.observation(c, tm)?;
            }
        }
    }
    Ok(base.iter().zip(&u).map(|(f, o)| f * o).collect())
}

fn add(v: &mut [f64], w: &[f64]) {
    for (a, b) in v.iter_mut().zip(w) {
        *a += b;
    }
}

/// Prices a deal on a fitted grid.
pub fn price_grid(deal: &DealSpec, grid: &Grid) -> Result<Valuation> {
    let c: Compiled = deal.compile()?;
    let h = grid.h();
    if c.required_steps(h) > grid.steps() {
        return Err(Error::Domain {
            what: "deal horizon beyond grid",
            value: c.horizon(),
            lo: 0.0,
            hi: grid.time(grid.steps()),
        });
    }
    let mut cache = CurveCache::new(grid);
    let mut by_step: BTreeMap<usize, Vec<(usize, Vec<f64>)>> = BTreeMap::new();
    let mut swap_pv = 0.0;
    let n_ex = c.exercise.as_ref().map_or(0, |e| e.dates.len());
    let mut seg_pv = vec![0.0; n_ex];
    for (idx, f) in c.flows.iter().enumerate() {
        let n = c.determination_step(f, h);
        let vals = flow_values(f, n, grid, &mut cache)?;
        let pv = grid.expectation(n, &vals);
        swap_pv += pv;
        if let Some(j) = c.segment(f) {
            seg_pv[j] += pv;
        }
        by_step.entry(n).or_default().push((idx, vals));
    }
    let Some(ex) = &c.exercise else {
        return Ok(Valuation {
            pv: swap_pv,
            std_error: 0.0,
            swap_pv,
            swap_std_error: 0.0,
            option_pv: 0.0,
            periods: vec![],
        });
    };
    let ex_steps = c.exercise_steps(h);
    if ex_steps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("exercise dates collapse onto one grid step"));
    }
    if ex.style == ExerciseStyle::Enter && c.flows.iter().any(|f| !f.is_vanilla()) {
        return Err(Error::invalid("enter-style exercise needs vanilla underlying flows"));
    }
    let last = ex_steps
        .iter()
        .copied()
        .chain(by_step.keys().copied())
        .max()
        .unwrap_or(0);

    // Backward induction. `v` is the deal value, `u` the value of the
    // underlying flows still to come (cancel style only).
    let mut v = vec![0.0; grid.slice(last).len()];
    let mut u = v.clone();
    let mut decisions: Vec<(Vec<bool>, Vec<f64>)> = vec![(vec![], vec![]); n_ex];
    for n in (0..=last).rev() {
        if n < last {
            v = grid.rollback(n + 1, &v);
            u = grid.rollback(n + 1, &u);
        }
        let here = ex_steps.iter().position(|&s| s == n);
        let flows = by_step.get(&n);
        let controlled = |idx: usize, j: usize| c.segment(&c.flows[idx]).is_some_and(|s| s >= j);
        if ex.style == ExerciseStyle::Cancel {
            if let (Some(j), Some(fl)) = (here, flows) {
                for (_, vals) in fl.iter().filter(|(idx, _)| controlled(*idx, j)) {
                    add(&mut v, vals);
                    add(&mut u, vals);
                }
            }
        }
        if let Some(j) = here {
            let t = grid.time(n);
            match ex.style {
                ExerciseStyle::Enter => {
                    let intr: Vec<f64> = cache.get(n).iter().map(|cv| c.intrinsic(cv, t, j)).collect::<Result<_>>()?;
                    let mask: Vec<bool> = intr.iter().zip(&v).map(|(a, b)| a > b).collect();
                    for (vi, (a, m)) in v.iter_mut().zip(intr.iter().zip(&mask)) {
                        if *m {
                            *vi = *a;
                        }
                    }
                    decisions[j] = (mask, intr);
                }
                ExerciseStyle::Cancel => {
                    let mask: Vec<bool> = v.iter().map(|x| *x < 0.0).collect();
                    let payoff: Vec<f64> = u.iter().map(|x| -x).collect();
                    for (vi, m) in v.iter_mut().zip(&mask) {
                        if *m {
                            *vi = 0.0;
                        }
                    }
                    decisions[j] = (mask, payoff);
                }
            }
        }
        if ex.style == ExerciseStyle::Cancel {
            if let Some(fl) = flows {
                for (idx, vals) in fl {
                    if here.is_some_and(|j| controlled(*idx, j)) {
                        continue;
                    }
                    add(&mut v, vals);
                    add(&mut u, vals);
                }
            }
        }
    }
    let pv = v[0];

    // Attribute option value to exercise periods with surviving state prices.
    let mut periods: Vec<PeriodValue> = ex
        .dates
        .iter()
        .enumerate()
        .map(|(j, &d)| PeriodValue { period: j + 1, exercise_time: d, swap_value: seg_pv[j], option_value: 0.0 })
        .collect();
    let mut w = vec![1.0];
    for n in 0..=last {
        if let Some(j) = ex_steps.iter().position(|&s| s == n) {
            let (mask, pay) = &decisions[j];
            for i in 0..w.len() {
                if mask[i] {
                    periods[j].option_value += w[i] * pay[i];
                    w[i] = 0.0;
                }
            }
        }
        if n < last {
            w = grid.propagate(n, &w);
        }
    }
    let option_pv = match ex.style {
        ExerciseStyle::Enter => pv,
        ExerciseStyle::Cancel => pv - swap_pv,
    };
    Ok(Valuation { pv, std_error: 0.0, swap_pv, swap_std_error: 0.0, option_pv, periods })
}

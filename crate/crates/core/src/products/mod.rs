//! Deal descriptions, cash-flow compilation and pricing.
//!
//! A [`DealSpec`] is compiled into a list of [`Flow`]s, each tagged with the
//! accrual start that decides which exercise segment it belongs to, and an
//! optional exercise schedule. Vanilla flows (no optionality in the coupon)
//! are valued from the state curve at or before their fixing date; every
//! non-vanilla coupon is resolved on the single state curve nearest its
//! fixing date. Pricing lives in [`mc`] (least-squares exercise) and
//! [`lattice`] (backward induction).

pub mod lattice;
pub mod mc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridConfig};
use crate::marketdata::{DiscountCurve, OptionSide, ACT360_FACTOR};
use crate::model::{ModelConfig, VolSurface};
use crate::montecarlo::{simulate, PathState, SimulationConfig};

pub use lattice::price_grid;
pub use mc::price_mc;

const DATE_EPS: f64 = 1e-9;

/// Local discount function of a state curve observed at some time `t`:
/// `df(0) = 1` and `df(s)` discounts from `t + s` back to `t`.
pub trait StateCurve {
    fn df(&self, s: f64) -> f64;
}

impl StateCurve for DiscountCurve {
    fn df(&self, s: f64) -> f64 {
        DiscountCurve::df(self, s)
    }
}

/// Undeflated view of a Monte Carlo path curve.
#[derive(Debug, Clone, Copy)]
pub struct LocalPath<'a>(pub PathState<'a>);

impl StateCurve for LocalPath<'_> {
    fn df(&self, s: f64) -> f64 {
        (self.0.log_df(s) - self.0.log_dfs[0]).exp()
    }
}

/// Annuity `Σ Δ df(start + jΔ)` of a regular 30/360 leg.
pub fn annuity<C: StateCurve + ?Sized>(curve: &C, start: f64, tenor: f64, freq: u32) -> f64 {
    let dt = 1.0 / freq as f64;
    let n = (tenor * freq as f64).round() as usize;
    (1..=n).map(|j| dt * curve.df(start + j as f64 * dt)).sum()
}

/// Swap rate that zeroes a single-curve swap from `start` over `tenor`.
pub fn swap_rate<C: StateCurve + ?Sized>(curve: &C, start: f64, tenor: f64, freq: u32) -> Result<f64> {
    let a = annuity(curve, start, tenor, freq);
    if !(a > 0.0) {
        return Err(Error::Numerical(format!("zero annuity for tenor {tenor}")));
    }
    Ok((curve.df(start) - curve.df(start + tenor)) / a)
}

/// Swap value per unit notional for the fixed-rate payer:
/// `df(start) − df(end) − X · annuity`.
pub fn value_swap<C: StateCurve + ?Sized>(curve: &C, start: f64, tenor: f64, rate: f64, freq: u32) -> f64 {
    curve.df(start) - curve.df(start + tenor) - rate * annuity(curve, start, tenor, freq)
}

/// Swaption payoff per unit notional on a state curve at expiry:
/// `max(±(S − K), 0) · annuity`.
pub fn swaption_payoff<C: StateCurve + ?Sized>(curve: &C, strike: f64, tenor: f64, freq: u32, side: OptionSide) -> f64 {
    let a = annuity(curve, 0.0, tenor, freq);
    let s = (1.0 - curve.df(tenor)) / a;
    (side.sign() * (s - strike)).max(0.0) * a
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DayCount {
    #[default]
    Thirty360,
    Act360,
}

impl DayCount {
    /// Accrual of a regular period of `1/freq` years.
    pub fn accrual(self, freq: u32) -> f64 {
        let base = 1.0 / freq as f64;
        match self {
            DayCount::Thirty360 => base,
            DayCount::Act360 => base * ACT360_FACTOR,
        }
    }
}

/// Accrual periods `(start, end)` of a regular schedule.
pub fn schedule(start: f64, end: f64, freq: u32) -> Result<Vec<(f64, f64)>> {
    if freq == 0 || !(end > start) {
        return Err(Error::invalid(format!("bad schedule {start}..{end} at frequency {freq}")));
    }
    let dt = 1.0 / freq as f64;
    let n = ((end - start) / dt).round() as usize;
    if ((end - start) - n as f64 * dt).abs() > 1e-9 {
        return Err(Error::invalid(format!("schedule {start}..{end} is not a whole number of periods")));
    }
    Ok((0..n).map(|j| (start + j as f64 * dt, start + (j + 1) as f64 * dt)).collect())
}

fn default_freq2() -> u32 {
    2
}

fn default_freq4() -> u32 {
    4
}

fn default_obs() -> usize {
    26
}

/// A fixed-for-float swap leg pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapSpec {
    pub notional: f64,
    pub start: f64,
    pub end: f64,
    pub fixed_rate: f64,
    #[serde(default = "default_freq2")]
    pub fixed_frequency: u32,
    #[serde(default = "default_freq4")]
    pub float_frequency: u32,
    /// Pay fixed and receive float when true.
    #[serde(default = "pay_fixed_default")]
    pub pay_fixed: bool,
}

fn pay_fixed_default() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExerciseStyle {
    /// Right to enter the remaining swap.
    Enter,
    /// Right to cancel the remaining swap.
    Cancel,
}

/// Declarative deal document. Times are year fractions from valuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DealSpec {
    ZeroCouponBond {
        notional: f64,
        maturity: f64,
    },
    VanillaSwap(SwapSpec),
    EuropeanSwaption {
        notional: f64,
        expiry: f64,
        tenor: f64,
        strike: f64,
        #[serde(default = "default_freq2")]
        fixed_frequency: u32,
        side: OptionSide,
    },
    Bermudan {
        style: ExerciseStyle,
        swap: SwapSpec,
        first_exercise: f64,
        #[serde(default = "default_freq2")]
        exercise_frequency: u32,
    },
    /// Strip of coupons `max(gearing · (CMS_long − CMS_short), floor)`.
    CmsSpreadOption {
        notional: f64,
        start: f64,
        end: f64,
        #[serde(default = "default_freq4")]
        frequency: u32,
        long_tenor: f64,
        short_tenor: f64,
        gearing: f64,
        #[serde(default)]
        floor: f64,
        #[serde(default = "default_freq2")]
        cms_frequency: u32,
        #[serde(default)]
        day_count: DayCount,
    },
    /// Receives `gearing · max(CMS_long − CMS_short, 0)` and pays a fixed
    /// rate, with an optional right to cancel on one date.
    CmsSpreadSwap {
        notional: f64,
        start: f64,
        end: f64,
        #[serde(default = "default_freq4")]
        frequency: u32,
        fixed_rate: f64,
        long_tenor: f64,
        short_tenor: f64,
        gearing: f64,
        #[serde(default = "default_freq2")]
        cms_frequency: u32,
        #[serde(default)]
        day_count: DayCount,
        #[serde(default)]
        cancel_date: Option<f64>,
    },
    /// Pays `max(cap − LIBOR, 0) · n/N` where `n/N` is the fraction of
    /// observations with `CMS_long − CMS_short > 0`, receives LIBOR, and
    /// may be cancelled on each call date.
    CallableRangeAccrual {
        notional: f64,
        start: f64,
        end: f64,
        #[serde(default = "default_freq2")]
        frequency: u32,
        cap_rate: f64,
        long_tenor: f64,
        short_tenor: f64,
        #[serde(default = "default_freq2")]
        cms_frequency: u32,
        first_call: f64,
        #[serde(default = "default_freq2")]
        call_frequency: u32,
        #[serde(default = "default_obs")]
        obs_per_period: usize,
    },
}

impl DealSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::parse("empty deal document"));
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn name(&self) -> &'static str {
        match self {
            DealSpec::ZeroCouponBond { .. } => "zero_coupon_bond",
            DealSpec::VanillaSwap(_) => "vanilla_swap",
            DealSpec::EuropeanSwaption { .. } => "european_swaption",
            DealSpec::Bermudan { .. } => "bermudan",
            DealSpec::CmsSpreadOption { .. } => "cms_spread_option",
            DealSpec::CmsSpreadSwap { .. } => "cms_spread_swap",
            DealSpec::CallableRangeAccrual { .. } => "callable_range_accrual",
        }
    }

    /// Same deal with every amount scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut d = self.clone();
        match &mut d {
            DealSpec::ZeroCouponBond { notional, .. }
            | DealSpec::EuropeanSwaption { notional, .. }
            | DealSpec::CmsSpreadOption { notional, .. }
            | DealSpec::CmsSpreadSwap { notional, .. }
            | DealSpec::CallableRangeAccrual { notional, .. } => *notional *= factor,
            DealSpec::VanillaSwap(s) | DealSpec::Bermudan { swap: s, .. } => s.notional *= factor,
        }
        d
    }

    pub fn compile(&self) -> Result<Compiled> {
        compile(self)
    }
}

/// Cash-flow payoff types.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowKind {
    /// `rate · accrual · df(pay)`.
    Fixed { rate: f64, accrual: f64 },
    /// Single-curve floating coupon: `df(start) − df(pay)`.
    Float,
    /// `1 · df(pay)`.
    Bullet,
    /// `max(gearing · (CMS_long − CMS_short), floor) · accrual · df(pay)`.
    CmsSpread {
        gearing: f64,
        floor: f64,
        long: f64,
        short: f64,
        cms_freq: u32,
        accrual: f64,
    },
    /// `max(cap − L, 0) · accrual · (1/N) Σ_j 1{CMS_long − CMS_short > 0 at obs_j}`,
    /// with `L` the simple ACT/360 LIBOR for the period fixed at its start.
    RangeAccrual {
        cap: f64,
        long: f64,
        short: f64,
        cms_freq: u32,
        accrual: f64,
        obs: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    /// Accrual start; decides the exercise segment.
    pub start: f64,
    pub fix: f64,
    pub pay: f64,
    /// Signed notional.
    pub notional: f64,
    pub kind: FlowKind,
}

impl Flow {
    pub fn is_vanilla(&self) -> bool {
        matches!(self.kind, FlowKind::Fixed { .. } | FlowKind::Float | FlowKind::Bullet)
    }

    /// Value at time `t` on the state curve observed at `t`. Range-accrual
    /// flows return their fixing factor `max(cap − L, 0) · accrual / N`.
    pub fn local_value<C: StateCurve + ?Sized>(&self, curve: &C, t: f64) -> Result<f64> {
        let n = self.notional;
        Ok(match &self.kind {
            FlowKind::Fixed { rate, accrual } => n * rate * accrual * curve.df(self.pay - t),
            FlowKind::Float => n * (curve.df(self.start - t) - curve.df(self.pay - t)),
            FlowKind::Bullet => n * curve.df(self.pay - t),
            FlowKind::CmsSpread { gearing, floor, long, short, cms_freq, accrual } => {
                let spread = swap_rate(curve, 0.0, *long, *cms_freq)? - swap_rate(curve, 0.0, *short, *cms_freq)?;
                n * (gearing * spread).max(*floor) * accrual * curve.df(self.pay - t)
            }
            FlowKind::RangeAccrual { cap, accrual, obs, .. } => {
                let tau = self.pay - self.start;
                let libor = (1.0 / curve.df(tau) - 1.0) / (tau * ACT360_FACTOR);
                n * (cap - libor).max(0.0) * accrual / obs.len() as f64
            }
        })
    }

    /// Range-accrual observation: `1{spread > 0} · df(pay − t)`.
    pub fn observation<C: StateCurve + ?Sized>(&self, curve: &C, t: f64) -> Result<f64> {
        match &self.kind {
            FlowKind::RangeAccrual { long, short, cms_freq, .. } => {
                let spread = swap_rate(curve, 0.0, *long, *cms_freq)? - swap_rate(curve, 0.0, *short, *cms_freq)?;
                Ok(if spread > 0.0 { curve.df(self.pay - t) } else { 0.0 })
            }
            _ => Err(Error::invalid("observation on a non-accrual flow")),
        }
    }
}

/// Continuation-regression variables at an exercise date.
#[derive(Debug, Clone, PartialEq)]
pub enum Regressors {
    /// Par rate of the remaining fixed leg.
    RemainingSwapRate,
    /// Two CMS rates of the state curve.
    Cms { long: f64, short: f64, freq: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exercise {
    pub style: ExerciseStyle,
    pub dates: Vec<f64>,
    pub regressors: Regressors,
}

/// Flows plus exercise rights.
#[derive(Debug, Clone, PartialEq)]
pub struct Compiled {
    pub flows: Vec<Flow>,
    pub exercise: Option<Exercise>,
}

impl Compiled {
    /// Latest time at which engine state is needed.
    pub fn horizon(&self) -> f64 {
        let mut t: f64 = 0.0;
        for f in &self.flows {
            t = t.max(f.fix);
            if let FlowKind::RangeAccrual { obs, .. } = &f.kind {
                t = obs.iter().fold(t, |a, b| a.max(*b));
            }
        }
        if let Some(ex) = &self.exercise {
            t = ex.dates.iter().fold(t, |a, b| a.max(*b));
        }
        t
    }

    /// Steps of length `h` needed to reach the horizon.
    pub fn required_steps(&self, h: f64) -> usize {
        (self.horizon() / h - 1e-9).ceil().max(0.0) as usize
    }

    /// Exercise segment of a flow: index of the last exercise date on or
    /// before its accrual start, or `None` if it precedes every date.
    pub fn segment(&self, flow: &Flow) -> Option<usize> {
        let ex = self.exercise.as_ref()?;
        ex.dates.iter().rposition(|d| *d <= flow.start + DATE_EPS)
    }

    /// Step on which a flow is valued: the step at or before the fixing
    /// for vanilla flows, the nearest step otherwise, never earlier than
    /// the step of the exercise that controls it.
    pub fn determination_step(&self, flow: &Flow, h: f64) -> usize {
        let x = flow.fix / h;
        let mut n = if flow.is_vanilla() {
            (x + 1e-9).floor().max(0.0) as usize
        } else {
            x.round().max(0.0) as usize
        };
        if let (Some(j), Some(ex)) = (self.segment(flow), &self.exercise) {
            n = n.max((ex.dates[j] / h).round() as usize);
        }
        n
    }

    pub fn exercise_steps(&self, h: f64) -> Vec<usize> {
        self.exercise
            .as_ref()
            .map(|e| e.dates.iter().map(|d| (d / h).round() as usize).collect())
            .unwrap_or_default()
    }

    /// Regression variables on the state curve at exercise `j`.
    pub fn regressors<C: StateCurve + ?Sized>(&self, curve: &C, t: f64, j: usize) -> Result<Vec<f64>> {
        let ex = self.exercise.as_ref().ok_or_else(|| Error::invalid("deal has no exercise"))?;
        match &ex.regressors {
            Regressors::RemainingSwapRate => {
                let mut float = 0.0;
                let mut ann = 0.0;
                for f in self.flows.iter().filter(|f| self.segment(f).is_some_and(|s| s >= j)) {
                    match f.kind {
                        FlowKind::Float => float += curve.df(f.start - t) - curve.df(f.pay - t),
                        FlowKind::Fixed { accrual, .. } => ann += accrual * curve.df(f.pay - t),
                        _ => {}
                    }
                }
                Ok(vec![if ann > 0.0 { float / ann } else { 0.0 }])
            }
            Regressors::Cms { long, short, freq } => Ok(vec![
                swap_rate(curve, 0.0, *long, *freq)?,
                swap_rate(curve, 0.0, *short, *freq)?,
            ]),
        }
    }

    /// Value at exercise `j` of every flow in segments `≥ j`, for deals
    /// whose flows are all vanilla.
    pub fn intrinsic<C: StateCurve + ?Sized>(&self, curve: &C, t: f64, j: usize) -> Result<f64> {
        let mut v = 0.0;
        for f in self.flows.iter().filter(|f| self.segment(f).is_some_and(|s| s >= j)) {
            v += f.local_value(curve, t)?;
        }
        Ok(v)
    }
}

fn swap_flows(s: &SwapSpec) -> Result<Vec<Flow>> {
    let sign = if s.pay_fixed { 1.0 } else { -1.0 };
    let mut flows = Vec::new();
    for (a, b) in schedule(s.start, s.end, s.float_frequency)? {
        flows.push(Flow { start: a, fix: a, pay: b, notional: sign * s.notional, kind: FlowKind::Float });
    }
    let accrual = DayCount::Thirty360.accrual(s.fixed_frequency);
    for (a, b) in schedule(s.start, s.end, s.fixed_frequency)? {
        flows.push(Flow {
            start: a,
            fix: a,
            pay: b,
            notional: -sign * s.notional,
            kind: FlowKind::Fixed { rate: s.fixed_rate, accrual },
        });
    }
    Ok(flows)
}

fn exercise_dates(first: f64, end: f64, freq: u32) -> Result<Vec<f64>> {
    if freq == 0 || first < 0.0 {
        return Err(Error::invalid("bad exercise schedule"));
    }
    let dt = 1.0 / freq as f64;
    let dates: Vec<f64> = (0..)
        .map(|j| first + j as f64 * dt)
        .take_while(|d| *d < end - DATE_EPS)
        .collect();
    if dates.is_empty() {
        return Err(Error::invalid("no exercise date before the deal end"));
    }
    Ok(dates)
}

fn check_positive(what: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::invalid(format!("{what} must be positive, got {v}")));
    }
    Ok(())
}

fn compile(deal: &DealSpec) -> Result<Compiled> {
    Ok(match deal {
        DealSpec::ZeroCouponBond { notional, maturity } => {
            check_positive("maturity", *maturity)?;
            Compiled {
                flows: vec![Flow { start: 0.0, fix: *maturity, pay: *maturity, notional: *notional, kind: FlowKind::Bullet }],
                exercise: None,
            }
        }
        DealSpec::VanillaSwap(s) => Compiled { flows: swap_flows(s)?, exercise: None },
        DealSpec::EuropeanSwaption { notional, expiry, tenor, strike, fixed_frequency, side } => {
            check_positive("tenor", *tenor)?;
            let swap = SwapSpec {
                notional: *notional,
                start: *expiry,
                end: expiry + tenor,
                fixed_rate: *strike,
                fixed_frequency: *fixed_frequency,
                float_frequency: *fixed_frequency,
                pay_fixed: *side == OptionSide::Payer,
            };
            Compiled {
                flows: swap_flows(&swap)?,
                exercise: Some(Exercise {
                    style: ExerciseStyle::Enter,
                    dates: vec![*expiry],
                    regressors: Regressors::RemainingSwapRate,
                }),
            }
        }
        DealSpec::Bermudan { style, swap, first_exercise, exercise_frequency } => Compiled {
            flows: swap_flows(swap)?,
            exercise: Some(Exercise {
                style: *style,
                dates: exercise_dates(*first_exercise, swap.end, *exercise_frequency)?,
                regressors: Regressors::RemainingSwapRate,
            }),
        },
        DealSpec::CmsSpreadOption {
            notional, start, end, frequency, long_tenor, short_tenor, gearing, floor, cms_frequency, day_count,
        } => {
            let accrual = day_count.accrual(*frequency);
            let flows = schedule(*start, *end, *frequency)?
                .into_iter()
                .map(|(a, b)| Flow {
                    start: a,
                    fix: a,
                    pay: b,
                    notional: *notional,
                    kind: FlowKind::CmsSpread {
                        gearing: *gearing,
                        floor: *floor,
                        long: *long_tenor,
                        short: *short_tenor,
                        cms_freq: *cms_frequency,
                        accrual,
                    },
                })
                .collect();
            Compiled { flows, exercise: None }
        }
        DealSpec::CmsSpreadSwap {
            notional, start, end, frequency, fixed_rate, long_tenor, short_tenor, gearing, cms_frequency, day_count,
            cancel_date,
        } => {
            let accrual = day_count.accrual(*frequency);
            let mut flows = Vec::new();
            for (a, b) in schedule(*start, *end, *frequency)? {
                flows.push(Flow {
                    start: a,
                    fix: a,
                    pay: b,
                    notional: *notional,
                    kind: FlowKind::CmsSpread {
                        gearing: *gearing,
                        floor: 0.0,
                        long: *long_tenor,
                        short: *short_tenor,
                        cms_freq: *cms_frequency,
                        accrual,
                    },
                });
                flows.push(Flow {
                    start: a,
                    fix: a,
                    pay: b,
                    notional: -notional,
                    kind: FlowKind::Fixed { rate: *fixed_rate, accrual },
                });
            }
            let exercise = cancel_date.map(|d| Exercise {
                style: ExerciseStyle::Cancel,
                dates: vec![d],
                regressors: Regressors::Cms { long: *long_tenor, short: *short_tenor, freq: *cms_frequency },
            });
            Compiled { flows, exercise }
        }
        DealSpec::CallableRangeAccrual {
            notional, start, end, frequency, cap_rate, long_tenor, short_tenor, cms_frequency, first_call,
            call_frequency, obs_per_period,
        } => {
            if *obs_per_period == 0 {
                return Err(Error::invalid("obs_per_period must be positive"));
            }
            let accrual = DayCount::Thirty360.accrual(*frequency);
            let mut flows = Vec::new();
            for (a, b) in schedule(*start, *end, *frequency)? {
                let obs = (0..*obs_per_period)
                    .map(|j| a + (b - a) * j as f64 / *obs_per_period as f64)
                    .collect();
                flows.push(Flow { start: a, fix: a, pay: b, notional: *notional, kind: FlowKind::Float });
                flows.push(Flow {
                    start: a,
                    fix: a,
                    pay: b,
                    notional: -notional,
                    kind: FlowKind::RangeAccrual {
                        cap: *cap_rate,
                        long: *long_tenor,
                        short: *short_tenor,
                        cms_freq: *cms_frequency,
                        accrual,
                        obs,
                    },
                });
            }
            Compiled {
                flows,
                exercise: Some(Exercise {
                    style: ExerciseStyle::Cancel,
                    dates: exercise_dates(*first_call, *end, *call_frequency)?,
                    regressors: Regressors::Cms { long: *long_tenor, short: *short_tenor, freq: *cms_frequency },
                }),
            }
        }
    })
}

/// Value attributed to one exercise period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodValue {
    pub period: usize,
    pub exercise_time: f64,
    /// Value of the underlying flows in this period.
    pub swap_value: f64,
    /// Option value realised by exercising in this period.
    pub option_value: f64,
}

/// Pricing result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Valuation {
    /// Deal value: the option for enter-style deals, the swap including
    /// the holder's cancellation right for cancel-style deals.
    pub pv: f64,
    /// Monte Carlo standard error; zero on the grid.
    pub std_error: f64,
    /// Value of all underlying flows without exercise.
    pub swap_pv: f64,
    pub swap_std_error: f64,
    /// Value of the exercise right alone.
    pub option_pv: f64,
    pub periods: Vec<PeriodValue>,
}

impl Valuation {
    pub fn write_periods_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "period,exercise_time,swap_value,option_value")?;
        for p in &self.periods {
            writeln!(w, "{},{},{:.6},{:.6}", p.period, p.exercise_time, p.swap_value, p.option_value)?;
        }
        Ok(())
    }
}

/// Pricing engine selection.
#[derive(Debug, Clone, PartialEq)]
pub enum Engine {
    Grid { intervals: usize },
    MonteCarlo { paths: usize, seed: u64, antithetic: bool },
}

/// Prices several deals on one engine build covering all of them.
pub fn price_all(
    deals: &[DealSpec],
    curve: &DiscountCurve,
    surface: &VolSurface,
    model: &ModelConfig,
    engine: &Engine,
) -> Result<Vec<Valuation>> {
    let mut steps = 1;
    for d in deals {
        steps = steps.max(d.compile()?.required_steps(model.h));
    }
    match engine {
        Engine::Grid { intervals } => {
            let grid = Grid::build(curve, surface, model, &GridConfig { intervals: *intervals, steps })?;
            deals.iter().map(|d| price_grid(d, &grid)).collect()
        }
        Engine::MonteCarlo { paths, seed, antithetic } => {
            let sim = SimulationConfig { paths: *paths, steps, seed: *seed, antithetic: *antithetic };
            let field = simulate(curve, surface, model, &sim)?;
            deals.iter().map(|d| price_mc(d, &field)).collect()
        }
    }
}

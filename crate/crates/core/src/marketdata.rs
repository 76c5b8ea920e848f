//! Market snapshots, discount curves and Black-76 swaption targets.

use chrono::NaiveDate;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::solve_bracketed;

/// ACT/360 accrual on a regular period of `years` (365-day year).
pub const ACT360_FACTOR: f64 = 365.0 / 360.0;

const TERM_EPS: f64 = 1e-12;

/// Parses a tenor label such as `3M`, `10Y` or `18m` into years.
pub fn parse_tenor(label: &str) -> Result<f64> {
    let label = label.trim();
    if label.len() < 2 {
        return Err(Error::parse(format!("bad tenor label '{label}'")));
    }
    let (num, unit) = label.split_at(label.len() - 1);
    let n: f64 = num
        .parse()
        .map_err(|_| Error::parse(format!("bad tenor label '{label}'")))?;
    match unit {
        "Y" | "y" => Ok(n),
        "M" | "m" => Ok(n / 12.0),
        "W" | "w" => Ok(n * 7.0 / 365.0),
        _ => Err(Error::parse(format!("bad tenor unit in '{label}'"))),
    }
}

/// Formats a tenor in years as a label (`3M`, `10Y`).
pub fn tenor_label(years: f64) -> String {
    let months = years * 12.0;
    if (years - years.round()).abs() < 1e-9 && years >= 1.0 {
        format!("{}Y", years.round() as i64)
    } else if (months - months.round()).abs() < 1e-9 {
        format!("{}M", months.round() as i64)
    } else {
        format!("{years}Y")
    }
}

/// Which quoted curve to bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Libor,
    Ois,
}

/// Lognormal ATM swaption volatility quotes, expiry by tenor, in decimals.
#[derive(Debug, Clone, PartialEq)]
pub struct VolMatrix {
    pub expiries: Vec<f64>,
    pub tenors: Vec<f64>,
    /// Row-major by expiry.
    pub vols: Vec<f64>,
}

impl VolMatrix {
    pub fn new(expiries: Vec<f64>, tenors: Vec<f64>, vols: Vec<f64>) -> Result<Self> {
        check_increasing("expiries", &expiries)?;
        check_increasing("tenors", &tenors)?;
        if vols.len() != expiries.len() * tenors.len() {
            return Err(Error::invalid(format!(
                "vol matrix has {} values, expected {}x{}",
                vols.len(),
                expiries.len(),
                tenors.len()
            )));
        }
        if let Some(v) = vols.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid(format!("non-positive vol quote {v}")));
        }
        Ok(Self {
            expiries,
            tenors,
            vols,
        })
    }

    pub fn get(&self, i_expiry: usize, i_tenor: usize) -> f64 {
        self.vols[i_expiry * self.tenors.len() + i_tenor]
    }

    /// Quote at an exact (expiry, tenor) node.
    pub fn quote(&self, expiry: f64, tenor: f64) -> Option<f64> {
        let i = self.expiries.iter().position(|e| (e - expiry).abs() < 1e-9)?;
        let j = self.tenors.iter().position(|t| (t - tenor).abs() < 1e-9)?;
        Some(self.get(i, j))
    }

    /// Bilinear interpolation of the quotes, flat outside the quoted box.
    /// Used to fill integer expiry/tenor grids that the market does not quote.
    pub fn interpolated(&self, expiry: f64, tenor: f64) -> f64 {
        let (i0, i1, wi) = bracket(&self.expiries, expiry);
        let (j0, j1, wj) = bracket(&self.tenors, tenor);
        let v00 = self.get(i0, j0);
        let v01 = self.get(i0, j1);
        let v10 = self.get(i1, j0);
        let v11 = self.get(i1, j1);
        (1.0 - wi) * ((1.0 - wj) * v00 + wj * v01) + wi * ((1.0 - wj) * v10 + wj * v11)
    }
}

fn bracket(xs: &[f64], x: f64) -> (usize, usize, f64) {
    let n = xs.len();
    if n == 1 || x <= xs[0] {
        return (0, 0, 0.0);
    }
    if x >= xs[n - 1] {
        return (n - 1, n - 1, 0.0);
    }
    let k = xs.partition_point(|&v| v <= x) - 1;
    let w = (x - xs[k]) / (xs[k + 1] - xs[k]);
    (k, k + 1, w)
}

fn check_increasing(what: &str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::invalid(format!("{what}: empty")));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid(format!("{what}: not strictly increasing")));
    }
    Ok(())
}

/// Market inputs on one valuation date. Rates and vols are decimals.
#[derive(Debug, Clone)]
pub struct MarketSnapshot {
    pub valuation_date: NaiveDate,
    /// Short LIBOR fixings `(tenor years, simple ACT/360 rate)`.
    pub libor_fixings: Vec<(f64, f64)>,
    /// Par swap rates `(tenor years, rate)`.
    pub swap_rates: Vec<(f64, f64)>,
    pub ois_rates: Vec<(f64, f64)>,
    pub swaption_vols: Option<VolMatrix>,
}

impl MarketSnapshot {
    pub fn validate(&self) -> Result<()> {
        for (what, xs) in [
            ("libor fixings", &self.libor_fixings),
            ("swap rates", &self.swap_rates),
            ("ois rates", &self.ois_rates),
        ] {
            if xs.is_empty() {
                continue;
            }
            let tenors: Vec<f64> = xs.iter().map(|p| p.0).collect();
            check_increasing(what, &tenors)?;
        }
        if self.swap_rates.is_empty() {
            return Err(Error::invalid("no swap rates"));
        }
        Ok(())
    }
}

/// Term-indexed discount factors with log-linear interpolation.
///
/// `anchor` is the curve date in years from valuation (zero for the initial
/// curve, `t` for a state curve observed at `t`). Terms are measured from
/// the anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountCurve {
    anchor: f64,
    terms: Vec<f64>,
    log_dfs: Vec<f64>,
}

impl DiscountCurve {
    pub fn new(terms: Vec<f64>, dfs: Vec<f64>) -> Result<Self> {
        Self::with_anchor(0.0, terms, dfs)
    }

    pub fn with_anchor(anchor: f64, terms: Vec<f64>, dfs: Vec<f64>) -> Result<Self> {
        if terms.len() != dfs.len() || terms.len() < 2 {
            return Err(Error::invalid("curve needs at least two matching terms and dfs"));
        }
        if terms[0] != 0.0 || (dfs[0] - 1.0).abs() > 1e-14 {
            return Err(Error::invalid("curve must start at term 0 with df 1"));
        }
        check_increasing("curve terms", &terms)?;
        if let Some(d) = dfs.iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
            return Err(Error::invalid(format!("non-positive discount factor {d}")));
        }
        let log_dfs = dfs.iter().map(|d| d.ln()).collect();
        Ok(Self {
            anchor,
            terms,
            log_dfs,
        })
    }

    /// Unchecked constructor from log discount factors; `terms[0]` must be 0
    /// and `log_dfs[0]` must be 0.
    pub(crate) fn from_log_dfs(anchor: f64, terms: Vec<f64>, log_dfs: Vec<f64>) -> Self {
        debug_assert!(terms.len() == log_dfs.len() && terms.len() >= 2 && terms[0] == 0.0);
        Self {
            anchor,
            terms,
            log_dfs,
        }
    }

    /// Flat continuously-compounded curve out to `max_term`.
    pub fn flat(rate: f64, max_term: f64) -> Self {
        Self {
            anchor: 0.0,
            terms: vec![0.0, max_term],
            log_dfs: vec![0.0, -rate * max_term],
        }
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn terms(&self) -> &[f64] {
        &self.terms
    }

    pub fn dfs(&self) -> Vec<f64> {
        self.log_dfs.iter().map(|l| l.exp()).collect()
    }

    pub fn max_term(&self) -> f64 {
        *self.terms.last().unwrap()
    }

    /// Discount factor for a term inside `[0, max_term]`.
    pub fn df_at(&self, s: f64) -> Result<f64> {
        let hi = self.max_term();
        if !(s >= -TERM_EPS && s <= hi + TERM_EPS) {
            return Err(Error::Domain {
                what: "curve term",
                value: s,
                lo: 0.0,
                hi,
            });
        }
        Ok(self.df(s))
    }

    /// Discount factor with flat-forward extrapolation beyond the last term.
    /// Negative terms are treated as zero.
    pub fn df(&self, s: f64) -> f64 {
        self.log_df(s).exp()
    }

    pub fn log_df(&self, s: f64) -> f64 {
        log_linear(&self.terms, &self.log_dfs, s)
    }

    /// Continuously-compounded zero rate `−log df(s) / s`.
    pub fn zero_rate(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::Domain {
                what: "zero-rate term",
                value: s,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        Ok(-self.df_at(s)?.ln() / s)
    }

    /// Forward rate over `[t, t + h]`: `(1/h) log(df(t) / df(t + h))`.
    pub fn forward_rate(&self, t: f64, h: f64) -> Result<f64> {
        if !(t >= 0.0) || !(h > 0.0) {
            return Err(Error::Domain {
                what: "forward start/length",
                value: if t < 0.0 { t } else { h },
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        let a = self.df_at(t)?;
        let b = self.df_at(t + h)?;
        Ok((a / b).ln() / h)
    }

    /// Annuity `Σ Δ · df(pay)` of a regular fixed leg from `start` to `end`
    /// with `freq` payments a year (30/360 on a regular grid).
    pub fn annuity(&self, start: f64, end: f64, freq: u32) -> f64 {
        let dt = 1.0 / freq as f64;
        let n = ((end - start) * freq as f64).round() as usize;
        (1..=n)
            .map(|j| dt * self.df(start + j as f64 * dt))
            .sum()
    }

    /// Par rate of the swap from `start` to `end` under the single-curve
    /// float leg `df(start) − df(end)`.
    pub fn par_rate(&self, start: f64, end: f64, freq: u32) -> f64 {
        (self.df(start) - self.df(end)) / self.annuity(start, end, freq)
    }
}

/// Linear interpolation of `ys` over `xs` with linear extrapolation of the
/// last segment on the right and clamping on the left.
pub(crate) fn log_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    let k = if x >= xs[n - 1] {
        n - 2
    } else {
        xs.partition_point(|&v| v <= x) - 1
    };
    let w = (x - xs[k]) / (xs[k + 1] - xs[k]);
    ys[k] + w * (ys[k + 1] - ys[k])
}

/// Conventions for [`bootstrap_swap_curve`].
#[derive(Debug, Clone, Copy)]
pub struct BootstrapConventions {
    /// Fixed-leg payments per year (30/360 on a regular grid).
    pub fixed_frequency: u32,
}

impl Default for BootstrapConventions {
    fn default() -> Self {
        Self { fixed_frequency: 2 }
    }
}

/// Bootstraps the LIBOR or OIS discount curve from a snapshot.
pub fn bootstrap_discount_curve(snapshot: &MarketSnapshot, which: CurveKind) -> Result<DiscountCurve> {
    snapshot.validate()?;
    let conv = BootstrapConventions::default();
    match which {
        CurveKind::Libor => bootstrap_swap_curve(&snapshot.libor_fixings, &snapshot.swap_rates, conv),
        CurveKind::Ois => bootstrap_swap_curve(&[], &snapshot.ois_rates, conv),
    }
}

/// Sequential bootstrap. Money-market fixings give the short pillars
/// directly; each swap quote adds one pillar whose discount factor is found
/// by a one-dimensional solve so that the par swap prices to zero, with
/// coupon dates between pillars interpolated log-linearly.
pub fn bootstrap_swap_curve(
    fixings: &[(f64, f64)],
    swaps: &[(f64, f64)],
    conv: BootstrapConventions,
) -> Result<DiscountCurve> {
    let freq = conv.fixed_frequency;
    if freq == 0 {
        return Err(Error::invalid("fixed frequency must be positive"));
    }
    let dt = 1.0 / freq as f64;
    let mut terms = vec![0.0];
    let mut log_dfs = vec![0.0];

    for &(tenor, rate) in fixings {
        if tenor <= *terms.last().unwrap() {
            return Err(Error::invalid("money-market tenors not increasing"));
        }
        let df = 1.0 / (1.0 + rate * tenor * ACT360_FACTOR);
        terms.push(tenor);
        log_dfs.push(df.ln());
    }

    for &(tenor, rate) in swaps {
        let last = *terms.last().unwrap();
        if tenor <= last {
            // A fixing already covers this tenor; swaps must extend the curve.
            return Err(Error::invalid(format!(
                "swap tenor {tenor} does not extend curve beyond {last}"
            )));
        }
        let n = (tenor * freq as f64).round() as usize;
        if ((n as f64) * dt - tenor).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "swap tenor {tenor} is not a whole number of fixed periods"
            )));
        }
        let last_log = *log_dfs.last().unwrap();
        // Known part of the annuity (dates up to the last pillar) and the
        // interpolation weights of the dates that depend on the new pillar.
        let mut known = 0.0;
        let mut pending: Vec<f64> = Vec::new();
        for j in 1..=n {
            let d = j as f64 * dt;
            if d <= last + TERM_EPS {
                known += dt * log_linear(&terms, &log_dfs, d).exp();
            } else {
                pending.push((d - last) / (tenor - last));
            }
        }
        // f(L) with L = log df(tenor); df(d) = exp((1−w)·last_log + w·L).
        let f = |l: f64| {
            let mut ann = known;
            let mut dann = 0.0;
            for &w in &pending {
                let v = dt * ((1.0 - w) * last_log + w * l).exp();
                ann += v;
                dann += w * v;
            }
            let d = l.exp();
            (1.0 - d - rate * ann, -d - rate * dann)
        };
        let lo = last_log - 2.0 * (tenor - last).max(1.0);
        let hi = last_log + 1.0;
        let l = solve_bracketed(f, lo, hi, 1e-16)
            .map_err(|e| Error::RootSolve(format!("pillar {tenor}y: {e}")))?;
        terms.push(tenor);
        log_dfs.push(l);
    }

    Ok(DiscountCurve {
        anchor: 0.0,
        terms,
        log_dfs,
    })
}

/// Payer or receiver swaption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionSide {
    Payer,
    Receiver,
}

impl OptionSide {
    pub fn sign(self) -> f64 {
        match self {
            OptionSide::Payer => 1.0,
            OptionSide::Receiver => -1.0,
        }
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// Black-76 swaption value `annuity · (F N(d1) − K N(d2))` (payer).
pub fn black_swaption_price(
    forward: f64,
    strike: f64,
    vol: f64,
    expiry: f64,
    annuity: f64,
    side: OptionSide,
) -> Result<f64> {
    if !(forward > 0.0) || !(strike > 0.0) {
        return Err(Error::invalid(format!(
            "lognormal Black needs positive forward and strike (F={forward}, K={strike})"
        )));
    }
    if !(vol >= 0.0) || !(expiry >= 0.0) {
        return Err(Error::invalid("negative vol or expiry"));
    }
    let sd = vol * expiry.sqrt();
    let w = side.sign();
    if sd == 0.0 {
        return Ok(annuity * (w * (forward - strike)).max(0.0));
    }
    let n = std_normal();
    let d1 = ((forward / strike).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    Ok(annuity * w * (forward * n.cdf(w * d1) - strike * n.cdf(w * d2)))
}

/// Black-76 vega per 1.00 of lognormal vol: `annuity · F · φ(d1) · √T`.
pub fn black_vega(forward: f64, strike: f64, vol: f64, expiry: f64, annuity: f64) -> Result<f64> {
    if !(forward > 0.0) || !(strike > 0.0) || !(vol > 0.0) || !(expiry > 0.0) {
        return Err(Error::invalid("Black vega needs positive F, K, vol and expiry"));
    }
    let sd = vol * expiry.sqrt();
    let d1 = ((forward / strike).ln() + 0.5 * sd * sd) / sd;
    Ok(annuity * forward * std_normal().pdf(d1) * expiry.sqrt())
}

/// A calibration swaption: ATM payer on the quoted vol.
#[derive(Debug, Clone, PartialEq)]
pub struct SwaptionInstrument {
    pub expiry: f64,
    pub tenor: f64,
    pub quoted_vol: f64,
    pub forward_swap_rate: f64,
    pub annuity: f64,
    pub target_price: f64,
    pub fixed_frequency: u32,
}

impl SwaptionInstrument {
    /// ATM instrument on `curve` with Black target at `vol`.
    pub fn atm(curve: &DiscountCurve, expiry: f64, tenor: f64, vol: f64, fixed_frequency: u32) -> Result<Self> {
        let annuity = curve.annuity(expiry, expiry + tenor, fixed_frequency);
        if !(annuity > 0.0) {
            return Err(Error::invalid("non-positive annuity"));
        }
        let forward = (curve.df(expiry) - curve.df(expiry + tenor)) / annuity;
        let target = black_swaption_price(forward, forward, vol, expiry, annuity, OptionSide::Payer)?;
        Ok(Self {
            expiry,
            tenor,
            quoted_vol: vol,
            forward_swap_rate: forward,
            annuity,
            target_price: target,
            fixed_frequency,
        })
    }

    /// Market vega `dV/dv` at the quoted vol.
    pub fn market_vega(&self) -> Result<f64> {
        black_vega(
            self.forward_swap_rate,
            self.forward_swap_rate,
            self.quoted_vol,
            self.expiry,
            self.annuity,
        )
    }
}

/// Instruments at every listed (expiry, tenor), vols interpolated from the
/// quoted matrix where the node is not quoted.
pub fn instruments_on_grid(
    curve: &DiscountCurve,
    vols: &VolMatrix,
    expiries: &[f64],
    tenors: &[f64],
    fixed_frequency: u32,
) -> Result<Vec<SwaptionInstrument>> {
    let mut out = Vec::with_capacity(expiries.len() * tenors.len());
    for &e in expiries {
        for &t in tenors {
            let v = vols.quote(e, t).unwrap_or_else(|| vols.interpolated(e, t));
            out.push(SwaptionInstrument::atm(curve, e, t, v, fixed_frequency)?);
        }
    }
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::fixture::usd_snapshot;
    use super::*;
    use proptest::prelude::*;

    fn libor() -> DiscountCurve {
        bootstrap_discount_curve(&usd_snapshot(), CurveKind::Libor).unwrap()
    }

    /// Independent sequential bootstrap: bisection on the pillar df with the
    /// geometric interpolation of coupon dates written out explicitly.
    fn oracle_pillars(fixings: &[(f64, f64)], swaps: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let mut pillars: Vec<(f64, f64)> = vec![(0.0, 1.0)];
        for &(t, r) in fixings {
            pillars.push((t, 1.0 / (1.0 + r * t * 365.0 / 360.0)));
        }
        let df_of = |pillars: &[(f64, f64)], d: f64| -> f64 {
            for w in pillars.windows(2) {
                let ((a, da), (b, db)) = (w[0], w[1]);
                if d >= a && d <= b {
                    let x = (d - a) / (b - a);
                    return da.powf(1.0 - x) * db.powf(x);
                }
            }
            panic!("date {d} beyond pillars");
        };
        for &(t, r) in swaps {
            let (mut lo, mut hi) = (1e-6, 1.5);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let mut trial = pillars.clone();
                trial.push((t, mid));
                let n = (t * 2.0).round() as usize;
                let ann: f64 = (1..=n).map(|j| 0.5 * df_of(&trial, j as f64 * 0.5)).sum();
                let pv = 1.0 - mid - r * ann;
                if pv > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            pillars.push((t, 0.5 * (lo + hi)));
        }
        pillars
    }

    #[test]
    fn ten_year_par_rate_is_break_even_quote() {
        let c = libor();
        let par = c.par_rate(0.0, 10.0, 2);
        assert!((par - 0.02281).abs() < 1e-10, "par = {par}");
    }

    #[test]
    fn every_pillar_reprices_its_swap() {
        let snap = usd_snapshot();
        let c = libor();
        for &(t, r) in &snap.swap_rates {
            let pv = 1.0 - c.df(t) - r * c.annuity(0.0, t, 2);
            assert!(pv.abs() < 1e-12, "tenor {t}: pv {pv}");
        }
        let ois = bootstrap_discount_curve(&snap, CurveKind::Ois).unwrap();
        for &(t, r) in &snap.ois_rates {
            let pv = 1.0 - ois.df(t) - r * ois.annuity(0.0, t, 2);
            assert!(pv.abs() < 1e-12, "ois tenor {t}: pv {pv}");
        }
    }

    #[test]
    fn pillars_match_independent_oracle() {
        let snap = usd_snapshot();
        let c = libor();
        let oracle = oracle_pillars(&snap.libor_fixings, &snap.swap_rates);
        assert_eq!(oracle.len(), c.terms().len());
        for ((t, d), (ct, cd)) in oracle.iter().zip(c.terms().iter().zip(c.dfs())) {
            assert_eq!(*t, *ct);
            assert!((d - cd).abs() < 1e-10, "term {t}: {d} vs {cd}");
        }
    }

    #[test]
    fn flat_quotes_give_par_curve() {
        let swaps: Vec<(f64, f64)> = (1..=5).map(|t| (t as f64, 0.03)).collect();
        let c = bootstrap_swap_curve(&[], &swaps, BootstrapConventions { fixed_frequency: 1 }).unwrap();
        // Annual par recursion: df_n = (1 − r Σ_{j<n} df_j) / (1 + r).
        let mut sum = 0.0;
        for n in 1..=5 {
            let df = (1.0 - 0.03 * sum) / 1.03;
            assert!((c.df(n as f64) - df).abs() < 1e-14);
            sum += df;
            assert!((1.0 - c.df(n as f64) - 0.03 * c.annuity(0.0, n as f64, 1)).abs() < 1e-14);
        }
    }

    #[test]
    fn bootstrap_rejects_non_monotone_tenors() {
        let swaps = vec![(2.0, 0.01), (1.0, 0.01)];
        assert!(bootstrap_swap_curve(&[], &swaps, BootstrapConventions::default()).is_err());
    }

    #[test]
    fn df_at_rules() {
        let c = DiscountCurve::new(vec![0.0, 1.0, 2.0], vec![1.0, 0.98, 0.95]).unwrap();
        assert_eq!(c.df_at(0.0).unwrap(), 1.0);
        assert!((c.df_at(1.0).unwrap() - 0.98).abs() < 1e-15);
        let mid = c.df_at(1.5).unwrap();
        assert!((mid - (0.5 * (0.98f64.ln() + 0.95f64.ln())).exp()).abs() < 1e-15);
        assert!(c.df_at(2.5).is_err());
        assert!(c.df_at(-0.1).is_err());
    }

    #[test]
    fn zero_rate_examples() {
        let c = DiscountCurve::new(vec![0.0, 10.0], vec![1.0, (-0.2f64).exp()]).unwrap();
        assert!((c.zero_rate(10.0).unwrap() - 0.02).abs() < 1e-15);
        let one = DiscountCurve::new(vec![0.0, 5.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(one.zero_rate(5.0).unwrap(), 0.0);
        assert!(c.zero_rate(0.0).is_err());
        let lib = libor();
        let oracle = oracle_pillars(&usd_snapshot().libor_fixings, &usd_snapshot().swap_rates);
        let df10 = oracle.iter().find(|p| p.0 == 10.0).unwrap().1;
        assert!((lib.zero_rate(10.0).unwrap() + df10.ln() / 10.0).abs() < 1e-10);
    }

    #[test]
    fn forward_rate_examples() {
        let flat = DiscountCurve::flat(0.025, 30.0);
        for (t, h) in [(0.0, 0.25), (3.0, 1.0), (10.0, 5.0)] {
            assert!((flat.forward_rate(t, h).unwrap() - 0.025).abs() < 1e-14);
        }
        let same = DiscountCurve::new(vec![0.0, 1.0, 2.0], vec![1.0, 0.97, 0.97]).unwrap();
        assert_eq!(same.forward_rate(1.0, 1.0).unwrap(), 0.0);
        let lib = libor();
        let (t, h) = (1.0, 0.25);
        let zero_form = (lib.zero_rate(t + h).unwrap() * (t + h) - lib.zero_rate(t).unwrap() * t) / h;
        assert!((lib.forward_rate(t, h).unwrap() - zero_form).abs() < 1e-12);
        assert!(lib.forward_rate(29.9, 0.25).is_err());
        assert!(lib.forward_rate(1.0, 0.0).is_err());
    }

    #[test]
    fn flat_forward_extrapolation_beyond_last_pillar() {
        let c = DiscountCurve::new(vec![0.0, 1.0, 2.0], vec![1.0, 0.98, 0.95]).unwrap();
        let f_last = (0.98f64 / 0.95).ln();
        assert!(((c.df(2.0) / c.df(3.0)).ln() - f_last).abs() < 1e-14);
    }

    /// Black payer integrated over the lognormal density, split at the kink
    /// and done with composite Simpson.
    fn black_by_quadrature(f: f64, k: f64, vol: f64, t: f64, ann: f64) -> f64 {
        let sd = vol * t.sqrt();
        let z_star = ((k / f).ln() + 0.5 * sd * sd) / sd;
        let (a, b) = (z_star, z_star.max(0.0) + 12.0);
        let n = 20_000;
        let hq = (b - a) / n as f64;
        let g = |z: f64| {
            let s = f * (sd * z - 0.5 * sd * sd).exp();
            (s - k).max(0.0) * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
        };
        let mut acc = g(a) + g(b);
        for i in 1..n {
            acc += g(a + i as f64 * hq) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        ann * acc * hq / 3.0
    }

    #[test]
    fn black_examples() {
        let zero = black_swaption_price(0.02, 0.02, 0.0, 1.0, 1.0, OptionSide::Payer).unwrap();
        assert_eq!(zero, 0.0);
        let (f, vol, t, ann) = (0.03, 0.25, 4.0, 3.7);
        let atm = black_swaption_price(f, f, vol, t, ann, OptionSide::Payer).unwrap();
        let closed = ann * f * (2.0 * Normal::standard().cdf(0.5 * vol * t.sqrt()) - 1.0);
        assert!((atm - closed).abs() < 1e-14);
        assert!((atm - black_by_quadrature(f, f, vol, t, ann)).abs() < 1e-10);

        let lib = libor();
        let ann = lib.annuity(10.0, 20.0, 2);
        let v = black_swaption_price(0.02281, 0.02281, 0.2788, 10.0, ann, OptionSide::Payer).unwrap();
        assert!((v - black_by_quadrature(0.02281, 0.02281, 0.2788, 10.0, ann)).abs() < 1e-8);
        assert!(black_swaption_price(-0.01, 0.01, 0.2, 1.0, 1.0, OptionSide::Payer).is_err());
    }

    #[test]
    fn black_vega_matches_finite_difference() {
        let (f, k, vol, t, ann) = (0.025, 0.025, 0.3, 5.0, 4.2);
        let g = black_vega(f, k, vol, t, ann).unwrap();
        let closed = ann * f * Normal::standard().pdf(0.5 * vol * t.sqrt()) * t.sqrt();
        assert!((g - closed).abs() < 1e-15);
        let e = 1e-5;
        let up = black_swaption_price(f, k, vol + e, t, ann, OptionSide::Payer).unwrap();
        let dn = black_swaption_price(f, k, vol - e, t, ann, OptionSide::Payer).unwrap();
        assert!(((up - dn) / (2.0 * e) - g).abs() < 1e-8);
        let short = black_vega(f, k, vol, 1.0, 1.0).unwrap();
        let long = black_vega(f, k, vol, 4.0, 1.0).unwrap();
        assert!(long > short);
    }

    #[test]
    fn tenor_labels_round_trip() {
        for l in ["3M", "6M", "1Y", "10Y", "30Y"] {
            assert_eq!(tenor_label(parse_tenor(l).unwrap()), l);
        }
        assert!(parse_tenor("Q").is_err());
        assert!(parse_tenor("5D").is_err());
    }

    #[test]
    fn vol_matrix_interpolation_hits_quotes() {
        let m = usd_snapshot().swaption_vols.unwrap();
        assert!((m.quote(0.25, 1.0).unwrap() - 0.6963).abs() < 1e-15);
        assert!((m.interpolated(10.0, 30.0) - 0.2187).abs() < 1e-15);
        let v = m.interpolated(6.0, 6.0);
        let lo = m.quote(5.0, 5.0).unwrap().min(m.quote(7.0, 7.0).unwrap());
        let hi = m.quote(5.0, 5.0).unwrap().max(m.quote(7.0, 7.0).unwrap());
        assert!(v >= lo - 0.01 && v <= hi + 0.01);
    }

    proptest! {
        #[test]
        fn forward_forms_agree_on_random_curves(
            steps in proptest::collection::vec(0.0f64..0.08, 3..8),
            t in 0.0f64..3.0,
            h in 0.05f64..1.0,
        ) {
            let mut terms = vec![0.0];
            let mut dfs = vec![1.0];
            for (i, f) in steps.iter().enumerate() {
                terms.push((i + 1) as f64);
                dfs.push(dfs[i] * (-f).exp());
            }
            let c = DiscountCurve::new(terms, dfs).unwrap();
            prop_assume!(t + h <= c.max_term());
            let f = c.forward_rate(t, h).unwrap();
            let y = |s: f64| if s == 0.0 { 0.0 } else { c.zero_rate(s).unwrap() * s };
            prop_assert!((f - (y(t + h) - y(t)) / h).abs() < 1e-12);
        }

        #[test]
        fn parity_and_monotonicity(
            f in 0.005f64..0.08, k in 0.005f64..0.08, vol in 0.05f64..1.0,
            t in 0.1f64..15.0, ann in 0.5f64..20.0,
        ) {
            let p = black_swaption_price(f, k, vol, t, ann, OptionSide::Payer).unwrap();
            let r = black_swaption_price(f, k, vol, t, ann, OptionSide::Receiver).unwrap();
            prop_assert!((p - r - ann * (f - k)).abs() < 1e-12 * (1.0 + ann));
            let p_hi = black_swaption_price(f, k, vol * 1.1, t, ann, OptionSide::Payer).unwrap();
            prop_assert!(p_hi >= p);
            let atm = black_swaption_price(f, f, vol, t, ann, OptionSide::Payer).unwrap();
            let atm_long = black_swaption_price(f, f, vol, t * 1.5, ann, OptionSide::Payer).unwrap();
            prop_assert!(atm_long > atm);
        }

        #[test]
        fn df_positive_and_continuous(s in 0.0f64..30.0) {
            let c = bootstrap_discount_curve(&usd_snapshot(), CurveKind::Libor).unwrap();
            let d = c.df_at(s).unwrap();
            prop_assert!(d > 0.0);
            let e = 1e-9;
            let d2 = c.df_at((s + e).min(30.0)).unwrap();
            prop_assert!((d - d2).abs() < 1e-8);
        }
    }
}

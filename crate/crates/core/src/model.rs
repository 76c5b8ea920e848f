//! Dual-term volatility surface, factor loadings and zero-rate drifts.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Model volatility `σ(t, s)` on a rectangular mesh of observation times
/// `t` and rate lives `s`, bilinear inside each element and flat outside
/// the mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct VolSurface {
    t_nodes: Vec<f64>,
    s_nodes: Vec<f64>,
    /// Row-major: `values[i * s_nodes.len() + k] = σ(t_i, s_k)`.
    values: Vec<f64>,
}

impl VolSurface {
    pub fn new(t_nodes: Vec<f64>, s_nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        for (what, xs) in [("t nodes", &t_nodes), ("s nodes", &s_nodes)] {
            if xs.is_empty() || xs.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::invalid(format!("{what} must be non-empty and increasing")));
            }
        }
        if values.len() != t_nodes.len() * s_nodes.len() {
            return Err(Error::invalid(format!(
                "surface has {} values for a {}x{} mesh",
                values.len(),
                t_nodes.len(),
                s_nodes.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid(format!("negative or non-finite vol {v}")));
        }
        Ok(Self {
            t_nodes,
            s_nodes,
            values,
        })
    }

    pub fn flat(t_nodes: Vec<f64>, s_nodes: Vec<f64>, vol: f64) -> Result<Self> {
        let n = t_nodes.len() * s_nodes.len();
        Self::new(t_nodes, s_nodes, vec![vol; n])
    }

    /// Uniform `nt × ns` mesh over `[0, t_max] × [s_min, s_max]`.
    pub fn uniform_mesh(nt: usize, ns: usize, t_max: f64, s_min: f64, s_max: f64, vol: f64) -> Result<Self> {
        let axis = |n: usize, lo: f64, hi: f64| -> Vec<f64> {
            if n == 1 {
                vec![lo]
            } else {
                (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
            }
        };
        Self::flat(axis(nt, 0.0, t_max), axis(ns, s_min, s_max), vol)
    }

    pub fn t_nodes(&self) -> &[f64] {
        &self.t_nodes
    }

    pub fn s_nodes(&self) -> &[f64] {
        &self.s_nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of free parameters (mesh nodes).
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, i_t: usize, i_s: usize) -> usize {
        i_t * self.s_nodes.len() + i_s
    }

    pub fn node(&self, i_t: usize, i_s: usize) -> f64 {
        self.values[self.index(i_t, i_s)]
    }

    /// Same mesh, new node values. Negative values are rejected.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.t_nodes.clone(), self.s_nodes.clone(), values)
    }

    /// Copy with node `k` shifted by `bump`. The result may be negative; it
    /// is only used for finite differences.
    pub fn bumped(&self, k: usize, bump: f64) -> Self {
        let mut out = self.clone();
        out.values[k] += bump;
        out
    }

    /// Bilinear interpolation `σ1(1−ξ)(1−η) + σ2 ξ(1−η) + σ4(1−ξ)η + σ3 ξη`
    /// with `ξ = (t − t_i)/τ`, `η = (s − s_k)/δ`; flat outside the mesh.
    pub fn vol_at(&self, t: f64, s: f64) -> f64 {
        let (i0, i1, xi) = locate(&self.t_nodes, t);
        let (k0, k1, eta) = locate(&self.s_nodes, s);
        let s1 = self.node(i0, k0);
        let s2 = self.node(i1, k0);
        let s4 = self.node(i0, k1);
        let s3 = self.node(i1, k1);
        s1 * (1.0 - xi) * (1.0 - eta) + s2 * xi * (1.0 - eta) + s4 * (1.0 - xi) * eta + s3 * xi * eta
    }
}

/// Element lookup with clamping: returns the bracketing node indices and the
/// local coordinate in `[0, 1]`.
fn locate(nodes: &[f64], x: f64) -> (usize, usize, f64) {
    let n = nodes.len();
    if n == 1 || x <= nodes[0] {
        return (0, 0, 0.0);
    }
    if x >= nodes[n - 1] {
        return (n - 1, n - 1, 0.0);
    }
    let k = nodes.partition_point(|&v| v <= x) - 1;
    (k, k + 1, (x - nodes[k]) / (nodes[k + 1] - nodes[k]))
}

/// Piecewise-linear function of time, flat outside its knots.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PiecewiseLinear {
    pub knots: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn constant(v: f64) -> Self {
        Self {
            knots: vec![(0.0, v)],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.knots.len() {
            0 => 0.0,
            1 => self.knots[0].1,
            _ => {
                let xs: Vec<f64> = self.knots.iter().map(|k| k.0).collect();
                let (a, b, w) = locate(&xs, t);
                (1.0 - w) * self.knots[a].1 + w * self.knots[b].1
            }
        }
    }
}

/// Angular factor loadings: one factor, or two/three factors with
/// `θ = (π/2)(s / L_max)` and elevation `φ(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorLoadings {
    n_factors: usize,
    l_max: f64,
    phi: PiecewiseLinear,
}

impl FactorLoadings {
    pub fn new(n_factors: usize, l_max: f64, phi: PiecewiseLinear) -> Result<Self> {
        if !(1..=3).contains(&n_factors) {
            return Err(Error::invalid(format!("factor count {n_factors} not in 1..=3")));
        }
        if !(l_max > 0.0) {
            return Err(Error::invalid("L_max must be positive"));
        }
        Ok(Self {
            n_factors,
            l_max,
            phi,
        })
    }

    pub fn one_factor() -> Self {
        Self {
            n_factors: 1,
            l_max: 30.0,
            phi: PiecewiseLinear::constant(0.0),
        }
    }

    pub fn n_factors(&self) -> usize {
        self.n_factors
    }

    pub fn l_max(&self) -> f64 {
        self.l_max
    }

    pub fn theta(&self, s: f64) -> f64 {
        FRAC_PI_2 * s / self.l_max
    }

    /// Per-factor diffusion coefficients; entries past `n_factors` are zero.
    pub fn loading(&self, sigma: f64, t: f64, s: f64) -> [f64; 3] {
        match self.n_factors {
            1 => [sigma, 0.0, 0.0],
            2 => {
                let th = self.theta(s);
                [sigma * th.cos(), sigma * th.sin(), 0.0]
            }
            _ => {
                let th = self.theta(s);
                let ph = self.phi.eval(t);
                [
                    sigma * th.cos() * ph.cos(),
                    sigma * th.sin() * ph.cos(),
                    sigma * ph.sin(),
                ]
            }
        }
    }

    /// `⟨σ⃗ · Δw⃗⟩` for one set of factor shocks.
    pub fn diffusion(&self, sigma: f64, t: f64, s: f64, dw: &[f64]) -> f64 {
        let l = self.loading(sigma, t, s);
        l.iter().zip(dw).map(|(a, b)| a * b).sum()
    }
}

/// Normal (absolute-vol) or lognormal (relative-vol) zero-rate process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Process {
    Normal,
    Lognormal,
}

/// Model terms, time step and factor structure.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub process: Process,
    /// Rate lives `s_1 < … < s_K`.
    pub s_grid: Vec<f64>,
    pub h: f64,
    pub factors: FactorLoadings,
}

impl ModelConfig {
    pub fn new(process: Process, s_grid: Vec<f64>, h: f64, factors: FactorLoadings) -> Result<Self> {
        if s_grid.is_empty() || !(s_grid[0] > 0.0) || s_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("model terms must be positive and increasing"));
        }
        if !(h > 0.0) {
            return Err(Error::invalid("time step must be positive"));
        }
        Ok(Self {
            process,
            s_grid,
            h,
            factors,
        })
    }

    /// Quarterly lives to one year, annual to ten, then 12/15/20/25/30,
    /// truncated at `max_term`.
    pub fn standard_terms(max_term: f64) -> Vec<f64> {
        let mut s = vec![0.25, 0.5, 0.75];
        s.extend((1..=10).map(|y| y as f64));
        s.extend([12.0, 15.0, 20.0, 25.0, 30.0]);
        let mut out: Vec<f64> = s.into_iter().filter(|&x| x <= max_term + 1e-12).collect();
        if out.last().is_none_or(|&l| l < max_term - 1e-12) {
            out.push(max_term);
        }
        out
    }

    /// One-factor normal model on the standard terms.
    pub fn one_factor_normal(h: f64, max_term: f64) -> Self {
        Self {
            process: Process::Normal,
            s_grid: Self::standard_terms(max_term),
            h,
            factors: FactorLoadings::one_factor(),
        }
    }

    pub fn max_term(&self) -> f64 {
        *self.s_grid.last().unwrap()
    }
}

/// Drift of the normal zero-rate process: `(f − r)/s + σ² s / 2`.
pub fn drift_normal(f: f64, r: f64, s: f64, sigma: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain {
            what: "rate life",
            value: s,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    Ok((f - r) / s + 0.5 * sigma * sigma * s)
}

/// Drift of the lognormal zero-rate process: `(f − r)/s + ½ s y² σ²`.
/// The matching diffusion coefficient is `y σ`.
pub fn drift_lognormal(f: f64, r: f64, s: f64, y: f64, sigma: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::Domain {
            what: "lognormal zero rate",
            value: y,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    drift_normal(f, r, s, y * sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn surface() -> VolSurface {
        VolSurface::new(
            vec![0.0, 1.0, 3.0],
            vec![1.0, 2.0, 5.0],
            vec![0.010, 0.012, 0.011, 0.009, 0.008, 0.007, 0.006, 0.0065, 0.0068],
        )
        .unwrap()
    }

    #[test]
    fn vol_at_nodes_is_exact() {
        let v = surface();
        for (i, &t) in v.t_nodes().iter().enumerate() {
            for (k, &s) in v.s_nodes().iter().enumerate() {
                assert_eq!(v.vol_at(t, s), v.node(i, k));
            }
        }
    }

    #[test]
    fn element_center_is_corner_average() {
        let v = surface();
        let c = v.vol_at(2.0, 3.5);
        let avg = (v.node(1, 1) + v.node(2, 1) + v.node(1, 2) + v.node(2, 2)) / 4.0;
        assert!((c - avg).abs() < 1e-16);
    }

    #[test]
    fn constant_surface_and_clamping() {
        let v = VolSurface::flat(vec![0.0, 5.0], vec![1.0, 10.0], 0.0123).unwrap();
        for (t, s) in [(0.3, 4.0), (-1.0, 0.1), (20.0, 50.0)] {
            assert_eq!(v.vol_at(t, s), 0.0123);
        }
        let w = surface();
        assert_eq!(w.vol_at(10.0, 0.1), w.node(2, 0));
        assert!(VolSurface::new(vec![0.0], vec![1.0], vec![-0.1]).is_err());
        assert!(VolSurface::new(vec![1.0, 0.0], vec![1.0], vec![0.1, 0.1]).is_err());
    }

    #[test]
    fn drift_examples() {
        assert_eq!(drift_normal(0.01, 0.01, 5.0, 0.0).unwrap(), 0.0);
        assert!((drift_normal(0.02, 0.01, 10.0, 0.01).unwrap() - 0.0015).abs() < 1e-15);
        assert!((drift_normal(0.01, 0.01, 10.0, 0.01).unwrap() - 0.0005).abs() < 1e-15);
        assert!(drift_normal(0.01, 0.0, 0.0, 0.01).is_err());
        assert_eq!(drift_lognormal(0.03, 0.03, 10.0, 0.02, 0.0).unwrap(), 0.0);
        assert!((drift_lognormal(0.02, 0.02, 10.0, 0.02, 0.30).unwrap() - 1.8e-4).abs() < 1e-16);
        assert!(drift_lognormal(0.02, 0.02, 10.0, 0.0, 0.3).is_err());
        assert!(drift_lognormal(0.02, 0.02, 10.0, -0.01, 0.3).is_err());
    }

    #[test]
    fn lognormal_drift_equals_normal_with_absolute_vol() {
        let (f, r, s, y, sig) = (0.025, 0.011, 7.0, 0.021, 0.2);
        let ln = drift_lognormal(f, r, s, y, sig).unwrap();
        let n = drift_normal(f, r, s, y * sig).unwrap();
        assert!((ln - n).abs() < 1e-16);
    }

    #[test]
    fn two_factor_loading_examples() {
        let fl = FactorLoadings::new(2, 30.0, PiecewiseLinear::constant(0.0)).unwrap();
        let a = fl.loading(0.01, 0.0, 0.0);
        assert_eq!((a[0], a[1]), (0.01, 0.0));
        let b = fl.loading(0.01, 0.0, 30.0);
        assert!(b[0].abs() < 1e-17 && (b[1] - 0.01).abs() < 1e-17);
        let c = fl.loading(0.01, 0.0, 15.0);
        let r = 0.01 * 2f64.sqrt() / 2.0;
        assert!((c[0] - r).abs() < 1e-17 && (c[1] - r).abs() < 1e-17);
        assert!(FactorLoadings::new(4, 30.0, PiecewiseLinear::default()).is_err());
    }

    #[test]
    fn standard_terms_cover_max() {
        let s = ModelConfig::standard_terms(30.0);
        assert_eq!(s[0], 0.25);
        assert_eq!(*s.last().unwrap(), 30.0);
        let short = ModelConfig::standard_terms(10.5);
        assert_eq!(*short.last().unwrap(), 10.5);
    }

    proptest! {
        #[test]
        fn loading_preserves_norm(
            n in 1usize..=3, sigma in 0.0f64..0.05, t in 0.0f64..30.0,
            s in 0.0f64..30.0, phi in -1.5f64..1.5,
        ) {
            let fl = FactorLoadings::new(n, 30.0, PiecewiseLinear::constant(phi)).unwrap();
            let l = fl.loading(sigma, t, s);
            let norm = (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt();
            prop_assert!((norm - sigma).abs() <= 1e-15 * (1.0 + sigma));
        }

        #[test]
        fn two_factor_correlation_decreases_with_separation(
            sa in 0.0f64..30.0, d1 in 0.0f64..10.0, d2 in 0.0f64..10.0,
        ) {
            let fl = FactorLoadings::new(2, 30.0, PiecewiseLinear::constant(0.0)).unwrap();
            let (near, far) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            prop_assume!(sa + far <= 30.0);
            let corr = |sb: f64| (fl.theta(sa) - fl.theta(sb)).cos();
            prop_assert!(corr(sa + far) <= corr(sa + near) + 1e-15);
        }

        #[test]
        fn bilinear_reproduces_bilinear_functions(
            a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, d in -1.0f64..1.0,
            t in 0.0f64..3.0, s in 1.0f64..5.0,
        ) {
            let tn = vec![0.0, 1.0, 3.0];
            let sn = vec![1.0, 2.0, 5.0];
            let f = |t: f64, s: f64| 30.0 + a * t + b * s + c * t * s + d;
            // Bilinear on each element requires the cross term per element;
            // a globally bilinear function is reproduced exactly.
            let vals: Vec<f64> = tn.iter().flat_map(|&ti| sn.iter().map(move |&sk| (ti, sk)))
                .map(|(ti, sk)| f(ti, sk)).collect();
            let v = VolSurface::new(tn, sn, vals).unwrap();
            prop_assert!((v.vol_at(t, s) - f(t, s)).abs() < 1e-12);
        }

        #[test]
        fn drift_even_in_sigma_linear_in_spread(
            f in -0.05f64..0.05, r in -0.05f64..0.05, s in 0.1f64..30.0, sig in 0.0f64..0.05,
        ) {
            let d = drift_normal(f, r, s, sig).unwrap();
            prop_assert_eq!(d, drift_normal(f, r, s, -sig).unwrap());
            let d2 = drift_normal(f + (f - r), r, s, sig).unwrap();
            prop_assert!(((d2 - d) - (f - r) / s).abs() < 1e-14);
        }
    }
}

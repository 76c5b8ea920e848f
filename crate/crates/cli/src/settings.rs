use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use zerorate::model::PiecewiseLinear;
use zerorate::{Error, FactorLoadings, ModelConfig, Process};

/// Flags shared by every command. Each may also come from the config file
/// under the same name (dashes or underscores); flags win.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Rates CSV (LIBOR and OIS rows).
    #[arg(long)]
    pub rates: Option<String>,
    /// Swaption vol matrix CSV, in percent.
    #[arg(long, visible_alias = "instruments")]
    pub vols: Option<String>,
    /// Deal document (JSON).
    #[arg(long)]
    pub deal: Option<String>,
    /// Model vol surface CSV as written by `calibrate`.
    #[arg(long)]
    pub surface: Option<String>,
    /// Flat model vol used when no surface is given.
    #[arg(long)]
    pub vol: Option<String>,
    /// mc | grid
    #[arg(long)]
    pub engine: Option<String>,
    /// 1, 2 or 3 (Monte Carlo only above 1).
    #[arg(long)]
    pub factors: Option<String>,
    /// normal | lognormal
    #[arg(long)]
    pub process: Option<String>,
    #[arg(long)]
    pub paths: Option<String>,
    /// Time step in years.
    #[arg(long)]
    pub h: Option<String>,
    /// Surface mesh `NTxNS`.
    #[arg(long)]
    pub mesh: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Calibration tolerance on the RMS relative price error.
    #[arg(long)]
    pub tol: Option<String>,
    #[arg(long)]
    pub max_iter: Option<String>,
    /// Instrument expiries, e.g. `1,3,5` (default: every quoted expiry).
    #[arg(long)]
    pub expiries: Option<String>,
    /// Instrument tenors, e.g. `2,5,10` (default: every quoted tenor).
    #[arg(long)]
    pub tenors: Option<String>,
    /// Keep only instruments ending on or before the deal horizon.
    #[arg(long)]
    pub coterminal: Option<Option<String>>,
    /// Grid intervals per side.
    #[arg(long)]
    pub intervals: Option<String>,
    /// Longest modelled rate life in years.
    #[arg(long)]
    pub max_term: Option<String>,
    /// Simulation horizon in years (`simulate`).
    #[arg(long)]
    pub horizon: Option<String>,
    /// Factor elevation: a constant or `t:v,t:v,…`.
    #[arg(long)]
    pub phi: Option<String>,
    #[arg(long)]
    pub l_max: Option<String>,
    #[arg(long)]
    pub antithetic: Option<Option<String>>,
    /// libor | ois (`bootstrap`).
    #[arg(long)]
    pub curve: Option<String>,
    /// Finite-difference vol bump.
    #[arg(long)]
    pub bump: Option<String>,
    /// Main report path; standard output when absent.
    #[arg(long)]
    pub out: Option<String>,
    /// Iteration history CSV (`calibrate`).
    #[arg(long)]
    pub history: Option<String>,
    /// Write the simulated field as CSV.
    #[arg(long)]
    pub dump_field: Option<String>,
    /// Write the grid slices as CSV.
    #[arg(long)]
    pub dump_grid: Option<String>,
}

impl Flags {
    fn entries(&self) -> Vec<(&'static str, Option<String>)> {
        let flag = |v: &Option<Option<String>>| v.as_ref().map(|x| x.clone().unwrap_or_else(|| "true".into()));
        vec![
            ("rates", self.rates.clone()),
            ("vols", self.vols.clone()),
            ("deal", self.deal.clone()),
            ("surface", self.surface.clone()),
            ("vol", self.vol.clone()),
            ("engine", self.engine.clone()),
            ("factors", self.factors.clone()),
            ("process", self.process.clone()),
            ("paths", self.paths.clone()),
            ("h", self.h.clone()),
            ("mesh", self.mesh.clone()),
            ("seed", self.seed.clone()),
            ("tol", self.tol.clone()),
            ("max_iter", self.max_iter.clone()),
            ("expiries", self.expiries.clone()),
            ("tenors", self.tenors.clone()),
            ("coterminal", flag(&self.coterminal)),
            ("intervals", self.intervals.clone()),
            ("max_term", self.max_term.clone()),
            ("horizon", self.horizon.clone()),
            ("phi", self.phi.clone()),
            ("l_max", self.l_max.clone()),
            ("antithetic", flag(&self.antithetic)),
            ("curve", self.curve.clone()),
            ("bump", self.bump.clone()),
            ("out", self.out.clone()),
            ("history", self.history.clone()),
            ("dump_field", self.dump_field.clone()),
            ("dump_grid", self.dump_grid.clone()),
        ]
    }
}

/// Resolved `key = value` settings.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn normalise(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('-', "_")
}

impl Settings {
    /// Merges the config file (flat `key = value` lines, `#` comments) with
    /// the flags.
    pub fn resolve(config: Option<&str>, flags: &Flags) -> Result<Self, Error> {
        let known: Vec<&str> = flags.entries().iter().map(|e| e.0).collect();
        let mut values = BTreeMap::new();
        if let Some(text) = config {
            for (no, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| Error::parse(format!("config line {}: expected key=value", no + 1)))?;
                let k = normalise(k);
                if !known.contains(&k.as_str()) {
                    return Err(Error::parse(format!("config line {}: unknown key '{k}'", no + 1)));
                }
                values.insert(k, v.trim().to_string());
            }
        }
        for (k, v) in flags.entries() {
            if let Some(v) = v {
                values.insert(k.to_string(), v);
            }
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf, Error> {
        self.path(key).ok_or_else(|| Error::invalid(format!("--{} is required", key.replace('_', "-"))))
    }

    pub fn num<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, Error> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::parse(format!("bad value '{v}' for {key}"))),
        }
    }

    pub fn flag(&self, key: &str) -> Result<bool, Error> {
        match self.get(key) {
            None => Ok(false),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(v) => Err(Error::parse(format!("bad boolean '{v}' for {key}"))),
        }
    }

    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>, Error> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|x| zerorate::marketdata::parse_tenor(x.trim()).or_else(|_| x.trim().parse().map_err(|_| Error::parse(format!("bad list entry '{x}' in {key}")))))
                    .collect()
            })
            .transpose()
    }

    pub fn mesh(&self, default: (usize, usize)) -> Result<(usize, usize), Error> {
        let Some(v) = self.get("mesh") else { return Ok(default) };
        let bad = || Error::parse(format!("bad mesh '{v}', expected NTxNS"));
        let (a, b) = v.split_once(['x', 'X']).ok_or_else(bad)?;
        let dims = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if dims.0 < 2 || dims.1 < 2 {
            return Err(Error::invalid(format!("mesh {v} needs at least 2 nodes per side")));
        }
        Ok(dims)
    }

    pub fn process(&self) -> Result<Process, Error> {
        match self.get("process").unwrap_or("normal") {
            "normal" => Ok(Process::Normal),
            "lognormal" => Ok(Process::Lognormal),
            v => Err(Error::parse(format!("unknown process '{v}'"))),
        }
    }

    pub fn phi(&self) -> Result<PiecewiseLinear, Error> {
        let Some(v) = self.get("phi") else { return Ok(PiecewiseLinear::constant(0.0)) };
        if let Ok(c) = v.parse() {
            return Ok(PiecewiseLinear::constant(c));
        }
        let mut knots = Vec::new();
        for part in v.split(',') {
            let (t, x) = part.split_once(':').ok_or_else(|| Error::parse(format!("bad phi knot '{part}'")))?;
            let t: f64 = t.trim().parse().map_err(|_| Error::parse(format!("bad phi knot '{part}'")))?;
            let x: f64 = x.trim().parse().map_err(|_| Error::parse(format!("bad phi knot '{part}'")))?;
            knots.push((t, x));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::invalid("phi knots must have increasing times"));
        }
        Ok(PiecewiseLinear { knots })
    }

    pub fn model(&self, max_term: f64) -> Result<ModelConfig, Error> {
        let h = self.num("h", 0.25)?;
        let n = self.num("factors", 1usize)?;
        let factors = FactorLoadings::new(n, self.num("l_max", 30.0)?, self.phi()?)?;
        ModelConfig::new(self.process()?, ModelConfig::standard_terms(max_term), h, factors)
    }

    /// `key=value` pairs for report headers.
    pub fn echo(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let flags = Flags { paths: Some("500".into()), ..Default::default() };
        let s = Settings::resolve(Some("paths = 100\nseed=9 # fixed\n--max-iter = 3\n"), &flags).unwrap();
        assert_eq!(s.num("paths", 0usize).unwrap(), 500);
        assert_eq!(s.num("seed", 0u64).unwrap(), 9);
        assert_eq!(s.num("max_iter", 0usize).unwrap(), 3);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(Settings::resolve(Some("colour=blue"), &Flags::default()).unwrap_err().is_parse());
        let s = Settings::resolve(Some("mesh=6by6"), &Flags::default()).unwrap();
        assert!(s.mesh((2, 2)).unwrap_err().is_parse());
    }

    #[test]
    fn parses_lists_and_phi() {
        let s = Settings::resolve(Some("expiries=1Y,3,6M\nphi=0:0.1,5:0.3"), &Flags::default()).unwrap();
        assert_eq!(s.list("expiries").unwrap().unwrap(), vec![1.0, 3.0, 0.5]);
        assert!((s.phi().unwrap().eval(2.5) - 0.2).abs() < 1e-15);
    }
}

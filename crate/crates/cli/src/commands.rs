use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use zerorate::calibration::{calibrate, CalibrationSettings, ModelPricer};
use zerorate::grid::{Grid, GridConfig};
use zerorate::io::{parse_market, parse_surface, read_to_string, write_curve, write_surface};
use zerorate::marketdata::{bootstrap_discount_curve, instruments_on_grid, CurveKind};
use zerorate::montecarlo::{simulate, Field, SimulationConfig};
use zerorate::products::{price_grid, price_mc, DealSpec, Engine, Valuation};
use zerorate::vega::{instrument_jacobian, market_vegas, model_vegas, reshape_report, solve_bucket_vegas, write_matrix_csv, VegaInputs};
use zerorate::{DiscountCurve, Error, MarketSnapshot, ModelConfig, Result, SwaptionInstrument, VolSurface};

use crate::settings::Settings;

/// Longest rate life modelled by default; covers 30Y CMS indices.
const DEFAULT_MAX_TERM: f64 = 30.0;

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display())))
        })?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn header(w: &mut dyn Write, command: &str, settings: &Settings, snap: Option<&MarketSnapshot>) -> Result<()> {
    writeln!(w, "# zerorate {command} {}", settings.echo())?;
    if let Some(s) = snap {
        writeln!(w, "# valuation_date: {}", s.valuation_date)?;
    }
    Ok(())
}

fn market(settings: &Settings, with_vols: bool) -> Result<MarketSnapshot> {
    let rates = read_to_string(&settings.require_path("rates")?)?;
    let vols = if with_vols { Some(read_to_string(&settings.require_path("vols")?)?) } else { None };
    parse_market(&rates, vols.as_deref())
}

fn libor_curve(snap: &MarketSnapshot) -> Result<DiscountCurve> {
    bootstrap_discount_curve(snap, CurveKind::Libor)
}

fn engine(settings: &Settings) -> Result<Engine> {
    match settings.get("engine").unwrap_or("grid") {
        "grid" => Ok(Engine::Grid { intervals: settings.num("intervals", 40usize)? }),
        "mc" => Ok(Engine::MonteCarlo {
            paths: settings.num("paths", 10_000usize)?,
            seed: settings.num("seed", 1u64)?,
            antithetic: settings.flag("antithetic")?,
        }),
        other => Err(Error::parse(format!("unknown engine '{other}'"))),
    }
}

fn surface(settings: &Settings, max_term: f64) -> Result<VolSurface> {
    match settings.path("surface") {
        Some(p) => parse_surface(&read_to_string(&p)?),
        None => VolSurface::flat(vec![0.0, max_term], vec![0.0, max_term], settings.num("vol", 0.01)?),
    }
}

fn deal(settings: &Settings) -> Result<DealSpec> {
    DealSpec::from_json(&read_to_string(&settings.require_path("deal")?)?)
}

fn instruments(settings: &Settings, curve: &DiscountCurve, snap: &MarketSnapshot) -> Result<(Vec<f64>, Vec<f64>, Vec<SwaptionInstrument>)> {
    let vols = snap.swaption_vols.as_ref().ok_or_else(|| Error::invalid("no swaption vols loaded"))?;
    let expiries = settings.list("expiries")?.unwrap_or_else(|| vols.expiries.clone());
    let tenors = settings.list("tenors")?.unwrap_or_else(|| vols.tenors.clone());
    let list = instruments_on_grid(curve, vols, &expiries, &tenors, 2)?;
    Ok((expiries, tenors, list))
}

pub fn bootstrap(settings: &Settings) -> Result<()> {
    let snap = market(settings, false)?;
    let kind = match settings.get("curve").unwrap_or("libor") {
        "libor" => CurveKind::Libor,
        "ois" => CurveKind::Ois,
        other => return Err(Error::parse(format!("unknown curve '{other}'"))),
    };
    let curve = bootstrap_discount_curve(&snap, kind)?;
    let mut w = writer(settings.path("out").as_deref())?;
    header(&mut w, "bootstrap", settings, Some(&snap))?;
    write_curve(&mut w, &curve, 2)?;
    w.flush()?;
    Ok(())
}

pub fn calibrate_cmd(settings: &Settings) -> Result<()> {
    let snap = market(settings, true)?;
    let curve = libor_curve(&snap)?;
    let (expiries, tenors, list) = instruments(settings, &curve, &snap)?;
    let t_max = expiries.iter().cloned().fold(0.0, f64::max);
    let s_max = tenors.iter().cloned().fold(0.0, f64::max);
    let (nt, ns) = settings.mesh((21, 21))?;
    let initial = VolSurface::uniform_mesh(nt, ns, t_max, 0.0, s_max, settings.num("vol", 0.01)?)?;
    let model = settings.model(settings.num("max_term", s_max)?)?;
    let pricer = ModelPricer::for_instruments(curve, model, engine(settings)?, &list);
    let targets: Vec<f64> = list.iter().map(|i| i.target_price).collect();
    let cal = CalibrationSettings {
        tolerance: settings.num("tol", 1e-3)?,
        max_iterations: settings.num("max_iter", 5usize)?,
        bump: settings.num("bump", 1e-4)?,
        ..CalibrationSettings::default()
    };
    let result = calibrate(&pricer, &initial, &targets, &cal)?;
    if result.clipped > 0 {
        eprintln!("warning: {} surface nodes raised to the vol floor {}", result.clipped, cal.vol_floor);
    }

    let out = settings.path("out");
    let mut w = writer(out.as_deref())?;
    header(&mut w, "calibrate", settings, Some(&snap))?;
    write_surface(&mut w, &result.surface)?;
    w.flush()?;

    let history = settings.path("history").or_else(|| {
        out.as_ref().map(|p| p.with_file_name(format!("{}_history.csv", p.file_stem().unwrap_or_default().to_string_lossy())))
    });
    if let Some(p) = history {
        let mut h = writer(Some(&p))?;
        header(&mut h, "calibrate", settings, Some(&snap))?;
        writeln!(h, "iteration,rms_relative_error")?;
        for (i, e) in result.history.iter().enumerate() {
            writeln!(h, "{i},{e:e}")?;
        }
        h.flush()?;
    }
    for (i, e) in result.history.iter().enumerate() {
        eprintln!("iteration {i}: ||E|| = {e:.6e}");
    }
    if !result.converged {
        return Err(Error::Numerical(format!(
            "calibration stopped after {} iterations at ||E|| = {:.3e}, above tolerance {}",
            result.iterations,
            result.history.iter().cloned().fold(f64::INFINITY, f64::min),
            cal.tolerance
        )));
    }
    Ok(())
}

/// Engine state built once for a deal, so that dumps and pricing share it.
enum Built {
    Grid(Grid),
    Field(Field),
}

fn build(settings: &Settings, curve: &DiscountCurve, surface: &VolSurface, model: &ModelConfig, steps: usize) -> Result<Built> {
    Ok(match engine(settings)? {
        Engine::Grid { intervals } => Built::Grid(Grid::build(curve, surface, model, &GridConfig { intervals, steps })?),
        Engine::MonteCarlo { paths, seed, antithetic } => {
            Built::Field(simulate(curve, surface, model, &SimulationConfig { paths, steps, seed, antithetic })?)
        }
    })
}

fn dumps(settings: &Settings, built: &Built) -> Result<()> {
    match built {
        Built::Grid(g) => {
            if let Some(p) = settings.path("dump_grid") {
                let mut w = writer(Some(&p))?;
                g.write_csv(&mut w)?;
                w.flush()?;
            }
            if settings.get("dump_field").is_some() {
                return Err(Error::invalid("--dump-field needs the mc engine"));
            }
        }
        Built::Field(f) => {
            if let Some(p) = settings.path("dump_field") {
                let mut w = writer(Some(&p))?;
                f.write_csv(&mut w)?;
                w.flush()?;
            }
            if settings.get("dump_grid").is_some() {
                return Err(Error::invalid("--dump-grid needs the grid engine"));
            }
        }
    }
    Ok(())
}

fn write_valuation(w: &mut dyn Write, deal: &DealSpec, v: &Valuation) -> Result<()> {
    writeln!(
        w,
        "# deal={} pv={:.6} std_error={:.6} swap_pv={:.6} swap_std_error={:.6} option_pv={:.6}",
        deal.name(),
        v.pv,
        v.std_error,
        v.swap_pv,
        v.swap_std_error,
        v.option_pv
    )?;
    v.write_periods_csv(w)
}

pub fn price(settings: &Settings) -> Result<()> {
    let snap = market(settings, false)?;
    let curve = libor_curve(&snap)?;
    let deal = deal(settings)?;
    let max_term = settings.num("max_term", DEFAULT_MAX_TERM)?;
    let model = settings.model(max_term)?;
    let surface = surface(settings, max_term)?;
    let steps = deal.compile()?.required_steps(model.h);
    let built = build(settings, &curve, &surface, &model, steps)?;
    dumps(settings, &built)?;
    let v = match &built {
        Built::Grid(g) => price_grid(&deal, g)?,
        Built::Field(f) => price_mc(&deal, f)?,
    };
    let out = settings.path("out");
    let mut w = writer(out.as_deref())?;
    header(&mut w, "price", settings, Some(&snap))?;
    write_valuation(&mut w, &deal, &v)?;
    w.flush()?;
    if out.is_some() {
        println!("{} pv={:.6} std_error={:.6} option_pv={:.6}", deal.name(), v.pv, v.std_error, v.option_pv);
    }
    Ok(())
}

pub fn vega(settings: &Settings) -> Result<()> {
    let snap = market(settings, true)?;
    let curve = libor_curve(&snap)?;
    let deal = deal(settings)?;
    let max_term = settings.num("max_term", DEFAULT_MAX_TERM)?;
    let model = settings.model(max_term)?;
    if settings.get("surface").is_none() {
        return Err(Error::invalid("--surface is required"));
    }
    let surface = surface(settings, max_term)?;
    let (expiries, tenors, mut list) = instruments(settings, &curve, &snap)?;
    if settings.flag("coterminal")? {
        let horizon = deal.compile()?.horizon();
        list.retain(|i| i.expiry + i.tenor <= horizon + 1e-9);
    }
    if list.is_empty() {
        return Err(Error::invalid("no instruments selected"));
    }
    let engine = engine(settings)?;
    let bump = settings.num("bump", 1e-4)?;
    let b = model_vegas(&deal, &curve, &surface, &model, &engine, bump)?;
    let pricer = ModelPricer::for_instruments(curve, model, engine, &list);
    let a = instrument_jacobian(&pricer, &surface, bump)?;
    let g = market_vegas(&list)?;
    let report = solve_bucket_vegas(&VegaInputs { b, a, g })?;
    let matrix = reshape_report(&report.x, &list, &expiries, &tenors);
    let mut w = writer(settings.path("out").as_deref())?;
    header(&mut w, "vega", settings, Some(&snap))?;
    writeln!(
        w,
        "# residual={:e} discarded_singular_values={} pruned_parameters={}",
        report.residual, report.discarded, report.pruned
    )?;
    write_matrix_csv(&mut w, &matrix, &expiries, &tenors)?;
    w.flush()?;
    Ok(())
}

pub fn simulate_cmd(settings: &Settings) -> Result<()> {
    let snap = market(settings, false)?;
    let curve = libor_curve(&snap)?;
    let max_term = settings.num("max_term", DEFAULT_MAX_TERM)?;
    let model = settings.model(max_term)?;
    let surface = surface(settings, max_term)?;
    let horizon: f64 = settings.num("horizon", 10.0)?;
    let sim = SimulationConfig {
        paths: settings.num("paths", 10_000usize)?,
        steps: SimulationConfig::steps_for(horizon, model.h),
        seed: settings.num("seed", 1u64)?,
        antithetic: settings.flag("antithetic")?,
    };
    if settings.get("engine").is_some_and(|e| e != "mc") {
        return Err(Error::invalid("simulate runs the mc engine only"));
    }
    let built = Built::Field(simulate(&curve, &surface, &model, &sim)?);
    dumps(settings, &built)?;
    let Built::Field(field) = &built else { unreachable!() };
    let mut w = writer(settings.path("out").as_deref())?;
    header(&mut w, "simulate", settings, Some(&snap))?;
    writeln!(w, "step,time,term,mean_deflated_df,std_error,initial_df")?;
    for n in 0..=field.steps() {
        let t = field.time(n);
        for &s in field.terms() {
            let (m, se) = field.mean_deflated(n, s);
            writeln!(w, "{n},{t},{s},{m:.15e},{se:.3e},{:.15e}", curve.df(t + s))?;
        }
    }
    w.flush()?;
    Ok(())
}

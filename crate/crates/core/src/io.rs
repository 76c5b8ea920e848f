//! CSV readers and writers for market data, curves and surfaces.
//!
//! Market rates and quoted vols are stored in percent. A leading `# valuation_date: …`
//! line in the rates file sets the snapshot date.

use std::io::{Read, Write};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::marketdata::{parse_tenor, DiscountCurve, MarketSnapshot, VolMatrix};
use crate::model::VolSurface;

const DEFAULT_DATE: (i32, u32, u32) = (2015, 8, 3);

fn split_comments(text: &str) -> (Vec<&str>, String) {
    let mut comments = Vec::new();
    let mut body = String::new();
    for line in text.lines() {
        if let Some(c) = line.trim_start().strip_prefix('#') {
            comments.push(c.trim());
        } else if !line.trim().is_empty() {
            body.push_str(line);
            body.push('\n');
        }
    }
    (comments, body)
}

fn read_table(body: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 {
        return Err(Error::parse("table needs a label column and at least one value column"));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        return Err(Error::parse("table has no rows"));
    }
    Ok((header, rows))
}

fn parse_num(cell: &str, ctx: &str) -> Result<f64> {
    cell.parse::<f64>()
        .map_err(|_| Error::parse(format!("bad number '{cell}' in {ctx}")))
}

/// Parses the rates table (`curve,3M,6M,1Y,…` with `LIBOR` and `OIS`
/// rows) and, when given, the vol table (`expiry,1Y,2Y,…`) into a snapshot.
pub fn parse_market(rates: &str, vols: Option<&str>) -> Result<MarketSnapshot> {
    let (comments, body) = split_comments(rates);
    let mut date = NaiveDate::from_ymd_opt(DEFAULT_DATE.0, DEFAULT_DATE.1, DEFAULT_DATE.2).unwrap();
    for c in comments {
        if let Some(v) = c.strip_prefix("valuation_date:") {
            date = NaiveDate::parse_from_str(v.trim(), "%Y-%m-%d")
                .map_err(|e| Error::parse(format!("valuation date: {e}")))?;
        }
    }
    let (header, rows) = read_table(&body)?;
    let tenors: Vec<f64> = header[1..].iter().map(|h| parse_tenor(h)).collect::<Result<_>>()?;
    let mut snap = MarketSnapshot {
        valuation_date: date,
        libor_fixings: vec![],
        swap_rates: vec![],
        ois_rates: vec![],
        swaption_vols: vols.map(parse_vols).transpose()?,
    };
    for row in rows {
        let name = row[0].to_ascii_uppercase();
        let mut quotes = Vec::new();
        for (t, cell) in tenors.iter().zip(&row[1..]) {
            if !cell.is_empty() {
                quotes.push((*t, parse_num(cell, &name)? / 100.0));
            }
        }
        match name.as_str() {
            "LIBOR" => {
                for (t, r) in quotes {
                    if t < 1.0 {
                        snap.libor_fixings.push((t, r));
                    } else {
                        snap.swap_rates.push((t, r));
                    }
                }
            }
            "OIS" => snap.ois_rates = quotes.into_iter().filter(|q| q.0 >= 1.0).collect(),
            other => return Err(Error::parse(format!("unknown curve row '{other}'"))),
        }
    }
    snap.validate()?;
    Ok(snap)
}

pub fn parse_vols(text: &str) -> Result<VolMatrix> {
    let (_, body) = split_comments(text);
    let (header, rows) = read_table(&body)?;
    let tenors: Vec<f64> = header[1..].iter().map(|h| parse_tenor(h)).collect::<Result<_>>()?;
    let mut expiries = Vec::new();
    let mut vols = Vec::new();
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::parse(format!("vol row '{}' has {} cells", row[0], row.len())));
        }
        expiries.push(parse_tenor(&row[0])?);
        for cell in &row[1..] {
            vols.push(parse_num(cell, "vols")? / 100.0);
        }
    }
    VolMatrix::new(expiries, tenors, vols)
}

pub fn read_to_string(path: &std::path::Path) -> Result<String> {
    let mut s = String::new();
    std::fs::File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?
        .read_to_string(&mut s)?;
    Ok(s)
}

/// Surface table: first row `t\s,<s nodes>`, then one row per `t` node.
/// Values are absolute vols written in shortest round-trip form, so a
/// written surface reads back bit-identically.
pub fn write_surface<W: Write>(mut w: W, surface: &VolSurface) -> Result<()> {
    let s: Vec<String> = surface.s_nodes().iter().map(|v| v.to_string()).collect();
    writeln!(w, "t\\s,{}", s.join(","))?;
    for (i, t) in surface.t_nodes().iter().enumerate() {
        let row: Vec<String> = (0..surface.s_nodes().len())
            .map(|j| surface.node(i, j).to_string())
            .collect();
        writeln!(w, "{t},{}", row.join(","))?;
    }
    Ok(())
}

pub fn parse_surface(text: &str) -> Result<VolSurface> {
    let (_, body) = split_comments(text);
    let (header, rows) = read_table(&body)?;
    let s_nodes: Vec<f64> = header[1..].iter().map(|h| parse_num(h, "surface header")).collect::<Result<_>>()?;
    let mut t_nodes = Vec::new();
    let mut values = Vec::new();
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::parse("ragged surface row"));
        }
        t_nodes.push(parse_num(&row[0], "surface")?);
        for cell in &row[1..] {
            values.push(parse_num(cell, "surface")?);
        }
    }
    VolSurface::new(t_nodes, s_nodes, values)
}

/// Curve table with discount factors, zero rates and, at whole years,
/// semiannual par swap rates.
pub fn write_curve<W: Write>(mut w: W, curve: &DiscountCurve, fixed_frequency: u32) -> Result<()> {
    writeln!(w, "term,discount_factor,zero_rate,par_rate")?;
    for &t in curve.terms().iter().skip(1) {
        let par = if t >= 1.0 && (t - t.round()).abs() < 1e-9 {
            format!("{:.8}", curve.par_rate(0.0, t, fixed_frequency))
        } else {
            String::new()
        };
        writeln!(w, "{t},{:.12},{:.10},{par}", curve.df(t), curve.zero_rate(t)?)?;
    }
    Ok(())
}

//! CSV persistence of posterior draws and CAVI trajectories.
//!
//! A draws file has one row per retained draw and one column per scalar
//! parameter: `gamma_<j>`, `beta_<j>`, `eta_t<t>_c<j>`, then `phi`,
//! `sigma2_eta` and `sigma2_eta1` when present. Lines starting with `#` are
//! comments.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gibbs::PosteriorDraws;
use crate::scalar::Real;
use crate::survey::{CutpointLayout, Family};
use crate::vb::CaviReport;

fn csv_err(e: csv::Error) -> Error {
    Error::csv("draws", e)
}

/// Column names of a draws file.
pub fn draw_columns<T: Real>(draws: &PosteriorDraws<T>) -> Vec<String> {
    let mut cols: Vec<String> = (1..=draws.gamma.ncols()).map(|j| format!("gamma_{j}")).collect();
    cols.extend((1..=draws.beta.ncols()).map(|j| format!("beta_{j}")));
    for t in 1..=draws.n_times {
        cols.extend((1..=draws.n_basis).map(|j| format!("eta_t{t}_c{j}")));
    }
    if !draws.phi.is_empty() {
        cols.push("phi".into());
    }
    cols.push("sigma2_eta".into());
    if !draws.sigma2_eta1.is_empty() {
        cols.push("sigma2_eta1".into());
    }
    cols
}

pub fn write_draws_csv<T: Real, W: Write>(writer: W, draws: &PosteriorDraws<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(draw_columns(draws)).map_err(csv_err)?;
    for r in 0..draws.n_draws() {
        let mut row: Vec<String> = Vec::new();
        for block in [&draws.gamma, &draws.beta, &draws.eta] {
            row.extend(block.row(r).iter().map(|v| v.as_f64().to_string()));
        }
        if let Some(p) = draws.phi.get(r) {
            row.push(p.as_f64().to_string());
        }
        row.push(draws.sigma2_eta[r].as_f64().to_string());
        if let Some(s) = draws.sigma2_eta1.get(r) {
            row.push(s.as_f64().to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("draws", e))
}

/// Reads a draws file written by [`write_draws_csv`]. The layout and family
/// are not stored in the file and must be supplied.
pub fn read_draws_csv<T: Real, R: Read>(
    reader: R,
    family: Family,
    layout: CutpointLayout,
) -> Result<PosteriorDraws<T>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let count = |prefix: &str| header.iter().filter(|h| h.starts_with(prefix)).count();
    let g = count("gamma_");
    let q = count("beta_");
    let n_eta = count("eta_t");
    let n_times = header
        .iter()
        .filter_map(|h| h.strip_prefix("eta_t")?.split('_').next()?.parse::<usize>().ok())
        .max()
        .unwrap_or(layout.n_times());
    let n_basis = n_eta.checked_div(n_times).unwrap_or(0);
    let has_phi = header.iter().any(|h| h == "phi");
    let has_eta1 = header.iter().any(|h| h == "sigma2_eta1");
    let mut rows: Vec<Vec<T>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|v| v.trim().parse::<f64>().map(T::lit))
            .collect::<std::result::Result<Vec<T>, _>>()
            .map_err(|_| Error::data(i + 1, "non-numeric draw"))?;
        if row.len() != header.len() {
            return Err(Error::data(i + 1, "wrong number of columns"));
        }
        rows.push(row);
    }
    let n = rows.len();
    let block = |off: usize, w: usize| DMatrix::from_fn(n, w, |r, c| rows[r][off + c]);
    let mut off = g + q + n_eta;
    let phi = if has_phi {
        off += 1;
        rows.iter().map(|r| r[off - 1]).collect()
    } else {
        Vec::new()
    };
    let sigma2_eta = rows.iter().map(|r| r[off]).collect();
    let sigma2_eta1 = if has_eta1 {
        rows.iter().map(|r| r[off + 1]).collect()
    } else {
        Vec::new()
    };
    Ok(PosteriorDraws {
        gamma: block(0, g),
        beta: block(g, q),
        eta: block(g + q, n_eta),
        phi,
        sigma2_eta,
        sigma2_eta1,
        n_basis,
        n_times,
        family,
        layout,
    })
}

/// Per-sweep convergence statistic and surrogate objective.
pub fn write_trajectory_csv<W: Write>(writer: W, report: &CaviReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iteration", "max_change", "surrogate"])
        .map_err(csv_err)?;
    for (i, (c, s)) in report.trajectory.iter().zip(&report.surrogate).enumerate() {
        w.write_record([(i + 1).to_string(), format!("{c:e}"), s.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("trajectory", e))
}

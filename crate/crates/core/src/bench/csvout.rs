//! CSV writers. Floats use Rust's shortest round-trip formatting, which is
//! locale independent; absent values are empty fields.

use std::path::Path;

use csv::Writer;

use super::{StabilizationRow, TradeoffPoint};
use crate::error::{Error, Result};

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Columns: `arm,method,alpha,m,l,lambda_best,d_l,d_l_dispersion`.
pub fn write_tradeoff_csv(path: impl AsRef<Path>, points: &[TradeoffPoint], l: usize) -> Result<()> {
    let mut w = Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["arm", "method", "alpha", "m", "l", "lambda_best", "d_l", "d_l_dispersion"])
        .map_err(csv_err)?;
    for p in points {
        w.write_record([
            p.arm.clone(),
            p.method.clone(),
            p.alpha.to_string(),
            p.m.to_string(),
            l.to_string(),
            p.lambda_best.to_string(),
            p.d_l_value.to_string(),
            opt(p.d_l_dispersion),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: `arm,lambda,d_l`.
pub fn write_lambda_search_csv(path: impl AsRef<Path>, points: &[TradeoffPoint]) -> Result<()> {
    let mut w = Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["arm", "lambda", "d_l"]).map_err(csv_err)?;
    for p in points {
        for (lambda, d) in &p.lambda_search {
            w.write_record([p.arm.clone(), lambda.to_string(), d.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns: `arm,method,alpha,lambda,l,d_l,dispersion`.
pub fn write_stabilization_csv(path: impl AsRef<Path>, rows: &[StabilizationRow]) -> Result<()> {
    let mut w = Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["arm", "method", "alpha", "lambda", "l", "d_l", "dispersion"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.arm.clone(),
            r.method.clone(),
            r.alpha.to_string(),
            r.lambda.to_string(),
            r.l.to_string(),
            r.d_l.to_string(),
            opt(r.dispersion),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

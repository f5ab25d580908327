//! CSV datasets and the synthetic cohort generator.
//!
//! The generator draws the log-linear quantile law directly: with `u`
//! uniform, `c_future + 1 = exp(a + b E + beta ln IF + gamma ln(c1 + k0))`
//! where `E = -ln(1 - u)` is standard exponential, so `exp(b E)` is Pareto
//! with exponent `1 / b` and every conditional quantile is known in closed
//! form.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::IF_FLOOR;
use crate::record::PublicationRecord;

pub const CSV_HEADER: [&str; 5] = ["id", "cohort_year", "impact_factor", "c1", "c_future"];

/// Records generated from one ChaCha stream.
const SHARD_SIZE: usize = 4096;

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<PublicationRecord>> {
    read_dataset(std::fs::File::open(path)?)
}

pub fn read_dataset<Rd: Read>(reader: Rd) -> Result<Vec<PublicationRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut rows = rdr.records();

    let header = match rows.next() {
        Some(h) => h.map_err(|e| csv_error(e, 1))?,
        None => return Err(parse_error(1, "header", "file is empty")),
    };
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(parse_error(
            1,
            "header",
            &format!("expected `{}`", CSV_HEADER.join(",")),
        ));
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, row) in rows.enumerate() {
        let fallback_line = idx as u64 + 2;
        let row = row.map_err(|e| csv_error(e, fallback_line))?;
        let line = row.position().map_or(fallback_line, |p| p.line());
        if row.len() != CSV_HEADER.len() {
            return Err(parse_error(
                line,
                "record",
                &format!("expected 5 fields, found {}", row.len()),
            ));
        }
        let id = row[0].trim().to_string();
        if id.is_empty() {
            return Err(parse_error(line, "id", "empty id"));
        }
        let cohort_year: i32 = parse_field(&row[1], line, "cohort_year")?;
        let impact_factor: f64 = parse_field(&row[2], line, "impact_factor")?;
        if !impact_factor.is_finite() {
            return Err(parse_error(line, "impact_factor", "not a finite number"));
        }
        if impact_factor < 0.0 {
            return Err(negative(line, "impact_factor"));
        }
        let c1 = parse_count(&row[3], line, "c1")?;
        let c_future = parse_count(&row[4], line, "c_future")?;
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId { id, line });
        }
        out.push(PublicationRecord {
            id,
            cohort_year,
            impact_factor,
            c1,
            c_future,
        });
    }
    Ok(out)
}

fn parse_error(line: u64, column: &str, reason: &str) -> Error {
    Error::Parse {
        line,
        column: column.to_string(),
        reason: reason.to_string(),
    }
}

fn negative(line: u64, column: &str) -> Error {
    Error::NegativeValue {
        column: column.to_string(),
        line,
    }
}

fn csv_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line());
    parse_error(line, "record", &e.to_string())
}

fn parse_field<T: std::str::FromStr>(raw: &str, line: u64, column: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.trim()
        .parse()
        .map_err(|e: T::Err| parse_error(line, column, &format!("`{raw}`: {e}")))
}

/// Non-negative integer count; a leading minus sign is reported as a
/// negative value rather than a parse failure.
fn parse_count(raw: &str, line: u64, column: &str) -> Result<u64> {
    let t = raw.trim();
    if let Some(rest) = t.strip_prefix('-') {
        if rest.parse::<u64>().is_ok_and(|v| v > 0) {
            return Err(negative(line, column));
        }
    }
    parse_field(t, line, column)
}

pub fn save_dataset(path: impl AsRef<Path>, records: &[PublicationRecord]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_dataset(&mut w, records)?;
    w.flush()?;
    Ok(())
}

/// Writes with LF line endings; `f64` values use the shortest representation
/// that parses back to the same value.
pub fn write_dataset<W: Write>(writer: W, records: &[PublicationRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(CSV_HEADER).map_err(csv_write_error)?;
    for r in records {
        w.write_record([
            r.id.clone(),
            r.cohort_year.to_string(),
            r.impact_factor.to_string(),
            r.c1.to_string(),
            r.c_future.to_string(),
        ])
        .map_err(csv_write_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_write_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub seed: u64,
    /// Intercept of `C(u) = a + b (-ln(1 - u))`.
    pub a: f64,
    /// Tail slope of `C(u)`; the outcome tail exponent is `1 / b`.
    pub b: f64,
    pub beta_true: f64,
    pub gamma_true: f64,
    pub k0_true: f64,
    pub mu_if: f64,
    pub sigma_if: f64,
    /// `lambda` in the `c1` rate `lambda * IF^theta`.
    pub c1_rate: f64,
    /// `theta` in the `c1` rate `lambda * IF^theta`.
    pub c1_if_exponent: f64,
    pub scale_factor: f64,
    pub cohort_year: i32,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 50_000,
            seed: 42,
            a: 2.0,
            b: 0.5,
            beta_true: 0.7,
            gamma_true: 0.6,
            k0_true: 0.5,
            mu_if: 0.5,
            sigma_if: 0.6,
            c1_rate: 1.0,
            c1_if_exponent: 1.0,
            scale_factor: 1.0,
            cohort_year: 1990,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidSpec(what.to_string()));
        if self.n == 0 {
            return bad("n must be at least 1");
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return bad("b must be positive");
        }
        if !(self.k0_true > 0.0 && self.k0_true.is_finite()) {
            return bad("k0_true must be positive");
        }
        if !(self.sigma_if > 0.0 && self.sigma_if.is_finite()) {
            return bad("sigma_if must be positive");
        }
        if !(self.c1_rate >= 0.0 && self.c1_rate.is_finite()) {
            return bad("c1_rate must be non-negative");
        }
        if !(self.c1_if_exponent >= 0.0 && self.c1_if_exponent.is_finite()) {
            return bad("c1_if_exponent must be non-negative");
        }
        if !(self.scale_factor > 0.0 && self.scale_factor.is_finite()) {
            return bad("scale_factor must be positive");
        }
        if ![self.a, self.beta_true, self.gamma_true, self.mu_if].iter().all(|v| v.is_finite()) {
            return bad("coefficients must be finite");
        }
        Ok(())
    }

    /// Exact conditional `p`-quantile of `ln(c_future + 1)` before rounding,
    /// for `scale_factor = 1`.
    pub fn true_log_quantile(&self, p: f64, impact_factor: f64, c1: f64) -> f64 {
        self.a + self.b * -(1.0 - p).ln()
            + self.beta_true * impact_factor.ln()
            + self.gamma_true * (c1 + self.k0_true).ln()
    }
}

/// Deterministic in `spec` (including the seed) and independent of the
/// thread count: record `i` is drawn from ChaCha8 stream `i / 4096` of the
/// seed, in index order within the stream.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<PublicationRecord>> {
    spec.validate()?;
    let if_law = LogNormal::new(spec.mu_if, spec.sigma_if)
        .map_err(|e| Error::InvalidSpec(format!("impact factor law: {e}")))?;
    let shards = spec.n.div_ceil(SHARD_SIZE);
    let records = (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(s as u64);
            let lo = s * SHARD_SIZE;
            let hi = (lo + SHARD_SIZE).min(spec.n);
            (lo..hi)
                .map(|i| draw_record(spec, &if_law, &mut rng, i))
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .concat();
    Ok(records)
}

fn draw_record(spec: &SyntheticSpec, if_law: &LogNormal<f64>, rng: &mut ChaCha8Rng, i: usize) -> PublicationRecord {
    let impact_factor = ((if_law.sample(rng) * 1000.0).round() / 1000.0).max(IF_FLOOR);
    let rate = spec.c1_rate * impact_factor.powf(spec.c1_if_exponent);
    let c1 = if rate > 0.0 {
        Poisson::new(rate).expect("rate is positive and finite").sample(rng) as u64
    } else {
        0
    };
    let u: f64 = rng.random();
    let log_q = spec.a + spec.b * -(1.0 - u).ln()
        + spec.beta_true * impact_factor.ln()
        + spec.gamma_true * (c1 as f64 + spec.k0_true).ln();
    let c_future = (spec.scale_factor * (log_q.exp() - 1.0)).round().max(0.0);
    PublicationRecord {
        id: format!("s{i:07}"),
        cohort_year: spec.cohort_year,
        impact_factor,
        c1,
        c_future: c_future as u64,
    }
}

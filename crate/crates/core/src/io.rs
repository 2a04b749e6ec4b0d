//! JSON-lines and CSV exchange formats.
//!
//! Every JSON-lines record carries `schema_version`. Floats are written in
//! shortest round-trip form, so parse-then-emit reproduces the input bytes.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::PopulationTrajectory;
use crate::error::{Error, Result};
use crate::probe::{Peak, Spectrum, TimeSeries};
use crate::states::{Amplitude, CorrelationSet};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    Q,
    N,
    A,
}

/// One correlator amplitude `Re((re + i im) e^{-i omega t})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRecord {
    pub schema_version: u32,
    pub state: String,
    pub channel: Channel,
    pub n: usize,
    /// Absent for `Q`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    pub re: f64,
    pub im: f64,
    pub omega: f64,
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

fn write_json_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, value).map_err(io_err)?;
    out.write_all(b"\n").map_err(io_err)
}

pub fn correlation_records(set: &CorrelationSet, state: &str) -> Vec<CorrelationRecord> {
    let rec = |channel, n, m, a: &Amplitude| CorrelationRecord {
        schema_version: SCHEMA_VERSION,
        state: state.to_string(),
        channel,
        n,
        m,
        re: a.value.re,
        im: a.value.im,
        omega: a.omega,
    };
    let mut out: Vec<CorrelationRecord> =
        set.q.iter().enumerate().map(|(n, a)| rec(Channel::Q, n + 1, None, a)).collect();
    for (channel, mat) in [(Channel::N, &set.normal), (Channel::A, &set.anomalous)] {
        for (n, row) in mat.iter().enumerate() {
            for (m, a) in row.iter().enumerate() {
                out.push(rec(channel, n + 1, Some(m + 1), a));
            }
        }
    }
    out
}

pub fn write_correlations<W: Write>(out: &mut W, set: &CorrelationSet, state: &str) -> Result<()> {
    for r in correlation_records(set, state) {
        write_json_line(out, &r)?;
    }
    Ok(())
}

/// Parses a JSON-lines correlation file back into its state label and set.
pub fn read_correlations<R: BufRead>(input: R) -> Result<(String, CorrelationSet)> {
    let mut records = Vec::new();
    for (line_no, line) in input.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let r: CorrelationRecord =
            serde_json::from_str(&line).map_err(|e| Error::Io(format!("line {}: {e}", line_no + 1)))?;
        if r.schema_version != SCHEMA_VERSION {
            return Err(Error::Io(format!(
                "line {}: unsupported schema_version {}",
                line_no + 1,
                r.schema_version
            )));
        }
        records.push(r);
    }
    let k = records.iter().filter(|r| r.channel == Channel::Q).count();
    let label = records.first().map(|r| r.state.clone()).unwrap_or_default();
    let blank = Amplitude::default();
    let mut set = CorrelationSet {
        q: vec![blank; k],
        normal: vec![vec![blank; k]; k],
        anomalous: vec![vec![blank; k]; k],
    };
    let mut seen = vec![false; k + 2 * k * k];
    for r in &records {
        let amp = Amplitude::new(Complex64::new(r.re, r.im), r.omega);
        let check = |i: usize| {
            if i == 0 || i > k {
                Err(Error::OutOfRange { what: "record mode", index: i, max: k })
            } else {
                Ok(i - 1)
            }
        };
        let n = check(r.n)?;
        let slot = match (r.channel, r.m) {
            (Channel::Q, None) => {
                set.q[n] = amp;
                n
            }
            (Channel::N, Some(m)) => {
                let m = check(m)?;
                set.normal[n][m] = amp;
                k + n * k + m
            }
            (Channel::A, Some(m)) => {
                let m = check(m)?;
                set.anomalous[n][m] = amp;
                k + k * k + n * k + m
            }
            _ => return Err(Error::Io(format!("malformed {:?} record for n = {}", r.channel, r.n))),
        };
        if std::mem::replace(&mut seen[slot], true) {
            return Err(Error::Io(format!("duplicate {:?} record for n = {}", r.channel, r.n)));
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Io(format!("incomplete correlation file: entry {missing} missing")));
    }
    Ok((label, set))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakRecord {
    pub schema_version: u32,
    pub omega: f64,
    pub power: f64,
}

pub fn write_peaks<W: Write>(out: &mut W, peaks: &[Peak]) -> Result<()> {
    for p in peaks {
        write_json_line(out, &PeakRecord { schema_version: SCHEMA_VERSION, omega: p.omega, power: p.power })?;
    }
    Ok(())
}

pub fn write_time_series_csv<W: Write>(out: &mut W, series: &TimeSeries, column: &str) -> Result<()> {
    writeln!(out, "t,{column}").map_err(io_err)?;
    for (t, v) in series.times().zip(&series.samples) {
        writeln!(out, "{t:e},{v:e}").map_err(io_err)?;
    }
    Ok(())
}

pub fn write_spectrum_csv<W: Write>(out: &mut W, spectrum: &Spectrum) -> Result<()> {
    writeln!(out, "omega,psd").map_err(io_err)?;
    for (w, p) in spectrum.frequencies.iter().zip(&spectrum.psd) {
        writeln!(out, "{w:e},{p:e}").map_err(io_err)?;
    }
    Ok(())
}

/// `t,N_1,…,N_K` rows.
pub fn write_trajectory_csv<W: Write>(out: &mut W, trajectory: &PopulationTrajectory) -> Result<()> {
    let k = trajectory.populations.first().map_or(0, Vec::len);
    let header: Vec<String> =
        std::iter::once("t".to_string()).chain((1..=k).map(|n| format!("N_{n}"))).collect();
    writeln!(out, "{}", header.join(",")).map_err(io_err)?;
    for (t, row) in trajectory.times.iter().zip(&trajectory.populations) {
        write!(out, "{t:e}").map_err(io_err)?;
        for v in row {
            write!(out, ",{v:e}").map_err(io_err)?;
        }
        writeln!(out).map_err(io_err)?;
    }
    Ok(())
}

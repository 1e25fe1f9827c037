//! CSV tables and binary dumps.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! written control file reads back bit-for-bit.
//!
//! Binary dumps (flow tables and operator/target pairs) share one layout,
//! all integers `u64` and all floats `f64`, little-endian:
//!
//! ```text
//! magic      [u8; 4]   b"ECFT" (flow table) or b"ECOP" (operator)
//! version    u32       1
//! n, m, P_total, N     u64 × 4   (m = 0 for flow tables)
//! pgrid_hash u64       see `parameter_grid_hash`
//! tgrid_hash u64       see `time_grid_hash`
//! payload    f64 …     row-major matrices
//! ```
//!
//! The flow payload is `Φ(0,t_k,β_j)` for `j` then `k` ascending, each `n×n`
//! row-major. The operator payload is `W` row-major followed by `ξ̂`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flow::FlowTable;
use crate::model::{ParameterGrid, TimeGrid};
use crate::operator::{OperatorMatrix, TargetVector};
use crate::synthesis::{ControlSignal, PicardRow, SingularSystemApprox};
use crate::verify::EnsembleOutcome;

pub const DUMP_VERSION: u32 = 1;
const FLOW_MAGIC: &[u8; 4] = b"ECFT";
const OPERATOR_MAGIC: &[u8; 4] = b"ECOP";

fn digest_u64(bytes: &[u8]) -> u64 {
    let hash = Sha256::digest(bytes);
    u64::from_le_bytes(hash[..8].try_into().expect("sha256 has 32 bytes"))
}

/// First eight bytes (LE) of SHA-256 over the box bounds and counts.
pub fn parameter_grid_hash(grid: &ParameterGrid) -> u64 {
    let mut bytes = Vec::new();
    for i in 0..grid.dim() {
        bytes.extend_from_slice(&grid.bounds().lower()[i].to_le_bytes());
        bytes.extend_from_slice(&grid.bounds().upper()[i].to_le_bytes());
        bytes.extend_from_slice(&(grid.counts()[i] as u64).to_le_bytes());
    }
    digest_u64(&bytes)
}

/// First eight bytes (LE) of SHA-256 over `(T, N)`.
pub fn time_grid_hash(grid: &TimeGrid) -> u64 {
    let mut bytes = grid.horizon().to_le_bytes().to_vec();
    bytes.extend_from_slice(&(grid.steps() as u64).to_le_bytes());
    digest_u64(&bytes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DumpHeader {
    pub n: u64,
    pub m: u64,
    pub points: u64,
    pub steps: u64,
    pub pgrid_hash: u64,
    pub tgrid_hash: u64,
}

impl DumpHeader {
    /// Errors unless the dump was produced on exactly these grids.
    pub fn check_grids(&self, pgrid: &ParameterGrid, tgrid: &TimeGrid) -> Result<()> {
        if self.pgrid_hash != parameter_grid_hash(pgrid) || self.tgrid_hash != time_grid_hash(tgrid)
        {
            return Err(Error::mismatch("dump was produced on different grids"));
        }
        Ok(())
    }
}

fn write_header<W: Write>(w: &mut W, magic: &[u8; 4], h: &DumpHeader) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&DUMP_VERSION.to_le_bytes())?;
    for v in [h.n, h.m, h.points, h.steps, h.pgrid_hash, h.tgrid_hash] {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<DumpHeader> {
    let mut got = [0u8; 4];
    r.read_exact(&mut got)?;
    if &got != magic {
        return Err(Error::Format(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&got)
        )));
    }
    let mut ver = [0u8; 4];
    r.read_exact(&mut ver)?;
    let version = u32::from_le_bytes(ver);
    if version != DUMP_VERSION {
        return Err(Error::Format(format!("unsupported dump version {version}")));
    }
    Ok(DumpHeader {
        n: read_u64(r)?,
        m: read_u64(r)?,
        points: read_u64(r)?,
        steps: read_u64(r)?,
        pgrid_hash: read_u64(r)?,
        tgrid_hash: read_u64(r)?,
    })
}

fn write_f64s<W: Write>(w: &mut W, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("dump payload is truncated".into()),
        _ => Error::Io(e),
    })?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn usize_of(v: u64, what: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in memory")))
}

pub fn write_flow_table<W: Write>(
    w: &mut W,
    table: &FlowTable,
    pgrid: &ParameterGrid,
    tgrid: &TimeGrid,
) -> Result<()> {
    table.check_grids(pgrid, tgrid)?;
    let header = DumpHeader {
        n: table.state_dim() as u64,
        m: 0,
        points: table.points() as u64,
        steps: table.steps() as u64,
        pgrid_hash: parameter_grid_hash(pgrid),
        tgrid_hash: time_grid_hash(tgrid),
    };
    write_header(w, FLOW_MAGIC, &header)?;
    for j in 0..table.points() {
        for k in 0..=table.steps() {
            let psi = table.inverse_flow(j, k);
            write_f64s(w, psi.transpose().iter().copied())?;
        }
    }
    Ok(())
}

pub fn read_flow_table<R: Read>(r: &mut R) -> Result<(FlowTable, DumpHeader)> {
    let header = read_header(r, FLOW_MAGIC)?;
    let n = usize_of(header.n, "state dimension")?;
    let points = usize_of(header.points, "point count")?;
    let steps = usize_of(header.steps, "step count")?;
    let per = n * n;
    let row_major = read_f64s(r, per * points * (steps + 1))?;
    let mut data = Vec::with_capacity(row_major.len());
    for block in row_major.chunks_exact(per.max(1)) {
        data.extend_from_slice(DMatrix::from_row_slice(n, n, block).as_slice());
    }
    Ok((FlowTable::from_raw(n, points, steps, data)?, header))
}

pub fn write_operator_dump<W: Write>(
    w: &mut W,
    op: &OperatorMatrix,
    xi: &TargetVector,
    pgrid: &ParameterGrid,
    tgrid: &TimeGrid,
) -> Result<()> {
    if xi.vector().len() != op.matrix().nrows() {
        return Err(Error::mismatch(
            "target length differs from operator row count",
        ));
    }
    let header = DumpHeader {
        n: op.state_dim() as u64,
        m: op.input_dim() as u64,
        points: op.points() as u64,
        steps: op.steps() as u64,
        pgrid_hash: parameter_grid_hash(pgrid),
        tgrid_hash: time_grid_hash(tgrid),
    };
    write_header(w, OPERATOR_MAGIC, &header)?;
    write_f64s(w, op.matrix().transpose().iter().copied())?;
    write_f64s(w, xi.vector().iter().copied())
}

/// Reads an operator dump. `δ` is recovered only through the grids, so the
/// caller supplies the time grid the dump was written with.
pub fn read_operator_dump<R: Read>(
    r: &mut R,
    tgrid: &TimeGrid,
) -> Result<(OperatorMatrix, TargetVector, DumpHeader)> {
    let header = read_header(r, OPERATOR_MAGIC)?;
    if header.tgrid_hash != time_grid_hash(tgrid) {
        return Err(Error::mismatch(
            "operator dump was produced on a different time grid",
        ));
    }
    let n = usize_of(header.n, "state dimension")?;
    let m = usize_of(header.m, "input dimension")?;
    let rows = n * usize_of(header.points, "point count")?;
    let cols = m * usize_of(header.steps, "step count")?;
    let w = DMatrix::from_row_slice(rows, cols, &read_f64s(r, rows * cols)?);
    let xi = DVector::from_vec(read_f64s(r, rows)?);
    Ok((
        OperatorMatrix::from_dense(w, n, m, tgrid.delta())?,
        TargetVector::from_vector(xi, n)?,
        header,
    ))
}

/// Columns `t, u1, …, um`, one row per node `t_1..t_N`.
pub fn write_control_csv<W: Write>(w: W, control: &ControlSignal) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let m = control.input_dim();
    let mut header = vec!["t".to_string()];
    header.extend((1..=m).map(|l| format!("u{l}")));
    out.write_record(&header)?;
    let nodes = control.time_grid().nodes();
    for (k, row) in control.samples().row_iter().enumerate() {
        let mut rec = vec![nodes[k + 1].to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a control written by [`write_control_csv`], checking it against the
/// expected grid and channel count.
pub fn read_control_csv<R: Read>(r: R, tgrid: &TimeGrid, inputs: usize) -> Result<ControlSignal> {
    let mut rdr = csv::Reader::from_reader(r);
    let width = rdr.headers()?.len();
    if width != inputs + 1 {
        return Err(Error::mismatch(format!(
            "control file has {} channel columns, expected {inputs}",
            width.saturating_sub(1)
        )));
    }
    let mut samples = Vec::with_capacity(tgrid.steps() * inputs);
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        rows += 1;
        if rows > tgrid.steps() {
            break;
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("row {rows}: `{s}` is not a number")))
        };
        let t = parse(&rec[0])?;
        let node = tgrid.node(rows);
        if (t - node).abs() > 1e-9 * tgrid.horizon() {
            return Err(Error::mismatch(format!(
                "control row {rows} is at t = {t}, expected t = {node}"
            )));
        }
        for field in rec.iter().skip(1) {
            samples.push(parse(field)?);
        }
    }
    if rows != tgrid.steps() {
        return Err(Error::mismatch(format!(
            "control file has {rows} rows, time grid has {} steps",
            tgrid.steps()
        )));
    }
    ControlSignal::new(
        DMatrix::from_row_slice(rows, inputs, &samples),
        tgrid.clone(),
    )
}

/// Columns `index, singular_value`.
pub fn write_spectrum_csv<W: Write>(w: W, svd: &SingularSystemApprox) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["index", "singular_value"])?;
    for (i, s) in svd.singular_values().iter().enumerate() {
        out.write_record([(i + 1).to_string(), s.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Columns `index, singular_value, coefficient, partial_sum`.
pub fn write_picard_csv<W: Write>(w: W, rows: &[PicardRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["index", "singular_value", "coefficient", "partial_sum"])?;
    for r in rows {
        out.write_record([
            r.index.to_string(),
            r.singular_value.to_string(),
            r.coefficient.to_string(),
            r.partial_sum.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One row per member (`index, beta1.., xT1.., xF1.., error`), then a blank
/// line and a `metric,value` block with the three summary metrics.
pub fn write_outcome_csv<W: Write>(
    w: W,
    pgrid: &ParameterGrid,
    outcome: &EnsembleOutcome,
) -> Result<()> {
    let mut out = csv::WriterBuilder::new().flexible(true).from_writer(w);
    let n = outcome.terminal_states.ncols();
    let mut header = vec!["index".to_string()];
    header.extend((1..=pgrid.dim()).map(|i| format!("beta{i}")));
    header.extend((1..=n).map(|i| format!("xT{i}")));
    header.extend((1..=n).map(|i| format!("xF{i}")));
    header.push("error".into());
    out.write_record(&header)?;
    for (j, beta) in pgrid.points().enumerate() {
        let mut rec = vec![j.to_string()];
        rec.extend(beta.iter().map(|v| v.to_string()));
        rec.extend(outcome.terminal_states.row(j).iter().map(|v| v.to_string()));
        rec.extend(outcome.target_states.row(j).iter().map(|v| v.to_string()));
        rec.push(outcome.member_errors[j].to_string());
        out.write_record(&rec)?;
    }
    out.write_record([""])?;
    out.write_record(["metric", "value"])?;
    out.write_record(["k_norm_error", &outcome.k_norm_error.to_string()])?;
    out.write_record(["mean_error", &outcome.mean_error.to_string()])?;
    out.write_record(["max_error", &outcome.max_error.to_string()])?;
    out.flush()?;
    Ok(())
}

/// Columns `index, t, x1..xn`; empty when no trajectories were recorded.
pub fn write_trajectories_csv<W: Write>(w: W, outcome: &EnsembleOutcome) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let n = outcome.terminal_states.ncols();
    let mut header = vec!["index".to_string(), "t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    out.write_record(&header)?;
    for (j, traj) in outcome.trajectories.iter().flatten().enumerate() {
        for (t, row) in traj.times.iter().zip(traj.states.row_iter()) {
            let mut rec = vec![j.to_string(), t.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{build_flow_table, IntegratorConfig};
    use crate::model::TransferSpec;
    use crate::model::{harmonic_oscillator_system, ParameterBox};
    use crate::operator::{assemble_operator, assemble_target};

    fn grids() -> (ParameterGrid, TimeGrid) {
        (
            ParameterGrid::new(ParameterBox::interval(-3.0, 3.0).unwrap(), vec![3]).unwrap(),
            TimeGrid::new(0.5, 6).unwrap(),
        )
    }

    #[test]
    fn flow_dump_round_trip() {
        let (pg, tg) = grids();
        let sys = harmonic_oscillator_system();
        let table = build_flow_table(&sys, &pg, &tg, &IntegratorConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_flow_table(&mut buf, &table, &pg, &tg).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 6 * 8 + 8 * 4 * 3 * 7);
        assert_eq!(&buf[..4], b"ECFT");
        // first payload matrix is the identity, row-major
        let first: Vec<f64> = buf[56..88]
            .chunks(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(first, vec![1.0, 0.0, 0.0, 1.0]);
        let (back, header) = read_flow_table(&mut buf.as_slice()).unwrap();
        assert_eq!(back, table);
        header.check_grids(&pg, &tg).unwrap();
        let other = TimeGrid::new(0.5, 7).unwrap();
        assert!(header.check_grids(&pg, &other).is_err());
    }

    #[test]
    fn operator_dump_round_trip() {
        let (pg, tg) = grids();
        let sys = harmonic_oscillator_system();
        let table = build_flow_table(&sys, &pg, &tg, &IntegratorConfig::default()).unwrap();
        let w = assemble_operator(&sys, &table, &tg, &pg).unwrap();
        let spec =
            TransferSpec::constant(DVector::from_vec(vec![1.0, 0.0]), DVector::zeros(2)).unwrap();
        let xi = assemble_target(&sys, &table, &spec, &pg, &tg).unwrap();
        let mut buf = Vec::new();
        write_operator_dump(&mut buf, &w, &xi, &pg, &tg).unwrap();
        let (w2, xi2, header) = read_operator_dump(&mut buf.as_slice(), &tg).unwrap();
        assert_eq!(w2, w);
        assert_eq!(xi2, xi);
        assert_eq!(
            (header.n, header.m, header.points, header.steps),
            (2, 2, 3, 6)
        );
    }

    #[test]
    fn corrupt_dumps_rejected() {
        let (pg, tg) = grids();
        let sys = harmonic_oscillator_system();
        let table = build_flow_table(&sys, &pg, &tg, &IntegratorConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_flow_table(&mut buf, &table, &pg, &tg).unwrap();
        assert!(matches!(
            read_flow_table(&mut &buf[..buf.len() - 3]),
            Err(Error::Format(_))
        ));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_flow_table(&mut bad.as_slice()),
            Err(Error::Format(_))
        ));
        assert!(read_operator_dump(&mut buf.as_slice(), &tg).is_err());
    }

    #[test]
    fn control_csv_round_trip_is_exact() {
        let tg = TimeGrid::new(1.0, 3).unwrap();
        let samples = DMatrix::from_row_slice(
            3,
            2,
            &[0.1, -1.0 / 3.0, 1e-300, 2.5e7, -0.0, std::f64::consts::PI],
        );
        let u = ControlSignal::new(samples, tg.clone()).unwrap();
        let mut buf = Vec::new();
        write_control_csv(&mut buf, &u).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,u1,u2\n"));
        let back = read_control_csv(buf.as_slice(), &tg, 2).unwrap();
        assert_eq!(back, u);
        assert!(matches!(
            read_control_csv(buf.as_slice(), &tg, 3),
            Err(Error::DimensionMismatch(_))
        ));
        let other = TimeGrid::new(1.0, 4).unwrap();
        assert!(matches!(
            read_control_csv(buf.as_slice(), &other, 2),
            Err(Error::DimensionMismatch(_))
        ));
    }
}

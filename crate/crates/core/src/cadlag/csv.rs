//! CSV serialization with header `t,x1,...,xl,is_jump`.
//!
//! Rows are written at time 0, at every change time and at the horizon.
//! A row flagged `is_jump = 1` records the value right after a jump; an
//! interior row flagged `0` records a change of the sampled continuous part.
//! Values use shortest round-trip formatting, so step paths survive a round
//! trip bit for bit.

use std::io::{Read, Write};

use super::{CadlagPath, PathError};
use crate::scalar::Real;

fn csv_err(e: impl std::fmt::Display) -> PathError {
    PathError::Csv(e.to_string())
}

pub fn write_csv<T: Real, W: Write>(path: &CadlagPath<T>, out: W) -> Result<(), PathError> {
    let mut w = ::csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=path.dim()).map(|i| format!("x{i}")));
    header.push("is_jump".into());
    w.write_record(&header).map_err(csv_err)?;

    let jump_times: Vec<T> = path.jumps().iter().map(|j| j.time).collect();
    let mut times = vec![T::zero()];
    times.extend(path.change_times());
    if *times.last().unwrap() < path.horizon() {
        times.push(path.horizon());
    }
    let values = path.values_at_sorted(&times);
    for (t, v) in times.iter().zip(values) {
        let is_jump = jump_times.binary_search_by(|s| s.partial_cmp(t).unwrap()).is_ok();
        let mut row = vec![t.to_string()];
        row.extend(v.iter().map(T::to_string));
        row.push(if is_jump { "1" } else { "0" }.into());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

/// Inverse of [`write_csv`]. The horizon is the time of the last row.
pub fn read_csv<T: Real, R: Read>(input: R) -> Result<CadlagPath<T>, PathError> {
    let mut r = ::csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    let n = header.len();
    if n < 3 || &header[0] != "t" || &header[n - 1] != "is_jump" {
        return Err(PathError::Csv("expected header t,x1,...,xl,is_jump".into()));
    }
    let dim = n - 2;
    let parse = |s: &str| T::from_str_radix(s.trim(), 10).map_err(|_| PathError::Csv(format!("bad number {s:?}")));

    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != n {
            return Err(PathError::Csv(format!("row has {} fields, expected {n}", rec.len())));
        }
        let t = parse(&rec[0])?;
        let v = (1..=dim).map(|i| parse(&rec[i])).collect::<Result<Vec<_>, _>>()?;
        let flag = match &rec[n - 1] {
            "0" => false,
            "1" => true,
            other => return Err(PathError::Csv(format!("is_jump must be 0 or 1, got {other:?}"))),
        };
        rows.push((t, v, flag));
    }
    let (t0, initial, _) = rows.first().cloned().ok_or_else(|| PathError::Csv("no rows".into()))?;
    if !t0.is_zero() {
        return Err(PathError::Csv("first row must be at t = 0".into()));
    }
    let horizon = rows.last().unwrap().0;
    if rows.len() == 1 {
        return CadlagPath::constant(horizon, initial);
    }

    let mut jumps = Vec::new();
    let mut drift_times = vec![T::zero()];
    let mut drift_values = vec![vec![T::zero(); dim]];
    let mut drift = vec![T::zero(); dim];
    let mut prev = initial.clone();
    for (t, v, is_jump) in rows.into_iter().skip(1) {
        let delta: Vec<T> = v.iter().zip(&prev).map(|(&a, &b)| a - b).collect();
        if is_jump {
            jumps.push((t, delta));
        } else if delta.iter().any(|d| !d.is_zero()) {
            for (x, d) in drift.iter_mut().zip(&delta) {
                *x = *x + *d;
            }
            drift_times.push(t);
            drift_values.push(drift.clone());
        }
        prev = v;
    }
    let path = CadlagPath::step(horizon, initial, jumps)?;
    if drift_times.len() == 1 {
        Ok(path)
    } else {
        path.with_samples(drift_times, drift_values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(p: &CadlagPath<f64>) -> (String, CadlagPath<f64>) {
        let mut buf = Vec::new();
        write_csv(p, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        (String::from_utf8(buf).unwrap(), back)
    }

    #[test]
    fn step_path_roundtrip_is_lossless() {
        let p = CadlagPath::step(1.0, vec![0.5, -0.25], vec![(0.1 / 3.0, vec![0.125, 2.0]), (0.7, vec![-0.75, 0.0])])
            .unwrap();
        let (text, back) = roundtrip(&p);
        assert!(text.starts_with("t,x1,x2,is_jump\n0,0.5,-0.25,0\n0.03333333333333333,0.625,1.75,1\n"));
        assert!(text.ends_with("1,-0.125,1.75,0\n"));
        assert_eq!(back, p);
    }

    #[test]
    fn values_at_rows_are_reproduced() {
        let p = CadlagPath::step(2.0, vec![0.1], vec![(0.3, vec![1e-3 / 7.0]), (1.1, vec![-0.2])]).unwrap();
        let (_, back) = roundtrip(&p);
        for t in [0.0, 0.3, 1.1, 2.0] {
            assert!((back.evaluate(t)[0] - p.evaluate(t)[0]).abs() <= 1e-16);
        }
    }

    #[test]
    fn jump_at_horizon_has_single_row() {
        let p = CadlagPath::scalar_step(1.0, 0.0, &[(1.0, 1.0)]).unwrap();
        let (text, back) = roundtrip(&p);
        assert_eq!(text, "t,x1,is_jump\n0,0,0\n1,1,1\n");
        assert_eq!(back, p);
    }

    #[test]
    fn sampled_part_survives() {
        let p = CadlagPath::sampled(1.0, vec![0.0, 0.5], vec![vec![0.0], vec![0.25]])
            .unwrap()
            .add(&CadlagPath::scalar_step(1.0, 0.0, &[(0.75, 1.0)]).unwrap())
            .unwrap();
        let (_, back) = roundtrip(&p);
        for t in [0.0, 0.4, 0.5, 0.7, 0.75, 1.0] {
            assert_eq!(back.evaluate(t), p.evaluate(t));
        }
        assert!(!back.is_pure_step());
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(read_csv::<f64, _>("t,x1\n0,0\n".as_bytes()).is_err());
        assert!(read_csv::<f64, _>("t,x1,is_jump\n0,abc,0\n".as_bytes()).is_err());
        assert!(read_csv::<f64, _>("t,x1,is_jump\n0,0,2\n".as_bytes()).is_err());
        assert!(read_csv::<f64, _>("t,x1,is_jump\n".as_bytes()).is_err());
    }
}

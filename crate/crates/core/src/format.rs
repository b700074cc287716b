//! The `FMRC1` binary container for trajectories and transition pairs.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! b"FMRC" | version u32 = 1 | kind u32 (0 trajectory, 1 pairs)
//! rows u64 | dim u32 | lag u32 (0 for trajectories)
//! rows × width f64, row-major (width = dim, or 2·dim for pairs: x then y)
//! trailer length u64 | UTF-8 JSON metadata
//! ```

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{Standardization, Trajectory, TrajectoryOrigin, TransitionPairSet};

pub const MAGIC: &[u8; 4] = b"FMRC";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("unknown record kind {0}")]
    Kind(u32),
    #[error("expected a {expected} file")]
    WrongKind { expected: &'static str },
    #[error("metadata: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed contents: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Trajectory = 0,
    Pairs = 1,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FileMetadata {
    pub seed: u64,
    pub potential: String,
    pub dt: f64,
    #[serde(default)]
    pub transform: Option<String>,
    #[serde(default)]
    pub standardization: Option<Standardization>,
}

impl FileMetadata {
    pub fn from_origin(origin: &TrajectoryOrigin, dt: f64) -> Self {
        Self {
            seed: origin.seed,
            potential: origin.potential.clone(),
            dt,
            transform: origin.transform.clone(),
            standardization: None,
        }
    }

    pub fn origin(&self) -> TrajectoryOrigin {
        TrajectoryOrigin {
            seed: self.seed,
            potential: self.potential.clone(),
            transform: self.transform.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Trajectory(Trajectory),
    Pairs(TransitionPairSet),
}

fn write_header<W: Write>(
    w: &mut W,
    kind: RecordKind,
    rows: u64,
    dim: u32,
    lag: u32,
) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(kind as u32).to_le_bytes())?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&dim.to_le_bytes())?;
    w.write_all(&lag.to_le_bytes())
}

fn write_trailer<W: Write>(w: &mut W, meta: &FileMetadata) -> Result<(), FormatError> {
    let json = serde_json::to_vec(meta)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    Ok(())
}

fn to_u32(v: usize, what: &str) -> Result<u32, FormatError> {
    u32::try_from(v).map_err(|_| FormatError::Malformed(format!("{what} {v} exceeds u32")))
}

pub fn write_trajectory<W: Write>(w: &mut W, traj: &Trajectory) -> Result<(), FormatError> {
    write_header(
        w,
        RecordKind::Trajectory,
        traj.len() as u64,
        to_u32(traj.dim, "dim")?,
        0,
    )?;
    let mut buf = Vec::with_capacity(traj.points.len() * 8);
    for v in &traj.points {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    write_trailer(w, &FileMetadata::from_origin(&traj.origin, traj.dt))
}

/// `meta.standardization` is overwritten with the pair set's statistics.
pub fn write_pairs<W: Write>(
    w: &mut W,
    pairs: &TransitionPairSet,
    meta: &FileMetadata,
) -> Result<(), FormatError> {
    let d = pairs.dim;
    write_header(
        w,
        RecordKind::Pairs,
        pairs.len() as u64,
        to_u32(d, "dim")?,
        to_u32(pairs.lag_steps, "lag")?,
    )?;
    let mut buf = Vec::with_capacity(pairs.len() * 2 * d * 8);
    for n in 0..pairs.len() {
        for v in pairs.x_row(n).iter().chain(pairs.y_row(n)) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    let mut meta = meta.clone();
    meta.standardization = Some(pairs.normalization.clone());
    write_trailer(w, &meta)
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_record<R: Read>(r: &mut R) -> Result<(Record, FileMetadata), FormatError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(FormatError::Version(version));
    }
    let kind = read_u32(r)?;
    let rows = read_u64(r)? as usize;
    let dim = read_u32(r)? as usize;
    let lag = read_u32(r)? as usize;
    let width = match kind {
        0 => dim,
        1 => 2 * dim,
        k => return Err(FormatError::Kind(k)),
    };
    let n_vals = rows
        .checked_mul(width)
        .ok_or_else(|| FormatError::Malformed("row count overflows".into()))?;
    let mut raw = vec![0u8; n_vals * 8];
    r.read_exact(&mut raw)?;
    let vals: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let len = read_u64(r)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let meta: FileMetadata = serde_json::from_slice(&json)?;
    let bad = |e: crate::dynamics::DynamicsError| FormatError::Malformed(e.to_string());
    let record = if kind == 0 {
        Record::Trajectory(Trajectory::new(dim, meta.dt, vals, meta.origin()).map_err(bad)?)
    } else {
        let mut x = Vec::with_capacity(rows * dim);
        let mut y = Vec::with_capacity(rows * dim);
        for row in vals.chunks_exact(width) {
            x.extend_from_slice(&row[..dim]);
            y.extend_from_slice(&row[dim..]);
        }
        let mut pairs = TransitionPairSet::new(dim, lag, x, y).map_err(bad)?;
        if let Some(s) = &meta.standardization {
            pairs.normalization = s.clone();
        }
        Record::Pairs(pairs)
    };
    Ok((record, meta))
}

pub fn read_trajectory<R: Read>(r: &mut R) -> Result<Trajectory, FormatError> {
    match read_record(r)?.0 {
        Record::Trajectory(t) => Ok(t),
        Record::Pairs(_) => Err(FormatError::WrongKind {
            expected: "trajectory",
        }),
    }
}

pub fn read_pairs<R: Read>(r: &mut R) -> Result<(TransitionPairSet, FileMetadata), FormatError> {
    match read_record(r)? {
        (Record::Pairs(p), m) => Ok((p, m)),
        _ => Err(FormatError::WrongKind { expected: "pairs" }),
    }
}

fn fmt_f64(v: f64) -> String {
    // Shortest representation that round-trips.
    format!("{v:?}")
}

/// CSV with header `x1,...,xD`.
pub fn write_trajectory_csv<W: Write>(w: &mut W, traj: &Trajectory) -> io::Result<()> {
    let header: Vec<String> = (1..=traj.dim).map(|i| format!("x{i}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for p in traj.iter_points() {
        let row: Vec<String> = p.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// CSV with header `x1,...,xD,y1,...,yD`.
pub fn write_pairs_csv<W: Write>(w: &mut W, pairs: &TransitionPairSet) -> io::Result<()> {
    let mut header: Vec<String> = (1..=pairs.dim).map(|i| format!("x{i}")).collect();
    header.extend((1..=pairs.dim).map(|i| format!("y{i}")));
    writeln!(w, "{}", header.join(","))?;
    for n in 0..pairs.len() {
        let row: Vec<String> = pairs
            .x_row(n)
            .iter()
            .chain(pairs.y_row(n))
            .map(|v| fmt_f64(*v))
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::extract_pairs;
    use proptest::prelude::*;

    fn sample_traj(vals: Vec<f64>, dim: usize) -> Trajectory {
        Trajectory::new(
            dim,
            0.001,
            vals,
            TrajectoryOrigin {
                seed: 5,
                potential: "seven_well_3d".into(),
                transform: Some("swiss_roll".into()),
            },
        )
        .unwrap()
    }

    #[test]
    fn header_layout_is_fixed() {
        let t = sample_traj(vec![1.0, 2.0, 3.0, 4.0], 2);
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &t).unwrap();
        assert_eq!(&buf[0..4], b"FMRC");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 0);
        assert_eq!(u64::from_le_bytes(buf[12..20].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[20..24].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[24..28].try_into().unwrap()), 0);
        assert_eq!(f64::from_le_bytes(buf[28..36].try_into().unwrap()), 1.0);
        let trailer_len = u64::from_le_bytes(buf[60..68].try_into().unwrap()) as usize;
        assert_eq!(buf.len(), 68 + trailer_len);
        let meta: serde_json::Value = serde_json::from_slice(&buf[68..]).unwrap();
        assert_eq!(meta["seed"], 5);
        assert_eq!(meta["potential"], "seven_well_3d");
    }

    #[test]
    fn pair_rows_are_x_then_y() {
        let t = sample_traj(vec![1.0, 2.0, 3.0, 4.0, 5.0], 1);
        let p = extract_pairs(&t, 2).unwrap();
        let mut buf = Vec::new();
        write_pairs(&mut buf, &p, &FileMetadata::from_origin(&t.origin, t.dt)).unwrap();
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[24..28].try_into().unwrap()), 2);
        let first: Vec<f64> = buf[28..44]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(first, vec![1.0, 3.0]);
        let (back, meta) = read_pairs(&mut buf.as_slice()).unwrap();
        assert_eq!(back, p);
        assert_eq!(meta.standardization.unwrap(), p.normalization);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut buf = b"NOPE".to_vec();
        buf.extend_from_slice(&[0u8; 64]);
        assert!(matches!(
            read_record(&mut buf.as_slice()),
            Err(FormatError::BadMagic)
        ));
    }

    #[test]
    fn csv_has_header() {
        let t = sample_traj(vec![1.0, 2.0, 3.0, 4.0], 2);
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &t).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x1,x2\n1.0,2.0\n3.0,4.0\n");
    }

    proptest! {
        #[test]
        fn trajectory_round_trip_is_bit_exact(vals in proptest::collection::vec(-1e6f64..1e6, 6..60)) {
            let n = vals.len() / 3 * 3;
            let t = sample_traj(vals[..n].to_vec(), 3);
            let mut buf = Vec::new();
            write_trajectory(&mut buf, &t).unwrap();
            let back = read_trajectory(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}

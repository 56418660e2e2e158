//! Grid sampling of actuator space, twin (sim/real) pairs, splits and the
//! line-oriented dataset file format.
//!
//! Dataset file layout:
//!
//! ```text
//! #meta robot=<id> N=<segments> m=<m> n=<n> ranges=<min>:<max>,... seed=<u64> units=mm,bar count=<records>
//! c_1 .. c_m | p_1 .. p_n | J_11 J_12 .. J_nm
//! ```
//!
//! The Jacobian is flattened row-major (rows are task coordinates). Pair files
//! use a `#pairs` header with the same keys and `c | p_s | p_r` records.
//! Numbers are written with 17 significant digits so reads are lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::robot::{
    central_difference_jacobian, ActuationRange, ActuationVector, RealTwin, RobotId, RobotSpec, TaskPoint,
};

pub const UNITS: &str = "mm,bar";

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub c: ActuationVector,
    pub p_s: TaskPoint,
    /// Row-major n×m Jacobian.
    pub j_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub c: ActuationVector,
    pub p_s: TaskPoint,
    pub p_r: TaskPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub robot: RobotId,
    /// Grid values per actuator (0 when the set is not a full grid).
    pub segments: usize,
    pub m: usize,
    pub n: usize,
    pub ranges: Vec<ActuationRange>,
    pub seed: u64,
    pub units: String,
}

impl DatasetMeta {
    fn for_spec(spec: &RobotSpec, segments: usize, seed: u64) -> Self {
        Self {
            robot: spec.id,
            segments,
            m: spec.m,
            n: spec.n,
            ranges: spec.ranges.clone(),
            seed,
            units: UNITS.to_string(),
        }
    }

    pub fn check_against(&self, spec: &RobotSpec) -> Result<()> {
        if self.robot != spec.id || self.m != spec.m || self.n != spec.n || self.ranges != spec.ranges {
            return Err(Error::validation(format!(
                "dataset for {} (m={}, n={}) does not match robot {}",
                self.robot, self.m, self.n, spec.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positions(&self) -> Vec<TaskPoint> {
        self.samples.iter().map(|s| s.p_s.clone()).collect()
    }
}

/// `segments` evenly spaced values per axis, endpoints included; Cartesian
/// product with the first actuator varying slowest.
pub fn grid_actuations(spec: &RobotSpec, segments: usize) -> Result<Vec<Vec<f64>>> {
    if segments < 2 {
        return Err(Error::validation(format!("grid needs at least 2 values per axis, got {segments}")));
    }
    let axes: Vec<Vec<f64>> = spec.ranges.iter().map(|r| axis_values(r, segments)).collect();
    Ok(cartesian(&axes))
}

fn axis_values(r: &ActuationRange, count: usize) -> Vec<f64> {
    let step = r.span() / (count - 1) as f64;
    (0..count)
        .map(|i| if i + 1 == count { r.max } else { r.min + step * i as f64 })
        .collect()
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut next = prefix.clone();
                    next.push(v);
                    next
                })
            })
            .collect();
    }
    out
}

/// Full-grid dataset from the virtual model; Jacobians use the `range/(10N)` step.
pub fn grid_sample(spec: &RobotSpec, segments: usize) -> Result<Dataset> {
    grid_sample_with(spec, segments, |c| Ok(spec.tip(c)))
}

/// Grid dataset over an arbitrary forward model with the robot's ranges.
pub fn grid_sample_with<F>(spec: &RobotSpec, segments: usize, fk: F) -> Result<Dataset>
where
    F: Fn(&[f64]) -> Result<nalgebra::DVector<f64>>,
{
    spec.validate()?;
    let grid = grid_actuations(spec, segments)?;
    let mut samples = Vec::with_capacity(grid.len());
    for c in grid {
        let p_s = fk(&c)?;
        let j = central_difference_jacobian(&fk, &c, &spec.ranges, segments)?;
        let j_s = crate::robot::Jacobian::new(j).to_row_major();
        samples.push(Sample {
            c: ActuationVector::new(c),
            p_s: TaskPoint::from(p_s),
            j_s,
        });
    }
    Ok(Dataset {
        meta: DatasetMeta::for_spec(spec, segments, 0),
        samples,
    })
}

/// Seeded shuffle then partition; the first `⌊ratio·len⌋` shuffled samples train.
pub fn split(dataset: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(dataset.len(), ratio, seed)?;
    let pick = |idx: &[usize]| Dataset {
        meta: DatasetMeta {
            seed,
            ..dataset.meta.clone()
        },
        samples: idx.iter().map(|&i| dataset.samples[i].clone()).collect(),
    };
    Ok((pick(&train), pick(&test)))
}

/// Shuffled index partition shared by every split in the crate.
pub fn split_indices(len: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::validation(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (ratio * len as f64).floor() as usize;
    let test = idx.split_off(cut);
    Ok((idx, test))
}

/// Smallest side `s` with `s^m ≥ count`.
pub fn subgrid_side(count: usize, m: usize) -> usize {
    let mut side = 1usize;
    while side.pow(m as u32) < count {
        side += 1;
    }
    side
}

/// `count` actuations from a uniform sub-grid of side `⌈count^(1/m)⌉`. When the
/// sub-grid holds more points than requested, a seeded subset is kept (in grid
/// order) so the truncation does not drop one corner of actuator space.
pub fn twin_actuations(spec: &RobotSpec, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(Error::validation("twin sample count must be at least 1"));
    }
    let side = subgrid_side(count, spec.m).max(2);
    let mut grid = grid_actuations(spec, side)?;
    if grid.len() > count {
        let mut idx: Vec<usize> = (0..grid.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(count);
        idx.sort_unstable();
        grid = idx.into_iter().map(|i| grid[i].clone()).collect();
    }
    Ok(grid)
}

/// Paired virtual/twin positions for sim-to-real training.
pub fn twin_sample(spec: &RobotSpec, twin: &RealTwin, count: usize, seed: u64) -> Result<Vec<PairedSample>> {
    twin_sample_with(spec, twin, count, seed, |c| Ok(spec.tip(c)))
}

/// As [`twin_sample`] with `p_s` taken from an arbitrary simulator. The twin
/// is always applied to the full virtual model.
pub fn twin_sample_with<F>(spec: &RobotSpec, twin: &RealTwin, count: usize, seed: u64, sim: F) -> Result<Vec<PairedSample>>
where
    F: Fn(&[f64]) -> Result<nalgebra::DVector<f64>>,
{
    spec.validate()?;
    check_dim(spec.n, twin.dim())?;
    twin_actuations(spec, count, seed)?
        .into_iter()
        .map(|c| {
            let p_s = sim(&c)?;
            let p_r = twin.map_slice(spec.tip(&c).as_slice());
            Ok(PairedSample {
                c: ActuationVector::new(c),
                p_s: TaskPoint::from(p_s),
                p_r: TaskPoint::from(p_r),
            })
        })
        .collect()
}

fn fmt_num(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

fn push_fields(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        fmt_num(out, *v);
    }
}

fn header(tag: &str, meta: &DatasetMeta, count: usize) -> String {
    let ranges: Vec<String> = meta.ranges.iter().map(|r| format!("{}:{}", r.min, r.max)).collect();
    format!(
        "#{tag} robot={} N={} m={} n={} ranges={} seed={} units={} count={count}\n",
        meta.robot,
        meta.segments,
        meta.m,
        meta.n,
        ranges.join(","),
        meta.seed,
        meta.units
    )
}

pub fn format_dataset(dataset: &Dataset) -> String {
    let mut out = header("meta", &dataset.meta, dataset.len());
    for s in &dataset.samples {
        push_fields(&mut out, s.c.as_slice());
        out.push_str(" | ");
        push_fields(&mut out, s.p_s.as_slice());
        out.push_str(" | ");
        push_fields(&mut out, &s.j_s);
        out.push('\n');
    }
    out
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    fs::write(path, format_dataset(dataset)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

/// Read a dataset and check that it was generated for `spec`.
pub fn read_dataset_for(path: &Path, spec: &RobotSpec) -> Result<Dataset> {
    let dataset = read_dataset(path)?;
    dataset.meta.check_against(spec)?;
    Ok(dataset)
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let (meta, count, records) = parse_body(text, "meta", |meta| vec![meta.m, meta.n, meta.n * meta.m])?;
    let samples: Vec<Sample> = records
        .into_iter()
        .map(|mut f| Sample {
            j_s: f.pop().unwrap_or_default(),
            p_s: TaskPoint::new(f.pop().unwrap_or_default()),
            c: ActuationVector::new(f.pop().unwrap_or_default()),
        })
        .collect();
    check_count(count, samples.len())?;
    Ok(Dataset { meta, samples })
}

pub fn format_pairs(meta: &DatasetMeta, pairs: &[PairedSample]) -> String {
    let mut out = header("pairs", meta, pairs.len());
    for s in pairs {
        push_fields(&mut out, s.c.as_slice());
        out.push_str(" | ");
        push_fields(&mut out, s.p_s.as_slice());
        out.push_str(" | ");
        push_fields(&mut out, s.p_r.as_slice());
        out.push('\n');
    }
    out
}

pub fn pairs_meta(spec: &RobotSpec, seed: u64) -> DatasetMeta {
    DatasetMeta::for_spec(spec, 0, seed)
}

pub fn write_pairs(path: &Path, meta: &DatasetMeta, pairs: &[PairedSample]) -> Result<()> {
    fs::write(path, format_pairs(meta, pairs)).map_err(|e| Error::io(path, e))
}

pub fn read_pairs(path: &Path) -> Result<(DatasetMeta, Vec<PairedSample>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (meta, count, records) = parse_body(&text, "pairs", |meta| vec![meta.m, meta.n, meta.n])?;
    let pairs: Vec<PairedSample> = records
        .into_iter()
        .map(|mut f| PairedSample {
            p_r: TaskPoint::new(f.pop().unwrap_or_default()),
            p_s: TaskPoint::new(f.pop().unwrap_or_default()),
            c: ActuationVector::new(f.pop().unwrap_or_default()),
        })
        .collect();
    check_count(count, pairs.len())?;
    Ok((meta, pairs))
}

fn check_count(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Parse {
            line: found + 1,
            reason: format!("expected {expected} records, found {found}; file ends after line {}", found + 1),
        });
    }
    Ok(())
}

type Records = Vec<Vec<Vec<f64>>>;

fn parse_body<F>(text: &str, tag: &str, widths: F) -> Result<(DatasetMeta, usize, Records)>
where
    F: Fn(&DatasetMeta) -> Vec<usize>,
{
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or(Error::Parse {
        line: 1,
        reason: "empty file".into(),
    })?;
    let (meta, count) = parse_header(first, tag)?;
    let widths = widths(&meta);
    let mut records = Vec::with_capacity(count);
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let groups: Vec<&str> = line.split('|').collect();
        if groups.len() != widths.len() {
            return Err(Error::Parse {
                line: lineno,
                reason: format!(
                    "expected {} '|'-separated groups, found {} (last good line {})",
                    widths.len(),
                    groups.len(),
                    lineno - 1
                ),
            });
        }
        let mut record = Vec::with_capacity(widths.len());
        for (group, &width) in groups.iter().zip(&widths) {
            let values = group
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|e| Error::Parse {
                        line: lineno,
                        reason: format!("bad number {tok:?}: {e} (last good line {})", lineno - 1),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != width {
                return Err(Error::Parse {
                    line: lineno,
                    reason: format!(
                        "expected {width} values in group, found {} (last good line {})",
                        values.len(),
                        lineno - 1
                    ),
                });
            }
            record.push(values);
        }
        records.push(record);
    }
    Ok((meta, count, records))
}

fn parse_header(line: &str, tag: &str) -> Result<(DatasetMeta, usize)> {
    let bad = |reason: String| Error::Parse { line: 1, reason };
    let rest = line
        .strip_prefix(&format!("#{tag} "))
        .ok_or_else(|| bad(format!("missing #{tag} header")))?;
    let mut robot = None;
    let (mut segments, mut m, mut n, mut seed, mut count) = (None, None, None, None, None);
    let mut ranges = None;
    let mut units = None;
    for kv in rest.split_whitespace() {
        let (key, value) = kv.split_once('=').ok_or_else(|| bad(format!("malformed field {kv:?}")))?;
        let int = |v: &str| v.parse::<u64>().map_err(|e| bad(format!("{key}: {e}")));
        match key {
            "robot" => robot = Some(value.parse::<RobotId>().map_err(|e| bad(e.to_string()))?),
            "N" => segments = Some(int(value)? as usize),
            "m" => m = Some(int(value)? as usize),
            "n" => n = Some(int(value)? as usize),
            "seed" => seed = Some(int(value)?),
            "count" => count = Some(int(value)? as usize),
            "units" => units = Some(value.to_string()),
            "ranges" => {
                let parsed = value
                    .split(',')
                    .map(|r| {
                        let (lo, hi) = r.split_once(':').ok_or_else(|| bad(format!("bad range {r:?}")))?;
                        let lo = lo.parse::<f64>().map_err(|e| bad(format!("range: {e}")))?;
                        let hi = hi.parse::<f64>().map_err(|e| bad(format!("range: {e}")))?;
                        Ok(ActuationRange::new(lo, hi))
                    })
                    .collect::<Result<Vec<_>>>()?;
                ranges = Some(parsed);
            }
            _ => return Err(bad(format!("unknown header key {key:?}"))),
        }
    }
    let missing = |k: &str| bad(format!("header missing {k}"));
    let meta = DatasetMeta {
        robot: robot.ok_or_else(|| missing("robot"))?,
        segments: segments.ok_or_else(|| missing("N"))?,
        m: m.ok_or_else(|| missing("m"))?,
        n: n.ok_or_else(|| missing("n"))?,
        ranges: ranges.ok_or_else(|| missing("ranges"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
        units: units.ok_or_else(|| missing("units"))?,
    };
    if meta.ranges.len() != meta.m {
        return Err(Error::validation(format!(
            "header declares m={} but {} ranges",
            meta.m,
            meta.ranges.len()
        )));
    }
    Ok((meta, count.ok_or_else(|| missing("count"))?))
}

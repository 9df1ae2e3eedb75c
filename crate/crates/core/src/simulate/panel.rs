//! Dense per-path, per-node storage and its export formats.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::Real;

/// Values of width `width` at every `(path, node)`, path-major.
///
/// A panel with a single path stands for a process that is identical on
/// every path; [`Panel::at`] broadcasts it.
#[derive(Clone, Debug, PartialEq)]
pub struct Panel<S> {
    paths: usize,
    nodes: usize,
    width: usize,
    data: Vec<S>,
}

impl<S: Real> Panel<S> {
    pub fn zeros(paths: usize, nodes: usize, width: usize) -> Self {
        Self {
            paths,
            nodes,
            width,
            data: vec![S::zero(); paths * nodes * width],
        }
    }

    /// Panel whose every slot holds `value`.
    pub fn constant(paths: usize, nodes: usize, value: &[S]) -> Self {
        let mut data = Vec::with_capacity(paths * nodes * value.len());
        for _ in 0..paths * nodes {
            data.extend_from_slice(value);
        }
        Self {
            paths,
            nodes,
            width: value.len(),
            data,
        }
    }

    #[inline]
    pub fn paths(&self) -> usize {
        self.paths
    }

    #[inline]
    pub fn nodes(&self) -> usize {
        self.nodes
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    /// True when the panel holds one path that is broadcast to all.
    #[inline]
    pub fn is_shared(&self) -> bool {
        self.paths == 1
    }

    #[inline]
    pub fn slot(&self, p: usize, k: usize) -> &[S] {
        let i = (p * self.nodes + k) * self.width;
        &self.data[i..i + self.width]
    }

    #[inline]
    pub fn slot_mut(&mut self, p: usize, k: usize) -> &mut [S] {
        let i = (p * self.nodes + k) * self.width;
        &mut self.data[i..i + self.width]
    }

    /// Slot `(p, k)`, broadcasting a shared panel.
    #[inline]
    pub fn at(&self, p: usize, k: usize) -> &[S] {
        if self.paths == 1 {
            self.slot(0, k)
        } else {
            self.slot(p, k)
        }
    }

    /// Square-matrix view of slot `(p, k)`.
    pub fn mat_at(&self, p: usize, k: usize, rows: usize) -> Mat<S> {
        let s = self.at(p, k);
        Mat::from_row_major(rows, s.len() / rows, s.to_vec())
    }

    /// All nodes of path `p`.
    pub fn path(&self, p: usize) -> &[S] {
        let len = self.nodes * self.width;
        &self.data[p * len..(p + 1) * len]
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |m, v| m.max(v.abs()))
    }

    /// Largest `|a − b|` over all slots, broadcasting shared panels.
    pub fn max_abs_diff(&self, other: &Self) -> S {
        let paths = self.paths.max(other.paths);
        let mut worst = S::zero();
        for p in 0..paths {
            for k in 0..self.nodes.min(other.nodes) {
                for (a, b) in self.at(p, k).iter().zip(other.at(p, k)) {
                    worst = worst.max((*a - *b).abs());
                }
            }
        }
        worst
    }

    /// Builds a panel path by path in parallel. `fill(p, chunk)` writes the
    /// `nodes × width` slots of path `p`; on failure the error of the
    /// lowest-indexed failing path is returned.
    pub fn par_build<F>(paths: usize, nodes: usize, width: usize, fill: F) -> Result<Self>
    where
        F: Fn(usize, &mut [S]) -> Result<()> + Sync,
    {
        let mut panel = Self::zeros(paths, nodes, width);
        let chunk = (nodes * width).max(1);
        if nodes * width == 0 {
            return Ok(panel);
        }
        let outcomes: Vec<Result<()>> = panel
            .data
            .par_chunks_mut(chunk)
            .enumerate()
            .map(|(p, c)| fill(p, c))
            .collect();
        match outcomes.into_iter().find(|r| r.is_err()) {
            Some(Err(e)) => Err(e),
            _ => Ok(panel),
        }
    }

    /// Pointwise `self + k·other`, broadcasting shared panels.
    pub fn axpy(&self, k: S, other: &Self) -> Self {
        assert_eq!(self.width, other.width, "panel widths differ");
        assert_eq!(self.nodes, other.nodes, "panel node counts differ");
        let paths = self.paths.max(other.paths);
        let mut out = Self::zeros(paths, self.nodes, self.width);
        for p in 0..paths {
            for kk in 0..self.nodes {
                let a = self.at(p, kk);
                let b = other.at(p, kk);
                for ((o, &x), &y) in out.slot_mut(p, kk).iter_mut().zip(a).zip(b) {
                    *o = x + k * y;
                }
            }
        }
        out
    }

    /// Panel where every path of a shared panel has been materialised.
    pub fn expanded(&self, paths: usize) -> Self {
        if self.paths == paths {
            return self.clone();
        }
        assert!(self.paths == 1, "only shared panels can be expanded");
        let mut data = Vec::with_capacity(paths * self.data.len());
        for _ in 0..paths {
            data.extend_from_slice(&self.data);
        }
        Self {
            paths,
            nodes: self.nodes,
            width: self.width,
            data,
        }
    }

    /// Largest spread `max_p − min_p` of any component at any node.
    pub fn path_spread(&self) -> S {
        let mut worst = S::zero();
        for k in 0..self.nodes {
            for i in 0..self.width {
                let (mut lo, mut hi) = (S::infinity(), S::neg_infinity());
                for p in 0..self.paths {
                    let v = self.slot(p, k)[i];
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                if self.paths > 0 {
                    worst = worst.max(hi - lo);
                }
            }
        }
        worst
    }
}

/// Layout of one exported field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldShape {
    Vector,
    /// Row-major matrix with the given row count.
    Matrix(usize),
}

/// One named panel for export.
#[derive(Clone, Copy, Debug)]
pub struct PanelField<'a, S> {
    pub scenario: usize,
    pub name: &'a str,
    pub shape: FieldShape,
    pub panel: &'a Panel<S>,
}

impl<S: Real> PanelField<'_, S> {
    fn label(&self, i: usize) -> String {
        match self.shape {
            FieldShape::Vector => format!("{}[{i}]", self.name),
            FieldShape::Matrix(rows) => {
                let cols = self.panel.width() / rows.max(1);
                format!("{}[{}][{}]", self.name, i / cols.max(1), i % cols.max(1))
            }
        }
    }
}

/// Writes the columnar CSV `scenario,path,step,field,value`. Shared panels are
/// written once with path 0 for panels of a single path.
pub fn write_csv<S: Real, W: Write + ?Sized>(
    out: &mut W,
    fields: &[PanelField<'_, S>],
) -> io::Result<()> {
    writeln!(out, "scenario,path,step,field,value")?;
    for f in fields {
        let labels: Vec<String> = (0..f.panel.width()).map(|i| f.label(i)).collect();
        for p in 0..f.panel.paths() {
            for k in 0..f.panel.nodes() {
                for (label, v) in labels.iter().zip(f.panel.slot(p, k)) {
                    writeln!(out, "{},{p},{k},{label},{}", f.scenario, v.as_f64())?;
                }
            }
        }
    }
    Ok(())
}

/// Magic bytes opening a binary panel dump.
pub const BINARY_MAGIC: [u8; 8] = *b"RSONCPNL";
pub const BINARY_VERSION: u32 = 1;

/// Header written in front of binary panel dumps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinaryHeader {
    pub seed: u64,
    pub n_paths: u64,
    pub steps: u64,
    pub horizon: f64,
}

/// Writes a little-endian binary dump: magic, version, seed, path count,
/// steps, horizon, field count, then per field its name, scenario, path
/// count, node count and width, followed by all field data as `f64`.
pub fn write_binary<S: Real, W: Write + ?Sized>(
    out: &mut W,
    header: BinaryHeader,
    fields: &[PanelField<'_, S>],
) -> io::Result<()> {
    out.write_all(&BINARY_MAGIC)?;
    out.write_all(&BINARY_VERSION.to_le_bytes())?;
    out.write_all(&header.seed.to_le_bytes())?;
    out.write_all(&header.n_paths.to_le_bytes())?;
    out.write_all(&header.steps.to_le_bytes())?;
    out.write_all(&header.horizon.to_le_bytes())?;
    out.write_all(&(fields.len() as u32).to_le_bytes())?;
    for f in fields {
        out.write_all(&(f.name.len() as u32).to_le_bytes())?;
        out.write_all(f.name.as_bytes())?;
        out.write_all(&(f.scenario as u32).to_le_bytes())?;
        out.write_all(&(f.panel.paths() as u64).to_le_bytes())?;
        out.write_all(&(f.panel.nodes() as u64).to_le_bytes())?;
        out.write_all(&(f.panel.width() as u32).to_le_bytes())?;
    }
    for f in fields {
        for v in f.panel.as_slice() {
            out.write_all(&v.as_f64().to_le_bytes())?;
        }
    }
    Ok(())
}

/// A field read back from a binary dump.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryField {
    pub name: String,
    pub scenario: usize,
    pub panel: Panel<f64>,
}

/// Parses a dump produced by [`write_binary`].
pub fn read_binary(bytes: &[u8]) -> Result<(BinaryHeader, Vec<BinaryField>)> {
    let mut cur = bytes;
    let mut take = |n: usize| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(Error::InvalidInput("truncated binary panel dump".into()));
        }
        let (a, b) = cur.split_at(n);
        cur = b;
        Ok(a)
    };
    if take(8)? != BINARY_MAGIC {
        return Err(Error::InvalidInput("not a panel dump (bad magic)".into()));
    }
    let u32_of = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
    let u64_of = |b: &[u8]| u64::from_le_bytes(b.try_into().expect("8 bytes"));
    let version = u32_of(take(4)?);
    if version != BINARY_VERSION {
        return Err(Error::InvalidInput(format!(
            "unsupported dump version {version}"
        )));
    }
    let header = BinaryHeader {
        seed: u64_of(take(8)?),
        n_paths: u64_of(take(8)?),
        steps: u64_of(take(8)?),
        horizon: f64::from_le_bytes(take(8)?.try_into().expect("8 bytes")),
    };
    let count = u32_of(take(4)?) as usize;
    let mut metas = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u32_of(take(4)?) as usize;
        let name = String::from_utf8(take(len)?.to_vec())
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        let scenario = u32_of(take(4)?) as usize;
        let paths = u64_of(take(8)?) as usize;
        let nodes = u64_of(take(8)?) as usize;
        let width = u32_of(take(4)?) as usize;
        metas.push((name, scenario, paths, nodes, width));
    }
    let mut fields = Vec::with_capacity(count);
    for (name, scenario, paths, nodes, width) in metas {
        let len = paths * nodes * width;
        let raw = take(len * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        fields.push(BinaryField {
            name,
            scenario,
            panel: Panel {
                paths,
                nodes,
                width,
                data,
            },
        });
    }
    Ok((header, fields))
}

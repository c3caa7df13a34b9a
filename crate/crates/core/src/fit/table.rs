//! Precomputed analytic CRPs over the fit grid, with an on-disk cache.
//!
//! Table rows are computed from Gram matrices of the encoding contexts rather
//! than by replaying the memory model per conditioning position: for a
//! conditioning item `i` the retrieval cue is
//! `t = rho t_N + beta_rec u / |u|` with `u = (1 - gamma) f_i + gamma t_{i-1}`,
//! and the strength of item `l` is `<t_{l-1}, t>`, which expands into inner
//! products already held in the Gram matrix.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use super::grid::FitGrid;
use crate::cmr::{encode_list, CmrParams, ItemEmbedding};
use crate::error::{Error, Result};

pub const TABLE_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"CMRCRPT\0";

/// Mean CRP vectors `q` over `[-L, L]` for every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct CrpTable {
    grid: FitGrid,
    list_len: usize,
    lag_range: usize,
    /// Row-major `grid.len() x (2L + 1)`.
    values: Vec<f64>,
}

impl CrpTable {
    pub fn grid(&self) -> &FitGrid {
        &self.grid
    }

    pub fn list_len(&self) -> usize {
        self.list_len
    }

    pub fn lag_range(&self) -> usize {
        self.lag_range
    }

    pub fn width(&self) -> usize {
        2 * self.lag_range + 1
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn format_version(&self) -> u32 {
        TABLE_FORMAT_VERSION
    }

    pub fn q(&self, index: usize) -> &[f64] {
        let w = self.width();
        &self.values[index * w..(index + 1) * w]
    }

    /// Flat index of the grid point `(e, r, g, t)` (indices into each axis).
    pub fn index(&self, e: usize, r: usize, g: usize, t: usize) -> usize {
        let [_, nr, ng, nt] = self.grid.shape();
        ((e * nr + r) * ng + g) * nt + t
    }

    /// Axis indices of a flat index.
    pub fn axes(&self, index: usize) -> [usize; 4] {
        let [_, nr, ng, nt] = self.grid.shape();
        let t = index % nt;
        let g = (index / nt) % ng;
        let r = (index / (nt * ng)) % nr;
        let e = index / (nt * ng * nr);
        [e, r, g, t]
    }

    pub fn params(&self, index: usize) -> CmrParams {
        let [e, r, g, t] = self.axes(index);
        CmrParams::new(
            self.grid.beta_enc[e],
            self.grid.beta_rec[r],
            self.grid.gamma_ft[g],
            self.grid.inv_temp[t],
        )
        .expect("grid was validated")
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> + '_ {
        self.values.chunks_exact(self.width()).enumerate()
    }

    /// Table restricted to a sub-grid whose axes are subsets of this grid's.
    pub fn subset(&self, grid: &FitGrid) -> Result<CrpTable> {
        grid.validate()?;
        let find = |axis: &[f64], v: f64| {
            axis.iter()
                .position(|&a| a == v)
                .ok_or_else(|| Error::InvalidParameter(format!("value {v} not in table grid")))
        };
        let pick = |axis: &[f64], sub: &[f64]| sub.iter().map(|&v| find(axis, v)).collect::<Result<Vec<_>>>();
        let es = pick(&self.grid.beta_enc, &grid.beta_enc)?;
        let rs = pick(&self.grid.beta_rec, &grid.beta_rec)?;
        let gs = pick(&self.grid.gamma_ft, &grid.gamma_ft)?;
        let ts = pick(&self.grid.inv_temp, &grid.inv_temp)?;
        let mut values = Vec::with_capacity(grid.len() * self.width());
        for &e in &es {
            for &r in &rs {
                for &g in &gs {
                    for &t in &ts {
                        values.extend_from_slice(self.q(self.index(e, r, g, t)));
                    }
                }
            }
        }
        Ok(CrpTable {
            grid: grid.clone(),
            list_len: self.list_len,
            lag_range: self.lag_range,
            values,
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&TABLE_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.list_len as u64).to_le_bytes())?;
        w.write_all(&(self.lag_range as u64).to_le_bytes())?;
        for axis in [
            &self.grid.beta_enc,
            &self.grid.beta_rec,
            &self.grid.gamma_ft,
            &self.grid.inv_temp,
        ] {
            w.write_all(&(axis.len() as u64).to_le_bytes())?;
            for v in axis {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io("<crp table>", e))?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(Error::Data("not a CRP table file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        if version != TABLE_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "CRP table format version {version}, expected {TABLE_FORMAT_VERSION}"
            )));
        }
        let list_len = cur.u64()? as usize;
        let lag_range = cur.u64()? as usize;
        let mut axes = Vec::with_capacity(4);
        for _ in 0..4 {
            let n = cur.u64()? as usize;
            axes.push((0..n).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?);
        }
        let n_values = cur.u64()? as usize;
        let values = (0..n_values).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        if cur.pos != bytes.len() {
            return Err(Error::Data("trailing bytes in CRP table file".into()));
        }
        let inv_temp = axes.pop().unwrap();
        let gamma_ft = axes.pop().unwrap();
        let beta_rec = axes.pop().unwrap();
        let beta_enc = axes.pop().unwrap();
        let grid = FitGrid {
            beta_enc,
            beta_rec,
            gamma_ft,
            inv_temp,
        };
        grid.validate()?;
        if values.len() != grid.len() * (2 * lag_range + 1) {
            return Err(Error::Data("CRP table payload does not match its grid".into()));
        }
        Ok(Self {
            grid,
            list_len,
            lag_range,
            values,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).map_err(|e| Error::io(path, e))?;
        // Write-then-rename so concurrent readers never see a partial file.
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, buf).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Data("truncated CRP table file".into()))?;
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Encoding contexts for one `beta_enc`: `ctx[a][i]` is component `i` of `t_a`,
/// and `gram[a][b] = <t_a, t_b>`.
struct Encoding {
    ctx: Vec<Vec<f64>>,
    gram: Vec<Vec<f64>>,
}

fn encoding(beta_enc: f64, list_len: usize) -> Result<Encoding> {
    let items: Vec<_> = (0..list_len)
        .map(|i| ItemEmbedding::new(i, list_len))
        .collect::<Result<_>>()?;
    let params = CmrParams::new(beta_enc, 0.0, 0.0, 0.0)?;
    let (_, contexts) = encode_list(&items, &params)?;
    let ctx: Vec<Vec<f64>> = contexts.iter().map(|t| t.as_vector().iter().copied().collect()).collect();
    let gram = ctx
        .iter()
        .map(|a| ctx.iter().map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum()).collect())
        .collect();
    Ok(Encoding { ctx, gram })
}

/// Mean q vectors for every inverse temperature at one (beta_enc, beta_rec,
/// gamma_ft) point, as `inv_temp.len() x width` row-major.
fn q_block(enc: &Encoding, beta_rec: f64, gamma: f64, inv_temp: &[f64], lag_range: usize) -> Vec<f64> {
    let n = enc.ctx.len() - 1;
    let width = 2 * lag_range + 1;
    let l = lag_range as i64;
    let mut sums = vec![0.0; inv_temp.len() * width];
    let mut strengths = vec![0.0; n];
    let u_norm = ((1.0 - gamma) * (1.0 - gamma) + gamma * gamma).sqrt();
    for i in 0..n {
        // <t_N, u>, using <t_N, f_i> = t_N[i] and <t_N, t_{i-1}> from the Gram matrix.
        let c = ((1.0 - gamma) * enc.ctx[n][i] + gamma * enc.gram[n][i]) / u_norm;
        let disc = (1.0 + beta_rec * beta_rec * (c * c - 1.0)).max(0.0);
        let rho = disc.sqrt() - beta_rec * c;
        let scale = beta_rec / u_norm;
        for (lpos, s) in strengths.iter_mut().enumerate() {
            *s = rho * enc.gram[lpos][n]
                + scale * ((1.0 - gamma) * enc.ctx[lpos][i] + gamma * enc.gram[lpos][i]);
        }
        let max = strengths.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (ti, &tau) in inv_temp.iter().enumerate() {
            let z: f64 = strengths.iter().map(|s| ((s - max) * tau).exp()).sum();
            for lag in -l..=l {
                if !crate::cmr::window_contains(lag, n, i) {
                    continue;
                }
                let target = (i as i64 + lag) as usize;
                sums[ti * width + (lag + l) as usize] += ((strengths[target] - max) * tau).exp() / z;
            }
        }
    }
    for ti in 0..inv_temp.len() {
        for lag in -l..=l {
            let count = crate::cmr::window_len(lag, n) as f64;
            sums[ti * width + (lag + l) as usize] /= count;
        }
    }
    sums
}

/// Analytic CRP means for every point of `grid` on a list of `list_len` items.
pub fn build_crp_table(grid: &FitGrid, list_len: usize, lag_range: usize) -> Result<CrpTable> {
    grid.validate()?;
    if list_len <= 2 * lag_range {
        return Err(Error::InvalidParameter(format!(
            "list length {list_len} too short for lag range {lag_range}"
        )));
    }
    let encodings: Vec<Encoding> = grid
        .beta_enc
        .par_iter()
        .map(|&b| encoding(b, list_len))
        .collect::<Result<_>>()?;
    let [ne, nr, ng, _] = grid.shape();
    let blocks: Vec<Vec<f64>> = (0..ne * nr * ng)
        .into_par_iter()
        .map(|k| {
            let e = k / (nr * ng);
            let r = (k / ng) % nr;
            let g = k % ng;
            q_block(&encodings[e], grid.beta_rec[r], grid.gamma_ft[g], &grid.inv_temp, lag_range)
        })
        .collect();
    Ok(CrpTable {
        grid: grid.clone(),
        list_len,
        lag_range,
        values: blocks.concat(),
    })
}

/// Load the table from `path` when it matches the request, otherwise build it
/// and try to write it there. A failed write is returned next to the table.
pub fn build_crp_table_cached(
    grid: &FitGrid,
    list_len: usize,
    lag_range: usize,
    path: &Path,
) -> Result<(CrpTable, Option<Error>)> {
    if let Ok(table) = CrpTable::load(path) {
        if &table.grid == grid && table.list_len == list_len && table.lag_range == lag_range {
            return Ok((table, None));
        }
    }
    let table = build_crp_table(grid, list_len, lag_range)?;
    let err = table.save(path).err();
    Ok((table, err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmr::analytic_crp;

    fn small_grid() -> FitGrid {
        FitGrid {
            beta_enc: vec![0.3, 0.7, 1.0],
            beta_rec: vec![0.0, 0.5, 1.0],
            gamma_ft: vec![0.0, 0.4, 1.0],
            inv_temp: vec![0.5, 5.0, 100.0],
        }
    }

    #[test]
    fn gram_route_matches_direct_model() {
        let table = build_crp_table(&small_grid(), 25, 4).unwrap();
        for (idx, q) in table.iter() {
            let direct = analytic_crp(&table.params(idx), 25, 4).unwrap();
            for (a, b) in q.iter().zip(direct.means()) {
                assert!((a - b).abs() < 1e-12, "index {idx}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn chaining_entry_is_a_forward_step() {
        let table = build_crp_table(&small_grid(), 30, 5).unwrap();
        let q = table.q(table.index(2, 2, 0, 2));
        for (k, v) in q.iter().enumerate() {
            let expect = if k == 6 { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn index_round_trip() {
        let table = build_crp_table(&small_grid(), 12, 2).unwrap();
        for idx in 0..table.len() {
            let [e, r, g, t] = table.axes(idx);
            assert_eq!(table.index(e, r, g, t), idx);
        }
    }

    #[test]
    fn cache_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.bin");
        let (built, err) = build_crp_table_cached(&small_grid(), 12, 2, &path).unwrap();
        assert!(err.is_none());
        let (loaded, _) = build_crp_table_cached(&small_grid(), 12, 2, &path).unwrap();
        assert_eq!(built, loaded);
        let rebuilt = build_crp_table(&small_grid(), 12, 2).unwrap();
        assert_eq!(
            rebuilt.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            loaded.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn cache_write_failure_still_returns_table() {
        let (table, err) =
            build_crp_table_cached(&small_grid(), 12, 2, Path::new("/nonexistent-dir/x/table.bin")).unwrap();
        assert_eq!(table.len(), 81);
        assert!(matches!(err, Some(Error::Io { .. })));
    }

    #[test]
    fn corrupt_files_rejected() {
        assert!(CrpTable::read_from(&b"nonsense"[..]).is_err());
        let table = build_crp_table(&small_grid(), 12, 2).unwrap();
        let mut buf = Vec::new();
        table.write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(CrpTable::read_from(buf.as_slice()).is_err());
    }

    #[test]
    fn subset_selects_entries() {
        let table = build_crp_table(&small_grid(), 12, 2).unwrap();
        let mut g = small_grid();
        g.beta_enc = vec![0.7];
        g.inv_temp = vec![5.0];
        let sub = table.subset(&g).unwrap();
        assert_eq!(sub.len(), 9);
        assert_eq!(sub.q(sub.index(0, 1, 2, 0)), table.q(table.index(1, 1, 2, 1)));
    }
}

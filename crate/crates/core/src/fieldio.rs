//! Binary field files and their JSON sidecars.
//!
//! Layout (little-endian): magic `OFLX1`, `u32` axis count, per axis
//! `u64` dims + `f64` spacing + `u8` axis kind, `u32` component count,
//! `f64` time, then every component in C order as IEEE-754 `f64`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AxisKind, Grid, Snapshot, Tags, Trajectory};

pub const MAGIC: &[u8; 5] = b"OFLX1";

#[derive(Clone, Debug, PartialEq)]
pub struct FieldFile {
    pub grid: Grid,
    pub components: Vec<Vec<f64>>,
    pub time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    Velocity,
    Pressure,
    Defect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub quantity: Quantity,
    #[serde(default)]
    pub tags: Tags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pressure_file: Option<String>,
}

pub fn encode(grid: &Grid, components: &[Vec<f64>], time: f64) -> Result<Vec<u8>> {
    for c in components {
        if c.len() != grid.len() {
            return Err(Error::Shape(format!(
                "component has {} values, grid has {} nodes",
                c.len(),
                grid.len()
            )));
        }
    }
    let mut out = Vec::with_capacity(64 + 8 * grid.len() * components.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(grid.ndim() as u32).to_le_bytes());
    for a in 0..grid.ndim() {
        out.extend_from_slice(&(grid.dims()[a] as u64).to_le_bytes());
        out.extend_from_slice(&grid.spacing()[a].to_le_bytes());
        out.push(grid.kind(a).code());
    }
    out.extend_from_slice(&(components.len() as u32).to_le_bytes());
    out.extend_from_slice(&time.to_le_bytes());
    for c in components {
        for v in c {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!(
                "truncated file: need {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(buf: &[u8]) -> Result<FieldFile> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(5)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let naxes = c.u32()? as usize;
    if !(2..=3).contains(&naxes) {
        return Err(Error::Format(format!("unsupported axis count {naxes}")));
    }
    let mut dims = Vec::new();
    let mut spacing = Vec::new();
    let mut kinds = Vec::new();
    for _ in 0..naxes {
        dims.push(c.u64()? as usize);
        spacing.push(c.f64()?);
        let code = c.take(1)?[0];
        kinds.push(
            AxisKind::from_code(code)
                .ok_or_else(|| Error::Format(format!("unknown axis kind {code}")))?,
        );
    }
    let grid = Grid::from_spacing(&dims, &spacing, &kinds)?;
    let ncomp = c.u32()? as usize;
    let time = c.f64()?;
    let mut components = Vec::with_capacity(ncomp);
    for _ in 0..ncomp {
        let raw = c.take(8 * grid.len())?;
        components.push(
            raw.chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        );
    }
    if c.pos != buf.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            buf.len() - c.pos
        )));
    }
    Ok(FieldFile {
        grid,
        components,
        time,
    })
}

pub fn write_field(path: &Path, grid: &Grid, components: &[Vec<f64>], time: f64) -> Result<()> {
    let bytes = encode(grid, components, time)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<FieldFile> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    decode(&buf)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_sidecar(path: &Path, sidecar: &Sidecar) -> Result<()> {
    let text = serde_json::to_string_pretty(sidecar)?;
    fs::write(sidecar_path(path), text + "\n")?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<Option<Sidecar>> {
    let p = sidecar_path(path);
    if !p.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(&fs::read_to_string(p)?)?))
}

/// Writes `<stem>.vel.oflx` and, when present, `<stem>.p.oflx`, each with a sidecar.
/// Returns the velocity file path.
pub fn save_snapshot(dir: &Path, stem: &str, snap: &Snapshot) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let vpath = dir.join(format!("{stem}.vel.oflx"));
    write_field(&vpath, &snap.grid, &snap.velocity, snap.time)?;
    let pressure_file = match &snap.pressure {
        Some(p) => {
            let name = format!("{stem}.p.oflx");
            let ppath = dir.join(&name);
            write_field(&ppath, &snap.grid, std::slice::from_ref(p), snap.time)?;
            write_sidecar(
                &ppath,
                &Sidecar {
                    quantity: Quantity::Pressure,
                    tags: Tags {
                        generator: snap.tags.generator.clone(),
                        seed: snap.tags.seed,
                        ..Tags::default()
                    },
                    pressure_file: None,
                },
            )?;
            Some(name)
        }
        None => None,
    };
    write_sidecar(
        &vpath,
        &Sidecar {
            quantity: Quantity::Velocity,
            tags: snap.tags.clone(),
            pressure_file,
        },
    )?;
    Ok(vpath)
}

/// Reads a velocity file, its sidecar (if any) and the referenced pressure file.
pub fn load_snapshot(vpath: &Path) -> Result<Snapshot> {
    let ff = read_field(vpath)?;
    let mut snap = Snapshot::new(ff.grid, ff.components, ff.time)?;
    if let Some(sc) = read_sidecar(vpath)? {
        if sc.quantity != Quantity::Velocity {
            return Err(Error::Format(format!(
                "{} is tagged {:?}, expected velocity",
                vpath.display(),
                sc.quantity
            )));
        }
        snap.tags = sc.tags;
        if let Some(name) = sc.pressure_file {
            let ppath = vpath.parent().unwrap_or(Path::new(".")).join(name);
            let pf = read_field(&ppath)?;
            if pf.grid != snap.grid || pf.components.len() != 1 {
                return Err(Error::Format(format!(
                    "pressure file {} does not match the velocity grid",
                    ppath.display()
                )));
            }
            snap.pressure = pf.components.into_iter().next();
        }
    }
    Ok(snap)
}

/// Saves a trajectory as `snap_0000`, `snap_0001`, ... in `dir`.
pub fn save_trajectory(dir: &Path, traj: &Trajectory) -> Result<Vec<PathBuf>> {
    traj.snapshots
        .iter()
        .enumerate()
        .map(|(k, s)| save_snapshot(dir, &format!("snap_{k:04}"), s))
        .collect()
}

/// Loads velocity files in the given order; the time step is inferred.
pub fn load_trajectory(paths: &[PathBuf]) -> Result<Trajectory> {
    let snaps = paths
        .iter()
        .map(|p| load_snapshot(p))
        .collect::<Result<Vec<_>>>()?;
    let dt = if snaps.len() > 1 {
        snaps[1].time - snaps[0].time
    } else {
        0.0
    };
    Trajectory::new(snaps, dt)
}

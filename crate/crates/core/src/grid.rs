//! Uniform Cartesian lattices, channel geometry and node-collocated fields.
//!
//! Every field in the crate is a flat `Vec<f64>` in C order (last axis
//! fastest) over the nodes of a [`Grid`]. Periodic axes identify node `dims`
//! with node `0`; wall axes carry both wall planes as nodes `0` and `dims-1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible node count per axis.
pub const MIN_DIMS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisKind {
    Periodic,
    Wall,
}

impl AxisKind {
    pub fn code(self) -> u8 {
        match self {
            AxisKind::Periodic => 0,
            AxisKind::Wall => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(AxisKind::Periodic),
            1 => Some(AxisKind::Wall),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dims: Vec<usize>,
    spacing: Vec<f64>,
    kinds: Vec<AxisKind>,
}

impl Grid {
    /// Builds a grid from node counts and physical extents.
    ///
    /// Periodic axes get `extent / dims` spacing, wall axes `extent / (dims - 1)`
    /// so that both walls are nodes.
    pub fn new(dims: &[usize], extents: &[f64], kinds: &[AxisKind]) -> Result<Grid> {
        if dims.len() != extents.len() || dims.len() != kinds.len() {
            return Err(Error::InvalidGrid(
                "dims, extents and axis kinds must have equal length".into(),
            ));
        }
        let spacing = dims
            .iter()
            .zip(extents)
            .zip(kinds)
            .map(|((&n, &l), &k)| match k {
                AxisKind::Periodic => l / n as f64,
                AxisKind::Wall => l / (n.max(2) - 1) as f64,
            })
            .collect::<Vec<_>>();
        for (axis, &l) in extents.iter().enumerate() {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "extent of axis {axis} must be positive, got {l}"
                )));
            }
        }
        Grid::from_spacing(dims, &spacing, kinds)
    }

    pub fn from_spacing(dims: &[usize], spacing: &[f64], kinds: &[AxisKind]) -> Result<Grid> {
        if !(2..=3).contains(&dims.len()) {
            return Err(Error::InvalidGrid(format!(
                "only 2 or 3 axes are supported, got {}",
                dims.len()
            )));
        }
        if dims.len() != spacing.len() || dims.len() != kinds.len() {
            return Err(Error::InvalidGrid(
                "dims, spacing and axis kinds must have equal length".into(),
            ));
        }
        for (axis, &n) in dims.iter().enumerate() {
            if n < MIN_DIMS {
                return Err(Error::GridTooCoarse { axis, dims: n });
            }
        }
        for (axis, &h) in spacing.iter().enumerate() {
            if !(h > 0.0) || !h.is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "spacing of axis {axis} must be positive, got {h}"
                )));
            }
        }
        Ok(Grid {
            dims: dims.to_vec(),
            spacing: spacing.to_vec(),
            kinds: kinds.to_vec(),
        })
    }

    /// Fully periodic box with equal node counts and extents on every axis.
    pub fn periodic_box(ndim: usize, n: usize, extent: f64) -> Result<Grid> {
        Grid::new(
            &vec![n; ndim],
            &vec![extent; ndim],
            &vec![AxisKind::Periodic; ndim],
        )
    }

    /// Channel with walls on `wall_axis` and periodic tangential axes.
    pub fn channel(dims: &[usize], extents: &[f64], wall_axis: usize) -> Result<Grid> {
        let kinds = (0..dims.len())
            .map(|a| {
                if a == wall_axis {
                    AxisKind::Wall
                } else {
                    AxisKind::Periodic
                }
            })
            .collect::<Vec<_>>();
        Grid::new(dims, extents, &kinds)
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn kinds(&self) -> &[AxisKind] {
        &self.kinds
    }

    pub fn kind(&self, axis: usize) -> AxisKind {
        self.kinds[axis]
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_periodic(&self) -> bool {
        self.kinds.iter().all(|&k| k == AxisKind::Periodic)
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Physical length of an axis (period for periodic axes, wall-to-wall otherwise).
    pub fn extent(&self, axis: usize) -> f64 {
        match self.kinds[axis] {
            AxisKind::Periodic => self.dims[axis] as f64 * self.spacing[axis],
            AxisKind::Wall => (self.dims[axis] - 1) as f64 * self.spacing[axis],
        }
    }

    /// Domain volume as integrated by the trapezoid rule.
    pub fn volume(&self) -> f64 {
        (0..self.ndim()).map(|a| self.extent(a)).product()
    }

    pub fn strides(&self) -> [usize; 3] {
        let mut s = [1usize; 3];
        let n = self.ndim();
        for a in (0..n.saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.dims[a + 1];
        }
        s
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.dims)
            .fold(0usize, |acc, (&i, &d)| acc * d + i)
    }

    pub fn unravel(&self, mut flat: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        for a in (0..self.ndim()).rev() {
            out[a] = flat % self.dims[a];
            flat /= self.dims[a];
        }
        out
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        i as f64 * self.spacing[axis]
    }

    pub fn position(&self, flat: usize) -> [f64; 3] {
        let idx = self.unravel(flat);
        let mut x = [0.0; 3];
        for a in 0..self.ndim() {
            x[a] = self.coord(a, idx[a]);
        }
        x
    }

    /// Neighbour of `flat` displaced by `offset` nodes along `axis`.
    /// Wraps on periodic axes; `None` when leaving a wall-bounded axis.
    pub fn shift(&self, flat: usize, axis: usize, offset: i64) -> Option<usize> {
        let idx = self.unravel(flat);
        let n = self.dims[axis] as i64;
        let mut j = idx[axis] as i64 + offset;
        match self.kinds[axis] {
            AxisKind::Periodic => j = j.rem_euclid(n),
            AxisKind::Wall => {
                if j < 0 || j >= n {
                    return None;
                }
            }
        }
        let strides = self.strides();
        Some((flat as i64 + (j - idx[axis] as i64) * strides[axis] as i64) as usize)
    }

    /// Node displaced by a multi-axis offset, or `None` when it leaves the grid.
    pub fn offset(&self, flat: usize, offset: &[i64]) -> Option<usize> {
        let idx = self.unravel(flat);
        let mut out = 0usize;
        for a in 0..self.ndim() {
            let n = self.dims[a] as i64;
            let mut j = idx[a] as i64 + offset[a];
            match self.kinds[a] {
                AxisKind::Periodic => j = j.rem_euclid(n),
                AxisKind::Wall => {
                    if j < 0 || j >= n {
                        return None;
                    }
                }
            }
            out = out * self.dims[a] + j as usize;
        }
        Some(out)
    }

    /// Trapezoid weight per axis: 1 everywhere except the wall planes (1/2).
    pub fn axis_weight(&self, axis: usize, i: usize) -> f64 {
        match self.kinds[axis] {
            AxisKind::Wall if i == 0 || i + 1 == self.dims[axis] => 0.5,
            _ => 1.0,
        }
    }

    /// Trapezoid quadrature weights (including the cell volume) for every node.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let dv = self.cell_volume();
        (0..self.len())
            .map(|f| {
                let idx = self.unravel(f);
                (0..self.ndim())
                    .map(|a| self.axis_weight(a, idx[a]))
                    .product::<f64>()
                    * dv
            })
            .collect()
    }

    /// Displacement `b - a` between two nodes, minimum-image on periodic axes.
    pub fn displacement(&self, a: usize, b: usize) -> [f64; 3] {
        let ia = self.unravel(a);
        let ib = self.unravel(b);
        let mut d = [0.0; 3];
        for ax in 0..self.ndim() {
            let mut k = ib[ax] as i64 - ia[ax] as i64;
            if self.kinds[ax] == AxisKind::Periodic {
                let n = self.dims[ax] as i64;
                k = k.rem_euclid(n);
                if k > n / 2 {
                    k -= n;
                }
            }
            d[ax] = k as f64 * self.spacing[ax];
        }
        d
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let d = self.displacement(a, b);
        d.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Grid with the same geometry and axes permuted by `perm` (new axis `a` is old `perm[a]`).
    pub fn permuted(&self, perm: &[usize]) -> Grid {
        Grid {
            dims: perm.iter().map(|&p| self.dims[p]).collect(),
            spacing: perm.iter().map(|&p| self.spacing[p]).collect(),
            kinds: perm.iter().map(|&p| self.kinds[p]).collect(),
        }
    }

    /// Lattice offsets `o` with `|o . h| <= radius`, in lexicographic order.
    pub fn ball_offsets(&self, radius: f64) -> Vec<Vec<i64>> {
        let reach = self
            .spacing
            .iter()
            .map(|&h| (radius / h + 1e-9).floor() as i64)
            .collect::<Vec<_>>();
        let r2 = radius * radius * (1.0 + 1e-12);
        let mut out = Vec::new();
        let mut o = vec![0i64; self.ndim()];
        fn rec(
            g: &Grid,
            axis: usize,
            reach: &[i64],
            o: &mut Vec<i64>,
            r2: f64,
            out: &mut Vec<Vec<i64>>,
        ) {
            if axis == g.ndim() {
                let d2: f64 = o
                    .iter()
                    .zip(&g.spacing)
                    .map(|(&k, &h)| (k as f64 * h).powi(2))
                    .sum();
                if d2 <= r2 {
                    out.push(o.clone());
                }
                return;
            }
            for k in -reach[axis]..=reach[axis] {
                o[axis] = k;
                rec(g, axis + 1, reach, o, r2, out);
            }
        }
        rec(self, 0, &reach, &mut o, r2, &mut out);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Geometry {
    Periodic,
    Channel { wall_axis: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    grid: Grid,
    geometry: Geometry,
}

/// Result of a nearest-wall query.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub distance: f64,
    pub sigma: Vec<f64>,
    pub normal: Vec<f64>,
}

impl Domain {
    pub fn new(grid: Grid) -> Result<Domain> {
        let walls = (0..grid.ndim())
            .filter(|&a| grid.kind(a) == AxisKind::Wall)
            .collect::<Vec<_>>();
        let geometry = match walls.as_slice() {
            [] => Geometry::Periodic,
            [w] => Geometry::Channel { wall_axis: *w },
            _ => {
                return Err(Error::InvalidGrid(
                    "channel geometry needs exactly one wall-bounded axis".into(),
                ))
            }
        };
        Ok(Domain { grid, geometry })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn wall_axis(&self) -> Option<usize> {
        match self.geometry {
            Geometry::Periodic => None,
            Geometry::Channel { wall_axis } => Some(wall_axis),
        }
    }

    pub fn half_width(&self) -> Option<f64> {
        self.wall_axis().map(|w| 0.5 * self.grid.extent(w))
    }

    /// Distance to the nearest wall plane, the foot point and the outward normal there.
    /// Mid-channel ties resolve to the lower wall.
    pub fn distance_to_boundary(&self, x: &[f64]) -> Result<BoundaryPoint> {
        let w = self.wall_axis().ok_or(Error::NoBoundary)?;
        let n = self.grid.ndim();
        if x.len() != n {
            return Err(Error::Shape(format!("point has {} coordinates, grid has {n}", x.len())));
        }
        let l = self.grid.extent(w);
        let lower = x[w];
        let upper = l - x[w];
        let mut sigma = x.to_vec();
        let mut normal = vec![0.0; n];
        let distance = if lower <= upper {
            sigma[w] = 0.0;
            normal[w] = -1.0;
            lower
        } else {
            sigma[w] = l;
            normal[w] = 1.0;
            upper
        };
        Ok(BoundaryPoint {
            distance,
            sigma,
            normal,
        })
    }

    /// `d(x)` at every node.
    pub fn distance_field(&self) -> Result<Vec<f64>> {
        let w = self.wall_axis().ok_or(Error::NoBoundary)?;
        let l = self.grid.extent(w);
        let h = self.grid.spacing()[w];
        Ok((0..self.grid.len())
            .map(|f| {
                let y = self.grid.unravel(f)[w] as f64 * h;
                y.min(l - y)
            })
            .collect())
    }

    /// Sign of the outward normal at the nearest wall, per node (-1 lower, +1 upper).
    pub fn normal_sign_field(&self) -> Result<Vec<f64>> {
        let w = self.wall_axis().ok_or(Error::NoBoundary)?;
        let l = self.grid.extent(w);
        let h = self.grid.spacing()[w];
        Ok((0..self.grid.len())
            .map(|f| {
                let y = self.grid.unravel(f)[w] as f64 * h;
                if y <= l - y {
                    -1.0
                } else {
                    1.0
                }
            })
            .collect())
    }

    /// `u . n(sigma(x))` at every node.
    pub fn normal_velocity(&self, velocity: &[Vec<f64>]) -> Result<Vec<f64>> {
        let w = self.wall_axis().ok_or(Error::NoBoundary)?;
        let sign = self.normal_sign_field()?;
        Ok(velocity[w].iter().zip(&sign).map(|(u, s)| u * s).collect())
    }
}

/// A set of grid nodes stored as a mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    mask: Vec<bool>,
}

impl Region {
    pub fn full(grid: &Grid) -> Region {
        Region {
            mask: vec![true; grid.len()],
        }
    }

    pub fn empty(grid: &Grid) -> Region {
        Region {
            mask: vec![false; grid.len()],
        }
    }

    pub fn from_mask(mask: Vec<bool>) -> Region {
        Region { mask }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 3]) -> bool) -> Region {
        Region {
            mask: (0..grid.len()).map(|i| f(grid.position(i))).collect(),
        }
    }

    /// Index box `lo[a] <= i[a] < hi[a]` on every axis.
    pub fn index_box(grid: &Grid, lo: &[usize], hi: &[usize]) -> Region {
        Region {
            mask: (0..grid.len())
                .map(|f| {
                    let idx = grid.unravel(f);
                    (0..grid.ndim()).all(|a| idx[a] >= lo[a] && idx[a] < hi[a])
                })
                .collect(),
        }
    }

    /// Nodes at distance at least `margin` from every wall plane.
    pub fn interior(grid: &Grid, margin: f64) -> Region {
        Region {
            mask: (0..grid.len())
                .map(|f| {
                    let idx = grid.unravel(f);
                    (0..grid.ndim()).all(|a| match grid.kind(a) {
                        AxisKind::Periodic => true,
                        AxisKind::Wall => {
                            let y = grid.coord(a, idx[a]);
                            let l = grid.extent(a);
                            y >= margin * (1.0 - 1e-12) && l - y >= margin * (1.0 - 1e-12)
                        }
                    })
                })
                .collect(),
        }
    }

    pub fn contains(&self, flat: usize) -> bool {
        self.mask[flat]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    pub fn is_full(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    pub fn nodes(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn is_subset_of(&self, other: &Region) -> bool {
        self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }

    pub fn complement(&self) -> Region {
        Region {
            mask: self.mask.iter().map(|m| !m).collect(),
        }
    }

    pub fn intersect(&self, other: &Region) -> Region {
        Region {
            mask: self.mask.iter().zip(&other.mask).map(|(&a, &b)| a && b).collect(),
        }
    }

    /// Nodes of the region with at least one axis neighbour outside it
    /// (or outside the grid on a wall axis).
    pub fn boundary_nodes(&self, grid: &Grid) -> Vec<usize> {
        self.nodes()
            .into_iter()
            .filter(|&f| {
                (0..grid.ndim()).any(|a| {
                    [-1i64, 1].iter().any(|&s| match grid.shift(f, a, s) {
                        Some(g) => !self.mask[g],
                        None => true,
                    })
                })
            })
            .collect()
    }

    /// Morphological dilation by a Euclidean radius. The second value reports
    /// whether the dilated set was clipped by a wall plane.
    pub fn dilate(&self, grid: &Grid, radius: f64) -> (Region, bool) {
        let offsets = grid.ball_offsets(radius);
        let mut mask = self.mask.clone();
        let mut clipped = false;
        for f in self.boundary_nodes(grid) {
            for o in &offsets {
                match grid.offset(f, o) {
                    Some(g) => mask[g] = true,
                    None => clipped = true,
                }
            }
        }
        (Region { mask }, clipped)
    }

    /// Dilation by whole nodes along each axis (box stencil).
    pub fn grow_nodes(&self, grid: &Grid, nodes: usize) -> Region {
        let mut cur = self.clone();
        for _ in 0..nodes {
            let mut mask = cur.mask.clone();
            for f in cur.boundary_nodes(grid) {
                for a in 0..grid.ndim() {
                    for s in [-1i64, 1] {
                        if let Some(g) = grid.shift(f, a, s) {
                            mask[g] = true;
                        }
                    }
                }
            }
            cur = Region { mask };
        }
        cur
    }

    /// Erosion by a Euclidean radius: nodes whose whole ball lies in the region.
    pub fn erode(&self, grid: &Grid, radius: f64) -> Region {
        let (grown, _) = self.complement().dilate(grid, radius);
        let mut out = grown.complement();
        // nodes whose ball leaves the grid through a wall are kept only if
        // the region itself reaches the wall; the complement dilation above
        // already handles interior holes.
        for (m, &orig) in out.mask.iter_mut().zip(&self.mask) {
            *m = *m && orig;
        }
        out
    }
}

/// Smallest Euclidean distance between two node sets (minimum image on
/// periodic axes), computed by brute force over their boundary nodes.
pub fn set_distance(grid: &Grid, a: &Region, b: &Region) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let ba = a.boundary_nodes(grid);
    let bb = b.boundary_nodes(grid);
    let ba = if ba.is_empty() { a.nodes() } else { ba };
    let bb = if bb.is_empty() { b.nodes() } else { bb };
    let mut best = f64::INFINITY;
    for &i in &ba {
        for &j in &bb {
            let d = grid.distance(i, j);
            if d < best {
                best = d;
            }
        }
    }
    best
}

/// Snapshot metadata carried into the sidecar file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tags {
    /// Declared divergence tolerance when the field is tagged divergence-free.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergence_free: Option<f64>,
    #[serde(default)]
    pub impermeable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Time-integrability exponent of the source solution, metadata only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrability_exponent: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub grid: Grid,
    pub velocity: Vec<Vec<f64>>,
    pub pressure: Option<Vec<f64>>,
    pub time: f64,
    pub tags: Tags,
}

impl Snapshot {
    pub fn new(grid: Grid, velocity: Vec<Vec<f64>>, time: f64) -> Result<Snapshot> {
        if velocity.len() != grid.ndim() {
            return Err(Error::Shape(format!(
                "velocity has {} components on a {}-axis grid",
                velocity.len(),
                grid.ndim()
            )));
        }
        for (c, v) in velocity.iter().enumerate() {
            if v.len() != grid.len() {
                return Err(Error::Shape(format!(
                    "velocity component {c} has {} values, grid has {} nodes",
                    v.len(),
                    grid.len()
                )));
            }
        }
        Ok(Snapshot {
            grid,
            velocity,
            pressure: None,
            time,
            tags: Tags::default(),
        })
    }

    pub fn zeros(grid: Grid, time: f64) -> Snapshot {
        let n = grid.len();
        let d = grid.ndim();
        Snapshot {
            grid,
            velocity: vec![vec![0.0; n]; d],
            pressure: None,
            time,
            tags: Tags::default(),
        }
    }

    pub fn with_pressure(mut self, pressure: Vec<f64>) -> Result<Snapshot> {
        if pressure.len() != self.grid.len() {
            return Err(Error::Shape(format!(
                "pressure has {} values, grid has {} nodes",
                pressure.len(),
                self.grid.len()
            )));
        }
        self.pressure = Some(pressure);
        Ok(self)
    }

    pub fn pressure(&self) -> Result<&[f64]> {
        self.pressure.as_deref().ok_or(Error::MissingPressure)
    }

    /// Multiplies the velocity by `lambda` (pressure untouched).
    pub fn scaled(&self, lambda: f64) -> Snapshot {
        let mut s = self.clone();
        for c in &mut s.velocity {
            for v in c.iter_mut() {
                *v *= lambda;
            }
        }
        s
    }

    /// Checks the tag invariants: declared divergence tolerance and exact
    /// impermeability on wall planes.
    pub fn validate(&self) -> Result<()> {
        if let Some(tol) = self.tags.divergence_free {
            let div = crate::calculus::divergence(self);
            let m = div.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            if m > tol {
                return Err(Error::param(
                    "divergence_free",
                    format!("divergence max-norm {m:e} exceeds declared tolerance {tol:e}"),
                ));
            }
        }
        if self.tags.impermeable {
            let domain = Domain::new(self.grid.clone())?;
            if domain.wall_axis().is_some() {
                let m = max_wall_normal(&domain, &self.velocity)?;
                if m != 0.0 {
                    return Err(Error::ImpermeabilityViolated { max_normal: m });
                }
            }
        }
        Ok(())
    }
}

/// Largest `|u . n|` over the wall planes.
pub fn max_wall_normal(domain: &Domain, velocity: &[Vec<f64>]) -> Result<f64> {
    let w = domain.wall_axis().ok_or(Error::NoBoundary)?;
    let g = domain.grid();
    let last = g.dims()[w] - 1;
    Ok((0..g.len())
        .filter(|&f| {
            let i = g.unravel(f)[w];
            i == 0 || i == last
        })
        .map(|f| velocity[w][f].abs())
        .fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub dt: f64,
}

impl Trajectory {
    /// Validates that snapshot times form an arithmetic progression with step `dt`.
    pub fn new(snapshots: Vec<Snapshot>, dt: f64) -> Result<Trajectory> {
        if snapshots.is_empty() {
            return Err(Error::param("snapshots", "trajectory is empty"));
        }
        if snapshots.len() > 1 && !(dt > 0.0) {
            return Err(Error::param("dt", format!("must be positive, got {dt}")));
        }
        let t0 = snapshots[0].time;
        for (k, s) in snapshots.iter().enumerate() {
            let expect = t0 + k as f64 * dt;
            if (s.time - expect).abs() > 1e-9 * dt.max(1.0) {
                return Err(Error::param(
                    "dt",
                    format!("snapshot {k} at t={} but progression expects {expect}", s.time),
                ));
            }
            if s.grid != snapshots[0].grid {
                return Err(Error::Shape(format!("snapshot {k} lives on a different grid")));
            }
        }
        Ok(Trajectory { snapshots, dt })
    }

    /// Repeats one snapshot at `count` uniformly spaced times.
    pub fn steady(snapshot: &Snapshot, count: usize, dt: f64) -> Trajectory {
        let snapshots = (0..count)
            .map(|k| {
                let mut s = snapshot.clone();
                s.time = snapshot.time + k as f64 * dt;
                s
            })
            .collect();
        Trajectory { snapshots, dt }
    }

    pub fn grid(&self) -> &Grid {
        &self.snapshots[0].grid
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn t_range(&self) -> (f64, f64) {
        (
            self.snapshots[0].time,
            self.snapshots[self.snapshots.len() - 1].time,
        )
    }

    /// Trapezoid weights in time over the snapshots.
    pub fn time_weights(&self) -> Vec<f64> {
        let n = self.len();
        if n == 1 {
            return vec![0.0];
        }
        (0..n)
            .map(|k| if k == 0 || k + 1 == n { 0.5 * self.dt } else { self.dt })
            .collect()
    }

    /// Same trajectory with every time shifted by `dt0`.
    pub fn time_shifted(&self, dt0: f64) -> Trajectory {
        let mut t = self.clone();
        for s in &mut t.snapshots {
            s.time += dt0;
        }
        t
    }
}

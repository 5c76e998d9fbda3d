//! Hölder seminorms and exponents from max-type structure functions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::loglog_fit;
use crate::grid::{Grid, Region};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderOptions {
    /// Largest separation; defaults to a quarter of the shortest region extent.
    pub r_max: Option<f64>,
    pub seed: u64,
    /// Minimum number of sampled pairs in total.
    pub samples: usize,
}

impl Default for HolderOptions {
    fn default() -> Self {
        HolderOptions {
            r_max: None,
            seed: 0x5eed,
            samples: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderNorm {
    pub seminorm: f64,
    pub pair_count: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub exponent: f64,
    pub seminorm: f64,
    pub pair_count: usize,
    pub scale_range: (f64, f64),
    /// RMS residual of the log-log fit.
    pub residual: f64,
    /// Set when every sampled increment vanished.
    pub degenerate: Option<String>,
    pub seed: u64,
    /// `(r, S(r))` per ladder rung.
    pub rungs: Vec<(f64, f64)>,
}

/// Physical extent of the region's bounding index box along each axis
/// (the full period for a periodic axis the region spans completely).
pub fn region_extents(grid: &Grid, region: &Region) -> Vec<f64> {
    let nd = grid.ndim();
    let mut seen = vec![vec![false; 0]; nd];
    for (a, s) in seen.iter_mut().enumerate() {
        *s = vec![false; grid.dims()[a]];
    }
    for f in region.nodes() {
        let idx = grid.unravel(f);
        for a in 0..nd {
            seen[a][idx[a]] = true;
        }
    }
    (0..nd)
        .map(|a| {
            let n = seen[a].iter().filter(|&&b| b).count();
            if n == grid.dims()[a] && grid.kind(a) == crate::grid::AxisKind::Periodic {
                grid.extent(a)
            } else {
                let lo = seen[a].iter().position(|&b| b).unwrap_or(0);
                let hi = seen[a].iter().rposition(|&b| b).unwrap_or(0);
                (hi - lo) as f64 * grid.spacing()[a]
            }
        })
        .collect()
}

fn check_region(grid: &Grid, field: &[Vec<f64>], region: &Region) -> Result<()> {
    if region.is_empty() {
        return Err(Error::param("region", "must be nonempty"));
    }
    if field.iter().any(|c| c.len() != grid.len()) || region.mask().len() != grid.len() {
        return Err(Error::Shape("field or region does not match the grid".into()));
    }
    let nd = grid.ndim();
    let nodes = region.nodes();
    for a in 0..nd {
        let mut seen = vec![false; grid.dims()[a]];
        for &f in &nodes {
            seen[grid.unravel(f)[a]] = true;
        }
        let count = seen.iter().filter(|&&b| b).count();
        if count < 4 {
            return Err(Error::param(
                "region",
                format!("spans {count} nodes along axis {a}, need at least 4"),
            ));
        }
    }
    Ok(())
}

fn offset_length(grid: &Grid, o: &[i64]) -> f64 {
    o.iter()
        .zip(grid.spacing())
        .map(|(&k, &h)| (k as f64 * h).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Lattice offsets in a half space (first nonzero entry positive) with
/// length in `[lo, hi)`.
fn offsets_in_shell(grid: &Grid, lo: f64, hi: f64) -> Vec<Vec<i64>> {
    let nd = grid.ndim();
    let reach: Vec<i64> = grid
        .spacing()
        .iter()
        .map(|h| (hi / h).ceil() as i64)
        .collect();
    let mut out = Vec::new();
    let mut o = vec![0i64; nd];
    fn rec(
        a: usize,
        o: &mut Vec<i64>,
        reach: &[i64],
        grid: &Grid,
        lo: f64,
        hi: f64,
        out: &mut Vec<Vec<i64>>,
    ) {
        if a == o.len() {
            let first = o.iter().find(|&&k| k != 0);
            if matches!(first, Some(&k) if k > 0) {
                let r = offset_length(grid, o);
                if r >= lo * (1.0 - 1e-12) && r < hi * (1.0 - 1e-12) {
                    out.push(o.clone());
                }
            }
            return;
        }
        for k in -reach[a]..=reach[a] {
            o[a] = k;
            rec(a + 1, o, reach, grid, lo, hi, out);
        }
        o[a] = 0;
    }
    rec(0, &mut o, &reach, grid, lo, hi, &mut out);
    out
}

fn increment(field: &[Vec<f64>], a: usize, b: usize) -> f64 {
    field
        .iter()
        .map(|c| (c[a] - c[b]).powi(2))
        .sum::<f64>()
        .sqrt()
}

struct Stratum {
    sup: f64,
    pairs: usize,
}

/// Sup of `|u(x) - u(y)| / |x - y|^alpha` (or of the raw increment when
/// `alpha` is `None`) over pairs in `region` with offsets from `offsets`.
/// Exhaustive when the pair count fits in `budget`, sampled otherwise.
fn scan(
    grid: &Grid,
    field: &[Vec<f64>],
    region: &Region,
    nodes: &[usize],
    offsets: &[Vec<i64>],
    alpha: Option<f64>,
    budget: usize,
    rng: &mut ChaCha8Rng,
) -> Stratum {
    let lens: Vec<f64> = offsets.iter().map(|o| offset_length(grid, o)).collect();
    let weight = |k: usize| alpha.map_or(1.0, |a| lens[k].powf(-a));
    let mut sup = 0.0f64;
    let mut pairs = 0usize;
    let visit = |x: usize, k: usize, sup: &mut f64, pairs: &mut usize| {
        if let Some(y) = grid.offset(x, &offsets[k]) {
            if region.contains(y) {
                *sup = sup.max(increment(field, x, y) * weight(k));
                *pairs += 1;
            }
        }
    };
    if offsets.is_empty() {
        return Stratum { sup, pairs };
    }
    if offsets.len().saturating_mul(nodes.len()) <= budget.saturating_mul(4) {
        for k in 0..offsets.len() {
            for &x in nodes {
                visit(x, k, &mut sup, &mut pairs);
            }
        }
    } else {
        let mut attempts = 0usize;
        while pairs < budget && attempts < 4 * budget {
            attempts += 1;
            let x = nodes[rng.gen_range(0..nodes.len())];
            let k = rng.gen_range(0..offsets.len());
            visit(x, k, &mut sup, &mut pairs);
        }
    }
    Stratum { sup, pairs }
}

fn scale_bounds(grid: &Grid, region: &Region, opts: &HolderOptions) -> Result<(f64, f64)> {
    let r_min = 2.0 * grid.max_spacing();
    let shortest = region_extents(grid, region)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let r_max = opts.r_max.unwrap_or(shortest / 4.0);
    if !(r_max >= r_min) {
        return Err(Error::param(
            "r_max",
            format!("{r_max} is below the minimum separation {r_min}"),
        ));
    }
    Ok((r_min, r_max))
}

/// Discrete Hölder seminorm over pairs with `2h <= |x - y| <= r_max`.
pub fn holder_norm(
    grid: &Grid,
    field: &[Vec<f64>],
    alpha: f64,
    region: &Region,
    opts: &HolderOptions,
) -> Result<HolderNorm> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::param("alpha", format!("must lie in (0, 1], got {alpha}")));
    }
    check_region(grid, field, region)?;
    let (r_min, r_max) = scale_bounds(grid, region, opts)?;
    let nodes = region.nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    // smallest separations, exhaustively
    let near_hi = (1.25 * r_min).min(r_max * (1.0 + 1e-12));
    let near = offsets_in_shell(grid, r_min, near_hi);
    let first = scan(grid, field, region, &nodes, &near, Some(alpha), usize::MAX, &mut rng);
    let mut sup = first.sup;
    let mut pairs = first.pairs;

    let mut edges = vec![near_hi];
    while *edges.last().unwrap() < r_max * (1.0 + 1e-12) {
        let next = (edges.last().unwrap() * 2.0).min(r_max * (1.0 + 1e-12));
        edges.push(next);
        if next >= r_max * (1.0 + 1e-12) {
            break;
        }
    }
    let strata = edges.len().saturating_sub(1).max(1);
    let per = opts.samples.div_ceil(strata);
    for w in edges.windows(2) {
        let offs = offsets_in_shell(grid, w[0], w[1]);
        let s = scan(grid, field, region, &nodes, &offs, Some(alpha), per, &mut rng);
        sup = sup.max(s.sup);
        pairs += s.pairs;
    }
    Ok(HolderNorm {
        seminorm: sup,
        pair_count: pairs,
        r_min,
        r_max,
        seed: opts.seed,
    })
}

/// Slope of `log S(r)` against `log r`, `S(r)` the max increment at
/// separations within a quarter octave of each dyadic rung `r = 2h * 2^j`.
pub fn estimate_holder_exponent(
    grid: &Grid,
    field: &[Vec<f64>],
    region: &Region,
    opts: &HolderOptions,
) -> Result<HolderEstimate> {
    check_region(grid, field, region)?;
    let (r_min, r_max) = scale_bounds(grid, region, opts)?;
    let mut ladder = vec![r_min];
    while ladder.last().unwrap() * 2.0 <= r_max * (1.0 + 1e-9) {
        ladder.push(ladder.last().unwrap() * 2.0);
    }
    if ladder.len() < 4 {
        return Err(Error::TooFewRungs {
            got: ladder.len(),
            need: 4,
        });
    }
    let nodes = region.nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let per = opts.samples.div_ceil(ladder.len()).max(400_000);
    let q = 2f64.powf(0.25);
    let mut rungs = Vec::new();
    let mut pairs = 0;
    for &r in &ladder {
        let offs = offsets_in_shell(grid, (r / q).max(r_min), r * q);
        let s = scan(grid, field, region, &nodes, &offs, None, per, &mut rng);
        pairs += s.pairs;
        rungs.push((r, s.sup));
    }
    let scale = rungs.iter().fold(0.0f64, |m, &(_, s)| m.max(s));
    let field_scale = field
        .iter()
        .flat_map(|c| c.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale <= 1e-14 * field_scale.max(f64::MIN_POSITIVE) || scale == 0.0 {
        return Ok(HolderEstimate {
            exponent: 1.0,
            seminorm: 0.0,
            pair_count: pairs,
            scale_range: (r_min, *ladder.last().unwrap()),
            residual: 0.0,
            degenerate: Some("degenerate: zero increments".into()),
            seed: opts.seed,
            rungs,
        });
    }
    let rs: Vec<f64> = rungs.iter().map(|p| p.0).collect();
    let ss: Vec<f64> = rungs.iter().map(|p| p.1.max(f64::MIN_POSITIVE)).collect();
    let fit = loglog_fit(&rs, &ss).ok_or_else(|| Error::NoConvergence("degenerate ladder".into()))?;
    let exponent = fit.slope.clamp(0.0, 1.0);
    let seminorm = rungs
        .iter()
        .fold(0.0f64, |m, &(r, s)| m.max(s / r.powf(exponent)));
    Ok(HolderEstimate {
        exponent,
        seminorm,
        pair_count: pairs,
        scale_range: (r_min, *ladder.last().unwrap()),
        residual: fit.rms,
        degenerate: None,
        seed: opts.seed,
        rungs,
    })
}

#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde_json::Value;

use wsdiag_core::fieldio::save_snapshot;
use wsdiag_core::pressure::pressure_mean;
use wsdiag_core::{Domain, Grid, Snapshot, Trajectory};

pub fn wsdiag(args: &[&str]) -> i32 {
    let mut all = vec!["wsdiag"];
    all.extend_from_slice(args);
    wsdiag_cli::main_with(all)
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

/// Reads a CSV table into its header and numeric rows.
pub fn table(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse::<f64>().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

pub fn channel(nx: usize, ny: usize) -> Domain {
    Domain::new(Grid::channel(&[nx, ny], &[2.0 * PI, 1.0], 1).unwrap()).unwrap()
}

/// Steady cellular Euler flow with stream function `sin x sin(πy)`, scaled by `amp`.
pub fn cellular(dom: &Domain, amp: f64, t: f64) -> Snapshot {
    let g = dom.grid();
    let mut u = vec![vec![0.0; g.len()]; 2];
    let mut p = vec![0.0; g.len()];
    for i in 0..g.len() {
        let x = g.position(i);
        let (sx, cx, sy, cy) = (x[0].sin(), x[0].cos(), (PI * x[1]).sin(), (PI * x[1]).cos());
        u[0][i] = amp * PI * sx * cy;
        u[1][i] = -amp * cx * sy;
        let psi = amp * sx * sy;
        p[i] = -0.5 * (u[0][i] * u[0][i] + u[1][i] * u[1][i]) - 0.5 * (1.0 + PI * PI) * psi * psi;
    }
    let m = pressure_mean(g, &p);
    p.iter_mut().for_each(|v| *v -= m);
    Snapshot::new(g.clone(), u, t).unwrap().with_pressure(p).unwrap()
}

/// Adds a normal velocity `0.2 y - 0.1` that does not vanish on the walls.
pub fn leaky(dom: &Domain) -> Snapshot {
    let mut s = cellular(dom, 1.0, 0.0);
    let g = dom.grid();
    for i in 0..g.len() {
        s.velocity[1][i] += 0.2 * g.position(i)[1] - 0.1;
    }
    s
}

pub fn save(dir: &Path, traj: &Trajectory) -> Vec<PathBuf> {
    traj.snapshots
        .iter()
        .enumerate()
        .map(|(k, s)| save_snapshot(dir, &format!("snap_{k:02}"), s).unwrap())
        .collect()
}

/// Every file under `dir`, relative path and contents, sorted.
pub fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, d: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

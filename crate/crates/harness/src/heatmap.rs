//! Stability heatmap over the (density, modulus) grid, resumable from a
//! partially written run.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use hopper_core::config::Config;
use hopper_core::stability::{loglog_fit, CellStatus, GridCell, LogLogFit};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

pub const HEATMAP_CSV: &str = "heatmap.csv";
pub const HEATMAP_JSON: &str = "heatmap.json";
/// Cells appended as they finish; removed once the table is complete.
pub const PARTIAL_CSV: &str = "heatmap.partial.csv";

const HEADER: &str = "density_index,modulus_index,rho_kg_m3,modulus_pa,dt_max_s,status,anomalies";

/// Four evenly spread indices of an axis of length `n`.
pub fn quick_indices(n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..4).map(|k| ((k * (n.max(1) - 1)) as f64 / 3.0).round() as usize).collect();
    idx.dedup();
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatalogProbe {
    pub dt_max_s: Option<f64>,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSidecar {
    pub config_fingerprint: String,
    pub quick: bool,
    pub densities_kg_m3: Vec<f64>,
    pub moduli_pa: Vec<f64>,
    pub density_indices: Vec<usize>,
    pub modulus_indices: Vec<usize>,
    pub ok_cells: usize,
    pub censored_cells: usize,
    pub unstable_cells: usize,
    /// `ln dt_max = c₀ + c_ρ ln ρ + c_E ln E` over the `ok` cells.
    pub fit: Option<LogLogFit>,
    /// Maximum stable step of each mono-material catalog design.
    pub catalog: BTreeMap<String, CatalogProbe>,
}

#[derive(Debug, Clone)]
pub struct Heatmap {
    /// `(density index, modulus index, cell)` in row-major order.
    pub cells: Vec<(usize, usize, GridCell)>,
    pub sidecar: HeatmapSidecar,
}

fn status_str(s: CellStatus) -> &'static str {
    match s {
        CellStatus::Ok => "ok",
        CellStatus::Censored => "censored",
        CellStatus::AllUnstable => "all_unstable",
    }
}

fn row(i: usize, j: usize, c: &GridCell) -> String {
    format!("{i},{j},{},{},{},{},{}", c.density, c.modulus, c.dt_max, status_str(c.status), c.anomalies)
}

fn parse_row(line: &str) -> Option<(usize, usize, GridCell)> {
    let f: Vec<&str> = line.trim().split(',').collect();
    if f.len() != 7 {
        return None;
    }
    let status = match f[5] {
        "ok" => CellStatus::Ok,
        "censored" => CellStatus::Censored,
        "all_unstable" => CellStatus::AllUnstable,
        _ => return None,
    };
    Some((
        f[0].parse().ok()?,
        f[1].parse().ok()?,
        GridCell {
            density: f[2].parse().ok()?,
            modulus: f[3].parse().ok()?,
            dt_max: f[4].parse().ok()?,
            status,
            anomalies: f[6].parse().ok()?,
        },
    ))
}

/// Cells from an earlier run with the same fingerprint: the partial file
/// (whose first line is the fingerprint) and a finished table whose
/// sidecar matches.
fn load_existing(dir: &Path, fingerprint: &str) -> BTreeMap<(usize, usize), GridCell> {
    let mut cells = BTreeMap::new();
    let sidecar: Option<HeatmapSidecar> = std::fs::read_to_string(dir.join(HEATMAP_JSON))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok());
    if sidecar.is_some_and(|s| s.config_fingerprint == fingerprint) {
        if let Ok(f) = File::open(dir.join(HEATMAP_CSV)) {
            for line in BufReader::new(f).lines().map_while(Result::ok).skip(1) {
                if let Some((i, j, c)) = parse_row(&line) {
                    cells.insert((i, j), c);
                }
            }
        }
    }
    if let Ok(f) = File::open(dir.join(PARTIAL_CSV)) {
        let mut lines = BufReader::new(f).lines().map_while(Result::ok);
        if lines.next().as_deref() == Some(fingerprint) {
            for line in lines {
                if let Some((i, j, c)) = parse_row(&line) {
                    cells.insert((i, j), c);
                }
            }
        }
    }
    cells
}

/// Probe every grid cell (or the 4×4 quick subset) and write the table and
/// its sidecar. Cells already present from an interrupted or earlier run
/// with the same config fingerprint are reused.
pub fn run_heatmap(cfg: &Config, dir: &Path, quick: bool) -> Result<Heatmap, HarnessError> {
    std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    let fingerprint = cfg.fingerprint();
    let densities = cfg.grid.density_axis();
    let moduli = cfg.grid.modulus_axis();
    let (di, mi): (Vec<usize>, Vec<usize>) = if quick {
        (quick_indices(densities.len()), quick_indices(moduli.len()))
    } else {
        ((0..densities.len()).collect(), (0..moduli.len()).collect())
    };

    let mut done = load_existing(dir, &fingerprint);
    let wanted: Vec<(usize, usize)> = di.iter().flat_map(|&i| mi.iter().map(move |&j| (i, j))).collect();
    let missing: Vec<(usize, usize)> = wanted.iter().copied().filter(|k| !done.contains_key(k)).collect();
    info!("heatmap: {} cells, {} to probe", wanted.len(), missing.len());

    let partial_path = dir.join(PARTIAL_CSV);
    let partial = if partial_matches(&partial_path, &fingerprint) {
        OpenOptions::new().append(true).open(&partial_path).map_err(HarnessError::io(&partial_path))?
    } else {
        let mut f = File::create(&partial_path).map_err(HarnessError::io(&partial_path))?;
        writeln!(f, "{fingerprint}").map_err(HarnessError::io(&partial_path))?;
        f
    };
    let partial = Mutex::new(partial);
    let fresh: Vec<((usize, usize), GridCell)> = missing
        .par_iter()
        .map(|&(i, j)| {
            let (rho, e) = (densities[i], moduli[j]);
            let probe = cfg
                .point_design(&format!("grid_{i}_{j}"), rho, e)
                .map_err(|err| hopper_core::error::StabilityError::InvalidProbe(err.to_string()))
                .and_then(|d| cfg.max_stable_dt(&d));
            let cell = GridCell::from_probe(rho, e, probe);
            let mut f = partial.lock().expect("partial file lock");
            writeln!(f, "{}", row(i, j, &cell)).and_then(|_| f.flush()).map_err(HarnessError::io(&partial_path))?;
            Ok(((i, j), cell))
        })
        .collect::<Result<_, HarnessError>>()?;
    done.extend(fresh);

    let cells: Vec<(usize, usize, GridCell)> = wanted.iter().map(|&(i, j)| (i, j, done[&(i, j)])).collect();
    let mut table = format!("{HEADER}\n");
    for (i, j, c) in &cells {
        table.push_str(&row(*i, *j, c));
        table.push('\n');
    }

    let catalog = cfg
        .material_names()
        .par_iter()
        .map(|name| {
            let probe = cfg.mono_design(name).ok().and_then(|d| cfg.max_stable_dt(&d).ok());
            (
                name.clone(),
                CatalogProbe { dt_max_s: probe.as_ref().map(|p| p.dt_max), censored: probe.is_some_and(|p| p.censored) },
            )
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    let grid: Vec<GridCell> = cells.iter().map(|c| c.2).collect();
    let count = |s: CellStatus| grid.iter().filter(|c| c.status == s).count();
    let sidecar = HeatmapSidecar {
        config_fingerprint: fingerprint,
        quick,
        densities_kg_m3: densities,
        moduli_pa: moduli,
        density_indices: di,
        modulus_indices: mi,
        ok_cells: count(CellStatus::Ok),
        censored_cells: count(CellStatus::Censored),
        unstable_cells: count(CellStatus::AllUnstable),
        fit: loglog_fit(&grid),
        catalog,
    };

    let csv_path = dir.join(HEATMAP_CSV);
    std::fs::write(&csv_path, table).map_err(HarnessError::io(&csv_path))?;
    let json_path = dir.join(HEATMAP_JSON);
    let text = serde_json::to_string_pretty(&sidecar).map_err(HarnessError::json(&json_path))?;
    std::fs::write(&json_path, text + "\n").map_err(HarnessError::io(&json_path))?;
    std::fs::remove_file(&partial_path).map_err(HarnessError::io(&partial_path))?;
    Ok(Heatmap { cells, sidecar })
}

fn partial_matches(path: &Path, fingerprint: &str) -> bool {
    File::open(path)
        .ok()
        .and_then(|f| BufReader::new(f).lines().next())
        .and_then(Result::ok)
        .is_some_and(|l| l == fingerprint)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_subset_of_twenty() {
        assert_eq!(quick_indices(20), vec![0, 6, 13, 19]);
        assert_eq!(quick_indices(4), vec![0, 1, 2, 3]);
        assert_eq!(quick_indices(1), vec![0]);
    }

    #[test]
    fn rows_round_trip() {
        let c = GridCell { density: 1390.0, modulus: 3e9, dt_max: 1.6391e-3, status: CellStatus::Ok, anomalies: 1 };
        assert_eq!(parse_row(&row(3, 4, &c)), Some((3, 4, c)));
        let u = GridCell { dt_max: f64::NAN, status: CellStatus::AllUnstable, ..c };
        let (_, _, back) = parse_row(&row(0, 0, &u)).unwrap();
        assert!(back.dt_max.is_nan() && back.status == CellStatus::AllUnstable);
    }
}

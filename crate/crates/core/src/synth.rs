//! Synthetic wind fields and Hs series with a planted travel-time kernel.
//!
//! Wind is a background flow plus translating Gaussian vortices. Hs at the
//! target is
//! `Σ weight · W_j²(t − lag) + c_ws · U²(t) · F(t) / 500 + N(0, σ²)`
//! where `W_j` is the projected wind at sea point `j`, `U` the wind speed at
//! the target and `F` the fetch.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::features::{projected_wind, wind_speed_dir, HsSeries, ProjectionConvention, WindGrid};
use crate::geo::{build_sea_point_set, fetch_length, GridSpec, LandMask, LatLon, SeaPointSet, DEFAULT_FETCH_CAP_KM};
use crate::kv::KvMap;

/// One planted kernel term: the sea point at grid cell `(ilat, ilon)`
/// contributes `weight · W²` to Hs `lag` steps later.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelTerm {
    pub ilat: usize,
    pub ilon: usize,
    pub lag: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub grid: GridSpec,
    pub t_steps: usize,
    pub epoch0: i64,
    pub step_seconds: u32,
    pub storms: usize,
    /// Peak vortex wind speed (m/s) before the per-storm random factor.
    pub storm_intensity: f64,
    /// Gaussian radius in cells.
    pub storm_radius: f64,
    /// Mean eastward translation in cells per step.
    pub storm_speed: f64,
    pub background_u: f64,
    pub background_v: f64,
    pub kernel: Vec<KernelTerm>,
    pub wind_sea_coef: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Columns with index ≥ this are land.
    pub land_from_col: Option<usize>,
    pub target: LatLon,
    pub convention: ProjectionConvention,
    pub step_km: f64,
    pub fetch_cap_km: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let grid = GridSpec::new(40.0, -40.0, 1.0, 1.0, 16, 16).expect("valid grid");
        Self {
            grid,
            t_steps: 4000,
            epoch0: 946_684_800,
            step_seconds: 10_800,
            storms: 400,
            storm_intensity: 18.0,
            storm_radius: 2.5,
            storm_speed: 1.0,
            background_u: 5.0,
            background_v: 1.0,
            kernel: default_kernel(),
            wind_sea_coef: 0.002,
            noise_sigma: 0.05,
            seed: 1,
            land_from_col: Some(14),
            target: LatLon::new(grid.lat(8), grid.lon(13)),
            convention: ProjectionConvention::To,
            step_km: crate::geo::DEFAULT_STEP_KM,
            fetch_cap_km: DEFAULT_FETCH_CAP_KM,
        }
    }
}

/// Dispersive kernel: upstream points feed the target over several lags,
/// farther points later. Maximum lag 6.
pub fn default_kernel() -> Vec<KernelTerm> {
    let t = |ilat, ilon, lag, weight| KernelTerm { ilat, ilon, lag, weight };
    vec![
        t(8, 11, 0, 0.0015),
        t(8, 11, 1, 0.0015),
        t(6, 8, 2, 0.002),
        t(6, 8, 3, 0.002),
        t(10, 6, 3, 0.0015),
        t(10, 6, 4, 0.002),
        t(8, 3, 5, 0.002),
        t(8, 3, 6, 0.002),
        t(4, 4, 6, 0.002),
    ]
}

impl SynthConfig {
    pub fn max_lag(&self) -> usize {
        self.kernel.iter().map(|k| k.lag).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.t_steps <= self.max_lag() + 2 {
            return Err(Error::config(
                "T",
                format!("{} steps do not exceed max lag {} + 2", self.t_steps, self.max_lag()),
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config("noise_sigma", "must be finite and ≥ 0"));
        }
        if self.kernel.iter().any(|k| !(k.weight >= 0.0 && k.weight.is_finite())) {
            return Err(Error::config("kernel", "weights must be finite and ≥ 0"));
        }
        if self
            .kernel
            .iter()
            .any(|k| k.ilat >= self.grid.nlat || k.ilon >= self.grid.nlon)
        {
            return Err(Error::config("kernel", "term outside the grid"));
        }
        if self.step_seconds == 0 {
            return Err(Error::config("step_seconds", "must be positive"));
        }
        for (k, v) in [
            ("storm_intensity", self.storm_intensity),
            ("storm_radius", self.storm_radius),
            ("storm_speed", self.storm_speed),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(k, "must be finite and ≥ 0"));
            }
        }
        if self.storm_radius == 0.0 && self.storms > 0 {
            return Err(Error::config("storm_radius", "must be positive"));
        }
        Ok(())
    }

    pub fn mask(&self) -> LandMask {
        let mut mask = LandMask::all_sea(self.grid);
        if let Some(c) = self.land_from_col {
            for i in 0..self.grid.nlat {
                for j in c.min(self.grid.nlon)..self.grid.nlon {
                    mask.set_land(i, j, true);
                }
            }
        }
        mask
    }

    /// Reads synthetic-data keys, leaving others untouched. Kernel terms are
    /// `ilat:ilon:lag:weight` separated by `;`.
    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let d = Self::default();
        let grid = GridSpec::new(
            kv.take_or("lat0", d.grid.lat0)?,
            kv.take_or("lon0", d.grid.lon0)?,
            kv.take_or("dlat", d.grid.dlat)?,
            kv.take_or("dlon", d.grid.dlon)?,
            kv.take_or("nlat", d.grid.nlat)?,
            kv.take_or("nlon", d.grid.nlon)?,
        )
        .map_err(|e| Error::config("nlat", e.to_string()))?;
        let kernel = match kv.take::<String>("kernel")? {
            None => d.kernel,
            Some(s) => parse_kernel(&s)?,
        };
        let land_from_col = match kv.take::<String>("land_from_col")? {
            None => d.land_from_col,
            Some(s) if s == "none" => None,
            Some(s) => Some(
                s.parse()
                    .map_err(|_| Error::config("land_from_col", format!("cannot parse `{s}`")))?,
            ),
        };
        let target_i: Option<usize> = kv.take("target_ilat")?;
        let target_j: Option<usize> = kv.take("target_ilon")?;
        let target = match (target_i, target_j) {
            (Some(i), Some(j)) if i < grid.nlat && j < grid.nlon => LatLon::new(grid.lat(i), grid.lon(j)),
            (None, None) => {
                let (i, j) = d.grid.cell_of(d.target).expect("default target in grid");
                LatLon::new(grid.lat(i.min(grid.nlat - 1)), grid.lon(j.min(grid.nlon - 1)))
            }
            _ => return Err(Error::config("target_ilat", "target_ilat and target_ilon must be given together inside the grid")),
        };
        let cfg = Self {
            grid,
            t_steps: kv.take_or("T", d.t_steps)?,
            epoch0: kv.take_or("epoch0", d.epoch0)?,
            step_seconds: kv.take_or("step_seconds", d.step_seconds)?,
            storms: kv.take_or("storms", d.storms)?,
            storm_intensity: kv.take_or("storm_intensity", d.storm_intensity)?,
            storm_radius: kv.take_or("storm_radius", d.storm_radius)?,
            storm_speed: kv.take_or("storm_speed", d.storm_speed)?,
            background_u: kv.take_or("background_u", d.background_u)?,
            background_v: kv.take_or("background_v", d.background_v)?,
            kernel,
            wind_sea_coef: kv.take_or("wind_sea_coef", d.wind_sea_coef)?,
            noise_sigma: kv.take_or("noise_sigma", d.noise_sigma)?,
            seed: kv.take_or("seed", d.seed)?,
            land_from_col,
            target,
            convention: kv.take_or("projection_convention", d.convention)?,
            step_km: kv.take_or("step_km", d.step_km)?,
            fetch_cap_km: kv.take_or("fetch_cap_km", d.fetch_cap_km)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_kernel(s: &str) -> Result<Vec<KernelTerm>> {
    s.split(';')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let parts: Vec<&str> = t.split(':').map(str::trim).collect();
            let bad = || Error::config("kernel", format!("term `{t}` is not ilat:ilon:lag:weight"));
            if parts.len() != 4 {
                return Err(bad());
            }
            Ok(KernelTerm {
                ilat: parts[0].parse().map_err(|_| bad())?,
                ilon: parts[1].parse().map_err(|_| bad())?,
                lag: parts[2].parse().map_err(|_| bad())?,
                weight: parts[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Kernel term resolved to a sea-point column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthTerm {
    pub j: usize,
    pub lat: f64,
    pub lon: f64,
    pub lag: usize,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub wind: WindGrid,
    pub mask: LandMask,
    pub hs: HsSeries,
    pub truth: Vec<TruthTerm>,
    pub sea_points: SeaPointSet,
    /// Noise-free kernel part of Hs.
    pub swell: Vec<f64>,
    /// Noise-free wind-sea part of Hs.
    pub wind_sea: Vec<f64>,
}

struct Storm {
    birth: f64,
    life: f64,
    lat0: f64,
    lon0: f64,
    vlat: f64,
    vlon: f64,
    amp: f64,
    radius: f64,
}

fn storms(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Storm> {
    let nlat = cfg.grid.nlat as f64;
    let nlon = cfg.grid.nlon as f64;
    (0..cfg.storms)
        .map(|_| {
            let life = rng.random_range(30.0..60.0);
            Storm {
                birth: rng.random_range(-life..cfg.t_steps as f64),
                life,
                lat0: rng.random_range(0.0..nlat),
                lon0: rng.random_range(-2.0 * cfg.storm_radius..nlon / 3.0),
                vlat: rng.random_range(-0.05..0.05) * cfg.storm_speed,
                vlon: cfg.storm_speed * rng.random_range(0.9..1.1),
                amp: cfg.storm_intensity * rng.random_range(0.5..1.5),
                radius: cfg.storm_radius * rng.random_range(0.7..1.3),
            }
        })
        .collect()
}

fn wind_frames(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> (Vec<f32>, Vec<f32>) {
    let g = &cfg.grid;
    let hw = g.len();
    let list = storms(cfg, rng);
    let mut u = vec![0f32; cfg.t_steps * hw];
    let mut v = vec![0f32; cfg.t_steps * hw];
    let mut fu = vec![0f64; hw];
    let mut fv = vec![0f64; hw];
    for t in 0..cfg.t_steps {
        let tf = t as f64;
        let phase = 2.0 * std::f64::consts::PI * tf / 240.0;
        fu.fill(cfg.background_u * (1.0 + 0.3 * phase.sin()));
        fv.fill(cfg.background_v * phase.cos());
        for s in &list {
            let age = tf - s.birth;
            if age < 0.0 || age > s.life {
                continue;
            }
            let env = (std::f64::consts::PI * age / s.life).sin();
            let (cy, cx) = (s.lat0 + s.vlat * age, s.lon0 + s.vlon * age);
            for i in 0..g.nlat {
                for j in 0..g.nlon {
                    let (dy, dx) = (i as f64 - cy, j as f64 - cx);
                    let r2 = dy * dy + dx * dx;
                    if r2 > 16.0 * s.radius * s.radius {
                        continue;
                    }
                    let bump = s.amp * env * (-r2 / (2.0 * s.radius * s.radius)).exp();
                    let k = g.index(i, j);
                    // cyclonic rotation plus a push along the track
                    fu[k] += bump * (-dy / s.radius + 0.6);
                    fv[k] += bump * (dx / s.radius);
                }
            }
        }
        for k in 0..hw {
            u[t * hw + k] = fu[k] as f32;
            v[t * hw + k] = fv[k] as f32;
        }
    }
    (u, v)
}

/// Generates the dataset. Bit-reproducible for a given config.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let g = cfg.grid;
    let mask = cfg.mask();
    let sea_points = build_sea_point_set(&g, &mask, cfg.target, cfg.step_km).map_err(|e| match e {
        Error::TargetOnLand { .. } => Error::config("target_ilon", "target cell is land"),
        other => other,
    })?;
    let mut truth = Vec::with_capacity(cfg.kernel.len());
    for k in &cfg.kernel {
        let cell = g.index(k.ilat, k.ilon);
        let j = sea_points.position_of(cell).ok_or_else(|| {
            Error::config(
                "kernel",
                format!("cell ({}, {}) is not a usable sea point", k.ilat, k.ilon),
            )
        })?;
        let p = &sea_points.points[j];
        truth.push(TruthTerm {
            j,
            lat: p.lat,
            lon: p.lon,
            lag: k.lag,
            weight: k.weight,
        });
    }

    let mut wind_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    wind_rng.set_stream(1);
    let (u, v) = wind_frames(cfg, &mut wind_rng);
    let times: Vec<i64> = (0..cfg.t_steps)
        .map(|t| cfg.epoch0 + t as i64 * cfg.step_seconds as i64)
        .collect();
    let wind = WindGrid::new(g, cfg.epoch0, cfg.step_seconds, u, v)?;

    let n = cfg.t_steps;
    let hw = g.len();
    let w_sq = |t: usize, j: usize| -> f64 {
        let pt = &sea_points.points[j];
        let (s, d) = wind_speed_dir(wind.u[t * hw + pt.index] as f64, wind.v[t * hw + pt.index] as f64);
        let w = projected_wind(s, d, pt.bearing, cfg.convention);
        // same rounding as the stored global predictor
        (w * w) as f32 as f64
    };
    let mut swell = vec![0f64; n];
    for (t, out) in swell.iter_mut().enumerate() {
        *out = truth
            .iter()
            .map(|k| k.weight * w_sq(t.saturating_sub(k.lag), k.j))
            .sum();
    }
    let (ti, tj) = g.cell_of(cfg.target).expect("target inside grid");
    let tcell = g.index(ti, tj);
    let mut wind_sea = vec![0f64; n];
    if cfg.wind_sea_coef != 0.0 {
        for (t, out) in wind_sea.iter_mut().enumerate() {
            let (s, d) = wind_speed_dir(wind.u[t * hw + tcell] as f64, wind.v[t * hw + tcell] as f64);
            let f = fetch_length(cfg.target, d, &mask, cfg.fetch_cap_km, cfg.step_km);
            *out = cfg.wind_sea_coef * s * s * f / 500.0;
        }
    }
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(2);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let hs: Vec<f32> = (0..n)
        .map(|t| {
            let z: f64 = normal.sample(&mut noise_rng);
            (swell[t] + wind_sea[t] + cfg.noise_sigma * z) as f32
        })
        .collect();
    Ok(SynthOutput {
        wind,
        mask,
        hs: HsSeries::new(times, hs)?,
        truth,
        sea_points,
        swell,
        wind_sea,
    })
}

/// Contribution of the global predictor at each time to Hs at each horizon:
/// row `s`, column `k` is `Σ weight · W_j²(s)` over terms with lag `k`.
/// Terms with lag above `t_max` are left out. Flat `[n × (t_max + 1)]`.
pub fn horizon_contributions(truth: &[TruthTerm], global: &[f32], n_points: usize, t_max: usize) -> Vec<f32> {
    let n = global.len() / n_points.max(1);
    let l = t_max + 1;
    let mut out = vec![0f32; n * l];
    for s in 0..n {
        for k in truth.iter().filter(|k| k.lag <= t_max) {
            let v = k.weight * global[s * n_points + k.j] as f64;
            out[s * l + k.lag] += v as f32;
        }
    }
    out
}

pub fn write_truth_csv<W: Write>(truth: &[TruthTerm], mut w: W) -> Result<()> {
    writeln!(w, "j,lat,lon,lag,weight")?;
    for t in truth {
        writeln!(w, "{},{},{},{},{}", t.j, t.lat, t.lon, t.lag, t.weight)?;
    }
    Ok(())
}

pub fn read_truth_csv(text: &str) -> Result<Vec<TruthTerm>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("j,lat,lon,lag,weight") {
        return Err(Error::format("truth.csv", "bad header"));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || Error::format("truth.csv", format!("bad row `{l}`"));
            if f.len() != 5 {
                return Err(bad());
            }
            Ok(TruthTerm {
                j: f[0].parse().map_err(|_| bad())?,
                lat: f[1].parse().map_err(|_| bad())?,
                lon: f[2].parse().map_err(|_| bad())?,
                lag: f[3].parse().map_err(|_| bad())?,
                weight: f[4].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

pub const WIND_FILE: &str = "wind.wgrd";
pub const MASK_FILE: &str = "mask.lmsk";
pub const HS_FILE: &str = "hs.csv";
pub const TRUTH_FILE: &str = "truth.csv";

impl SynthOutput {
    /// Writes `wind.wgrd`, `mask.lmsk`, `hs.csv` and `truth.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.wind.save(&dir.join(WIND_FILE))?;
        self.mask.save(&dir.join(MASK_FILE))?;
        self.hs.save(&dir.join(HS_FILE))?;
        let mut w = BufWriter::new(File::create(dir.join(TRUTH_FILE))?);
        write_truth_csv(&self.truth, &mut w)?;
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            t_steps: 300,
            storms: 30,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn reproducible() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.wind, b.wind);
        assert_eq!(a.hs, b.hs);
    }

    #[test]
    fn noise_does_not_move_wind() {
        let a = generate(&small()).unwrap();
        let b = generate(&SynthConfig {
            noise_sigma: 0.3,
            ..small()
        })
        .unwrap();
        assert_eq!(a.wind, b.wind);
        assert_ne!(a.hs, b.hs);
    }

    #[test]
    fn short_series_rejected_naming_t() {
        let cfg = SynthConfig { t_steps: 8, ..small() };
        match generate(&cfg) {
            Err(Error::ConfigInvalid { key, .. }) => assert_eq!(key, "T"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn calm_gives_pure_noise() {
        let cfg = SynthConfig {
            storms: 0,
            background_u: 0.0,
            background_v: 0.0,
            noise_sigma: 0.0,
            ..small()
        };
        let out = generate(&cfg).unwrap();
        assert!(out.hs.hs.iter().all(|h| *h == 0.0));
    }

    #[test]
    fn kernel_on_land_rejected() {
        let mut cfg = small();
        cfg.kernel = vec![KernelTerm {
            ilat: 2,
            ilon: 15,
            lag: 1,
            weight: 1.0,
        }];
        assert!(matches!(generate(&cfg), Err(Error::ConfigInvalid { .. })));
    }

    #[test]
    fn truth_csv_round_trip() {
        let out = generate(&small()).unwrap();
        let mut buf = Vec::new();
        write_truth_csv(&out.truth, &mut buf).unwrap();
        let back = read_truth_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, out.truth);
    }

    #[test]
    fn kernel_parse() {
        let k = parse_kernel("1:2:3:0.5; 4:5:0:1").unwrap();
        assert_eq!(k.len(), 2);
        assert_eq!(k[1], KernelTerm { ilat: 4, ilon: 5, lag: 0, weight: 1.0 });
        assert!(parse_kernel("1:2:3").is_err());
    }
}

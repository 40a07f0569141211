//! Predictor construction.
//!
//! * projected wind `W = U cos²((b − θ)/2)` per sea point,
//! * the global predictor: one `W²` per sea point and timestep,
//! * the 8-element local wind-sea predictor built from target wind speed and
//!   fetch at `t` and `t − 1`,
//! * the windowed travel-time predictor and its max-correlation estimator
//!   used by the regression baseline.
//!
//! Also holds the `WGRD1` wind-grid format, the Hs CSV format, the `FEAT1`
//! feature cache and the [`Dataset`] join of features with Hs.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};

use crate::error::{Error, Result};
use crate::eval::pearson;
use crate::geo::{
    build_sea_point_set, fetch_length, GridSpec, LandMask, LatLon, SeaPoint, SeaPointSet,
    DEFAULT_FETCH_CAP_KM, DEFAULT_STEP_KM,
};
use crate::io::{LeReader, LeWriter};

pub const WGRD_MAGIC: &[u8; 8] = b"WGRD\x01\x00\x00\x00";
pub const FEAT_MAGIC: &[u8; 8] = b"FEAT\x01\x00\x00\x00";

/// Width of the local predictor row.
pub const LOCAL_WIDTH: usize = 8;

/// How the wind direction is compared with the bearing toward the target.
///
/// `To`: the wind's propagation direction (from-direction + 180°) is
/// compared with the bearing, so wind blowing straight at the target scores
/// `W = U`. `From`: the meteorological from-direction is used as is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectionConvention {
    #[default]
    To,
    From,
}

impl FromStr for ProjectionConvention {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "to" => Ok(Self::To),
            "from" => Ok(Self::From),
            other => Err(format!("expected `to` or `from`, got `{other}`")),
        }
    }
}

impl fmt::Display for ProjectionConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::To => "to",
            Self::From => "from",
        })
    }
}

/// Speed and meteorological from-direction of a `(u, v)` wind vector.
/// Calm wind reports direction 0.
pub fn wind_speed_dir(u: f64, v: f64) -> (f64, f64) {
    let speed = u.hypot(v);
    if speed == 0.0 {
        return (0.0, 0.0);
    }
    (speed, crate::geo::normalize_deg((-u).atan2(-v).to_degrees()))
}

/// Projected wind toward a target at bearing `bearing` (degrees).
pub fn projected_wind(speed: f64, from_dir: f64, bearing: f64, conv: ProjectionConvention) -> f64 {
    let theta = match conv {
        ProjectionConvention::To => from_dir + 180.0,
        ProjectionConvention::From => from_dir,
    };
    // cos²(x/2) = (1 + cos x) / 2, bounded in [0, 1]
    let align = (0.5 * (1.0 + (bearing - theta).to_radians().cos())).clamp(0.0, 1.0);
    speed * align
}

/// Time-indexed gridded wind components, frames stored lat-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WindGrid {
    pub grid: GridSpec,
    pub epoch0: i64,
    pub step_seconds: u32,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

impl WindGrid {
    pub fn new(grid: GridSpec, epoch0: i64, step_seconds: u32, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        if step_seconds == 0 {
            return Err(Error::format("WGRD1", "time step must be positive"));
        }
        if u.len() != v.len() || u.len() % grid.len() != 0 {
            return Err(Error::GridMismatch(format!(
                "component lengths {} / {} not a multiple of {} cells",
                u.len(),
                v.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            epoch0,
            step_seconds,
            u,
            v,
        })
    }

    pub fn n_times(&self) -> usize {
        self.u.len() / self.grid.len()
    }

    pub fn time(&self, t: usize) -> i64 {
        self.epoch0 + t as i64 * self.step_seconds as i64
    }

    pub fn times(&self) -> Vec<i64> {
        (0..self.n_times()).map(|t| self.time(t)).collect()
    }

    pub fn frame_u(&self, t: usize) -> &[f32] {
        let n = self.grid.len();
        &self.u[t * n..(t + 1) * n]
    }

    pub fn frame_v(&self, t: usize) -> &[f32] {
        let n = self.grid.len();
        &self.v[t * n..(t + 1) * n]
    }

    pub fn frame_finite(&self, t: usize) -> bool {
        self.frame_u(t).iter().chain(self.frame_v(t)).all(|x| x.is_finite())
    }

    /// Keeps every `stride`-th frame starting at the first.
    pub fn subsample(&self, stride: usize) -> Result<WindGrid> {
        if stride == 0 {
            return Err(Error::config("subsample", "stride must be >= 1"));
        }
        let (mut u, mut v) = (Vec::new(), Vec::new());
        for t in (0..self.n_times()).step_by(stride) {
            u.extend_from_slice(self.frame_u(t));
            v.extend_from_slice(self.frame_v(t));
        }
        WindGrid::new(self.grid, self.epoch0, self.step_seconds * stride as u32, u, v)
    }

    /// `(speed, from_dir)` at one cell for every frame.
    pub fn series_at(&self, cell: usize) -> Vec<(f64, f64)> {
        (0..self.n_times())
            .map(|t| {
                let (u, v) = (self.frame_u(t)[cell] as f64, self.frame_v(t)[cell] as f64);
                if u.is_finite() && v.is_finite() {
                    wind_speed_dir(u, v)
                } else {
                    (f64::NAN, f64::NAN)
                }
            })
            .collect()
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let g = &self.grid;
        let mut w = LeWriter::new(w);
        w.bytes(WGRD_MAGIC)?;
        w.f64(g.lat0)?;
        w.f64(g.lon0)?;
        w.f64(g.dlat)?;
        w.f64(g.dlon)?;
        w.usize32(g.nlat, "WGRD1")?;
        w.usize32(g.nlon, "WGRD1")?;
        w.usize32(self.n_times(), "WGRD1")?;
        w.i64(self.epoch0)?;
        w.u32(self.step_seconds)?;
        for t in 0..self.n_times() {
            w.f32_slice(self.frame_u(t))?;
            w.f32_slice(self.frame_v(t))?;
        }
        w.finish()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = LeReader::new(r, "WGRD1");
        r.magic(WGRD_MAGIC)?;
        let (lat0, lon0, dlat, dlon) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let (nlat, nlon, nt) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let epoch0 = r.i64()?;
        let step = r.u32()?;
        let grid = GridSpec::new(lat0, lon0, dlat, dlon, nlat, nlon)?;
        let n = grid.len();
        let mut u = Vec::with_capacity(nt * n);
        let mut v = Vec::with_capacity(nt * n);
        for _ in 0..nt {
            u.extend(r.f32_vec(n)?);
            v.extend(r.f32_vec(n)?);
        }
        r.expect_eof()?;
        WindGrid::new(grid, epoch0, step, u, v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// Significant wave height at the target, meters.
#[derive(Debug, Clone, PartialEq)]
pub struct HsSeries {
    pub times: Vec<i64>,
    pub hs: Vec<f32>,
}

pub fn format_time(epoch: i64) -> String {
    DateTime::<Utc>::from_timestamp(epoch, 0)
        .map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| epoch.to_string())
}

pub fn parse_time(s: &str) -> Option<i64> {
    DateTime::parse_from_rfc3339(s).ok().map(|d| d.timestamp())
}

impl HsSeries {
    pub fn new(times: Vec<i64>, hs: Vec<f32>) -> Result<Self> {
        if times.len() != hs.len() {
            return Err(Error::format("hs csv", "times and values differ in length"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::format("hs csv", "times must be strictly increasing"));
        }
        Ok(Self { times, hs })
    }

    pub fn len(&self) -> usize {
        self.hs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hs.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time,hs")?;
        for (t, h) in self.times.iter().zip(&self.hs) {
            writeln!(w, "{},{}", format_time(*t), h)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Non-numeric values (`nan`, empty) are kept as NaN and dropped at join.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == "time,hs" => {}
            _ => return Err(Error::format("hs csv", "expected header `time,hs`")),
        }
        let (mut times, mut hs) = (Vec::new(), Vec::new());
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (ts, vs) = line
                .split_once(',')
                .ok_or_else(|| Error::format("hs csv", format!("line {}: missing comma", i + 2)))?;
            let t = parse_time(ts.trim())
                .ok_or_else(|| Error::format("hs csv", format!("line {}: bad timestamp `{ts}`", i + 2)))?;
            times.push(t);
            hs.push(vs.trim().parse::<f32>().unwrap_or(f32::NAN));
        }
        HsSeries::new(times, hs)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(BufReader::new(File::open(path)?))
    }
}

/// Global predictor: row `t`, column `j` holds `W_j²(t)`.
pub fn build_global_predictor(wind: &WindGrid, pts: &SeaPointSet, conv: ProjectionConvention) -> Result<Vec<f32>> {
    let ncell = wind.grid.len();
    if let Some(bad) = pts.points.iter().find(|p| p.index >= ncell) {
        return Err(Error::GridMismatch(format!(
            "sea point index {} outside grid of {ncell} cells",
            bad.index
        )));
    }
    let p = pts.len();
    let mut out = Vec::with_capacity(wind.n_times() * p);
    for t in 0..wind.n_times() {
        let (fu, fv) = (wind.frame_u(t), wind.frame_v(t));
        out.extend(pts.points.iter().map(|pt| {
            let (s, d) = wind_speed_dir(fu[pt.index] as f64, fv[pt.index] as f64);
            let w = projected_wind(s, d, pt.bearing, conv);
            (w * w) as f32
        }));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalPredictor {
    pub rows: Vec<[f32; LOCAL_WIDTH]>,
    /// Row 0 and rows touching a non-finite input are invalid.
    pub valid: Vec<bool>,
}

/// Local wind-sea predictor
/// `{U, U², U³, U²F, U₋₁, U²₋₁, U³₋₁, U²₋₁F₋₁}` from the target wind series.
pub fn build_local_predictor(
    wind_at_target: &[(f64, f64)],
    mask: &LandMask,
    target: LatLon,
    cap_km: f64,
    step_km: f64,
) -> LocalPredictor {
    let terms: Vec<Option<[f64; 4]>> = wind_at_target
        .iter()
        .map(|&(u, dir)| {
            if !(u.is_finite() && dir.is_finite()) {
                return None;
            }
            let f = fetch_length(target, dir, mask, cap_km, step_km);
            Some([u, u * u, u * u * u, u * u * f])
        })
        .collect();
    let mut rows = Vec::with_capacity(terms.len());
    let mut valid = Vec::with_capacity(terms.len());
    for t in 0..terms.len() {
        let prev = if t == 0 { None } else { terms[t - 1] };
        let mut row = [f32::NAN; LOCAL_WIDTH];
        if let Some(cur) = terms[t] {
            for k in 0..4 {
                row[k] = cur[k] as f32;
            }
        }
        if let Some(p) = prev {
            for k in 0..4 {
                row[4 + k] = p[k] as f32;
            }
        }
        valid.push(terms[t].is_some() && prev.is_some());
        rows.push(row);
    }
    LocalPredictor { rows, valid }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureOptions {
    pub step_km: f64,
    pub fetch_cap_km: f64,
    pub convention: ProjectionConvention,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self {
            step_km: DEFAULT_STEP_KM,
            fetch_cap_km: DEFAULT_FETCH_CAP_KM,
            convention: ProjectionConvention::To,
        }
    }
}

/// Per-timestep predictors. Frames with non-finite wind are dropped, so
/// `times` may have gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub grid: GridSpec,
    pub convention: ProjectionConvention,
    pub step_seconds: u32,
    pub times: Vec<i64>,
    /// `[T × p]`, `W_j²(t)`.
    pub global: Vec<f32>,
    /// `[T × 8]`.
    pub local: Vec<f32>,
    pub local_valid: Vec<bool>,
    pub sea_points: SeaPointSet,
}

impl FeatureSet {
    pub fn build(wind: &WindGrid, mask: &LandMask, target: LatLon, opts: &FeatureOptions) -> Result<Self> {
        let pts = build_sea_point_set(&wind.grid, mask, target, opts.step_km)?;
        let global_all = build_global_predictor(wind, &pts, opts.convention)?;
        let (ti, tj) = wind
            .grid
            .cell_of(target)
            .ok_or_else(|| Error::GridMismatch("target outside grid".into()))?;
        let series = wind.series_at(wind.grid.index(ti, tj));
        let local = build_local_predictor(&series, mask, target, opts.fetch_cap_km, opts.step_km);

        let p = pts.len();
        let mut fs = FeatureSet {
            grid: wind.grid,
            convention: opts.convention,
            step_seconds: wind.step_seconds,
            times: Vec::new(),
            global: Vec::new(),
            local: Vec::new(),
            local_valid: Vec::new(),
            sea_points: pts,
        };
        for t in 0..wind.n_times() {
            if !wind.frame_finite(t) {
                continue;
            }
            fs.times.push(wind.time(t));
            fs.global.extend_from_slice(&global_all[t * p..(t + 1) * p]);
            fs.local.extend_from_slice(&local.rows[t]);
            // lag-1 terms must come from the previous kept frame
            fs.local_valid.push(local.valid[t] && wind.frame_finite(t - 1));
        }
        Ok(fs)
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_points(&self) -> usize {
        self.sea_points.len()
    }

    pub fn global_row(&self, t: usize) -> &[f32] {
        let p = self.n_points();
        &self.global[t * p..(t + 1) * p]
    }

    pub fn local_row(&self, t: usize) -> &[f32] {
        &self.local[t * LOCAL_WIDTH..(t + 1) * LOCAL_WIDTH]
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let g = &self.grid;
        let mut w = LeWriter::new(w);
        w.bytes(FEAT_MAGIC)?;
        w.f64(g.lat0)?;
        w.f64(g.lon0)?;
        w.f64(g.dlat)?;
        w.f64(g.dlon)?;
        w.usize32(g.nlat, "FEAT1")?;
        w.usize32(g.nlon, "FEAT1")?;
        w.f64(self.sea_points.target.lat)?;
        w.f64(self.sea_points.target.lon)?;
        w.u8(match self.convention {
            ProjectionConvention::To => 0,
            ProjectionConvention::From => 1,
        })?;
        w.u32(self.step_seconds)?;
        w.usize32(self.n_times(), "FEAT1")?;
        w.usize32(self.n_points(), "FEAT1")?;
        for t in &self.times {
            w.i64(*t)?;
        }
        for p in &self.sea_points.points {
            w.usize32(p.index, "FEAT1")?;
            w.f64(p.lat)?;
            w.f64(p.lon)?;
            w.f64(p.bearing)?;
        }
        w.f32_slice(&self.global)?;
        w.f32_slice(&self.local)?;
        for v in &self.local_valid {
            w.u8(*v as u8)?;
        }
        w.finish()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = LeReader::new(r, "FEAT1");
        r.magic(FEAT_MAGIC)?;
        let (lat0, lon0, dlat, dlon) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let (nlat, nlon) = (r.u32()? as usize, r.u32()? as usize);
        let grid = GridSpec::new(lat0, lon0, dlat, dlon, nlat, nlon)?;
        let target = LatLon::new(r.f64()?, r.f64()?);
        let convention = match r.u8()? {
            0 => ProjectionConvention::To,
            1 => ProjectionConvention::From,
            c => return Err(r.fail(format!("unknown convention tag {c}"))),
        };
        let step_seconds = r.u32()?;
        let (nt, p) = (r.u32()? as usize, r.u32()? as usize);
        let times = (0..nt).map(|_| r.i64()).collect::<Result<Vec<_>>>()?;
        let mut points = Vec::with_capacity(p);
        for _ in 0..p {
            let index = r.u32()? as usize;
            if index >= grid.len() {
                return Err(r.fail("sea point index outside grid"));
            }
            points.push(SeaPoint {
                index,
                lat: r.f64()?,
                lon: r.f64()?,
                bearing: r.f64()?,
            });
        }
        let global = r.f32_vec(nt * p)?;
        let local = r.f32_vec(nt * LOCAL_WIDTH)?;
        let local_valid = (0..nt).map(|_| r.u8().map(|b| b != 0)).collect::<Result<Vec<_>>>()?;
        r.expect_eof()?;
        Ok(FeatureSet {
            grid,
            convention,
            step_seconds,
            times,
            global,
            local,
            local_valid,
            sea_points: SeaPointSet { target, points },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// Features joined 1:1 with finite Hs on timestamps.
///
/// `segment[t]` labels maximal runs of consecutive timesteps (uniform step);
/// a window `[a, b]` is gap-free iff `segment[a] == segment[b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: FeatureSet,
    pub hs: Vec<f32>,
    pub segment: Vec<u32>,
}

impl Dataset {
    pub fn join(features: &FeatureSet, hs: &HsSeries) -> Result<Self> {
        let p = features.n_points();
        let mut out = FeatureSet {
            times: Vec::new(),
            global: Vec::new(),
            local: Vec::new(),
            local_valid: Vec::new(),
            ..features.clone()
        };
        let mut h_out = Vec::new();
        let mut k = 0usize;
        for (t, &time) in features.times.iter().enumerate() {
            while k < hs.times.len() && hs.times[k] < time {
                k += 1;
            }
            if k == hs.times.len() || hs.times[k] != time {
                continue;
            }
            let h = hs.hs[k];
            let g = features.global_row(t);
            if !h.is_finite() || g.iter().any(|x| !x.is_finite()) {
                continue;
            }
            out.times.push(time);
            out.global.extend_from_slice(g);
            out.local.extend_from_slice(features.local_row(t));
            out.local_valid.push(features.local_valid[t]);
            h_out.push(h);
        }
        debug_assert_eq!(out.global.len(), out.times.len() * p);
        let step = features.step_seconds as i64;
        let mut segment = Vec::with_capacity(out.times.len());
        let mut seg = 0u32;
        for (i, t) in out.times.iter().enumerate() {
            if i > 0 && t - out.times[i - 1] != step {
                seg += 1;
            }
            segment.push(seg);
        }
        Ok(Dataset {
            features: out,
            hs: h_out,
            segment,
        })
    }

    pub fn len(&self) -> usize {
        self.hs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hs.is_empty()
    }

    /// The first `n` rows.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n > self.len() {
            return Err(Error::InsufficientData(format!("prefix of {n} rows from {}", self.len())));
        }
        let p = self.features.n_points();
        let fs = &self.features;
        Ok(Dataset {
            features: FeatureSet {
                times: fs.times[..n].to_vec(),
                global: fs.global[..n * p].to_vec(),
                local: fs.local[..n * LOCAL_WIDTH].to_vec(),
                local_valid: fs.local_valid[..n].to_vec(),
                ..fs.clone()
            },
            hs: self.hs[..n].to_vec(),
            segment: self.segment[..n].to_vec(),
        })
    }

    /// Whether `[a, b]` (inclusive) is inside the data and gap-free.
    pub fn contiguous(&self, a: usize, b: usize) -> bool {
        a <= b && b < self.len() && self.segment[a] == self.segment[b]
    }
}

/// Per-column z-score parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Standardizer {
    /// Fits on the rows listed in `rows` of a row-major `[n × width]` matrix.
    /// Constant columns get unit scale.
    pub fn fit(data: &[f32], width: usize, rows: impl IntoIterator<Item = usize>) -> Self {
        let mut sum = vec![0f64; width];
        let mut sq = vec![0f64; width];
        let mut n = 0usize;
        for r in rows {
            for (c, &x) in data[r * width..(r + 1) * width].iter().enumerate() {
                sum[c] += x as f64;
                sq[c] += (x as f64) * (x as f64);
            }
            n += 1;
        }
        let n = n.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let var = (s / n - m * m).max(0.0);
                let sd = var.sqrt();
                if sd > 1e-6 * m.abs().max(1.0) {
                    sd as f32
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer {
            mean: mean.into_iter().map(|m| m as f32).collect(),
            std,
        }
    }

    pub fn identity(width: usize) -> Self {
        Standardizer {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, row: &[f32], out: &mut [f32]) {
        for (((o, x), m), s) in out.iter_mut().zip(row).zip(&self.mean).zip(&self.std) {
            *o = (x - m) / s;
        }
    }
}

/// Windowed mean of `w_sq` centred `lag` steps before `t`:
/// mean of `w_sq[t − lag − alpha ..= t − lag + alpha]`.
pub fn window_value(w_sq: &[f64], t: i64, lag: usize, alpha: usize) -> Result<f64> {
    let n = w_sq.len() as i64;
    let lo = (lag + alpha) as i64;
    let hi = n - 1 + lag as i64 - alpha as i64;
    if t < lo || t > hi {
        return Err(Error::WindowOutOfRange { t, lo, hi });
    }
    let start = (t - lo) as usize;
    let terms = &w_sq[start..=start + 2 * alpha];
    Ok(terms.iter().sum::<f64>() / (2 * alpha + 1) as f64)
}

/// Windowed predictor for every observation index `t` whose window lies in
/// the data. `values[k]` belongs to `t = start + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedSeries {
    pub start: usize,
    pub values: Vec<f64>,
}

/// Windowed travel-time predictor from the projected wind `w` (m/s).
pub fn window_predictor(w: &[f64], lag: usize, alpha: usize) -> WindowedSeries {
    let w_sq: Vec<f64> = w.iter().map(|x| x * x).collect();
    window_predictor_sq(&w_sq, lag, alpha)
}

/// As [`window_predictor`] but from pre-squared values.
pub fn window_predictor_sq(w_sq: &[f64], lag: usize, alpha: usize) -> WindowedSeries {
    let n = w_sq.len();
    let start = lag + alpha;
    let end = (n as i64 - 1 + lag as i64 - alpha as i64).min(n as i64 - 1);
    if end < start as i64 {
        return WindowedSeries { start, values: Vec::new() };
    }
    let mut prefix = vec![0f64; n + 1];
    for (i, x) in w_sq.iter().enumerate() {
        prefix[i + 1] = prefix[i] + x;
    }
    let width = (2 * alpha + 1) as f64;
    let values = (start..=end as usize)
        .map(|t| {
            let a = t - lag - alpha;
            (prefix[a + 2 * alpha + 1] - prefix[a]) / width
        })
        .collect();
    WindowedSeries { start, values }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TravelParams {
    pub lag: usize,
    pub alpha: usize,
    pub rho: f64,
}

/// Minimum number of jointly valid samples for travel-time estimation.
pub const MIN_TRAVEL_OVERLAP: usize = 50;

/// Grid search over `lag ∈ [0, max_lag]`, `alpha ∈ [0, max_alpha]` for the
/// maximum Pearson correlation between the windowed predictor and `hs`.
///
/// All candidates are scored on the same index range (the `t` for which
/// every candidate window is inside the data). Ties keep the smaller lag,
/// then the smaller alpha.
pub fn estimate_travel_params(w_sq: &[f64], hs: &[f64], max_lag: usize, max_alpha: usize) -> Result<TravelParams> {
    if w_sq.len() != hs.len() {
        return Err(Error::InsufficientData("series lengths differ".into()));
    }
    let n = w_sq.len();
    let lo = max_lag + max_alpha;
    let hi = n as i64 - 1 - max_alpha as i64;
    if hi < lo as i64 || (hi - lo as i64 + 1) < MIN_TRAVEL_OVERLAP as i64 {
        return Err(Error::InsufficientData(format!(
            "{n} samples leave fewer than {MIN_TRAVEL_OVERLAP} jointly valid"
        )));
    }
    let hi = hi as usize;
    let target = &hs[lo..=hi];
    let mut prefix = vec![0f64; n + 1];
    for (i, x) in w_sq.iter().enumerate() {
        prefix[i + 1] = prefix[i] + x;
    }
    let mut best: Option<TravelParams> = None;
    let mut pred = vec![0f64; hi - lo + 1];
    for lag in 0..=max_lag {
        for alpha in 0..=max_alpha {
            let width = (2 * alpha + 1) as f64;
            for (k, t) in (lo..=hi).enumerate() {
                let a = t - lag - alpha;
                pred[k] = (prefix[a + 2 * alpha + 1] - prefix[a]) / width;
            }
            let rho = pearson(&pred, target)?;
            if best.is_none_or(|b| rho > b.rho) {
                best = Some(TravelParams { lag, alpha, rho });
            }
        }
    }
    Ok(best.expect("search space is non-empty"))
}

//! Spherical geodesy on a regular lat/lon grid.
//!
//! Earth is a sphere of radius [`EARTH_RADIUS_KM`]. Bearings are degrees
//! clockwise from true north in `[0, 360)`. Cells are addressed by their
//! centres; `lat0`/`lon0` is the south-west centre and storage is lat-major
//! (`index = ilat * nlon + ilon`). Points outside the grid box count as sea.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{LeReader, LeWriter};

pub const EARTH_RADIUS_KM: f64 = 6371.0;
pub const DEFAULT_STEP_KM: f64 = 25.0;
pub const DEFAULT_FETCH_CAP_KM: f64 = 500.0;

/// Tolerance (degrees) for coincident / antipodal bearing endpoints.
const DEGENERATE_DEG: f64 = 1e-9;

pub const LMSK_MAGIC: &[u8; 8] = b"LMSK\x01\x00\x00\x00";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }
}

/// Wraps a longitude into `[-180, 180)`.
pub fn normalize_lon(lon: f64) -> f64 {
    let l = (lon + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if l >= 180.0 {
        l - 360.0
    } else {
        l
    }
}

/// Wraps an angle into `[0, 360)`.
pub fn normalize_deg(deg: f64) -> f64 {
    let d = deg.rem_euclid(360.0);
    if d >= 360.0 {
        0.0
    } else {
        d
    }
}

/// Central angle in radians (haversine form).
pub fn central_angle(a: LatLon, b: LatLon) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * h.sqrt().min(1.0).asin()
}

pub fn great_circle_distance_km(a: LatLon, b: LatLon) -> f64 {
    central_angle(a, b) * EARTH_RADIUS_KM
}

/// Initial bearing of the great-circle arc from `src` to `dst`.
pub fn great_circle_bearing(src: LatLon, dst: LatLon) -> Result<f64> {
    let sigma = central_angle(src, dst).to_degrees();
    if !(DEGENERATE_DEG..=180.0 - DEGENERATE_DEG).contains(&sigma) {
        return Err(Error::DegenerateBearing {
            src_lat: src.lat,
            src_lon: src.lon,
            dst_lat: dst.lat,
            dst_lon: dst.lon,
        });
    }
    let (p1, p2) = (src.lat.to_radians(), dst.lat.to_radians());
    let dl = (dst.lon - src.lon).to_radians();
    let y = dl.sin() * p2.cos();
    let x = p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos();
    Ok(normalize_deg(y.atan2(x).to_degrees()))
}

/// Point reached after travelling `dist_km` from `start` along initial
/// bearing `bearing_deg`.
pub fn destination(start: LatLon, bearing_deg: f64, dist_km: f64) -> LatLon {
    let delta = dist_km / EARTH_RADIUS_KM;
    let theta = bearing_deg.to_radians();
    let p1 = start.lat.to_radians();
    let l1 = start.lon.to_radians();
    let sin_p2 = (p1.sin() * delta.cos() + p1.cos() * delta.sin() * theta.cos()).clamp(-1.0, 1.0);
    let p2 = sin_p2.asin();
    let l2 = l1 + (theta.sin() * delta.sin() * p1.cos()).atan2(delta.cos() - p1.sin() * sin_p2);
    LatLon::new(p2.to_degrees(), normalize_lon(l2.to_degrees()))
}

/// Interior samples of the arc `src -> dst`, every `step_km`, endpoints
/// excluded. Coincident endpoints yield no samples; antipodal endpoints are
/// walked due north.
pub fn arc_samples(src: LatLon, dst: LatLon, step_km: f64) -> Vec<LatLon> {
    assert!(step_km > 0.0, "step_km must be positive");
    let dist = great_circle_distance_km(src, dst);
    let bearing = match great_circle_bearing(src, dst) {
        Ok(b) => b,
        Err(_) if dist < 1.0 => return Vec::new(),
        Err(_) => 0.0,
    };
    let mut out = Vec::new();
    let mut k = 1usize;
    loop {
        let s = k as f64 * step_km;
        if s >= dist {
            break;
        }
        out.push(destination(src, bearing, s));
        k += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lat0: f64,
    pub lon0: f64,
    pub dlat: f64,
    pub dlon: f64,
    pub nlat: usize,
    pub nlon: usize,
}

impl GridSpec {
    pub fn new(lat0: f64, lon0: f64, dlat: f64, dlon: f64, nlat: usize, nlon: usize) -> Result<Self> {
        let g = GridSpec {
            lat0,
            lon0: normalize_lon(lon0),
            dlat,
            dlon,
            nlat,
            nlon,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nlat == 0 || self.nlon == 0 {
            return Err(Error::GridMismatch("grid must have at least one cell".into()));
        }
        if !(self.dlat > 0.0 && self.dlon > 0.0) {
            return Err(Error::GridMismatch("grid spacing must be positive".into()));
        }
        let top = self.lat0 + (self.nlat - 1) as f64 * self.dlat;
        if !(self.lat0 >= -90.0 && top <= 90.0 + 1e-9) {
            return Err(Error::GridMismatch(format!(
                "latitudes [{}, {top}] leave [-90, 90]",
                self.lat0
            )));
        }
        if !self.lon0.is_finite() {
            return Err(Error::GridMismatch("non-finite lon0".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nlat * self.nlon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lat(&self, ilat: usize) -> f64 {
        self.lat0 + ilat as f64 * self.dlat
    }

    pub fn lon(&self, ilon: usize) -> f64 {
        normalize_lon(self.lon0 + ilon as f64 * self.dlon)
    }

    pub fn index(&self, ilat: usize, ilon: usize) -> usize {
        ilat * self.nlon + ilon
    }

    pub fn unravel(&self, index: usize) -> (usize, usize) {
        (index / self.nlon, index % self.nlon)
    }

    pub fn center(&self, index: usize) -> LatLon {
        let (i, j) = self.unravel(index);
        LatLon::new(self.lat(i), self.lon(j))
    }

    fn wraps(&self) -> bool {
        self.nlon as f64 * self.dlon >= 360.0 - 1e-9
    }

    /// Cell whose centre is nearest to `p`, if `p` is inside the grid box.
    pub fn cell_of(&self, p: LatLon) -> Option<(usize, usize)> {
        let fi = ((p.lat - self.lat0) / self.dlat).round();
        if fi < 0.0 || fi >= self.nlat as f64 {
            return None;
        }
        let mut d = normalize_lon(p.lon - self.lon0);
        if d < -0.5 * self.dlon {
            d += 360.0;
        }
        let mut fj = (d / self.dlon).round();
        if fj >= self.nlon as f64 {
            if self.wraps() {
                fj %= self.nlon as f64;
            } else {
                return None;
            }
        }
        Some((fi as usize, fj as usize))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandMask {
    pub grid: GridSpec,
    cells: Vec<bool>,
}

impl LandMask {
    pub fn new(grid: GridSpec, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "mask has {} cells, grid has {}",
                cells.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, cells })
    }

    pub fn all_sea(grid: GridSpec) -> Self {
        Self {
            grid,
            cells: vec![false; grid.len()],
        }
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn is_land(&self, ilat: usize, ilon: usize) -> bool {
        self.cells[self.grid.index(ilat, ilon)]
    }

    pub fn set_land(&mut self, ilat: usize, ilon: usize, land: bool) {
        let i = self.grid.index(ilat, ilon);
        self.cells[i] = land;
    }

    /// Land lookup for an arbitrary point; outside the box is sea.
    pub fn is_land_at(&self, p: LatLon) -> bool {
        self.grid
            .cell_of(p)
            .is_some_and(|(i, j)| self.is_land(i, j))
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let g = &self.grid;
        let mut w = LeWriter::new(w);
        w.bytes(LMSK_MAGIC)?;
        w.f64(g.lat0)?;
        w.f64(g.lon0)?;
        w.f64(g.dlat)?;
        w.f64(g.dlon)?;
        w.usize32(g.nlat, "LMSK1")?;
        w.usize32(g.nlon, "LMSK1")?;
        let mut packed = vec![0u8; self.cells.len().div_ceil(8)];
        for (i, &land) in self.cells.iter().enumerate() {
            if land {
                packed[i / 8] |= 1 << (i % 8);
            }
        }
        w.bytes(&packed)?;
        w.finish()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = LeReader::new(r, "LMSK1");
        r.magic(LMSK_MAGIC)?;
        let (lat0, lon0, dlat, dlon) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let (nlat, nlon) = (r.u32()? as usize, r.u32()? as usize);
        let grid = GridSpec::new(lat0, lon0, dlat, dlon, nlat, nlon)?;
        let packed = r.bytes(grid.len().div_ceil(8))?;
        r.expect_eof()?;
        let cells = (0..grid.len())
            .map(|i| packed[i / 8] >> (i % 8) & 1 == 1)
            .collect();
        LandMask::new(grid, cells)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// True iff an interior sample of the arc falls on a land cell.
pub fn path_blocked(src: LatLon, dst: LatLon, mask: &LandMask, step_km: f64) -> bool {
    arc_samples(src, dst, step_km)
        .into_iter()
        .any(|p| mask.is_land_at(p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeaPoint {
    /// Flat grid index.
    pub index: usize,
    pub lat: f64,
    pub lon: f64,
    /// Bearing from this point toward the target.
    pub bearing: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeaPointSet {
    pub target: LatLon,
    pub points: Vec<SeaPoint>,
}

impl SeaPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn position_of(&self, grid_index: usize) -> Option<usize> {
        self.points
            .binary_search_by_key(&grid_index, |p| p.index)
            .ok()
    }
}

/// All sea cells whose great-circle path to `target` is not blocked by land,
/// excluding the target's own cell, ordered by grid index.
pub fn build_sea_point_set(
    grid: &GridSpec,
    mask: &LandMask,
    target: LatLon,
    step_km: f64,
) -> Result<SeaPointSet> {
    if mask.grid != *grid {
        return Err(Error::GridMismatch("mask grid differs from requested grid".into()));
    }
    let (ti, tj) = grid.cell_of(target).ok_or_else(|| {
        Error::GridMismatch(format!("target ({}, {}) outside grid", target.lat, target.lon))
    })?;
    if mask.is_land(ti, tj) {
        return Err(Error::TargetOnLand {
            lat: target.lat,
            lon: target.lon,
        });
    }
    let target_index = grid.index(ti, tj);
    let mut points = Vec::new();
    for index in 0..grid.len() {
        if index == target_index || mask.cells[index] {
            continue;
        }
        let c = grid.center(index);
        let bearing = match great_circle_bearing(c, target) {
            Ok(b) => b,
            Err(_) => continue,
        };
        if path_blocked(c, target, mask, step_km) {
            continue;
        }
        points.push(SeaPoint {
            index,
            lat: c.lat,
            lon: c.lon,
            bearing,
        });
    }
    Ok(SeaPointSet { target, points })
}

/// Distance from `target` to the first land sample marching upwind along
/// `wind_from_dir`, capped at `cap_km`. A land first sample gives `step_km`.
pub fn fetch_length(target: LatLon, wind_from_dir: f64, mask: &LandMask, cap_km: f64, step_km: f64) -> f64 {
    assert!(cap_km > 0.0 && step_km > 0.0);
    let mut k = 1usize;
    loop {
        let s = k as f64 * step_km;
        if s > cap_km + 1e-9 {
            return cap_km;
        }
        if mask.is_land_at(destination(target, wind_from_dir, s)) {
            return s.min(cap_km);
        }
        k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Bearing from tangent-plane projection of the destination n-vector.
    fn bearing_oracle(a: LatLon, b: LatLon) -> f64 {
        let unit = |p: LatLon| {
            let (f, l) = (p.lat.to_radians(), p.lon.to_radians());
            [f.cos() * l.cos(), f.cos() * l.sin(), f.sin()]
        };
        let dot = |x: [f64; 3], y: [f64; 3]| x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
        let (va, vb) = (unit(a), unit(b));
        let (f, l) = (a.lat.to_radians(), a.lon.to_radians());
        let north = [-f.sin() * l.cos(), -f.sin() * l.sin(), f.cos()];
        let east = [-l.sin(), l.cos(), 0.0];
        let ab = dot(va, vb);
        let c = [vb[0] - ab * va[0], vb[1] - ab * va[1], vb[2] - ab * va[2]];
        dot(c, east).atan2(dot(c, north)).to_degrees().rem_euclid(360.0)
    }

    fn grid5() -> GridSpec {
        GridSpec::new(-2.0, 0.0, 1.0, 1.0, 5, 5).unwrap()
    }

    #[test]
    fn bearing_axis_cases() {
        let e = great_circle_bearing(LatLon::new(0.0, 0.0), LatLon::new(0.0, 10.0)).unwrap();
        let n = great_circle_bearing(LatLon::new(0.0, 0.0), LatLon::new(10.0, 0.0)).unwrap();
        assert_abs_diff_eq!(e, 90.0, epsilon = 1e-12);
        assert_abs_diff_eq!(n, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn bearing_hatteras_to_biscay_matches_oracle() {
        let (a, b) = (LatLon::new(35.2, -75.5), LatLon::new(45.2, -1.6));
        let got = great_circle_bearing(a, b).unwrap();
        assert_abs_diff_eq!(got, bearing_oracle(a, b), epsilon = 1e-9);
        // frozen from a 40-digit evaluation of the atan2 azimuth formula
        assert_abs_diff_eq!(got, 55.391_136_671_674_24, epsilon = 1e-9);
    }

    #[test]
    fn bearing_degenerate_pairs() {
        let p = LatLon::new(12.0, 34.0);
        assert!(matches!(great_circle_bearing(p, p), Err(Error::DegenerateBearing { .. })));
        let anti = LatLon::new(-12.0, 34.0 - 180.0);
        assert!(matches!(great_circle_bearing(p, anti), Err(Error::DegenerateBearing { .. })));
    }

    #[test]
    fn equator_reciprocal_differs_by_180() {
        let (a, b) = (LatLon::new(0.0, -20.0), LatLon::new(0.0, 15.0));
        let f = great_circle_bearing(a, b).unwrap();
        let r = great_circle_bearing(b, a).unwrap();
        assert_abs_diff_eq!((r - f).rem_euclid(360.0), 180.0, epsilon = 1e-12);
    }

    #[test]
    fn all_sea_never_blocked() {
        let mask = LandMask::all_sea(grid5());
        assert!(!path_blocked(LatLon::new(-2.0, 0.0), LatLon::new(2.0, 4.0), &mask, 25.0));
    }

    #[test]
    fn land_column_blocks_equator_path() {
        let g = grid5();
        let mut mask = LandMask::all_sea(g);
        for i in 0..5 {
            mask.set_land(i, 2, true);
        }
        let (src, dst) = (LatLon::new(0.0, 0.0), LatLon::new(0.0, 4.0));
        // independent enumeration: along the equator sample k sits at lon = k*step/R
        let total = 4f64.to_radians() * EARTH_RADIUS_KM;
        let hits = (1..)
            .map(|k| k as f64 * 25.0)
            .take_while(|s| *s < total)
            .map(|s| (s / EARTH_RADIUS_KM).to_degrees())
            .filter(|lon| (lon - 2.0).abs() <= 0.5)
            .count();
        assert!(hits > 0);
        assert!(path_blocked(src, dst, &mask, 25.0));
    }

    #[test]
    fn adjacent_cells_not_blocked() {
        let g = grid5();
        let mut mask = LandMask::all_sea(g);
        mask.set_land(0, 0, true);
        mask.set_land(4, 4, true);
        assert!(!path_blocked(LatLon::new(0.0, 1.0), LatLon::new(0.0, 2.0), &mask, 25.0));
    }

    #[test]
    fn three_by_three_all_sea() {
        let g = GridSpec::new(-1.0, -1.0, 1.0, 1.0, 3, 3).unwrap();
        let mask = LandMask::all_sea(g);
        let target = LatLon::new(0.0, 0.0);
        let set = build_sea_point_set(&g, &mask, target, 25.0).unwrap();
        assert_eq!(set.len(), 8);
        let idx: Vec<usize> = set.points.iter().map(|p| p.index).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, 5, 6, 7, 8]);
        for p in &set.points {
            let expect = bearing_oracle(LatLon::new(p.lat, p.lon), target);
            assert_abs_diff_eq!(p.bearing, expect, epsilon = 1e-9);
        }
        // due-north neighbour points south, due-west neighbour points east
        assert_abs_diff_eq!(set.points[6].bearing, 180.0, epsilon = 1e-9);
        assert_abs_diff_eq!(set.points[3].bearing, 90.0, epsilon = 1e-9);
    }

    #[test]
    fn all_land_but_target() {
        let g = GridSpec::new(-1.0, -1.0, 1.0, 1.0, 3, 3).unwrap();
        let mut cells = vec![true; 9];
        cells[4] = false;
        let mask = LandMask::new(g, cells).unwrap();
        let set = build_sea_point_set(&g, &mask, LatLon::new(0.0, 0.0), 25.0).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn target_on_land_rejected() {
        let g = grid5();
        let mut mask = LandMask::all_sea(g);
        mask.set_land(2, 2, true);
        let err = build_sea_point_set(&g, &mask, LatLon::new(0.0, 2.0), 25.0).unwrap_err();
        assert!(matches!(err, Error::TargetOnLand { .. }));
    }

    #[test]
    fn land_wall_west_of_target() {
        let g = GridSpec::new(-3.0, 0.0, 1.0, 1.0, 7, 7).unwrap();
        let mut mask = LandMask::all_sea(g);
        for i in 0..7 {
            mask.set_land(i, 2, true);
        }
        let target = LatLon::new(0.0, 5.0);
        let set = build_sea_point_set(&g, &mask, target, 25.0).unwrap();
        // oracle: enumerate every sea cell and test its path by hand
        let mut expect = Vec::new();
        for index in 0..g.len() {
            let (i, j) = g.unravel(index);
            if mask.is_land(i, j) || (i, j) == (3, 5) {
                continue;
            }
            let c = g.center(index);
            let blocked = arc_samples(c, target, 25.0).iter().any(|p| {
                g.cell_of(*p).is_some_and(|(a, b)| mask.is_land(a, b))
            });
            if !blocked {
                expect.push(index);
            }
        }
        let got: Vec<usize> = set.points.iter().map(|p| p.index).collect();
        assert_eq!(got, expect);
        assert!(set.points.iter().all(|p| g.unravel(p.index).1 > 2));
        assert_eq!(got.len(), 7 * 4 - 1);
    }

    #[test]
    fn fetch_open_ocean_hits_cap() {
        let g = GridSpec::new(30.0, -30.0, 0.5, 0.5, 41, 41).unwrap();
        let mask = LandMask::all_sea(g);
        let t = LatLon::new(40.0, -20.0);
        assert_eq!(fetch_length(t, 270.0, &mask, 500.0, 25.0), 500.0);
        assert_eq!(fetch_length(t, 90.0, &mask, 500.0, 25.0), 500.0);
    }

    #[test]
    fn fetch_planted_land_at_120km() {
        let g = GridSpec::new(-5.0, -5.0, 0.25, 0.25, 41, 41).unwrap();
        let mut mask = LandMask::all_sea(g);
        let t = LatLon::new(0.0, 0.0);
        // plant land in the cell containing the sample nearest 120 km west
        let k = (120.0f64 / 25.0).round();
        let p = destination(t, 270.0, k * 25.0);
        let (i, j) = g.cell_of(p).unwrap();
        mask.set_land(i, j, true);
        // sampling oracle: first sample (every 25 km) falling in land
        let first = (1..=20)
            .map(|k| k as f64 * 25.0)
            .find(|s| {
                let lon = -(s / EARTH_RADIUS_KM).to_degrees();
                g.cell_of(LatLon::new(0.0, lon)) == Some((i, j))
            })
            .unwrap();
        let f = fetch_length(t, 270.0, &mask, 500.0, 25.0);
        assert_eq!(f, first);
        assert!((f - 120.0).abs() <= 25.0);
    }

    #[test]
    fn fetch_coastal_floor() {
        let g = grid5();
        let mut mask = LandMask::all_sea(g);
        mask.set_land(2, 1, true);
        let f = fetch_length(LatLon::new(0.0, 1.6), 270.0, &mask, 500.0, 25.0);
        assert_eq!(f, 25.0);
    }

    #[test]
    fn mask_file_round_trip() {
        let g = GridSpec::new(40.0, -10.0, 0.5, 0.5, 3, 5).unwrap();
        let cells: Vec<bool> = (0..15).map(|i| i % 3 == 0 || i == 14).collect();
        let mask = LandMask::new(g, cells).unwrap();
        let mut buf = Vec::new();
        mask.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"LMSK\x01\x00\x00\x00");
        assert_eq!(buf.len(), 8 + 32 + 8 + 2);
        // 0,3,6,9,12,14 -> byte0 = 0b0100_1001, byte1 bits 1,4,6 -> 0b0101_0010
        assert_eq!(&buf[48..], &[0b0100_1001, 0b0101_0010]);
        assert_eq!(LandMask::read_from(&buf[..]).unwrap(), mask);
        assert!(LandMask::read_from(&buf[..49]).is_err());
    }

    #[test]
    fn cell_lookup_outside_is_none() {
        let g = grid5();
        assert_eq!(g.cell_of(LatLon::new(0.0, 2.4)), Some((2, 2)));
        assert_eq!(g.cell_of(LatLon::new(0.0, -0.6)), None);
        assert_eq!(g.cell_of(LatLon::new(2.6, 0.0)), None);
        let mask = LandMask::new(g, vec![true; 25]).unwrap();
        assert!(!mask.is_land_at(LatLon::new(10.0, 10.0)));
    }

    #[test]
    fn removing_an_off_arc_point_leaves_the_rest() {
        let g = GridSpec::new(-3.0, 0.0, 1.0, 1.0, 7, 7).unwrap();
        let mut mask = LandMask::all_sea(g);
        mask.set_land(1, 1, true);
        let target = LatLon::new(0.0, 3.0);
        let base = build_sea_point_set(&g, &mask, target, 25.0).unwrap();
        // corner cell (0, 0): check no other arc samples touch it
        let corner = g.index(0, 0);
        let touched = base.points.iter().filter(|p| p.index != corner).any(|p| {
            arc_samples(LatLon::new(p.lat, p.lon), target, 25.0)
                .iter()
                .any(|s| g.cell_of(*s) == Some((0, 0)))
        });
        assert!(!touched);
        mask.set_land(0, 0, true);
        let after = build_sea_point_set(&g, &mask, target, 25.0).unwrap();
        let expect: Vec<SeaPoint> = base.points.iter().copied().filter(|p| p.index != corner).collect();
        assert_eq!(after.points, expect);
    }

    proptest! {
        #[test]
        fn bearing_agrees_with_oracle(la in -80.0f64..80.0, lo in -180.0f64..180.0,
                                      lb in -80.0f64..80.0, lob in -180.0f64..180.0) {
            let (a, b) = (LatLon::new(la, lo), LatLon::new(lb, lob));
            prop_assume!(central_angle(a, b).to_degrees() > 1e-3);
            prop_assume!(central_angle(a, b).to_degrees() < 179.0);
            let got = great_circle_bearing(a, b).unwrap();
            let want = bearing_oracle(a, b);
            let diff = (got - want).rem_euclid(360.0);
            prop_assert!(diff.min(360.0 - diff) < 1e-7);
            prop_assert!((0.0..360.0).contains(&got));
        }

        #[test]
        fn fetch_capped_and_monotone(seed_cells in proptest::collection::vec(0usize..400, 0..30),
                                     extra in proptest::collection::vec(0usize..400, 1..10),
                                     dir in 0.0f64..360.0) {
            let g = GridSpec::new(-5.0, -5.0, 0.5, 0.5, 20, 20).unwrap();
            let mut mask = LandMask::all_sea(g);
            let t = LatLon::new(0.0, 0.0);
            let tc = g.cell_of(t).unwrap();
            for c in &seed_cells {
                let (i, j) = g.unravel(*c);
                if (i, j) != tc { mask.set_land(i, j, true); }
            }
            let before = fetch_length(t, dir, &mask, 500.0, 25.0);
            prop_assert!((25.0..=500.0).contains(&before));
            for c in &extra {
                let (i, j) = g.unravel(*c);
                if (i, j) != tc { mask.set_land(i, j, true); }
            }
            let after = fetch_length(t, dir, &mask, 500.0, 25.0);
            prop_assert!(after <= before);
        }
    }
}

//! Shared fixtures for the benchmarks.

use swellcast_core::geo::{GridSpec, LandMask, LatLon};
use swellcast_core::nn::Tensor;

/// Deterministic pseudo-random tensor without pulling in an RNG.
pub fn tensor(shape: &[usize], salt: u32) -> Tensor<f32> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|i| {
            let x = (i as u32).wrapping_mul(2_654_435_761).wrapping_add(salt.wrapping_mul(40_503));
            (x >> 8) as f32 / (1u32 << 24) as f32 - 0.5
        })
        .collect();
    Tensor::from_vec(shape.to_vec(), data).expect("shape matches data")
}

/// A 1° grid with land east of column `nlon - 3` and a coastal target.
pub fn coast(nlat: usize, nlon: usize) -> (GridSpec, LandMask, LatLon) {
    let grid = GridSpec::new(40.0, -40.0, 1.0, 1.0, nlat, nlon).expect("valid grid");
    let mut mask = LandMask::all_sea(grid);
    for i in 0..nlat {
        for j in nlon - 2..nlon {
            mask.set_land(i, j, true);
        }
    }
    let target = LatLon::new(grid.lat(nlat / 2), grid.lon(nlon - 3));
    (grid, mask, target)
}

//! WebAssembly bindings for the disk (`d = 2`) demo page.
//!
//! Every field is sampled on an `n x n` grid over `[-1, 1]^2`, row-major with
//! `y` decreasing down the rows; cells outside the open unit disk are `NaN`.

use ballheat::error::{Error, Result};
use ballheat::geometry::{dist_ball, BallPoint, ModelParams};
use ballheat::jacobi::MultiIndex;
use ballheat::spectral::{basis_eval, HeatKernel, Truncation};
use wasm_bindgen::prelude::*;

/// Smallest time the kernel view accepts.
pub const T_MIN: f64 = 0.01;
const KERNEL_N_MAX: usize = 80;
const RIM: f64 = 0.999;

fn disk_point(x: f64, y: f64) -> Result<BallPoint> {
    let r = x.hypot(y);
    let s = if r > RIM { RIM / r } else { 1.0 };
    BallPoint::new(vec![x * s, y * s])
}

/// Grid cell centres inside the disk, with their flat indices.
fn cells(n: usize) -> Vec<(usize, [f64; 2])> {
    let h = 2.0 / n as f64;
    let mut out = Vec::new();
    for row in 0..n {
        for col in 0..n {
            let x = -1.0 + h * (col as f64 + 0.5);
            let y = 1.0 - h * (row as f64 + 0.5);
            if x * x + y * y < 1.0 {
                out.push((row * n + col, [x, y]));
            }
        }
    }
    out
}

fn field(n: usize, mut f: impl FnMut([f64; 2]) -> Result<f64>) -> Result<Vec<f64>> {
    let mut out = vec![f64::NAN; n * n];
    for (i, p) in cells(n) {
        out[i] = f(p)?;
    }
    Ok(out)
}

/// `h_t(x, .)` for the pole `x = (px, py)`.
pub fn kernel_field(mu: f64, t: f64, px: f64, py: f64, n: usize) -> Result<Vec<f64>> {
    let params = ModelParams::new(2, mu)?;
    let k = HeatKernel::new(&params, Truncation::new(KERNEL_N_MAX, 1e-10, T_MIN)?)?;
    let damp = k.damping(t.max(T_MIN), false)?;
    let x = k.prepare(disk_point(px, py)?.coords(), false)?;
    field(n, |p| Ok(k.value(&damp, &x, &k.prepare(&p, false)?)))
}

/// The basis element `Q_{n,j,kappa}`.
pub fn basis_field(mu: f64, degree: usize, j: usize, kappa: usize, n: usize) -> Result<Vec<f64>> {
    let params = ModelParams::new(2, mu)?;
    let idx = MultiIndex::new(2, degree, j, kappa)?;
    field(n, |p| basis_eval(&params, idx, &disk_point(p[0], p[1])?))
}

/// The intrinsic distance `d_B(x, .)` from `x = (px, py)`.
pub fn distance_field(px: f64, py: f64, n: usize) -> Result<Vec<f64>> {
    let x = disk_point(px, py)?;
    field(n, |p| Ok(dist_ball(&x, &disk_point(p[0], p[1])?)))
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn kernel_slice(mu: f64, t: f64, px: f64, py: f64, n: usize) -> std::result::Result<Vec<f64>, JsError> {
    kernel_field(mu, t, px, py, n).map_err(js)
}

#[wasm_bindgen]
pub fn basis_slice(mu: f64, degree: usize, j: usize, kappa: usize, n: usize) -> std::result::Result<Vec<f64>, JsError> {
    basis_field(mu, degree, j, kappa, n).map_err(js)
}

#[wasm_bindgen]
pub fn distance_slice(px: f64, py: f64, n: usize) -> std::result::Result<Vec<f64>, JsError> {
    distance_field(px, py, n).map_err(js)
}

/// Eigenvalue `n (n + 1 + 2 mu)` of the disk generator.
#[wasm_bindgen]
pub fn eigenvalue(mu: f64, degree: usize) -> std::result::Result<f64, JsError> {
    let params = ModelParams::new(2, mu).map_err(js)?;
    Ok(ballheat::jacobi::eigenvalue(&params, degree))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_mask_the_outside() {
        let v = distance_field(0.2, -0.1, 16).unwrap();
        assert_eq!(v.len(), 256);
        assert!(v[0].is_nan());
        let inside = v.iter().filter(|x| x.is_finite()).count();
        assert!(inside > 150 && inside < 256);
        assert!(v.iter().filter(|x| x.is_finite()).all(|x| (0.0..=std::f64::consts::PI).contains(x)));
    }

    #[test]
    fn kernel_slice_integrates_to_about_one() {
        let n = 64;
        let mu = 0.5;
        let v = kernel_field(mu, 0.2, 0.3, 0.1, n).unwrap();
        let h = 2.0 / n as f64;
        // mu = 1/2 makes the weight identically one
        let mass: f64 = v.iter().filter(|x| x.is_finite()).sum::<f64>() * h * h;
        assert!((mass - 1.0).abs() < 0.05, "{mass}");
        assert!(v.iter().filter(|x| x.is_finite()).all(|x| *x > 0.0));
    }

    #[test]
    fn basis_slice_matches_the_core_evaluator() {
        let v = basis_field(1.5, 3, 1, 2, 8).unwrap();
        let params = ModelParams::new(2, 1.5).unwrap();
        let idx = MultiIndex::new(2, 3, 1, 2).unwrap();
        let (i, p) = cells(8)[5];
        let want = basis_eval(&params, idx, &BallPoint::new(p.to_vec()).unwrap()).unwrap();
        assert_eq!(v[i], want);
        assert!(basis_field(0.5, 3, 1, 0, 8).is_err());
    }
}

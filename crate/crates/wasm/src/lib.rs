//! Browser demo bindings: closed-form dual coefficients, powered call/put
//! price curves, and the matrix intertwining residual.

use kdual::duality::{diffusion_coefficients, dual_matrix, intertwining_residual, FOperator};
use kdual::expr::parse;
use kdual::model::{discretize, GeneratorSpec};
use kdual::options::{dual_spec, GridPricer};
use kdual::Grid;
use wasm_bindgen::prelude::*;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// `a_dual`, `b_dual` and the potential of the order-`k` dual of
/// `a g'' + b g'`, one per line.
#[wasm_bindgen]
pub fn dual_coefficients(a: &str, b: &str, k: f64) -> Result<String, JsError> {
    if !(k >= 1.0) {
        return Err(js("the closed-form diffusion dual needs k ≥ 1"));
    }
    let (ad, bd, c) = diffusion_coefficients(&parse(a).map_err(js)?, &parse(b).map_err(js)?, k);
    Ok(format!("a_dual(x) = {ad}\nb_dual(x) = {bd}\nc(x) = {c}"))
}

/// Strikes, call prices `E (X_t^x - y)_+^{k-1}` and dual put prices
/// `E (x - Y_t^y)_+^{k-1}`, concatenated (`3 * m` values). Empty when the
/// dual is not again a diffusion the pricer can run.
#[wasm_bindgen]
pub fn putcall_curves(
    a: &str,
    b: &str,
    k: f64,
    x: f64,
    t: f64,
    n: usize,
) -> Result<Vec<f64>, JsError> {
    let spec = GeneratorSpec::diffusion(a, b).map_err(js)?;
    let grid = Grid::new(-8.0, 8.0, n.clamp(40, 240)).map_err(js)?;
    let Some(dual) = dual_spec(&spec, k, &grid).map_err(js)? else {
        return Ok(Vec::new());
    };
    let call = GridPricer::new(&spec, &grid, t).map_err(js)?;
    let put = GridPricer::new(&dual, &grid, t).map_err(js)?;
    let pay = |d: f64| {
        if d < 0.0 {
            0.0
        } else if k == 1.0 {
            1.0
        } else {
            d.powf(k - 1.0)
        }
    };
    let strikes: Vec<f64> = (0..=60).map(|i| x - 3.0 + 0.1 * i as f64).collect();
    let mut out = strikes.clone();
    for &y in &strikes {
        out.push(call.expect(x, |s| pay(s - y)).map_err(js)?);
    }
    for &y in &strikes {
        out.push(put.expect(y, |s| pay(x - s)).map_err(js)?);
    }
    Ok(out)
}

/// `‖L^D F - F L'‖_max / ‖L‖_max` for the matrix dual of `a g'' + b g'`.
#[wasm_bindgen]
pub fn intertwining(a: &str, b: &str, k: f64, n: usize) -> Result<f64, JsError> {
    let spec = GeneratorSpec::diffusion(a, b).map_err(js)?;
    let grid = Grid::new(-8.0, 8.0, n.clamp(20, 300)).map_err(js)?;
    let l = discretize(&spec, &grid).map_err(js)?;
    let f = FOperator::new(k, &grid).map_err(js)?;
    let dual = dual_matrix(&l, &f).map_err(js)?;
    Ok(intertwining_residual(&dual, &l, &f).map_err(js)? / l.m.amax())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brownian_curves_coincide() {
        let v = putcall_curves("1", "0", 2.0, 0.0, 0.5, 120).unwrap();
        let m = v.len() / 3;
        for i in 10..m - 10 {
            assert!((v[m + i] - v[2 * m + i]).abs() < 1e-3, "{i}");
        }
        assert!(putcall_curves("1", "x", 2.0, 0.0, 0.5, 60)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn residual_is_rounding() {
        assert!(intertwining("1 + 0.1*sin(x)", "0.3", 1.5, 80).unwrap() < 1e-10);
    }

    #[test]
    fn coefficients_text() {
        let s = dual_coefficients("1", "x", 2.0).unwrap();
        assert!(s.contains("c(x) = 1"), "{s}");
    }
}

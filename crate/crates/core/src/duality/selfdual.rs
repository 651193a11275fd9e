use crate::error::Result;
use crate::expr::{Bindings, Expr};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelfDualOrder {
    One,
    Two,
}

impl SelfDualOrder {
    pub fn from_k(k: u32) -> Option<Self> {
        match k {
            1 => Some(SelfDualOrder::One),
            2 => Some(SelfDualOrder::Two),
            _ => None,
        }
    }
}

/// Residual of the density form of the self-duality condition for a jump
/// kernel `ν(x, z)`:
///
/// * order 1: `max |∂₁ν(y, z) + ∂₁ν(z, y)|`,
/// * order 2: `max |∂₁²ν(y, z) - ∂₁²ν(z, y)|`,
///
/// with `∂₁` the derivative in the first argument, taken by central
/// differences with the grid step, over interior node pairs. Zero means the
/// condition holds.
pub fn check_self_dual(nu: &Expr, order: SelfDualOrder, grid: &Grid) -> Result<f64> {
    let h = grid.h();
    let nu_at = |x: f64, z: f64| -> Result<f64> { Ok(nu.eval(&Bindings::new().x(x).z(z))?) };
    let d1 = |x: f64, z: f64| -> Result<f64> {
        Ok(match order {
            SelfDualOrder::One => (nu_at(x + h, z)? - nu_at(x - h, z)?) / (2.0 * h),
            SelfDualOrder::Two => {
                (nu_at(x + h, z)? - 2.0 * nu_at(x, z)? + nu_at(x - h, z)?) / (h * h)
            }
        })
    };
    let sign = match order {
        SelfDualOrder::One => 1.0,
        SelfDualOrder::Two => -1.0,
    };
    let mut worst = 0.0f64;
    for i in grid.interior() {
        let y = grid.node(i);
        for j in grid.interior() {
            let z = grid.node(j);
            let r = d1(y, z)? + sign * d1(z, y)?;
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn gaussian_kernel_is_self_dual() {
        let g = Grid::new(-3.0, 3.0, 61).unwrap();
        let nu = parse("exp(-(z - x)^2)").unwrap();
        assert!(check_self_dual(&nu, SelfDualOrder::One, &g).unwrap() < 1e-12);
        assert!(check_self_dual(&nu, SelfDualOrder::Two, &g).unwrap() < 1e-9);
    }

    #[test]
    fn weighted_kernel_is_detected() {
        let g = Grid::new(-3.0, 3.0, 61).unwrap();
        let nu = parse("(1 + x^2) * exp(-(z - x)^2)").unwrap();
        let r = check_self_dual(&nu, SelfDualOrder::One, &g).unwrap();
        // |2(y + z) e^{-u²}(1 - u²)| at y = 0, z = 2 … bounded below by its value at (0.3, 0.3)
        assert!(r >= 2.0 * 0.6 - 1e-3, "{r}");
    }
}

//! Fixed-step classical Runge–Kutta.

/// One RK4 step of `y' = f(t, y)` in place.
pub fn rk4_step<E>(
    f: &mut impl FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
    t: f64,
    y: &mut [f64],
    h: f64,
) -> Result<(), E> {
    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    f(t, y, &mut k1)?;
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    f(t + 0.5 * h, &tmp, &mut k2)?;
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    f(t + 0.5 * h, &tmp, &mut k3)?;
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    f(t + h, &tmp, &mut k4)?;
    for i in 0..n {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(())
}

/// Cubic Lagrange weights for the midpoint between nodes `j` and `j+1` of a
/// uniform grid with `len` nodes. Returns the first node of the stencil and
/// the four weights.
pub fn midpoint_stencil(j: usize, len: usize) -> (usize, [f64; 4]) {
    const CENTRED: [f64; 4] = [-1.0 / 16.0, 9.0 / 16.0, 9.0 / 16.0, -1.0 / 16.0];
    const LEFT: [f64; 4] = [5.0 / 16.0, 15.0 / 16.0, -5.0 / 16.0, 1.0 / 16.0];
    const RIGHT: [f64; 4] = [1.0 / 16.0, -5.0 / 16.0, 15.0 / 16.0, 5.0 / 16.0];
    assert!(j + 1 < len);
    if len < 4 {
        // Too short for a cubic: linear interpolation.
        return (j, [0.5, 0.5, 0.0, 0.0]);
    }
    if j == 0 {
        (0, LEFT)
    } else if j + 2 >= len {
        (len - 4, RIGHT)
    } else {
        (j - 1, CENTRED)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_is_fourth_order_on_exponential() {
        let solve = |steps: usize| {
            let mut y = [1.0];
            let h = 1.0 / steps as f64;
            for i in 0..steps {
                rk4_step::<()>(&mut |_, y, dy| {
                    dy[0] = y[0];
                    Ok(())
                }, i as f64 * h, &mut y, h)
                .unwrap();
            }
            (y[0] - 1f64.exp()).abs()
        };
        let ratio = solve(20) / solve(40);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn stencils_reproduce_cubics() {
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x - 0.25 * x * x * x;
        let len = 7;
        for j in 0..len - 1 {
            let (start, w) = midpoint_stencil(j, len);
            let v: f64 = (0..4).map(|i| w[i] * f((start + i) as f64)).sum();
            assert!((v - f(j as f64 + 0.5)).abs() < 1e-12, "j = {j}");
        }
    }
}

//! Stationary distributions of the stylized birth-death chains that
//! approximate the inventory walk: a lazy symmetric walk (fairness parameter
//! zero) and its center-reverting biased variant.

use crate::analysis::linalg::solve_linear_system;
use crate::error::{Error, Result};

/// Birth-death chain on `{0, ..., m}` with step probability `p` and
/// center-reverting bias `delta`: below the midpoint the walk steps up with
/// probability `p + delta/2` and down with `p - delta/2`; above the midpoint
/// the bias flips; at the midpoint both steps have probability `p - delta/2`.
#[derive(Debug, Clone, Copy)]
pub struct BirthDeathChain {
    pub m: usize,
    pub p: f64,
    pub delta: f64,
}

impl BirthDeathChain {
    pub fn new(m: usize, p: f64, delta: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 0.5) {
            return Err(Error::InvalidParameter(format!(
                "p must be in (0, 1/2], got {p}"
            )));
        }
        if !(0.0..2.0 * p).contains(&delta) {
            return Err(Error::InvalidParameter(format!(
                "delta must be in [0, 2p) = [0, {}), got {delta}",
                2.0 * p
            )));
        }
        if delta > 0.0 && m % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "biased chain is centered at m/2; m must be even, got {m}"
            )));
        }
        if m == 0 {
            return Err(Error::InvalidParameter("m must be positive".into()));
        }
        Ok(Self { m, p, delta })
    }

    /// Row-stochastic transition matrix.
    pub fn transition_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.m + 1;
        let (p, d) = (self.p, self.delta);
        let up_low = p + d / 2.0; // below midpoint
        let down_low = p - d / 2.0;
        let mid = self.m / 2;
        let mut t = vec![vec![0.0; n]; n];
        for i in 0..n {
            if i == 0 {
                t[0][1] = up_low;
                t[0][0] = 1.0 - up_low;
            } else if i == self.m {
                t[i][i - 1] = up_low; // by symmetry the top boundary steps down with p + d/2
                t[i][i] = 1.0 - up_low;
            } else if i < mid {
                t[i][i + 1] = up_low;
                t[i][i - 1] = down_low;
                t[i][i] = 1.0 - 2.0 * p;
            } else if i == mid {
                t[i][i + 1] = down_low;
                t[i][i - 1] = down_low;
                t[i][i] = 1.0 - 2.0 * p + d;
            } else {
                t[i][i + 1] = down_low;
                t[i][i - 1] = up_low;
                t[i][i] = 1.0 - 2.0 * p;
            }
        }
        t
    }
}

/// Closed-form stationary distribution: geometric in `rho = (2p+d)/(2p-d)`
/// up to the midpoint and mirrored above it; uniform when `delta = 0`.
pub fn birth_death_stationary_closed_form(p: f64, delta: f64, m: usize) -> Result<Vec<f64>> {
    let chain = BirthDeathChain::new(m, p, delta)?;
    let _ = chain;
    if delta == 0.0 {
        return Ok(vec![1.0 / (m as f64 + 1.0); m + 1]);
    }
    let rho = (2.0 * p + delta) / (2.0 * p - delta);
    let half = m / 2;
    let pi0 = (2.0 * (rho.powi(half as i32) - 1.0) / (rho - 1.0) + rho.powi(half as i32)).recip();
    let mut pi = vec![0.0; m + 1];
    for (i, value) in pi.iter_mut().enumerate() {
        let exponent = if i <= half { i } else { m - i };
        *value = rho.powi(exponent as i32) * pi0;
    }
    Ok(pi)
}

/// Independent oracle for the closed form: solve the stationary equations
/// `pi P = pi`, `sum pi = 1` directly, falling back to power iteration when
/// the linear solve is ill-conditioned.
pub fn birth_death_stationary_solve(chain: &BirthDeathChain) -> Result<Vec<f64>> {
    let t = chain.transition_matrix();
    let n = chain.m + 1;

    // (P^T - I) pi = 0 with the last row replaced by the normalization.
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = t[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[n - 1][j] = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;

    if let Ok(pi) = solve_linear_system(a, b) {
        if residual(&pi, &t) <= 1e-12 && pi.iter().all(|&x| x >= -1e-12) {
            return Ok(pi);
        }
    }
    power_iteration(&t, 1e-12, 1_000_000)
}

fn residual(pi: &[f64], t: &[Vec<f64>]) -> f64 {
    let n = pi.len();
    let mut worst = 0.0f64;
    for j in 0..n {
        let next: f64 = (0..n).map(|i| pi[i] * t[i][j]).sum();
        worst = worst.max((next - pi[j]).abs());
    }
    worst
}

fn power_iteration(t: &[Vec<f64>], tol: f64, max_iters: u64) -> Result<Vec<f64>> {
    let n = t.len();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..max_iters {
        for entry in next.iter_mut() {
            *entry = 0.0;
        }
        for i in 0..n {
            let mass = pi[i];
            if mass == 0.0 {
                continue;
            }
            for j in 0..n {
                next[j] += mass * t[i][j];
            }
        }
        let total: f64 = next.iter().sum();
        for entry in next.iter_mut() {
            *entry /= total;
        }
        let diff = pi
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        std::mem::swap(&mut pi, &mut next);
        if diff < tol {
            return Ok(pi);
        }
    }
    Err(Error::NoConvergence(
        "power iteration did not reach tolerance".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_when_unbiased() {
        let pi = birth_death_stationary_closed_form(0.3, 0.0, 7).unwrap();
        for &x in &pi {
            assert_eq!(x, 1.0 / 8.0);
        }
        let chain = BirthDeathChain::new(8, 0.3, 0.0).unwrap();
        let solved = birth_death_stationary_solve(&chain).unwrap();
        for &x in &solved {
            assert!((x - 1.0 / 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_worked_example() {
        // p = 0.25, delta = 0.1, m = 4: rho = 1.5, pi0 = 1/7.25.
        let pi = birth_death_stationary_closed_form(0.25, 0.1, 4).unwrap();
        let pi0 = 1.0 / 7.25;
        let expected = [pi0, 1.5 * pi0, 2.25 * pi0, 1.5 * pi0, pi0];
        for (got, want) in pi.iter().zip(expected) {
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
        assert!((pi[0] - 0.137931).abs() < 1e-6);
        assert!((pi[1] - 0.206897).abs() < 1e-6);
        assert!((pi[2] - 0.310345).abs() < 1e-6);
    }

    #[test]
    fn closed_form_normalizes() {
        for &p in &[0.1, 0.25, 0.4, 0.5] {
            for &delta in &[0.0, 0.05, 0.1] {
                if delta >= 2.0 * p {
                    continue;
                }
                for &m in &[4usize, 10, 50] {
                    let pi = birth_death_stationary_closed_form(p, delta, m).unwrap();
                    let total: f64 = pi.iter().sum();
                    assert!((total - 1.0).abs() < 1e-12, "p={p} d={delta} m={m}");
                }
            }
        }
    }

    #[test]
    fn solve_agrees_with_closed_form() {
        for &p in &[0.1, 0.25, 0.4] {
            for &delta in &[0.0, 0.05, 0.1] {
                for &m in &[4usize, 10, 50] {
                    let chain = BirthDeathChain::new(m, p, delta).unwrap();
                    let solved = birth_death_stationary_solve(&chain).unwrap();
                    let closed = birth_death_stationary_closed_form(p, delta, m).unwrap();
                    let err = solved
                        .iter()
                        .zip(&closed)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0f64, f64::max);
                    assert!(err <= 1e-10, "p={p} d={delta} m={m}: err {err}");
                }
            }
        }
    }

    #[test]
    fn boundary_mass_decays_exponentially_in_m() {
        // log pi[0] should fall linearly in m with slope -ln(rho)/2.
        let (p, delta) = (0.25, 0.1);
        let rho: f64 = (2.0 * p + delta) / (2.0 * p - delta);
        let ms: Vec<usize> = (1..=10).map(|i| i * 10).collect();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &m in &ms {
            let chain = BirthDeathChain::new(m, p, delta).unwrap();
            let pi = birth_death_stationary_solve(&chain).unwrap();
            xs.push(m as f64);
            ys.push(pi[0].ln());
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let slope = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - mx) * (y - my))
            .sum::<f64>()
            / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
        assert!(slope < 0.0);
        let expected = -rho.ln() / 2.0;
        assert!(
            (slope - expected).abs() < 0.05 * expected.abs(),
            "slope {slope} vs {expected}"
        );
    }

    #[test]
    fn parameter_validation() {
        assert!(BirthDeathChain::new(4, 0.0, 0.0).is_err());
        assert!(BirthDeathChain::new(4, 0.6, 0.0).is_err());
        assert!(BirthDeathChain::new(4, 0.25, 0.5).is_err());
        assert!(BirthDeathChain::new(5, 0.25, 0.1).is_err()); // odd m with bias
        assert!(BirthDeathChain::new(5, 0.25, 0.0).is_ok());
    }
}

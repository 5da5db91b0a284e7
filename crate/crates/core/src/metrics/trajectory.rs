//! Trajectory-level metrics: normalized area under the budget curve and
//! the foreground-efficiency decay rate.

use crate::error::{Error, Result};

/// Trapezoid area under the mean-Dice curve over a budget axis
/// normalized to [0, 1] with equally spaced cycles.
pub fn aubc(mean_dice_per_cycle: &[f64]) -> Result<f64> {
    let n = mean_dice_per_cycle.len();
    if n < 2 {
        return Err(Error::TooFewCycles(n));
    }
    let dx = 1.0 / (n - 1) as f64;
    let area = mean_dice_per_cycle
        .windows(2)
        .map(|w| (w[0] + w[1]) * 0.5 * dx)
        .sum();
    Ok(area)
}

/// Fitted foreground-efficiency curve
/// `y(t) = (y0 - y_full) * exp(-gamma (t - t0)) + y_full`, anchored at
/// the starting-budget point and the full-data reference.
#[derive(Debug, Clone, PartialEq)]
pub struct FgEffFit {
    /// Decay rate; higher means faster convergence per annotated
    /// foreground voxel.
    pub gamma: f64,
    pub y_full: f64,
    pub y_start: f64,
    pub t_start: f64,
    /// Sum of squared residuals at the fitted rate.
    pub residual: f64,
}

impl FgEffFit {
    pub fn predict(&self, t: f64) -> f64 {
        (self.y_start - self.y_full) * (-self.gamma * (t - self.t_start)).exp() + self.y_full
    }
}

const LN_GAMMA_LO: f64 = -4.0 * std::f64::consts::LN_10; // gamma = 1e-4
const LN_GAMMA_HI: f64 = 4.0 * std::f64::consts::LN_10; // gamma = 1e4

/// Relative tolerance on gamma; adjacent ln-space bracket width.
const GOLDEN_TOL: f64 = 1e-8;

fn loss(points: &[(f64, f64)], t0: f64, y0: f64, y_full: f64, ln_gamma: f64) -> f64 {
    let gamma = ln_gamma.exp();
    points
        .iter()
        .map(|&(t, y)| {
            let model = (y0 - y_full) * (-gamma * (t - t0)).exp() + y_full;
            let r = model - y;
            r * r
        })
        .sum()
}

/// Fit the decay rate by 1-D least squares over `ln gamma` in
/// [ln 1e-4, ln 1e4]: a coarse grid scan followed by golden-section
/// refinement of the best bracket.
///
/// `points` are (annotated-foreground fraction, mean Dice) per cycle
/// with strictly increasing fractions; `y_full` comes from a full-data
/// reference fit. Flat curves (start equals full-data performance) have
/// no defined rate and report [`Error::DegenerateFit`].
pub fn fg_eff(points: &[(f64, f64)], y_full: f64) -> Result<FgEffFit> {
    if points.len() < 3 {
        return Err(Error::TooFewCycles(points.len()));
    }
    for w in points.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::InconsistentRuns(
                "foreground fractions must increase strictly".into(),
            ));
        }
    }
    let (t0, y0) = points[0];
    if y0 == y_full {
        return Err(Error::DegenerateFit);
    }

    const GRID: usize = 128;
    let step = (LN_GAMMA_HI - LN_GAMMA_LO) / GRID as f64;
    let mut best_i = 0usize;
    let mut best_loss = f64::INFINITY;
    for i in 0..=GRID {
        let lg = LN_GAMMA_LO + step * i as f64;
        let l = loss(points, t0, y0, y_full, lg);
        if l < best_loss {
            best_loss = l;
            best_i = i;
        }
    }
    let mut a = LN_GAMMA_LO + step * best_i.saturating_sub(1) as f64;
    let mut b = (LN_GAMMA_LO + step * (best_i + 1) as f64).min(LN_GAMMA_HI);

    // Golden-section: ln-space width is relative tolerance on gamma.
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = loss(points, t0, y0, y_full, c);
    let mut fd = loss(points, t0, y0, y_full, d);
    while b - a > GOLDEN_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = loss(points, t0, y0, y_full, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = loss(points, t0, y0, y_full, d);
        }
    }
    let ln_gamma = 0.5 * (a + b);
    let gamma = ln_gamma.exp();
    Ok(FgEffFit {
        gamma,
        y_full,
        y_start: y0,
        t_start: t0,
        residual: loss(points, t0, y0, y_full, ln_gamma),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aubc_hand_cases() {
        assert!((aubc(&[0.5, 0.5, 0.5]).unwrap() - 0.5).abs() < 1e-12);
        assert!((aubc(&[0.0, 1.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!((aubc(&[0.2, 0.4, 0.9]).unwrap() - 0.475).abs() < 1e-12);
    }

    #[test]
    fn aubc_constant_is_exact() {
        for n in 2..8 {
            let v = vec![0.37; n];
            assert!((aubc(&v).unwrap() - 0.37).abs() < 1e-15);
        }
    }

    #[test]
    fn aubc_needs_two_cycles() {
        assert!(matches!(aubc(&[0.5]), Err(Error::TooFewCycles(1))));
    }

    fn forward_points(gamma: f64, y0: f64, y_full: f64) -> Vec<(f64, f64)> {
        let t0 = 0.02;
        (0..5)
            .map(|i| {
                let t = t0 + 0.03 * i as f64;
                (t, (y0 - y_full) * (-gamma * (t - t0)).exp() + y_full)
            })
            .collect()
    }

    #[test]
    fn fg_eff_roundtrip_recovers_gamma() {
        for &gamma in &[0.1, 1.0, 5.0, 50.0] {
            let points = forward_points(gamma, 0.4, 0.9);
            let fit = fg_eff(&points, 0.9).unwrap();
            assert!(
                (fit.gamma - gamma).abs() < 1e-6,
                "gamma {gamma}: fitted {}",
                fit.gamma
            );
            assert!(fit.residual < 1e-12);
        }
    }

    #[test]
    fn fg_eff_flat_curve_is_degenerate() {
        let points = vec![(0.1, 0.8), (0.2, 0.8), (0.3, 0.8)];
        assert!(matches!(fg_eff(&points, 0.8), Err(Error::DegenerateFit)));
    }

    #[test]
    fn fg_eff_rejects_nonincreasing_fractions() {
        let points = vec![(0.1, 0.5), (0.1, 0.6), (0.3, 0.7)];
        assert!(fg_eff(&points, 0.9).is_err());
    }

    #[test]
    fn fg_eff_prediction_passes_through_anchor() {
        let points = forward_points(2.0, 0.3, 0.85);
        let fit = fg_eff(&points, 0.85).unwrap();
        assert!((fit.predict(points[0].0) - points[0].1).abs() < 1e-12);
    }
}

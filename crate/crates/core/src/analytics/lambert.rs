//! Real branches of the Lambert W function.
//!
//! `W(x)` solves `w e^w = x`. Branch 0 is defined on `[-1/e, inf)` with
//! `W >= -1`; branch -1 on `[-1/e, 0)` with `W <= -1`. Both are refined by
//! Halley's iteration from a branch-specific starting point.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

const MAX_ITER: usize = 50;
const BRANCH_POINT: f64 = -1.0 / E;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Principal branch, `W0 >= -1`.
    Principal,
    /// Lower branch, `W-1 <= -1`.
    Lower,
}

impl Branch {
    pub fn index(self) -> i32 {
        match self {
            Branch::Principal => 0,
            Branch::Lower => -1,
        }
    }

    pub fn from_index(k: i32) -> Result<Self> {
        match k {
            0 => Ok(Branch::Principal),
            -1 => Ok(Branch::Lower),
            _ => domain(format!("only real branches 0 and -1 are supported, got {k}")),
        }
    }
}

pub fn lambert_w(branch: Branch, x: f64) -> Result<f64> {
    if x.is_nan() {
        return domain("lambert_w of NaN");
    }
    // Allow a few ulps of slack so that -1/e computed by the caller is accepted.
    if x < BRANCH_POINT - 4.0 * f64::EPSILON {
        return domain(format!("lambert_w argument {x} below -1/e"));
    }
    match branch {
        Branch::Principal => {
            if x == f64::INFINITY {
                return Ok(f64::INFINITY);
            }
            if x == 0.0 {
                return Ok(0.0);
            }
        }
        Branch::Lower => {
            if x >= 0.0 {
                return domain(format!("branch -1 requires x < 0, got {x}"));
            }
        }
    }
    if x <= BRANCH_POINT {
        return Ok(-1.0);
    }

    let mut w = initial_guess(branch, x);
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        let next = w - step;
        if !next.is_finite() {
            break;
        }
        let done = step.abs() <= 4.0 * f64::EPSILON * (1.0 + next.abs());
        w = next;
        if done {
            break;
        }
    }
    // Keep the iterate on the requested side of the branch point.
    Ok(match branch {
        Branch::Principal => w.max(-1.0),
        Branch::Lower => w.min(-1.0),
    })
}

fn initial_guess(branch: Branch, x: f64) -> f64 {
    // Series in p = sqrt(2 (e x + 1)) about the branch point.
    let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
    match branch {
        Branch::Principal => {
            if x < -0.25 {
                -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
            } else if x < 3.0 {
                x.ln_1p() * (1.0 - x.ln_1p() / (2.0 + x.ln_1p()))
            } else {
                let l1 = x.ln();
                let l2 = l1.ln();
                l1 - l2 + l2 / l1
            }
        }
        Branch::Lower => {
            if x < -0.25 {
                -1.0 - p - p * p / 3.0 - 11.0 / 72.0 * p * p * p
            } else {
                let l1 = (-x).ln();
                let l2 = (-l1).ln();
                l1 - l2 + l2 / l1
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_points() {
        assert_eq!(lambert_w(Branch::Principal, 0.0).unwrap(), 0.0);
        assert!((lambert_w(Branch::Principal, E).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(lambert_w(Branch::Principal, -1.0 / E).unwrap(), -1.0);
        assert_eq!(lambert_w(Branch::Lower, -1.0 / E).unwrap(), -1.0);
        // omega constant
        assert!((lambert_w(Branch::Principal, 1.0).unwrap() - 0.567_143_290_409_783_8).abs() < 1e-15);
    }

    #[test]
    fn half_over_e() {
        let x = -1.0 / (2.0 * E);
        let w0 = lambert_w(Branch::Principal, x).unwrap();
        let wm1 = lambert_w(Branch::Lower, x).unwrap();
        assert!((w0 + 0.2320).abs() < 1e-4, "{w0}");
        assert!((wm1 + 2.6783).abs() < 1e-4, "{wm1}");
        assert!((w0 * w0.exp() - x).abs() < 1e-15);
        assert!((wm1 * wm1.exp() - x).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        assert!(lambert_w(Branch::Principal, -0.5).is_err());
        assert!(lambert_w(Branch::Lower, 0.1).is_err());
        assert!(lambert_w(Branch::Lower, 0.0).is_err());
        assert!(lambert_w(Branch::Principal, f64::NAN).is_err());
        assert!(Branch::from_index(1).is_err());
        assert_eq!(Branch::from_index(-1).unwrap(), Branch::Lower);
    }

    #[test]
    fn round_trip_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let x = rng.random_range(-1.0 / E..10.0);
            let w = lambert_w(Branch::Principal, x).unwrap();
            assert!(w >= -1.0);
            assert!((w * w.exp() - x).abs() < 1e-12, "W0({x}) = {w}");

            let y = rng.random_range(-1.0 / E..0.0);
            if y == 0.0 {
                continue;
            }
            let w = lambert_w(Branch::Lower, y).unwrap();
            assert!(w <= -1.0);
            assert!((w * w.exp() - y).abs() < 1e-12, "W-1({y}) = {w}");
        }
    }

    #[test]
    fn near_branch_point_and_tiny_arguments() {
        for k in 1..12 {
            let x = -1.0 / E + 10f64.powi(-k);
            for b in [Branch::Principal, Branch::Lower] {
                let w = lambert_w(b, x).unwrap();
                assert!((w * w.exp() - x).abs() < 1e-12, "{b:?} {x} -> {w}");
            }
        }
        for k in 1..300 {
            let x = -(10f64.powi(-k));
            let w = lambert_w(Branch::Lower, x).unwrap();
            assert!(((w * w.exp() - x) / x).abs() < 1e-12, "{x} -> {w}");
        }
        let w = lambert_w(Branch::Principal, 1e6).unwrap();
        assert!(((w * w.exp() - 1e6) / 1e6).abs() < 1e-14);
    }
}

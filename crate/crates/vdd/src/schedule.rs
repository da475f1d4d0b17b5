//! Noise schedules with a hard terminal floor.
//!
//! The anchored process needs the cumulative product `alpha_bar` to hit a
//! small floor `eta` exactly at the last step, so that the terminal state
//! is (up to `sqrt(eta)`) pure prior plus unit noise, while every
//! reconstruction that divides by `sqrt(alpha_bar_t)` stays well-posed.
//! A standard linear-beta or cosine table is rescaled affinely in
//! `alpha_bar`-space: the first entry is kept, the last is pinned to
//! `eta`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VddError};

/// Hard upper bound for the terminal floor of a validated schedule.
pub const ETA_MAX: f64 = 1e-6;

/// Default number of diffusion steps.
pub const DEFAULT_STEPS: usize = 50;

/// Default terminal floor.
pub const DEFAULT_ETA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Linear,
    Cosine,
}

/// Per-step coefficients at one timestep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoeffs {
    pub alpha: f64,
    pub alpha_bar: f64,
    pub beta_bar: f64,
}

/// Precomputed `alpha`, `alpha_bar`, `beta_bar` tables for `t = 1..=T`,
/// with the convention `alpha_bar(0) = 1`, `beta_bar(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    kind: ScheduleKind,
    eta: f64,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    beta_bar: Vec<f64>,
}

fn raw_alpha_bar(kind: ScheduleKind, steps: usize) -> Vec<f64> {
    match kind {
        ScheduleKind::Linear => {
            // classic DDPM beta grid
            let (beta_lo, beta_hi) = (1e-4, 0.02);
            let mut out = Vec::with_capacity(steps);
            let mut prod = 1.0;
            for t in 0..steps {
                let frac = if steps == 1 { 0.0 } else { t as f64 / (steps - 1) as f64 };
                let beta = beta_lo + (beta_hi - beta_lo) * frac;
                prod *= 1.0 - beta;
                out.push(prod);
            }
            out
        }
        ScheduleKind::Cosine => {
            let s = 0.008;
            let f = |t: f64| {
                let v = ((t / steps as f64 + s) / (1.0 + s)) * std::f64::consts::FRAC_PI_2;
                v.cos().powi(2)
            };
            let f0 = f(0.0);
            (1..=steps).map(|t| f(t as f64) / f0).collect()
        }
    }
}

impl Schedule {
    /// Builds a schedule of `steps` steps whose `alpha_bar` ends exactly at
    /// `eta`. Requires `steps >= 1` and `0 < eta <= 1e-6`.
    pub fn make(kind: ScheduleKind, steps: usize, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= ETA_MAX) {
            return Err(VddError::InvalidSchedule(format!(
                "eta {eta} out of range (0, {ETA_MAX}]"
            )));
        }
        Self::make_with_floor(kind, steps, eta)
    }

    /// Like [`Schedule::make`] but accepts any floor in `(0, 1)`. Exists so
    /// diagnostics can build a deliberately mis-anchored schedule and watch
    /// the terminal-convergence check fail; not part of the validated API.
    pub fn make_with_floor(kind: ScheduleKind, steps: usize, eta: f64) -> Result<Self> {
        if steps == 0 {
            return Err(VddError::InvalidSchedule("T must be >= 1".into()));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(VddError::InvalidSchedule(format!("eta {eta} out of range (0, 1)")));
        }
        let raw = raw_alpha_bar(kind, steps);
        let mut alpha_bar = if steps == 1 {
            // the terminal constraint owns the single entry
            vec![eta]
        } else {
            let first = raw[0];
            let last = raw[steps - 1];
            if eta >= first {
                return Err(VddError::InvalidSchedule(format!(
                    "eta {eta} >= alpha_bar_1 {first}; cannot rescale"
                )));
            }
            let a = (first - eta) / (first - last);
            let b = first * (1.0 - a);
            let mut table: Vec<f64> = raw.iter().map(|&r| a * r + b).collect();
            table[steps - 1] = eta; // pin the terminal value exactly
            table
        };
        for v in &mut alpha_bar {
            if !(*v > 0.0 && *v < 1.0) {
                return Err(VddError::InvalidSchedule("alpha_bar left (0, 1)".into()));
            }
        }
        // guard against pathological floors wrecking monotonicity
        for t in 1..steps {
            if alpha_bar[t] >= alpha_bar[t - 1] {
                return Err(VddError::InvalidSchedule(format!(
                    "alpha_bar not strictly decreasing at t={}",
                    t + 1
                )));
            }
        }
        let alpha: Vec<f64> = (0..steps)
            .map(|t| if t == 0 { alpha_bar[0] } else { alpha_bar[t] / alpha_bar[t - 1] })
            .collect();
        let beta_bar: Vec<f64> = alpha_bar.iter().map(|&ab| (1.0 - ab).sqrt()).collect();
        Ok(Schedule { kind, eta, alpha, alpha_bar, beta_bar })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.alpha.len()
    }

    /// Terminal floor `eta = alpha_bar(T)`.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Coefficients at timestep `t`, valid for `0 <= t <= T`.
    /// `t = 0` is clean data: `(1, 1, 0)`.
    pub fn lookup(&self, t: usize) -> Result<StepCoeffs> {
        if t > self.steps() {
            return Err(VddError::TimestepRange { t, lo: 0, hi: self.steps() });
        }
        Ok(if t == 0 {
            StepCoeffs { alpha: 1.0, alpha_bar: 1.0, beta_bar: 0.0 }
        } else {
            StepCoeffs {
                alpha: self.alpha[t - 1],
                alpha_bar: self.alpha_bar[t - 1],
                beta_bar: self.beta_bar[t - 1],
            }
        })
    }

    /// `alpha_bar(t)` with the `t = 0 -> 1` convention. Panics if `t > T`;
    /// use [`Schedule::lookup`] for checked access.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    /// `beta_bar(t) = sqrt(1 - alpha_bar(t))`, with `beta_bar(0) = 0`.
    pub fn beta_bar(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.beta_bar[t - 1]
        }
    }

    /// Validates that `1 <= t <= T`, the range on which single steps and
    /// marginals are defined.
    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(VddError::TimestepRange { t, lo: 1, hi: self.steps() });
        }
        Ok(())
    }
}

// JSON form: {"kind": ..., "T": ..., "eta": ..., "alpha": [...]}.
// `alpha` is the serialized truth; cumulative tables are rebuilt on load
// and the terminal entry re-pinned to `eta` (the cumprod reconstructs it
// to ~1e-14 relative, well inside every consistency tolerance).
#[derive(Serialize, Deserialize)]
struct ScheduleRepr {
    kind: ScheduleKind,
    #[serde(rename = "T")]
    steps: usize,
    eta: f64,
    alpha: Vec<f64>,
}

impl Serialize for Schedule {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ScheduleRepr {
            kind: self.kind,
            steps: self.steps(),
            eta: self.eta,
            alpha: self.alpha.clone(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Schedule {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = ScheduleRepr::deserialize(de)?;
        if repr.alpha.len() != repr.steps {
            return Err(D::Error::custom(format!(
                "alpha has {} entries, T = {}",
                repr.alpha.len(),
                repr.steps
            )));
        }
        Schedule::from_alphas(repr.kind, repr.eta, repr.alpha).map_err(D::Error::custom)
    }
}

impl Schedule {
    fn from_alphas(kind: ScheduleKind, eta: f64, alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(VddError::InvalidSchedule("empty alpha table".into()));
        }
        let mut alpha_bar = Vec::with_capacity(alpha.len());
        let mut prod = 1.0;
        for &a in &alpha {
            if !(a > 0.0 && a <= 1.0) {
                return Err(VddError::InvalidSchedule(format!("alpha {a} out of (0, 1]")));
            }
            prod *= a;
            alpha_bar.push(prod);
        }
        let last = *alpha_bar.last().unwrap();
        if ((last - eta) / eta).abs() > 1e-9 {
            return Err(VddError::InvalidSchedule(format!(
                "cumulative product {last} does not reproduce eta {eta}"
            )));
        }
        *alpha_bar.last_mut().unwrap() = eta;
        for t in 1..alpha_bar.len() {
            if alpha_bar[t] >= alpha_bar[t - 1] {
                return Err(VddError::InvalidSchedule(format!(
                    "alpha_bar not strictly decreasing at t={}",
                    t + 1
                )));
            }
        }
        let beta_bar = alpha_bar.iter().map(|&ab| (1.0 - ab).sqrt()).collect();
        Ok(Schedule { kind, eta, alpha, alpha_bar, beta_bar })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_schedule_is_the_floor() {
        let s = Schedule::make(ScheduleKind::Linear, 1, 1e-6).unwrap();
        assert_eq!(s.alpha_bar(1), 1e-6);
        assert_eq!(s.beta_bar(1), (1.0 - 1e-6f64).sqrt());
        assert_eq!(s.alpha_bar(0), 1.0);
        assert_eq!(s.beta_bar(0), 0.0);
    }

    #[test]
    fn cosine_50_hits_floor_and_decreases() {
        let s = Schedule::make(ScheduleKind::Cosine, 50, 1e-6).unwrap();
        assert_eq!(s.alpha_bar(50), 1e-6);
        for t in 1..=50 {
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1), "t={t}");
        }
    }

    #[test]
    fn pythagorean_identity_holds() {
        for kind in [ScheduleKind::Linear, ScheduleKind::Cosine] {
            let s = Schedule::make(kind, 37, 1e-7).unwrap();
            for t in 0..=37 {
                let c = s.lookup(t).unwrap();
                assert!((c.alpha_bar + c.beta_bar * c.beta_bar - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cumulative_product_matches_alpha_bar() {
        let s = Schedule::make(ScheduleKind::Linear, 50, 1e-6).unwrap();
        let mut prod = 1.0;
        for t in 1..=50 {
            prod *= s.lookup(t).unwrap().alpha;
            let ab = s.alpha_bar(t);
            assert!(((prod - ab) / ab).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn ratio_consistency() {
        let s = Schedule::make(ScheduleKind::Cosine, 50, 1e-6).unwrap();
        for t in 1..=50 {
            let ratio = s.alpha_bar(t) / s.alpha_bar(t - 1);
            let a = s.lookup(t).unwrap().alpha;
            assert!(((ratio - a) / a).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn terminal_beta_bar_is_near_one() {
        let s = Schedule::make(ScheduleKind::Linear, 50, 1e-6).unwrap();
        assert_eq!(s.beta_bar(50), (1.0 - 1e-6f64).sqrt());
        assert!(s.beta_bar(50) >= 0.9999994);
    }

    #[test]
    fn lookup_range_is_enforced() {
        let s = Schedule::make(ScheduleKind::Linear, 10, 1e-6).unwrap();
        assert!(s.lookup(10).is_ok());
        assert!(matches!(s.lookup(11), Err(VddError::TimestepRange { .. })));
        assert!(s.check_step(0).is_err());
    }

    #[test]
    fn constructor_rejects_bad_inputs() {
        assert!(Schedule::make(ScheduleKind::Linear, 0, 1e-6).is_err());
        assert!(Schedule::make(ScheduleKind::Linear, 10, 0.0).is_err());
        assert!(Schedule::make(ScheduleKind::Linear, 10, 1e-3).is_err());
        // the diagnostic constructor does take a large floor
        assert!(Schedule::make_with_floor(ScheduleKind::Linear, 10, 0.5).is_ok());
    }

    #[test]
    fn linear_t1_matches_direct_recomputation() {
        // t=1 of a T=50 linear schedule: alpha_bar_1 comes from the affine
        // rescale of the raw beta grid; recompute it from scratch.
        let s = Schedule::make(ScheduleKind::Linear, 50, 1e-6).unwrap();
        let mut raw = Vec::new();
        let mut prod = 1.0;
        for t in 0..50 {
            let beta = 1e-4 + (0.02 - 1e-4) * (t as f64 / 49.0);
            prod *= 1.0 - beta;
            raw.push(prod);
        }
        let a = (raw[0] - 1e-6) / (raw[0] - raw[49]);
        let b = raw[0] * (1.0 - a);
        let expect = a * raw[0] + b; // == raw[0]
        assert!((s.alpha_bar(1) - expect).abs() < 1e-15);
        assert!((s.alpha_bar(1) - raw[0]).abs() < 1e-12, "first entry unchanged");
    }

    #[test]
    fn json_roundtrip_preserves_tables() {
        let s = Schedule::make(ScheduleKind::Cosine, 50, 1e-6).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: Schedule = serde_json::from_str(&text).unwrap();
        assert_eq!(s.alpha_bar(50), back.alpha_bar(50));
        for t in 1..=50 {
            assert!((s.alpha_bar(t) - back.alpha_bar(t)).abs() <= 1e-12 * s.alpha_bar(t));
            assert_eq!(s.lookup(t).unwrap().alpha, back.lookup(t).unwrap().alpha);
        }
    }
}

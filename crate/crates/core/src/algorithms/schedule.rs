use serde::{Deserialize, Serialize};

/// The four stochastic-approximation time scales, slowest first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeScale {
    /// `α⁽¹⁾`: basis parameters `s`.
    Basis,
    /// `α⁽²⁾`: actor parameters `θ`.
    Actor,
    /// `α⁽³⁾`: critic weights `r` and the average-reward estimate `η`.
    Critic,
    /// `α⁽⁴⁾`: the ABPBE estimator bank.
    Estimator,
}

impl TimeScale {
    pub const ALL: [TimeScale; 4] = [
        TimeScale::Basis,
        TimeScale::Actor,
        TimeScale::Critic,
        TimeScale::Estimator,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// `α_n = c / (n0 + n)^p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSchedule {
    pub coefficient: f64,
    pub offset: f64,
    pub exponent: f64,
}

impl PowerSchedule {
    pub const fn new(coefficient: f64, offset: f64, exponent: f64) -> Self {
        Self {
            coefficient,
            offset,
            exponent,
        }
    }

    /// Identically zero: the iterate on this scale never moves.
    pub const fn frozen() -> Self {
        Self::new(0.0, 1.0, 1.0)
    }

    #[inline]
    pub fn at(&self, n: u64) -> f64 {
        if self.coefficient == 0.0 {
            return 0.0;
        }
        self.coefficient / (self.offset + n as f64).powf(self.exponent)
    }
}

/// Step sizes for all four time scales.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepSchedule {
    pub basis: PowerSchedule,
    pub actor: PowerSchedule,
    pub critic: PowerSchedule,
    pub estimator: PowerSchedule,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self {
            basis: PowerSchedule::new(1.0, 1000.0, 1.0),
            actor: PowerSchedule::new(5.0, 1000.0, 0.8),
            critic: PowerSchedule::new(10.0, 1000.0, 0.6),
            estimator: PowerSchedule::new(1.0, 100.0, 0.55),
        }
    }
}

impl StepSchedule {
    /// Collapses every scale onto one schedule.
    pub fn single_time_scale(schedule: PowerSchedule) -> Self {
        Self {
            basis: schedule,
            actor: schedule,
            critic: schedule,
            estimator: schedule,
        }
    }

    pub fn get(&self, scale: TimeScale) -> PowerSchedule {
        match scale {
            TimeScale::Basis => self.basis,
            TimeScale::Actor => self.actor,
            TimeScale::Critic => self.critic,
            TimeScale::Estimator => self.estimator,
        }
    }

    pub fn get_mut(&mut self, scale: TimeScale) -> &mut PowerSchedule {
        match scale {
            TimeScale::Basis => &mut self.basis,
            TimeScale::Actor => &mut self.actor,
            TimeScale::Critic => &mut self.critic,
            TimeScale::Estimator => &mut self.estimator,
        }
    }

    pub fn with_frozen(mut self, scale: TimeScale) -> Self {
        *self.get_mut(scale) = PowerSchedule::frozen();
        self
    }

    pub fn with(mut self, scale: TimeScale, schedule: PowerSchedule) -> Self {
        *self.get_mut(scale) = schedule;
        self
    }

    /// `(α⁽¹⁾_n, α⁽²⁾_n, α⁽³⁾_n, α⁽⁴⁾_n)`.
    #[inline]
    pub fn steps(&self, n: u64) -> [f64; 4] {
        [
            self.basis.at(n),
            self.actor.at(n),
            self.critic.at(n),
            self.estimator.at(n),
        ]
    }
}

/// Sample points for the step-size ratio table.
pub const RATIO_PROBES: [u64; 3] = [1_000, 10_000, 1_000_000];

/// Ratio at the last probe above which separation is reported as slow.
pub const SLOW_SEPARATION_RATIO: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScheduleCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioRow {
    /// Pair `(i, i+1)` in 1-based time-scale numbering.
    pub pair: (usize, usize),
    pub n: u64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScheduleReport {
    pub checks: Vec<ScheduleCheck>,
    pub ratios: Vec<RatioRow>,
    /// Advisory notes that do not fail the report.
    pub warnings: Vec<String>,
    pub passed: bool,
}

/// Checks the step-size conditions for multi-time-scale convergence:
/// `Σα = ∞` and `Σα² < ∞` on every scale (exponent in `(0.5, 1]`, positive
/// coefficient), and `α⁽ⁱ⁾/α⁽ⁱ⁺¹⁾ → 0` (strictly decreasing exponents).
/// The ratio table is reported alongside; a non-monotone or slowly
/// vanishing ratio is a warning only.
pub fn validate_schedule(schedule: &StepSchedule) -> ScheduleReport {
    let mut checks = Vec::new();
    let mut warnings = Vec::new();
    for (i, scale) in TimeScale::ALL.iter().enumerate() {
        let s = schedule.get(*scale);
        let finite = s.coefficient.is_finite() && s.offset.is_finite() && s.exponent.is_finite();
        checks.push(ScheduleCheck {
            name: format!("alpha{}: sum diverges, sum of squares converges", i + 1),
            passed: finite && s.exponent > 0.5 && s.exponent <= 1.0,
            detail: format!("exponent {}", s.exponent),
        });
        checks.push(ScheduleCheck {
            name: format!("alpha{}: positive", i + 1),
            passed: finite && s.coefficient > 0.0 && s.offset > 0.0,
            detail: format!("coefficient {}, offset {}", s.coefficient, s.offset),
        });
    }

    let mut ratios = Vec::new();
    for i in 0..3 {
        let slow = schedule.get(TimeScale::ALL[i]);
        let fast = schedule.get(TimeScale::ALL[i + 1]);
        let row: Vec<f64> = RATIO_PROBES
            .iter()
            .map(|&n| {
                let r = slow.at(n) / fast.at(n);
                ratios.push(RatioRow {
                    pair: (i + 1, i + 2),
                    n,
                    ratio: r,
                });
                r
            })
            .collect();
        let decreasing = row.windows(2).all(|w| w[1] < w[0]);
        if !decreasing {
            warnings.push(format!(
                "alpha{}/alpha{} is not monotone over n = {:?}: {:?}",
                i + 1,
                i + 2,
                RATIO_PROBES,
                row
            ));
        }
        checks.push(ScheduleCheck {
            name: format!("alpha{}/alpha{} vanishes", i + 1, i + 2),
            passed: slow.exponent > fast.exponent,
            detail: format!(
                "exponents {} > {}; ratios {:?} at n = {:?}",
                slow.exponent, fast.exponent, row, RATIO_PROBES
            ),
        });
        let last = *row.last().expect("probe table is non-empty");
        if last >= SLOW_SEPARATION_RATIO {
            warnings.push(format!(
                "alpha{}/alpha{} is still {last:.3} at n = {}; time scales separate slowly",
                i + 1,
                i + 2,
                RATIO_PROBES[2]
            ));
        }
    }

    let passed = checks.iter().all(|c| c.passed);
    ScheduleReport {
        checks,
        ratios,
        warnings,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_passes() {
        let report = validate_schedule(&StepSchedule::default());
        assert!(report.passed, "{report:#?}");
    }

    #[test]
    fn equal_exponents_fail() {
        let s = PowerSchedule::new(1.0, 10.0, 0.7);
        let report = validate_schedule(&StepSchedule::single_time_scale(s));
        assert!(!report.passed);
        assert!(report
            .checks
            .iter()
            .filter(|c| c.name.contains("vanishes"))
            .all(|c| !c.passed));
    }

    #[test]
    fn square_summable_violation_fails() {
        let sched = StepSchedule::default().with(TimeScale::Estimator, PowerSchedule::new(1.0, 100.0, 0.4));
        let report = validate_schedule(&sched);
        assert!(!report.passed);
        assert!(report.checks.iter().any(|c| c.name.starts_with("alpha4: sum") && !c.passed));
    }

    #[test]
    fn frozen_scale_is_flagged() {
        let report = validate_schedule(&StepSchedule::default().with_frozen(TimeScale::Basis));
        assert!(!report.passed);
    }

    #[test]
    fn frozen_scale_steps_are_zero() {
        let sched = StepSchedule::default().with_frozen(TimeScale::Actor);
        for n in [0, 10, 1_000_000] {
            assert_eq!(sched.steps(n)[1], 0.0);
        }
    }

    #[test]
    fn default_values() {
        let s = StepSchedule::default();
        assert!((s.critic.at(0) - 10.0 / 1000f64.powf(0.6)).abs() < 1e-15);
        assert!((s.basis.at(0) - 1e-3).abs() < 1e-18);
    }
}

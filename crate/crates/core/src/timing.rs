//! Wall-clock accounting for completing one target among several objects.

use std::fmt;
use std::time::Instant;

/// `t_completion = t_segment + t_target + n_non_target * t_non_target`,
/// with `t_non_target` the mean per non-target object. Seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingReport {
    pub t_segment: f64,
    pub t_target: f64,
    pub t_non_target: f64,
    pub n_non_target: usize,
    pub t_completion: f64,
}

impl TimingReport {
    pub fn new(t_segment: f64, t_target: f64, non_target: &[f64]) -> Self {
        let n = non_target.len();
        let t_non_target = if n == 0 {
            0.0
        } else {
            non_target.iter().sum::<f64>() / n as f64
        };
        Self {
            t_segment,
            t_target,
            t_non_target,
            n_non_target: n,
            t_completion: t_segment + t_target + n as f64 * t_non_target,
        }
    }
}

impl fmt::Display for TimingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t_segment={:.6}\tt_target={:.6}\tt_non_target={:.6}\tn_non_target={}\tt_completion={:.6}",
            self.t_segment, self.t_target, self.t_non_target, self.n_non_target, self.t_completion
        )
    }
}

/// Run `f` and return its result with the elapsed seconds.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

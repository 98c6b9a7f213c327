//! Shared epoch-descent harness. One rule for every trainer in the crate:
//! after each epoch the full training loss is re-evaluated at the new
//! parameters; if it rose, the epoch is rolled back and the learning rate is
//! halved, and three consecutive halvings without an improvement stop the
//! run. Recorded trajectories are therefore non-increasing by construction.

use serde::{Deserialize, Serialize};

/// Outcome of a descent run. `epoch_loss[0]` is the loss at initialization;
/// later entries are the accepted epochs only.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct TrainTrace {
    pub epoch_loss: Vec<f64>,
    pub final_lr: f64,
    pub halvings: u32,
    pub rejected_epochs: u32,
    pub diverged: bool,
}

impl TrainTrace {
    pub fn final_loss(&self) -> f64 {
        self.epoch_loss.last().copied().unwrap_or(f64::INFINITY)
    }
}

pub trait Descend {
    type Snapshot;

    fn snapshot(&self) -> Self::Snapshot;
    fn restore(&mut self, snap: Self::Snapshot);
    /// Run one full mini-batch pass over the training data.
    fn epoch(&mut self, epoch: usize, lr: f64);
    /// Deterministic mean data loss at the current parameters.
    fn eval(&self) -> f64;
}

const MAX_CONSECUTIVE_HALVINGS: u32 = 3;

pub fn run_descent<D: Descend>(model: &mut D, epochs: usize, lr0: f64) -> TrainTrace {
    let mut trace = TrainTrace { final_lr: lr0, ..TrainTrace::default() };
    let mut lr = lr0;
    let mut best = model.eval();
    if !best.is_finite() {
        trace.diverged = true;
        return trace;
    }
    trace.epoch_loss.push(best);
    let mut streak = 0u32;
    for e in 0..epochs {
        let snap = model.snapshot();
        model.epoch(e, lr);
        let loss = model.eval();
        if !loss.is_finite() {
            model.restore(snap);
            trace.diverged = true;
            break;
        }
        if loss <= best {
            best = loss;
            streak = 0;
            trace.epoch_loss.push(loss);
        } else {
            model.restore(snap);
            lr /= 2.0;
            streak += 1;
            trace.rejected_epochs += 1;
            trace.halvings += 1;
            if streak >= MAX_CONSECUTIVE_HALVINGS {
                break;
            }
        }
    }
    trace.final_lr = lr;
    trace
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1-d quadratic with a rate high enough to overshoot: the harness must
    /// halve its way down instead of oscillating.
    struct Quad {
        x: f64,
    }

    impl Descend for Quad {
        type Snapshot = f64;

        fn snapshot(&self) -> f64 {
            self.x
        }

        fn restore(&mut self, snap: f64) {
            self.x = snap;
        }

        fn epoch(&mut self, _e: usize, lr: f64) {
            self.x -= lr * 2.0 * self.x;
        }

        fn eval(&self) -> f64 {
            self.x * self.x
        }
    }

    #[test]
    fn trajectory_is_non_increasing_and_halving_recovers() {
        let mut q = Quad { x: 3.0 };
        let trace = run_descent(&mut q, 60, 1.2); // 1.2 diverges until halved below 1.0
        assert!(trace.halvings >= 1);
        for w in trace.epoch_loss.windows(2) {
            assert!(w[1] <= w[0], "loss rose: {:?}", w);
        }
        assert!(trace.final_loss() < 1e-6, "final {}", trace.final_loss());
    }

    #[test]
    fn divergent_epoch_restores_last_finite_state() {
        struct Blow {
            x: f64,
        }
        impl Descend for Blow {
            type Snapshot = f64;
            fn snapshot(&self) -> f64 {
                self.x
            }
            fn restore(&mut self, s: f64) {
                self.x = s;
            }
            fn epoch(&mut self, e: usize, _lr: f64) {
                self.x = if e >= 2 { f64::NAN } else { self.x - 1.0 };
            }
            fn eval(&self) -> f64 {
                self.x * self.x
            }
        }
        let mut b = Blow { x: 10.0 };
        let trace = run_descent(&mut b, 10, 0.1);
        assert!(trace.diverged);
        assert_eq!(b.x, 8.0);
        assert_eq!(trace.epoch_loss, vec![100.0, 81.0, 64.0]);
    }

    #[test]
    fn three_consecutive_rejections_stop_the_run() {
        // Loss that can only rise: every epoch is rejected.
        struct Up {
            x: f64,
        }
        impl Descend for Up {
            type Snapshot = f64;
            fn snapshot(&self) -> f64 {
                self.x
            }
            fn restore(&mut self, s: f64) {
                self.x = s;
            }
            fn epoch(&mut self, _e: usize, _lr: f64) {
                self.x += 1.0;
            }
            fn eval(&self) -> f64 {
                self.x
            }
        }
        let mut u = Up { x: 0.0 };
        let trace = run_descent(&mut u, 100, 0.5);
        assert_eq!(trace.rejected_epochs, 3);
        assert_eq!(u.x, 0.0);
        assert_eq!(trace.epoch_loss, vec![0.0]);
    }
}

use crate::network::TrainerState;

/// What the scheduler decided after one epoch's dev evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    /// New minimum of the monitored metric (checkpoint it).
    pub new_best: bool,
    /// The learning rate was halved for the next epoch.
    pub halved: bool,
    /// Training ends after this epoch.
    pub stop: bool,
}

/// Learning-rate halving and patience stopping on a monitored dev metric
/// (lower is better).
///
/// After every epoch:
/// * the relative improvement over the previous epoch below `threshold`
///   halves the learning rate;
/// * an epoch that does not improve the best value so far by at least
///   `threshold` (relative) counts as stalled; `patience` consecutive stalled
///   epochs (at least one) stop training, as does reaching `max_epochs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scheduler {
    pub threshold: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub state: TrainerState,
}

fn relative_gain(reference: f64, value: f64) -> f64 {
    if !reference.is_finite() {
        return f64::INFINITY;
    }
    (reference - value) / reference.abs().max(f64::MIN_POSITIVE)
}

impl Scheduler {
    pub fn new(lr: f64, threshold: f64, patience: usize, max_epochs: usize) -> Self {
        Scheduler {
            threshold,
            patience,
            max_epochs,
            state: TrainerState {
                epochs_done: 0,
                lr,
                best_metric: f64::INFINITY,
                best_epoch: 0,
                prev_metric: f64::INFINITY,
                stalled_epochs: 0,
                stopped: max_epochs == 0,
            },
        }
    }

    pub fn resume(state: TrainerState, threshold: f64, patience: usize, max_epochs: usize) -> Self {
        let mut s = Scheduler {
            threshold,
            patience,
            max_epochs,
            state,
        };
        // re-derived rather than trusted, so a run stopped only by an earlier
        // epoch cap can continue under a larger one
        s.state.stopped = s.stop_condition();
        s
    }

    pub fn lr(&self) -> f64 {
        self.state.lr
    }

    pub fn finished(&self) -> bool {
        self.state.stopped
    }

    fn stop_condition(&self) -> bool {
        let s = &self.state;
        s.epochs_done >= self.max_epochs || (s.stalled_epochs > 0 && s.stalled_epochs >= self.patience)
    }

    pub fn observe(&mut self, metric: f64) -> Decision {
        let s = &mut self.state;
        s.epochs_done += 1;
        let halved = relative_gain(s.prev_metric, metric) < self.threshold;
        if halved {
            s.lr *= 0.5;
        }
        if relative_gain(s.best_metric, metric) >= self.threshold {
            s.stalled_epochs = 0;
        } else {
            s.stalled_epochs += 1;
        }
        let new_best = metric < s.best_metric;
        if new_best {
            s.best_metric = metric;
            s.best_epoch = s.epochs_done;
        }
        s.prev_metric = metric;
        let stop = self.stop_condition();
        self.state.stopped = stop;
        Decision {
            new_best,
            halved,
            stop,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(seq: &[f64], patience: usize) -> (Vec<f64>, Vec<bool>, usize) {
        let mut s = Scheduler::new(1.0, 0.001, patience, 100);
        let mut lrs = Vec::new();
        let mut halvings = Vec::new();
        for &m in seq {
            lrs.push(s.lr());
            let d = s.observe(m);
            halvings.push(d.halved);
            if d.stop {
                break;
            }
        }
        (lrs, halvings, s.state.epochs_done)
    }

    #[test]
    fn plateau_sequence() {
        let (lrs, halvings, epochs) = run(&[2.0, 1.9, 1.899, 1.898, 1.897, 1.896, 1.0], 4);
        assert_eq!(epochs, 6);
        assert_eq!(halvings, vec![false, false, true, true, true, true]);
        assert_eq!(lrs, vec![1.0, 1.0, 1.0, 0.5, 0.25, 0.125]);
    }

    #[test]
    fn zero_patience_stops_at_first_stall() {
        let (_, _, epochs) = run(&[3.0, 2.0, 1.5, 1.6, 1.0], 0);
        assert_eq!(epochs, 4);
    }

    #[test]
    fn improvement_resets_patience() {
        let (_, _, epochs) = run(&[2.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.1], 3);
        assert_eq!(epochs, 7);
    }

    #[test]
    fn max_epochs_caps_training() {
        let mut s = Scheduler::new(0.1, 0.001, 4, 2);
        assert!(!s.observe(3.0).stop);
        assert!(s.observe(2.0).stop);
        assert!(Scheduler::new(0.1, 0.001, 4, 0).finished());
    }

    #[test]
    fn best_tracks_the_raw_minimum() {
        let mut s = Scheduler::new(0.1, 0.5, 10, 10);
        assert!(s.observe(2.0).new_best);
        // an insignificant improvement is still the new best
        assert!(s.observe(1.99).new_best);
        assert!(!s.observe(1.995).new_best);
        assert_eq!(s.state.best_epoch, 2);
    }

    #[test]
    fn resume_under_a_larger_cap_continues() {
        let mut s = Scheduler::new(0.1, 0.001, 4, 2);
        s.observe(3.0);
        s.observe(2.0);
        assert!(s.finished());
        let mut r = Scheduler::resume(s.state.clone(), 0.001, 4, 5);
        assert!(!r.finished());
        assert!(!r.observe(1.0).stop);
        assert_eq!(r.state.epochs_done, 3);
        assert!(Scheduler::resume(r.state.clone(), 0.001, 4, 3).finished());
    }
}

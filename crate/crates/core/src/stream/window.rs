use std::collections::HashMap;

use crate::model::UserId;

/// Watch window over the receivers of one stream. Each receiver carries the
/// length of its current run of consecutive sample intervals; a run of `rho`
/// is a close contact and starts the count again.
#[derive(Debug, Clone)]
pub struct WatchWindow {
    rho: u32,
    runs: HashMap<UserId, u32>,
}

impl WatchWindow {
    pub fn new(rho: u32) -> Self {
        WatchWindow {
            rho,
            runs: HashMap::new(),
        }
    }

    pub fn rho(&self) -> u32 {
        self.rho
    }

    /// Current run length of `user` (0 if absent or just promoted).
    pub fn run(&self, user: UserId) -> u32 {
        self.runs.get(&user).copied().unwrap_or(0)
    }

    /// Feeds one sample interval with the distinct receivers present in it.
    /// Returns the receivers whose run reached `rho` at this interval, in the
    /// order given.
    pub fn observe(&mut self, present: &[UserId]) -> Vec<UserId> {
        let mut next = HashMap::with_capacity(present.len());
        let mut completed = Vec::new();
        for &u in present {
            if next.contains_key(&u) {
                continue;
            }
            let mut run = self.run(u) + 1;
            if run == self.rho {
                completed.push(u);
                run = 0;
            }
            next.insert(u, run);
        }
        self.runs = next;
        completed
    }

    /// Breaks every run (a gap in the stream).
    pub fn reset(&mut self) {
        self.runs.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_in_a_row_is_a_contact() {
        let mut w = WatchWindow::new(5);
        let (p1, p3) = (UserId(1), UserId(3));
        let mut hits = Vec::new();
        for k in 0..5 {
            let present = if k < 3 { vec![p1, p3] } else { vec![p1] };
            hits.extend(w.observe(&present).into_iter().map(|u| (k, u)));
        }
        assert_eq!(hits, vec![(4, p1)]);
        assert_eq!(w.run(p3), 0);
    }

    #[test]
    fn reset_breaks_runs() {
        let mut w = WatchWindow::new(3);
        w.observe(&[UserId(0)]);
        w.observe(&[UserId(0)]);
        w.reset();
        assert!(w.observe(&[UserId(0)]).is_empty());
        assert_eq!(w.run(UserId(0)), 1);
    }

    #[test]
    fn double_run_promotes_twice() {
        let mut w = WatchWindow::new(2);
        let n: usize = (0..4).map(|_| w.observe(&[UserId(7), UserId(7)]).len()).sum();
        assert_eq!(n, 2);
    }
}

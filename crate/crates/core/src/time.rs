//! Hour labels on a wrap-around day.
//!
//! Slots carry labels `1..=T`; index `t` in arrays is label `t + 1`. A window
//! given by inclusive labels `first..=last` wraps past `T` when
//! `first > last`, so an evening-to-morning interval is a single window.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingWindow {
    pub first: usize,
    pub last: usize,
}

impl std::fmt::Display for RingWindow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}..={}", self.first, self.last)
    }
}

impl RingWindow {
    pub fn new(first: usize, last: usize) -> Self {
        RingWindow { first, last }
    }

    /// Window covering every slot of a horizon of length `horizon`.
    pub fn all_day(horizon: usize) -> Self {
        RingWindow {
            first: 1,
            last: horizon,
        }
    }

    pub fn is_valid(&self, horizon: usize) -> bool {
        (1..=horizon).contains(&self.first) && (1..=horizon).contains(&self.last)
    }

    pub fn len(&self, horizon: usize) -> usize {
        if self.first <= self.last {
            self.last - self.first + 1
        } else {
            horizon - self.first + 1 + self.last
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains_label(&self, label: usize) -> bool {
        if self.first <= self.last {
            (self.first..=self.last).contains(&label)
        } else {
            label >= self.first || label <= self.last
        }
    }

    /// Array indices in window order (chronological along the ring).
    pub fn indices(&self, horizon: usize) -> Vec<usize> {
        (0..self.len(horizon))
            .map(|k| (self.first - 1 + k) % horizon)
            .collect()
    }

    pub fn mask(&self, horizon: usize) -> Vec<bool> {
        (1..=horizon).map(|l| self.contains_label(l)).collect()
    }

    /// 1-based position of array index `t` inside the window.
    pub fn position(&self, t: usize, horizon: usize) -> Option<usize> {
        let label = t + 1;
        if !self.contains_label(label) {
            return None;
        }
        Some((label + horizon - self.first) % horizon + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrapping_window_covers_evening_and_morning() {
        let w = RingWindow::new(19, 6);
        assert_eq!(w.len(24), 12);
        let idx = w.indices(24);
        assert_eq!(idx.first(), Some(&18));
        assert_eq!(idx.last(), Some(&5));
        assert!(w.contains_label(24) && w.contains_label(1) && !w.contains_label(7));
        assert_eq!(w.position(23, 24), Some(6));
        assert_eq!(w.position(0, 24), Some(7));
    }

    #[test]
    fn plain_window() {
        let w = RingWindow::new(19, 24);
        assert_eq!(w.len(24), 6);
        assert_eq!(w.position(18, 24), Some(1));
        assert_eq!(w.mask(24).iter().filter(|b| **b).count(), 6);
    }
}

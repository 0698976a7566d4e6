use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_N_MAX: usize = 4000;

/// Sliding-window policy over the document token axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPolicy {
    pub n_max: usize,
    pub stride: usize,
}

impl WindowPolicy {
    pub fn new(n_max: usize, stride: usize) -> Result<Self> {
        if n_max == 0 || stride == 0 || stride > n_max {
            return Err(Error::Shape(format!(
                "window policy needs 1 <= stride <= n_max, got n_max={n_max} stride={stride}"
            )));
        }
        Ok(WindowPolicy { n_max, stride })
    }

    /// `n_max` with the stride at half of it.
    pub fn with_n_max(n_max: usize) -> Result<Self> {
        Self::new(n_max, (n_max / 2).max(1))
    }
}

impl Default for WindowPolicy {
    fn default() -> Self {
        WindowPolicy {
            n_max: DEFAULT_N_MAX,
            stride: DEFAULT_N_MAX / 2,
        }
    }
}

/// Half-open windows starting at 0, S, 2S, ... while the start lies inside
/// the document; a document no longer than `n_max` gets one window.
pub fn make_windows(doc_len: usize, policy: WindowPolicy) -> Vec<Range<usize>> {
    if doc_len <= policy.n_max {
        return vec![0..doc_len];
    }
    (0..doc_len)
        .step_by(policy.stride)
        .map(|start| start..(start + policy.n_max).min(doc_len))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let p = WindowPolicy::new(4, 2).unwrap();
        assert_eq!(make_windows(10, p), vec![0..4, 2..6, 4..8, 6..10, 8..10]);
        assert_eq!(make_windows(3000, WindowPolicy::default()), vec![0..3000]);
        let d = WindowPolicy::default();
        assert_eq!((d.n_max, d.stride), (4000, 2000));
    }

    #[test]
    fn invalid_policies() {
        assert!(WindowPolicy::new(4, 5).is_err());
        assert!(WindowPolicy::new(4, 0).is_err());
        assert!(WindowPolicy::new(0, 0).is_err());
        assert_eq!(WindowPolicy::with_n_max(1).unwrap().stride, 1);
    }
}

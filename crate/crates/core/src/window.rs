//! Sliding-window arithmetic and per-window min-max scaling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Context length, forecast horizon and anchor stride, all in steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub context: usize,
    pub horizon: usize,
    pub stride: usize,
}

impl WindowSpec {
    pub fn new(context: usize, horizon: usize, stride: usize) -> Result<Self> {
        let spec = Self {
            context,
            horizon,
            stride,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Context of three horizons, stride 1.
    pub fn for_horizon(horizon: usize) -> Result<Self> {
        Self::new(3 * horizon, horizon, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.context == 0 || self.horizon == 0 || self.stride == 0 {
            return Err(Error::Invalid(format!(
                "window needs positive context, horizon and stride, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Anchors dropped between chronological partitions so no effect context
    /// overlaps another partition's targets.
    pub fn purge_gap(&self) -> usize {
        self.context + self.horizon - 1
    }

    pub fn count(&self, steps: usize, delta: usize) -> usize {
        window_count(steps, self.context, self.horizon, delta, self.stride)
    }

    /// Valid anchors `t` in increasing order: `context + delta, +stride, ...,
    /// steps - horizon`.
    pub fn anchors(&self, steps: usize, delta: usize) -> impl Iterator<Item = usize> {
        let first = self.context + delta;
        let n = self.count(steps, delta);
        let stride = self.stride;
        (0..n).map(move |k| first + k * stride)
    }
}

/// Number of windows of `context` history plus `horizon` targets that fit in
/// `steps` when `delta` extra leading steps are consumed by the cause shift.
pub fn window_count(steps: usize, context: usize, horizon: usize, delta: usize, stride: usize) -> usize {
    assert!(stride >= 1, "stride must be positive");
    let need = context + horizon + delta;
    if steps < need {
        0
    } else {
        (steps - need) / stride + 1
    }
}

/// Per-channel min-max scaled copy of a window, with the statistics needed
/// to map values back.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledWindow {
    pub scaled: Vec<f64>,
    pub ch_min: Vec<f64>,
    pub ch_max: Vec<f64>,
    /// Lengths of the consecutive channels inside `scaled`.
    pub layout: Vec<usize>,
}

impl ScaledWindow {
    pub fn is_degenerate(&self, channel: usize) -> bool {
        self.ch_max[channel] <= self.ch_min[channel]
    }

    /// Maps a channel back to original units. Degenerate channels return
    /// their recorded constant.
    pub fn invert(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.scaled.len());
        let mut offset = 0;
        for (c, &len) in self.layout.iter().enumerate() {
            out.extend(
                self.scaled[offset..offset + len]
                    .iter()
                    .map(|&s| invert_value(s, self.ch_min[c], self.ch_max[c])),
            );
            offset += len;
        }
        out
    }
}

/// Scales each channel of `window` (consecutive runs of the lengths in
/// `layout`) to `[0, 1]` by its own min and max. A channel whose range is
/// `<= eps_floor` is degenerate: every entry becomes 0.5 and the channel
/// constant is recorded as both min and max.
pub fn minmax_scale(window: &[f64], layout: &[usize], eps_floor: f64) -> Result<ScaledWindow> {
    let total: usize = layout.iter().sum();
    if total != window.len() {
        return Err(Error::Shape(format!(
            "channel layout covers {total} values, window has {}",
            window.len()
        )));
    }
    let mut scaled = Vec::with_capacity(window.len());
    let mut ch_min = Vec::with_capacity(layout.len());
    let mut ch_max = Vec::with_capacity(layout.len());
    let mut offset = 0;
    for &len in layout {
        let chan = &window[offset..offset + len];
        let (lo, hi) = min_max(chan);
        if hi - lo <= eps_floor {
            scaled.extend(std::iter::repeat_n(0.5, len));
            ch_min.push(lo);
            ch_max.push(lo);
        } else {
            scaled.extend(chan.iter().map(|&v| scale_value(v, lo, hi)));
            ch_min.push(lo);
            ch_max.push(hi);
        }
        offset += len;
    }
    Ok(ScaledWindow {
        scaled,
        ch_min,
        ch_max,
        layout: layout.to_vec(),
    })
}

pub(crate) fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Applies recorded channel statistics to a value. With `max <= min` the
/// channel is degenerate and every value maps to 0.5.
pub fn scale_value(v: f64, min: f64, max: f64) -> f64 {
    if max <= min {
        0.5
    } else {
        (v - min) / (max - min)
    }
}

pub fn invert_value(s: f64, min: f64, max: f64) -> f64 {
    if max <= min {
        min
    } else {
        s * (max - min) + min
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn count_examples() {
        assert_eq!(window_count(100, 30, 10, 20, 1), 41);
        assert_eq!(window_count(59, 30, 10, 20, 1), 0);
        assert_eq!(window_count(5000, 30, 10, 200, 1), 4761);
        let w = WindowSpec::new(30, 10, 1).unwrap();
        let anchors: Vec<usize> = w.anchors(100, 20).collect();
        assert_eq!(anchors.first(), Some(&50));
        assert_eq!(anchors.last(), Some(&90));
    }

    #[test]
    fn count_matches_enumeration_exhaustively() {
        for t in 0..=200usize {
            for c in 1..=12 {
                for h in 1..=6 {
                    for delta in [0, 1, 3, 17, 40] {
                        for stride in 1..=4 {
                            let brute = (0..=t)
                                .filter(|&a| a >= c + delta && a + h <= t && (a - c - delta) % stride == 0)
                                .count();
                            assert_eq!(window_count(t, c, h, delta, stride), brute, "{t} {c} {h} {delta} {stride}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn zero_sized_window_rejected() {
        assert!(WindowSpec::new(0, 10, 1).is_err());
        assert!(WindowSpec::new(30, 0, 1).is_err());
        assert!(WindowSpec::new(30, 10, 0).is_err());
        assert_eq!(WindowSpec::for_horizon(10).unwrap().context, 30);
    }

    #[test]
    fn scaling_examples() {
        let s = minmax_scale(&[1.0, 3.0, 5.0], &[3], 0.0).unwrap();
        assert_eq!(s.scaled, vec![0.0, 0.5, 1.0]);
        let s = minmax_scale(&[7.0, 7.0, 7.0], &[3], 0.0).unwrap();
        assert_eq!(s.scaled, vec![0.5, 0.5, 0.5]);
        assert!(s.is_degenerate(0));
        assert_eq!(s.invert(), vec![7.0, 7.0, 7.0]);
        let s = minmax_scale(&[-2.0, 0.0, 2.0], &[3], 0.0).unwrap();
        assert_eq!(s.scaled, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn channels_scale_independently() {
        let s = minmax_scale(&[0.0, 10.0, 5.0, 6.0], &[2, 2], 0.0).unwrap();
        assert_eq!(s.scaled, vec![0.0, 1.0, 0.0, 1.0]);
        assert!(minmax_scale(&[1.0, 2.0], &[3], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn count_monotone(t in 0usize..400, c in 1usize..40, h in 1usize..20, d in 0usize..50, s in 1usize..5) {
            let base = window_count(t, c, h, d, s);
            prop_assert!(window_count(t, c + 1, h, d, s) <= base);
            prop_assert!(window_count(t, c, h + 1, d, s) <= base);
            prop_assert!(window_count(t, c, h, d + 1, s) <= base);
        }

        #[test]
        fn scale_in_unit_interval_and_inverts(
            a in prop::collection::vec(-1e6f64..1e6, 2..40),
            b in prop::collection::vec(-1e3f64..1e3, 2..40),
        ) {
            let mut w = a.clone();
            w.extend(&b);
            let s = minmax_scale(&w, &[a.len(), b.len()], 0.0).unwrap();
            prop_assert!(s.scaled.iter().all(|v| (0.0..=1.0).contains(v)));
            let back = s.invert();
            for (c, (x, y)) in w.iter().zip(&back).enumerate() {
                let chan = usize::from(c >= a.len());
                if !s.is_degenerate(chan) {
                    let tol = 1e-12 * (s.ch_max[chan] - s.ch_min[chan]).abs().max(x.abs()).max(1e-300);
                    prop_assert!((x - y).abs() <= tol, "{x} vs {y}");
                }
            }
        }
    }
}

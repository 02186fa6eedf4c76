//! Offline look-ahead peak limiter.
//!
//! The gain curve is built in three passes over the per-sample target gain
//! `t[n] = min(1, ceiling / |x[n]|)`:
//!
//! 1. a sliding minimum over the next `L` samples (the look-ahead), so gain
//!    reduction is in place before a peak arrives;
//! 2. exponential release towards that curve, never above it (95 % of a
//!    reduction is recovered within the release time);
//! 3. a length-`L` moving average, which turns the steps into ramps.
//!
//! Every term averaged at sample `n` comes from a minimum window that
//! contains `n`, so the smoothed gain never exceeds `t[n]` and the output
//! stays within the ceiling. Where no reduction is active the gain is
//! exactly 1 and samples pass through bit-identical.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limiter {
    pub ceiling: f64,
    pub lookahead_s: f64,
    pub release_s: f64,
}

impl Default for Limiter {
    fn default() -> Self {
        Limiter {
            ceiling: 0.999,
            lookahead_s: 0.005,
            release_s: 0.05,
        }
    }
}

/// Envelope deficits below this are below f32 resolution around unity.
const SNAP: f64 = 1e-7;

impl Limiter {
    pub fn process(&self, samples: &[f32], sample_rate: u32) -> Vec<f32> {
        let ceiling = self.ceiling;
        if samples.iter().all(|s| (s.abs() as f64) <= ceiling) {
            return samples.to_vec();
        }
        // Largest f32 not above the ceiling.
        let mut bound = ceiling as f32;
        if bound as f64 > ceiling {
            bound = f32::from_bits(bound.to_bits() - 1);
        }
        let gain = self.gain_curve(samples, sample_rate);
        samples
            .iter()
            .zip(gain)
            .map(|(&x, g)| ((x as f64 * g) as f32).clamp(-bound, bound))
            .collect()
    }

    /// Smoothed gain per sample; exactly 1.0 wherever no reduction reaches.
    pub fn gain_curve(&self, samples: &[f32], sample_rate: u32) -> Vec<f64> {
        let n = samples.len();
        if n == 0 {
            return Vec::new();
        }
        let ceiling = self.ceiling;
        let look = ((self.lookahead_s * sample_rate as f64).round() as usize).max(1);
        let target: Vec<f64> = samples
            .iter()
            .map(|&x| {
                let a = x.abs() as f64;
                if a > ceiling {
                    ceiling / a
                } else {
                    1.0
                }
            })
            .collect();

        // held[i] = min target over [k, k + look - 1] ∩ [0, n) with k = i - (look - 1),
        // so indices cover k from -(look - 1) to n - 1.
        let span = n + look - 1;
        let mut held = Vec::with_capacity(span);
        let mut deque: VecDeque<usize> = VecDeque::new();
        let mut next = 0usize;
        for i in 0..span {
            let k = i as isize - (look as isize - 1);
            let hi = (k + look as isize - 1).min(n as isize - 1) as usize;
            while next <= hi {
                while deque.back().is_some_and(|&b| target[b] >= target[next]) {
                    deque.pop_back();
                }
                deque.push_back(next);
                next += 1;
            }
            let lo = k.max(0) as usize;
            while deque.front().is_some_and(|&f| f < lo) {
                deque.pop_front();
            }
            held.push(target[*deque.front().expect("window is never empty")]);
        }

        // Time constant of a third of the release time: 95 % recovered by then.
        let release = (-3.0 / (self.release_s * sample_rate as f64)).exp();
        let mut env = held[0];
        for h in held.iter_mut() {
            env = if *h <= env {
                *h
            } else {
                let next = *h + (env - *h) * release;
                if *h - next < SNAP {
                    *h
                } else {
                    next
                }
            };
            *h = env;
        }

        // Moving average of `look` consecutive envelope values ending at n.
        let mut deficit_prefix = Vec::with_capacity(span + 1);
        let mut reduced_prefix = Vec::with_capacity(span + 1);
        deficit_prefix.push(0.0f64);
        reduced_prefix.push(0usize);
        for &h in &held {
            deficit_prefix.push(deficit_prefix.last().unwrap() + (1.0 - h));
            reduced_prefix.push(reduced_prefix.last().unwrap() + usize::from(h < 1.0));
        }
        (0..n)
            .map(|i| {
                let (a, b) = (i, i + look);
                if reduced_prefix[b] == reduced_prefix[a] {
                    1.0
                } else {
                    let mean_deficit = (deficit_prefix[b] - deficit_prefix[a]) / look as f64;
                    (1.0 - mean_deficit).min(1.0)
                }
            })
            .collect()
    }
}

/// Limits with the default 0.999 ceiling, 5 ms look-ahead and 50 ms release.
pub fn limit(samples: &[f32], sample_rate: u32) -> Vec<f32> {
    Limiter::default().process(samples, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quiet_input_is_untouched() {
        let s: Vec<f32> = (0..10_000).map(|i| 0.9 * ((i as f32) * 0.05).sin()).collect();
        assert_eq!(limit(&s, 48_000), s);
    }

    #[test]
    fn spike_is_caught() {
        let mut s = vec![0.5f32; 48_000];
        s[20_000] = 1.5;
        let out = limit(&s, 48_000);
        assert!(out.iter().all(|x| x.abs() <= 0.999));
        // Gain reduction starts before the spike and recovers afterwards.
        assert!(out[20_000 - 100] < 0.5);
        assert_eq!(out[0], 0.5);
        assert_eq!(out[20_000 + 48_00 * 3], 0.5);
        assert_eq!(out[47_999], 0.5);
    }

    #[test]
    fn dc_overload_settles_at_the_ceiling() {
        let s = vec![2.0f32; 48_000];
        let out = limit(&s, 48_000);
        assert!(out.iter().all(|x| x.abs() <= 0.999));
        assert!((out[24_000] - 0.999).abs() < 1e-6);
        assert!(out.iter().all(|&x| (x as f64) <= 0.999));
    }

    #[test]
    fn gain_has_no_jumps() {
        let mut s = vec![0.3f32; 9600];
        for x in &mut s[4000..4100] {
            *x = 3.0;
        }
        let g = Limiter::default().gain_curve(&s, 48_000);
        let look = 240.0;
        // A full-depth drop is spread over the look-ahead ramp.
        let max_step = g.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        assert!(max_step <= (1.0 - 0.333) / look + 1e-9, "{max_step}");
    }

    proptest! {
        #[test]
        fn output_never_exceeds_ceiling(
            samples in proptest::collection::vec(-4.0f32..4.0, 1..3000),
            rate in prop_oneof![Just(8_000u32), Just(48_000u32)],
        ) {
            let out = limit(&samples, rate);
            prop_assert_eq!(out.len(), samples.len());
            prop_assert!(out.iter().all(|x| (x.abs() as f64) <= 0.999));
            let g = Limiter::default().gain_curve(&samples, rate);
            for (x, g) in samples.iter().zip(&g) {
                prop_assert!(*g <= 1.0 && *g > 0.0);
                prop_assert!((x.abs() as f64) * g <= 0.999 * (1.0 + 1e-12));
            }
        }
    }
}

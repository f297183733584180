//! Alternating face hits `S^d_k <= S^u_k <= S^d_{k+1}` and the per-window
//! excursion counts on a log-scale clock.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use super::{Observable, StepObserver};
use crate::reflect::{Face, LcpStep, ReflectedPath, ReflectionSpec};
use crate::rng::{CounterRng, Stream};
use crate::Vec2;

/// Windows `[T_k, T_{k+1})`, `k = 0..count`, where `T_k` is the first grid
/// index with `observable >= start + k * width`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub observable: Observable,
    pub start: f64,
    pub width: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExcursionStats {
    /// Grid indices of successive lower-face hits.
    pub s_down: Vec<usize>,
    /// Grid indices of successive upper-face hits.
    pub s_up: Vec<usize>,
    /// For each `s_up[j]`, the last index on the lower face before it.
    pub s_up_minus: Vec<usize>,
    /// Grid indices `T_k` at which windows open (length `count + 1` once complete).
    pub window_starts: Vec<usize>,
    /// Hits of the upper face in each window whose preceding lower-face visit
    /// is inside the window.
    pub n_d: Vec<u32>,
    /// All hits of the upper face in each window.
    pub n_big_d: Vec<u32>,
    /// Horizontal displacement between successive lower-face hits.
    pub displacements: Vec<f64>,
    /// Lower-face local time accumulated from each `S^d_k` (including the
    /// arriving push) up to `S^u_k`.
    pub lower_leg_local_times: Vec<f64>,
    /// Time from `S^d_k` to `S^u_k`.
    pub down_to_up_times: Vec<f64>,
}

impl ExcursionStats {
    /// Largest `N^D - N^d` over closed windows.
    pub fn max_window_discrepancy(&self) -> u32 {
        self.n_d
            .iter()
            .zip(&self.n_big_d)
            .map(|(a, b)| b.saturating_sub(*a))
            .max()
            .unwrap_or(0)
    }

    /// `S^d_k <= S^u_k <= S^d_{k+1}` for every available index.
    pub fn alternates(&self) -> bool {
        let ok_du = self.s_down.iter().zip(&self.s_up).all(|(d, u)| d <= u);
        let ok_ud = self.s_up.iter().zip(self.s_down.iter().skip(1)).all(|(u, d)| u <= d);
        ok_du && ok_ud
    }
}

/// Online tracker; feed it steps through [`StepObserver`] or states through
/// [`ExcursionTracker::observe`].
#[derive(Clone, Debug)]
pub struct ExcursionTracker {
    spec: ReflectionSpec,
    tol: f64,
    windows: Option<WindowSpec>,
    /// Stop after this many recorded displacements.
    max_cycles: Option<usize>,
    /// Brownian-bridge touch detection between grid points: `(rng, dt)`.
    bridge: Option<(CounterRng, f64)>,
    expect: Face,
    last_lower: Option<usize>,
    l_lower: f64,
    down_state: Option<(Vec2, f64, f64)>,
    stats: ExcursionStats,
}

impl ExcursionTracker {
    pub fn new(spec: ReflectionSpec, tol: f64) -> Self {
        ExcursionTracker {
            spec,
            tol,
            windows: None,
            max_cycles: None,
            bridge: None,
            expect: Face::Lower,
            last_lower: None,
            l_lower: 0.0,
            down_state: None,
            stats: ExcursionStats::default(),
        }
    }

    pub fn with_windows(mut self, windows: WindowSpec) -> Self {
        self.windows = Some(windows);
        self
    }

    pub fn with_max_cycles(mut self, cycles: usize) -> Self {
        self.max_cycles = Some(cycles);
        self
    }

    /// Count a face as touched during a step, even if neither grid point lies
    /// on it, with the Brownian-bridge probability `exp(-2 d0 d1 / dt)` where
    /// `d0`, `d1` are the face distances of the step's start and unprojected end.
    /// Uniforms come from the auxiliary stream of `seed`. Applies to steps fed
    /// through [`StepObserver`].
    pub fn with_bridge(mut self, seed: u64, dt: f64) -> Self {
        self.bridge = Some((CounterRng::new(seed, Stream::Aux), dt));
        self
    }

    pub fn stats(&self) -> &ExcursionStats {
        &self.stats
    }

    pub fn into_stats(self) -> ExcursionStats {
        self.stats
    }

    fn windows_done(&self) -> bool {
        self.windows
            .is_some_and(|w| self.stats.window_starts.len() > w.count)
    }

    /// Record grid state `k` at time `t` with cumulative lower local time
    /// `l_lower` (and `l_lower_prev` at index `k - 1`). Returns `Break` once
    /// every window has closed or the cycle budget is reached.
    pub fn observe(&mut self, k: usize, t: f64, z: Vec2, l_lower_prev: f64, l_lower: f64) -> ControlFlow<()> {
        self.observe_touching(k, t, z, l_lower_prev, l_lower, [false; 2])
    }

    fn observe_touching(
        &mut self,
        k: usize,
        t: f64,
        z: Vec2,
        l_lower_prev: f64,
        l_lower: f64,
        touched: [bool; 2],
    ) -> ControlFlow<()> {
        if let Some(w) = self.windows {
            while self.stats.window_starts.len() <= w.count {
                let level = w.start + self.stats.window_starts.len() as f64 * w.width;
                if w.observable.value(z) >= level {
                    self.stats.window_starts.push(k);
                    if self.stats.window_starts.len() <= w.count {
                        self.stats.n_d.push(0);
                        self.stats.n_big_d.push(0);
                    }
                } else {
                    break;
                }
            }
        }
        let on_lower = touched[0] || self.spec.face_distance(Face::Lower, z) <= self.tol;
        let on_upper = touched[1] || self.spec.face_distance(Face::Upper, z) <= self.tol;
        match self.expect {
            Face::Lower if on_lower => {
                if let Some((z0, _, _)) = self.down_state {
                    self.stats.displacements.push(z.x - z0.x);
                }
                self.stats.s_down.push(k);
                self.down_state = Some((z, t, l_lower_prev));
                self.expect = Face::Upper;
            }
            Face::Upper if on_upper => {
                let minus = self.last_lower.unwrap_or(0);
                self.stats.s_up.push(k);
                self.stats.s_up_minus.push(minus);
                if let Some((_, t0, l0)) = self.down_state {
                    self.stats.lower_leg_local_times.push(l_lower - l0);
                    self.stats.down_to_up_times.push(t - t0);
                }
                let opened = self.stats.window_starts.len();
                if self.windows.is_some() && opened >= 1 && !self.windows_done() {
                    let w = opened - 1;
                    let t_k = self.stats.window_starts[w];
                    self.stats.n_big_d[w] += 1;
                    if minus >= t_k {
                        self.stats.n_d[w] += 1;
                    }
                }
                self.expect = Face::Lower;
            }
            _ => {}
        }
        if on_lower {
            self.last_lower = Some(k);
        }
        let done_cycles = self
            .max_cycles
            .is_some_and(|m| self.stats.displacements.len() >= m);
        if self.windows_done() || done_cycles {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    }

    /// Seed the tracker with the starting state (index 0).
    pub fn start(&mut self, z: Vec2) {
        let _ = self.observe(0, 0.0, z, 0.0, 0.0);
    }
}

impl StepObserver for ExcursionTracker {
    fn on_step(&mut self, k: usize, t: f64, step: &LcpStep) -> ControlFlow<()> {
        let before = self.l_lower;
        self.l_lower += step.dm_lower;
        let mut touched = [false; 2];
        if let Some((rng, dt)) = &self.bridge {
            let end = step.pre_state + step.displacement;
            for (i, face) in [Face::Lower, Face::Upper].into_iter().enumerate() {
                let d0 = self.spec.face_distance(face, step.pre_state);
                let d1 = self.spec.face_distance(face, end);
                if d0 > self.tol && d1 > self.tol {
                    let expo = 2.0 * d0 * d1 / dt;
                    touched[i] = expo < 40.0 && rng.uniform_at(2 * k as u64 + i as u64) < (-expo).exp();
                }
            }
        }
        self.observe_touching(k, t, step.post_state, before, self.l_lower, touched)
    }
}

/// Replay a stored path through the tracker.
pub fn excursion_stats(
    path: &ReflectedPath,
    spec: &ReflectionSpec,
    tol: f64,
    windows: Option<WindowSpec>,
) -> ExcursionStats {
    let mut tr = ExcursionTracker::new(*spec, tol);
    if let Some(w) = windows {
        tr = tr.with_windows(w);
    }
    for k in 0..path.len() {
        let prev = if k == 0 { 0.0 } else { path.l_lower[k - 1] };
        if tr.observe(k, path.times[k], path.states[k], prev, path.l_lower[k]).is_break() {
            break;
        }
    }
    tr.into_stats()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strip() -> ReflectionSpec {
        ReflectionSpec::strip_with(1.0, 2.0, 0.5, -0.5).unwrap()
    }

    fn path_from(states: &[Vec2]) -> ReflectedPath {
        let spec = strip();
        let mut p = ReflectedPath::with_start(0.0, states[0], &spec, states.len());
        for (k, w) in states.windows(2).enumerate() {
            let step = crate::reflect::one_step_reflect(w[0], w[1] - w[0], &spec).unwrap();
            p.push_step((k + 1) as f64, &step, &spec);
        }
        p
    }

    #[test]
    fn never_touching_upper_face() {
        let p = path_from(&[Vec2::new(0.0, 1.5), Vec2::new(0.1, 1.0), Vec2::new(0.2, 1.4)]);
        let s = excursion_stats(&p, &strip(), 1e-12, None);
        assert!(s.s_up.is_empty());
        assert_eq!(s.s_down, vec![1]);
        assert_eq!(s.max_window_discrepancy(), 0);
    }

    #[test]
    fn zigzag_alternation() {
        let mut states = vec![Vec2::new(0.0, 1.5)];
        for i in 0..3 {
            let x = i as f64;
            states.push(Vec2::new(x + 0.1, 1.0));
            states.push(Vec2::new(x + 0.2, 1.5));
            states.push(Vec2::new(x + 0.3, 2.0));
            states.push(Vec2::new(x + 0.4, 1.5));
        }
        let p = path_from(&states);
        let s = excursion_stats(&p, &strip(), 1e-12, None);
        assert_eq!(s.s_down, vec![1, 5, 9]);
        assert_eq!(s.s_up, vec![3, 7, 11]);
        assert_eq!(s.s_up_minus, vec![1, 5, 9]);
        assert!(s.alternates());
        assert_eq!(s.displacements.len(), 2);
        assert!((s.displacements[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn window_counts() {
        // Windows on the x coordinate via LogScale at y = π/2 (log sin = 0).
        let spec = ReflectionSpec::strip_with(1.0, 2.0, 0.0, 0.0).unwrap();
        let mid = std::f64::consts::FRAC_PI_2;
        let seq = [
            (0.0, mid),
            (0.2, 1.0),
            (0.4, mid),
            (0.9, 2.0), // up hit in window 0, its lower visit at x=0.2 inside
            (1.0, mid),
            (1.05, 2.0), // no lower visit in between: not an alternation
            (1.1, 1.0),
            (1.5, mid),
            (2.1, 2.0), // window 2 opened at x=2.1; lower visit in window 1
        ];
        let states: Vec<Vec2> = seq.iter().map(|&(x, y)| Vec2::new(x, y)).collect();
        let mut tr = ExcursionTracker::new(spec, 1e-12).with_windows(WindowSpec {
            observable: Observable::LogScale,
            start: 0.0,
            width: 1.0,
            count: 3,
        });
        for (k, z) in states.iter().enumerate() {
            let _ = tr.observe(k, k as f64, *z, 0.0, 0.0);
        }
        let s = tr.into_stats();
        assert_eq!(s.window_starts, vec![0, 4, 8]);
        assert_eq!(s.n_big_d, vec![1, 0, 1]);
        assert_eq!(s.n_d, vec![1, 0, 0]);
        assert_eq!(s.max_window_discrepancy(), 1);
    }

    #[test]
    fn bridge_counts_near_misses() {
        let spec = strip();
        let feed = |tr: &mut ExcursionTracker| {
            let mut z = Vec2::new(0.0, 1.0 + 1e-4);
            for k in 1..200 {
                let step = crate::reflect::one_step_reflect(z, Vec2::new(0.01, 0.0), &spec).unwrap();
                let _ = tr.on_step(k, k as f64, &step);
                z = step.post_state;
            }
        };
        let mut plain = ExcursionTracker::new(spec, 1e-12);
        feed(&mut plain);
        assert!(plain.stats().s_down.is_empty());
        // exp(-2 d0 d1 / dt) is essentially 1 at distance 1e-4 with dt = 1.
        let mut bridged = ExcursionTracker::new(spec, 1e-12).with_bridge(7, 1.0);
        feed(&mut bridged);
        assert_eq!(bridged.stats().s_down.first(), Some(&1));
    }
}

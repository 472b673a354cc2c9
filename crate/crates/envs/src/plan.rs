//! Effector trajectories: macro expansion into constant-velocity phases and
//! the low-level velocity command, with their vector–Jacobian products.

use softgrad_core::{Real, Vec3};

/// Where a waypoint coordinate comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Src {
    Const,
    Start(usize),
    Pick(usize),
    Place(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Waypoint<T> {
    pub p: Vec3<T>,
    pub src: [Src; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Grasp {
    Keep,
    Attach,
    Release,
}

/// A constant-velocity segment of `steps` substeps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Phase<T> {
    pub steps: usize,
    pub linear: Vec3<T>,
    pub angular: T,
    pub grasp: Grasp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MacroKind {
    Push,
    PickPlace,
}

impl MacroKind {
    pub fn phase_count(self) -> usize {
        match self {
            MacroKind::Push => 4,
            MacroKind::PickPlace => 6,
        }
    }
}

/// Heights and phase durations of a macro expansion.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroLayout<T> {
    pub kind: MacroKind,
    /// Height the gripper travels at between contacts.
    pub transit_z: T,
    /// Tool height while pushing; unused for pick-and-place.
    pub push_z: T,
    /// One duration (s) per phase.
    pub durations: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bound {
    Free,
    Lo,
    Hi,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub phases: Vec<Phase<T>>,
    pub waypoints: Vec<Waypoint<T>>,
    pub dt: T,
    bounds: Option<([Bound; 3], Bound)>,
}

/// Cotangents of a trajectory's inputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryCot<T> {
    pub start: Vec3<T>,
    pub angle: T,
    pub pick: Vec3<T>,
    pub place: Vec3<T>,
    pub linear: Vec3<T>,
    pub angular: T,
}

impl<T: Real> TrajectoryCot<T> {
    pub fn zero() -> Self {
        Self { start: Vec3::zero(), angle: T::zero(), pick: Vec3::zero(), place: Vec3::zero(), linear: Vec3::zero(), angular: T::zero() }
    }
}

fn steps_for<T: Real>(duration: T, dt: T) -> usize {
    (duration / dt).round().to_usize().unwrap_or(1).max(1)
}

/// Expands `(start, end)` into the phase sequence of `layout.kind`. Each
/// phase moves the gripper between consecutive waypoints at constant velocity.
pub fn expand_macro<T: Real>(layout: &MacroLayout<T>, start: Vec3<T>, end: Vec3<T>, from: Vec3<T>, dt: T) -> Trajectory<T> {
    use Src::*;
    let (tz, pz) = (layout.transit_z, layout.push_z);
    let w = |p: Vec3<T>, src: [Src; 3]| Waypoint { p, src };
    let origin = w(from, [Start(0), Start(1), Start(2)]);
    let (waypoints, grasps) = match layout.kind {
        MacroKind::Push => (
            vec![
                origin,
                w(Vec3::new(start[0], start[1], tz), [Pick(0), Pick(1), Const]),
                w(Vec3::new(start[0], start[1], pz), [Pick(0), Pick(1), Const]),
                w(Vec3::new(end[0], end[1], pz), [Place(0), Place(1), Const]),
                w(Vec3::new(end[0], end[1], tz), [Place(0), Place(1), Const]),
            ],
            vec![Grasp::Keep; 4],
        ),
        MacroKind::PickPlace => (
            vec![
                origin,
                w(Vec3::new(start[0], start[1], tz), [Pick(0), Pick(1), Const]),
                w(start, [Pick(0), Pick(1), Pick(2)]),
                w(Vec3::new(start[0], start[1], tz), [Pick(0), Pick(1), Const]),
                w(Vec3::new(end[0], end[1], tz), [Place(0), Place(1), Const]),
                w(end, [Place(0), Place(1), Place(2)]),
                w(Vec3::new(end[0], end[1], tz), [Place(0), Place(1), Const]),
            ],
            vec![Grasp::Keep, Grasp::Keep, Grasp::Attach, Grasp::Keep, Grasp::Keep, Grasp::Release],
        ),
    };
    let phases = waypoints
        .windows(2)
        .zip(&layout.durations)
        .zip(grasps)
        .map(|((pair, &d), grasp)| {
            let steps = steps_for(d, dt);
            let linear = (pair[1].p - pair[0].p) / (T::from_usize_lossy(steps) * dt);
            Phase { steps, linear, angular: T::zero(), grasp }
        })
        .collect();
    Trajectory { phases, waypoints, dt, bounds: None }
}

/// One phase at velocity `(v, w)`, with each component limited so the pose
/// stays inside `[lo, hi]` and the angle inside `angle_range` at the end.
#[allow(clippy::too_many_arguments)]
pub fn low_level<T: Real>(
    v: Vec3<T>,
    w: T,
    position: Vec3<T>,
    angle: T,
    lo: Vec3<T>,
    hi: Vec3<T>,
    angle_range: (T, T),
    steps: usize,
    dt: T,
) -> Trajectory<T> {
    let span = T::from_usize_lossy(steps) * dt;
    let limit = |x: T, p: T, lo: T, hi: T| -> (T, Bound) {
        let (a, b) = ((lo - p) / span, (hi - p) / span);
        if x < a {
            (a, Bound::Lo)
        } else if x > b {
            (b, Bound::Hi)
        } else {
            (x, Bound::Free)
        }
    };
    let mut linear = Vec3::zero();
    let mut bl = [Bound::Free; 3];
    for a in 0..3 {
        let (x, b) = limit(v[a], position[a], lo[a], hi[a]);
        linear[a] = x;
        bl[a] = b;
    }
    let (angular, ba) = limit(w, angle, angle_range.0, angle_range.1);
    let end = position + linear * span;
    Trajectory {
        phases: vec![Phase { steps, linear, angular, grasp: Grasp::Keep }],
        waypoints: vec![
            Waypoint { p: position, src: [Src::Start(0), Src::Start(1), Src::Start(2)] },
            Waypoint { p: end, src: [Src::Const; 3] },
        ],
        dt,
        bounds: Some((bl, ba)),
    }
}

impl<T: Real> Trajectory<T> {
    /// The effector stays at `position` for `steps` substeps.
    pub fn hold(position: Vec3<T>, steps: usize, dt: T) -> Self {
        let wp = Waypoint { p: position, src: [Src::Start(0), Src::Start(1), Src::Start(2)] };
        Trajectory {
            phases: vec![Phase { steps, linear: Vec3::zero(), angular: T::zero(), grasp: Grasp::Release }],
            waypoints: vec![wp, wp],
            dt,
            bounds: None,
        }
    }

    pub fn total_steps(&self) -> usize {
        self.phases.iter().map(|p| p.steps).sum()
    }

    /// Pulls per-phase velocity cotangents `(v̄, ω̄)` back to the inputs.
    pub fn vjp(&self, phase_bar: &[(Vec3<T>, T)]) -> TrajectoryCot<T> {
        let mut out = TrajectoryCot::zero();
        if let Some((bl, ba)) = self.bounds {
            let span = T::from_usize_lossy(self.phases[0].steps) * self.dt;
            let (vb, wb) = phase_bar[0];
            for a in 0..3 {
                match bl[a] {
                    Bound::Free => out.linear[a] += vb[a],
                    _ => out.start[a] -= vb[a] / span,
                }
            }
            match ba {
                Bound::Free => out.angular += wb,
                _ => out.angle -= wb / span,
            }
            return out;
        }
        let mut wp_bar = vec![Vec3::zero(); self.waypoints.len()];
        for (k, (ph, (vb, _))) in self.phases.iter().zip(phase_bar).enumerate() {
            let g = *vb / (T::from_usize_lossy(ph.steps) * self.dt);
            wp_bar[k + 1] += g;
            wp_bar[k] -= g;
        }
        for (wp, bar) in self.waypoints.iter().zip(&wp_bar) {
            for a in 0..3 {
                match wp.src[a] {
                    Src::Const => {}
                    Src::Start(i) => out.start[i] += bar[a],
                    Src::Pick(i) => out.pick[i] += bar[a],
                    Src::Place(i) => out.place[i] += bar[a],
                }
            }
        }
        out
    }
}

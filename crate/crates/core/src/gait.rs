//! Binary foot-contact references decoded from the oscillator network.

use std::fmt::Write as _;

use crate::cpg::{
    phase_of, GaitParameters, HopfParameters, OscillatorNetwork, OscillatorState, INNER_DT, NUM_LEGS,
};
use crate::{Error, Result};

/// Default control period (40 Hz).
pub const CONTROL_DT: f64 = 0.025;

/// Simulated seconds the network runs before the first sample is taken.
pub const SETTLE_SECONDS: f64 = 5.0;

/// Future offsets (in control steps) included in the policy-facing window.
pub const WINDOW_OFFSETS: [usize; 5] = [0, 1, 2, 10, 50];

pub const WINDOW_LEN: usize = WINDOW_OFFSETS.len() * NUM_LEGS;

pub const CSV_HEADER: &str = "t,fr,fl,rr,rl";

/// Contact flag: `+1` stance, `-1` swing.
pub type Contact = i8;

pub fn decode_contact(state: &OscillatorState) -> Result<Contact> {
    Ok(if phase_of(state)? > 0.0 { 1 } else { -1 })
}

pub fn decode_contacts(states: &[OscillatorState; NUM_LEGS]) -> Result<[Contact; NUM_LEGS]> {
    let mut out = [0; NUM_LEGS];
    for (o, s) in out.iter_mut().zip(states) {
        *o = decode_contact(s)?;
    }
    Ok(out)
}

/// Time-indexed contact matrix, one row per control step, columns in leg order.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactTrajectory {
    rows: Vec<[Contact; NUM_LEGS]>,
    pub dt: f64,
    pub start_time: f64,
}

impl ContactTrajectory {
    pub fn new(rows: Vec<[Contact; NUM_LEGS]>, dt: f64, start_time: f64) -> Result<Self> {
        if let Some(bad) = rows.iter().flatten().find(|&&v| v != 1 && v != -1) {
            return Err(Error::InvalidContact(*bad as f64));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("control period must be positive, got {dt}")));
        }
        Ok(Self { rows, dt, start_time })
    }

    pub fn rows(&self) -> &[[Contact; NUM_LEGS]] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, leg: usize) -> impl Iterator<Item = Contact> + '_ {
        self.rows.iter().map(move |r| r[leg])
    }

    /// Entry-wise complement (every stance becomes swing and vice versa).
    pub fn negated(&self) -> Self {
        Self {
            rows: self.rows.iter().map(|r| r.map(|v| -v)).collect(),
            dt: self.dt,
            start_time: self.start_time,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 24);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for (k, r) in self.rows.iter().enumerate() {
            let t = self.start_time + k as f64 * self.dt;
            let _ = writeln!(out, "{t:.6},{},{},{},{}", r[0], r[1], r[2], r[3]);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            other => {
                return Err(Error::Parse(format!(
                    "expected header `{CSV_HEADER}`, found {other:?}"
                )))
            }
        }
        let mut times = Vec::new();
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(Error::Parse(format!("row {}: expected 5 fields", n + 1)));
            }
            let t: f64 = fields[0]
                .parse()
                .map_err(|e| Error::Parse(format!("row {}: {e}", n + 1)))?;
            let mut row = [0; NUM_LEGS];
            for (dst, src) in row.iter_mut().zip(&fields[1..]) {
                *dst = src
                    .parse()
                    .map_err(|e| Error::Parse(format!("row {}: {e}", n + 1)))?;
            }
            times.push(t);
            rows.push(row);
        }
        let start_time = times.first().copied().unwrap_or(0.0);
        let dt = if times.len() >= 2 {
            ((times[times.len() - 1] - times[0]) / (times.len() - 1) as f64 * 1e6).round() / 1e6
        } else {
            CONTROL_DT
        };
        Self::new(rows, dt, start_time)
    }
}

/// Runs a synchronized network and samples its contacts at the control rate.
pub fn generate_reference(
    gait: &GaitParameters,
    hopf: &HopfParameters,
    horizon: usize,
    control_dt: f64,
) -> Result<ContactTrajectory> {
    let needed = WINDOW_OFFSETS[WINDOW_OFFSETS.len() - 1] + 1;
    if horizon < needed {
        return Err(Error::InvalidParameter(format!(
            "horizon must be at least {needed} steps, got {horizon}"
        )));
    }
    let substeps = inner_substeps(control_dt)?;
    let mut net = OscillatorNetwork::synchronized(*hopf, *gait, 1.0)?;
    net.advance(SETTLE_SECONDS, INNER_DT)?;
    let mut rows = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        rows.push(decode_contacts(&net.states)?);
        for _ in 0..substeps {
            net.step(INNER_DT)?;
        }
    }
    ContactTrajectory::new(rows, control_dt, 0.0)
}

/// Number of 1 ms inner steps in one control period.
pub fn inner_substeps(control_dt: f64) -> Result<usize> {
    let n = (control_dt / INNER_DT).round();
    if n < 1.0 || (n * INNER_DT - control_dt).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "control period {control_dt} s is not a multiple of the {INNER_DT} s inner step"
        )));
    }
    Ok(n as usize)
}

/// Contacts at the window offsets starting from step `t`, offset-major then leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceWindow(pub [Contact; WINDOW_LEN]);

impl ReferenceWindow {
    pub fn as_f64(&self) -> [f64; WINDOW_LEN] {
        self.0.map(f64::from)
    }

    /// The slice for the current step.
    pub fn current(&self) -> [Contact; NUM_LEGS] {
        [self.0[0], self.0[1], self.0[2], self.0[3]]
    }

    pub fn from_rows(rows: &[[Contact; NUM_LEGS]; WINDOW_OFFSETS.len()]) -> Self {
        let mut out = [0; WINDOW_LEN];
        for (k, row) in rows.iter().enumerate() {
            out[k * NUM_LEGS..(k + 1) * NUM_LEGS].copy_from_slice(row);
        }
        Self(out)
    }
}

pub fn reference_window(traj: &ContactTrajectory, t: usize) -> Result<ReferenceWindow> {
    reference_window_with(traj, t, &WINDOW_OFFSETS)
}

pub fn reference_window_with(
    traj: &ContactTrajectory,
    t: usize,
    offsets: &[usize; WINDOW_OFFSETS.len()],
) -> Result<ReferenceWindow> {
    let last = t + offsets.iter().copied().max().unwrap_or(0);
    if last >= traj.len() {
        return Err(Error::OutOfRange { index: last, len: traj.len() });
    }
    let rows = offsets.map(|o| traj.rows[t + o]);
    Ok(ReferenceWindow::from_rows(&rows))
}

/// Fraction of matching entries over all rows and legs.
pub fn hamming_similarity(a: &ContactTrajectory, b: &ContactTrajectory) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} rows", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::ShapeMismatch("empty trajectories".into()));
    }
    let equal = a
        .rows
        .iter()
        .zip(&b.rows)
        .map(|(ra, rb)| ra.iter().zip(rb).filter(|(x, y)| x == y).count())
        .sum::<usize>();
    Ok(equal as f64 / (a.len() * NUM_LEGS) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitMeasurement {
    pub frequency: f64,
    pub duty_factor: f64,
}

/// Frequency from touchdown-to-touchdown intervals and stance fraction over
/// whole cycles, averaged over legs.
pub fn measure_gait(traj: &ContactTrajectory) -> Result<GaitMeasurement> {
    let mut freq_sum = 0.0;
    let mut duty_sum = 0.0;
    for leg in 0..NUM_LEGS {
        let col: Vec<Contact> = traj.column(leg).collect();
        let edges: Vec<usize> = (1..col.len())
            .filter(|&k| col[k - 1] == -1 && col[k] == 1)
            .collect();
        if edges.len() < 4 {
            return Err(Error::InsufficientCycles(format!(
                "leg {leg} has {} complete cycles, need 3",
                edges.len().saturating_sub(1)
            )));
        }
        let first = edges[0];
        let last = edges[edges.len() - 1];
        let span = (last - first) as f64;
        let interval = span / (edges.len() - 1) as f64;
        freq_sum += 1.0 / (interval * traj.dt);
        let stance = col[first..last].iter().filter(|&&v| v == 1).count();
        duty_sum += stance as f64 / span;
    }
    Ok(GaitMeasurement {
        frequency: freq_sum / NUM_LEGS as f64,
        duty_factor: duty_sum / NUM_LEGS as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn trot(f: f64, duty: f64, horizon: usize) -> ContactTrajectory {
        generate_reference(
            &GaitParameters::trot(f, duty),
            &HopfParameters::default(),
            horizon,
            CONTROL_DT,
        )
        .unwrap()
    }

    fn square_wave(stance: usize, swing: usize, cycles: usize) -> ContactTrajectory {
        let mut rows = Vec::new();
        for _ in 0..cycles {
            rows.extend(std::iter::repeat_n([1; 4], stance));
            rows.extend(std::iter::repeat_n([-1; 4], swing));
        }
        ContactTrajectory::new(rows, CONTROL_DT, 0.0).unwrap()
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode_contact(&OscillatorState::new(0.0, 1.0)).unwrap(), 1);
        assert_eq!(decode_contact(&OscillatorState::new(0.0, -1.0)).unwrap(), -1);
        assert_eq!(decode_contact(&OscillatorState::new(1.0, 0.0)).unwrap(), -1);
        assert!(decode_contact(&OscillatorState::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn two_hertz_trot_has_twenty_step_period() {
        let traj = trot(2.0, 0.5, 200);
        let fr: Vec<Contact> = traj.column(0).collect();
        let edges: Vec<usize> = (1..fr.len()).filter(|&k| fr[k - 1] == -1 && fr[k] == 1).collect();
        for w in edges.windows(2) {
            assert_eq!(w[1] - w[0], 20);
        }
        let stance = fr[edges[0]..edges[0] + 20].iter().filter(|&&v| v == 1).count();
        assert!((9..=11).contains(&stance), "stance {stance}");
    }

    #[test]
    fn cycle_length_scales_with_period() {
        for (f, steps) in [(1.5, 40.0 / 1.5), (2.5, 16.0)] {
            let m = measure_gait(&trot(f, 0.5, 400)).unwrap();
            assert!((1.0 / (m.frequency * CONTROL_DT) - steps).abs() / steps < 0.02);
        }
    }

    #[test]
    fn trot_diagonal_pairs() {
        let traj = trot(2.0, 0.5, 400);
        let agree = |a: usize, b: usize| traj.rows().iter().filter(|r| r[a] == r[b]).count() as f64 / traj.len() as f64;
        assert!(agree(0, 3) >= 0.95);
        assert!(agree(1, 2) >= 0.95);
        assert!(1.0 - agree(0, 1) >= 0.95);
    }

    #[test]
    fn round_trip_recovers_gait() {
        for f in [1.5, 2.0, 2.5, 3.0] {
            for duty in [0.4, 0.5, 0.6] {
                let m = measure_gait(&trot(f, duty, 400)).unwrap();
                assert!((m.frequency - f).abs() / f < 0.02, "f={f} duty={duty} got {m:?}");
                assert!((m.duty_factor - duty).abs() < 0.05, "f={f} duty={duty} got {m:?}");
            }
        }
    }

    #[test]
    fn horizon_too_small() {
        let r = generate_reference(&GaitParameters::default(), &HopfParameters::default(), 50, CONTROL_DT);
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn window_examples() {
        let all_stance = ContactTrajectory::new(vec![[1; 4]; 60], CONTROL_DT, 0.0).unwrap();
        assert_eq!(reference_window(&all_stance, 0).unwrap().0, [1; WINDOW_LEN]);

        let traj = trot(2.0, 0.5, 120);
        let w = reference_window(&traj, 0).unwrap();
        let mut expected = Vec::new();
        for row in [0usize, 1, 2, 10, 50] {
            expected.extend_from_slice(&traj.rows()[row]);
        }
        assert_eq!(w.0.to_vec(), expected);
        assert_eq!(w.current(), traj.rows()[0]);

        let n = traj.len();
        assert!(reference_window(&traj, n - 51).is_ok());
        assert!(matches!(reference_window(&traj, n - 50), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn measure_square_wave() {
        let m = measure_gait(&square_wave(15, 5, 6)).unwrap();
        assert_abs_diff_eq!(m.frequency, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.duty_factor, 0.75, epsilon = 1e-12);
        let constant = ContactTrajectory::new(vec![[1; 4]; 100], CONTROL_DT, 0.0).unwrap();
        assert!(matches!(measure_gait(&constant), Err(Error::InsufficientCycles(_))));
    }

    #[test]
    fn hamming_examples() {
        let a = trot(2.0, 0.5, 100);
        assert_eq!(hamming_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(hamming_similarity(&a, &a.negated()).unwrap(), 0.0);
        let short = trot(2.0, 0.5, 80);
        assert!(matches!(hamming_similarity(&a, &short), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn hamming_with_random_flips() {
        use rand::{Rng, SeedableRng};
        let a = trot(2.0, 0.5, 1000);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let rows = a
            .rows()
            .iter()
            .map(|r| r.map(|v| if rng.random_bool(0.2) { -v } else { v }))
            .collect();
        let b = ContactTrajectory::new(rows, CONTROL_DT, 0.0).unwrap();
        let s = hamming_similarity(&a, &b).unwrap();
        assert!((s - 0.8).abs() < 0.03, "{s}");
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let traj = trot(2.5, 0.5, 60);
        let text = traj.to_csv();
        assert!(text.starts_with("t,fr,fl,rr,rl\n0.000000,"));
        let back = ContactTrajectory::from_csv(&text).unwrap();
        assert_eq!(back, traj);
        assert!(ContactTrajectory::from_csv("a,b\n").is_err());
        assert!(matches!(
            ContactTrajectory::from_csv("t,fr,fl,rr,rl\n0.0,1,0,1,1\n"),
            Err(Error::InvalidContact(_))
        ));
    }

    fn arb_traj(len: usize) -> impl Strategy<Value = ContactTrajectory> {
        prop::collection::vec(prop::array::uniform4(prop::bool::ANY), len).prop_map(|rows| {
            let rows = rows.into_iter().map(|r| r.map(|b| if b { 1 } else { -1 })).collect();
            ContactTrajectory::new(rows, CONTROL_DT, 0.0).unwrap()
        })
    }

    proptest! {
        #[test]
        fn hamming_properties((a, b) in (1usize..40).prop_flat_map(|n| (arb_traj(n), arb_traj(n)))) {
            let ab = hamming_similarity(&a, &b).unwrap();
            prop_assert_eq!(ab, hamming_similarity(&b, &a).unwrap());
            prop_assert!((ab + hamming_similarity(&a, &b.negated()).unwrap() - 1.0).abs() < 1e-12);
            prop_assert_eq!(ab == 1.0, a == b);
        }
    }
}

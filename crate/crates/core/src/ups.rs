//! UPS protection and power-routing state machine.
//!
//! Modes: `Normal` (grid-tied), `Emergency` (islanded, battery feeds the
//! facility) and `Charging` (grid-tied, replenishing the battery). The only
//! legal transitions are Normal/Charging -> Emergency on a threshold trip,
//! Emergency -> Charging on permitted reconnection and Charging -> Normal on
//! a full battery.

use std::collections::VecDeque;

use crate::dcload::DcDemand;
use crate::{SimError, SimResult};

pub const MWH_PER_MW_S: f64 = 1.0 / 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsTopology {
    Offline,
    Online,
    Drups,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReconnectScheme {
    Instant,
    Delayed {
        t_delay_s: f64,
    },
    DisturbanceCounting {
        n_max: usize,
        window_s: f64,
        t_delay_s: f64,
    },
    Manual,
}

/// Voltage the UPS supplies to the islanded facility.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoltageScheme {
    /// Hold 1.0 pu.
    Nominal,
    /// Hold the grid voltage measured `delta` before the trip.
    Prefault,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsMode {
    Normal,
    Emergency,
    Charging,
}

impl UpsMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            UpsMode::Normal => "NORMAL",
            UpsMode::Emergency => "EMERGENCY",
            UpsMode::Charging => "CHARGING",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripCause {
    UnderFrequency,
    OverFrequency,
    UnderVoltage,
    OverVoltage,
}

impl TripCause {
    pub fn as_str(&self) -> &'static str {
        match self {
            TripCause::UnderFrequency => "under_frequency",
            TripCause::OverFrequency => "over_frequency",
            TripCause::UnderVoltage => "under_voltage",
            TripCause::OverVoltage => "over_voltage",
        }
    }
}

#[derive(Debug, Clone)]
pub struct UpsConfig {
    /// Frequency deviation thresholds (Hz), `f_min < 0 < f_max`.
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    /// Voltage deviation thresholds (pu), `v_min < 0 < v_max`.
    pub v_min_pu: f64,
    pub v_max_pu: f64,
    /// Conversion loss coefficient; nonzero only for the online topology.
    pub beta: f64,
    /// Battery charging power drawn on top of the load while in Charging.
    pub p_charge_mw: f64,
    /// Battery capacity.
    pub e_max_mwh: f64,
    pub topology: UpsTopology,
    pub reconnect: ReconnectScheme,
    pub v_scheme: VoltageScheme,
    /// Align the internal voltage angle with the grid before reconnecting.
    pub angle_comp: bool,
    /// Measurement look-back used for the pre-fault voltage and the
    /// reconnection angle (s).
    pub delta_s: f64,
}

impl UpsConfig {
    pub fn validate(&self) -> SimResult<()> {
        if !(self.f_min_hz < 0.0 && 0.0 < self.f_max_hz) {
            return Err(SimError::Config(format!(
                "frequency thresholds must satisfy f_min < 0 < f_max, got [{}, {}]",
                self.f_min_hz, self.f_max_hz
            )));
        }
        if !(self.v_min_pu < 0.0 && 0.0 < self.v_max_pu) {
            return Err(SimError::Config(format!(
                "voltage thresholds must satisfy v_min < 0 < v_max, got [{}, {}]",
                self.v_min_pu, self.v_max_pu
            )));
        }
        if !(self.beta >= 0.0) {
            return Err(SimError::Config(format!(
                "UPS loss coefficient must be >= 0, got {}",
                self.beta
            )));
        }
        if self.beta != 0.0 && self.topology != UpsTopology::Online {
            return Err(SimError::Config(
                "UPS loss coefficient must be 0 unless the topology is online".into(),
            ));
        }
        if !(self.e_max_mwh > 0.0) {
            return Err(SimError::Config(format!(
                "battery capacity must be > 0, got {}",
                self.e_max_mwh
            )));
        }
        if !(self.p_charge_mw >= 0.0) {
            return Err(SimError::Config(format!(
                "charging power must be >= 0, got {}",
                self.p_charge_mw
            )));
        }
        if !(self.delta_s > 0.0) {
            return Err(SimError::Config(format!(
                "measurement look-back must be > 0, got {}",
                self.delta_s
            )));
        }
        match self.reconnect {
            ReconnectScheme::Delayed { t_delay_s } if !(t_delay_s >= 0.0) => Err(SimError::Config(
                format!("reconnection delay must be >= 0, got {t_delay_s}"),
            )),
            ReconnectScheme::DisturbanceCounting {
                n_max,
                window_s,
                t_delay_s,
            } if n_max == 0 || !(window_s > 0.0) || !(t_delay_s >= 0.0) => {
                Err(SimError::Config(format!(
                    "disturbance counting parameters invalid: n_max={n_max} window={window_s} delay={t_delay_s}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Grid quantities as seen by the UPS at its point of connection.
#[derive(Debug, Clone, Copy)]
pub struct GridMeasurement {
    /// Voltage magnitude (pu).
    pub v_pu: f64,
    /// Continuous (unwrapped) voltage angle (rad).
    pub phi_rad: f64,
    /// Frequency deviation from nominal (Hz).
    pub f_dev_hz: f64,
    /// Voltage deviation from nominal (pu).
    pub v_dev_pu: f64,
    pub t_s: f64,
}

#[derive(Debug, Clone)]
pub struct UpsState {
    pub mode: UpsMode,
    /// Stored energy (MWh).
    pub e_mwh: f64,
    /// Time the grid has continuously been inside bounds (s).
    pub t_ok_s: f64,
    /// Timestamps of entries into Emergency, pruned to the counting window.
    pub disturbance_times: VecDeque<f64>,
    /// Voltage the UPS holds while islanded.
    pub held_v_pu: f64,
    /// Internal angle while islanded (frozen, unwrapped).
    pub held_phi_rad: f64,
    /// Angle correction applied at the last reconnection.
    pub angle_offset_rad: f64,
    /// Look-back ring buffer of (t, v, phi).
    history: VecDeque<(f64, f64, f64)>,
    /// Operator release for the manual reconnection scheme.
    pub manual_release: bool,
    /// Battery ran out while islanded; facility load is forced to zero.
    pub depleted: bool,
    prev_in_bounds: bool,
    history_warned: bool,
}

impl UpsState {
    pub fn new(e_max_mwh: f64) -> Self {
        Self {
            mode: UpsMode::Normal,
            e_mwh: e_max_mwh,
            t_ok_s: 0.0,
            disturbance_times: VecDeque::new(),
            held_v_pu: 1.0,
            held_phi_rad: 0.0,
            angle_offset_rad: 0.0,
            history: VecDeque::new(),
            manual_release: false,
            depleted: false,
            prev_in_bounds: true,
            history_warned: false,
        }
    }

    /// Newest history sample at or before `t_back`; falls back to the oldest
    /// sample when the buffer does not reach back far enough.
    fn lookup(&self, t_back: f64) -> Option<(f64, f64, bool)> {
        let mut found = None;
        for &(t, v, phi) in self.history.iter() {
            if t <= t_back {
                found = Some((v, phi));
            } else {
                break;
            }
        }
        match found {
            Some((v, phi)) => Some((v, phi, false)),
            None => self.history.front().map(|&(_, v, phi)| (v, phi, true)),
        }
    }
}

/// Trip predicate of the disconnection logic: out of range on either
/// measured quantity, strict inequalities.
pub fn check_disconnect(m: &GridMeasurement, c: &UpsConfig) -> bool {
    disconnect_cause(m, c).is_some()
}

/// Which threshold fired, if any. Voltage checks take precedence in the
/// reported cause when several fire at once: a fault collapses the voltage
/// directly while the frequency estimate only spikes through the angle jump.
pub fn disconnect_cause(m: &GridMeasurement, c: &UpsConfig) -> Option<TripCause> {
    if m.v_dev_pu < c.v_min_pu {
        Some(TripCause::UnderVoltage)
    } else if m.v_dev_pu > c.v_max_pu {
        Some(TripCause::OverVoltage)
    } else if m.f_dev_hz < c.f_min_hz {
        Some(TripCause::UnderFrequency)
    } else if m.f_dev_hz > c.f_max_hz {
        Some(TripCause::OverFrequency)
    } else {
        None
    }
}

/// Reconnection predicate for a UPS currently in Emergency mode.
pub fn reconnection_permitted(
    s: &UpsState,
    c: &UpsConfig,
    grid_in_bounds: bool,
    t: f64,
) -> bool {
    debug_assert_eq!(s.mode, UpsMode::Emergency);
    match c.reconnect {
        ReconnectScheme::Instant => grid_in_bounds,
        ReconnectScheme::Delayed { t_delay_s } => {
            grid_in_bounds && s.t_ok_s >= t_delay_s - 1e-9
        }
        ReconnectScheme::DisturbanceCounting {
            n_max,
            window_s,
            t_delay_s,
        } => {
            let recent = s
                .disturbance_times
                .iter()
                .filter(|&&td| td > t - window_s)
                .count();
            grid_in_bounds && s.t_ok_s >= t_delay_s - 1e-9 && recent < n_max
        }
        // the operator release also waits for a healthy grid: reconnection
        // never happens while measurements are out of bounds
        ReconnectScheme::Manual => s.manual_release && grid_in_bounds,
    }
}

/// Everything a single UPS step reports back to the engine.
#[derive(Debug, Clone, Copy, Default)]
pub struct UpsStepOutput {
    pub p_grid_mw: f64,
    pub q_grid_mvar: f64,
    pub transition: Option<(UpsMode, UpsMode, Option<TripCause>)>,
    /// Rotation to apply to internal machine states when the internal angle
    /// was re-aligned at reconnection.
    pub reconnect_angle_jump: Option<f64>,
    pub bounds_recovered: bool,
    pub depleted_now: bool,
    pub history_underflow: bool,
}

/// One protected unit: configuration plus state, advanced step by step.
#[derive(Debug, Clone)]
pub struct UpsUnit {
    pub config: UpsConfig,
    pub state: UpsState,
}

impl UpsUnit {
    pub fn new(config: UpsConfig) -> Self {
        let state = UpsState::new(config.e_max_mwh);
        Self { config, state }
    }

    /// Record a measurement into the look-back buffer. Called once per step
    /// before `step`, and once at initialization.
    pub fn record_measurement(&mut self, t: f64, v: f64, phi: f64) {
        self.state.history.push_back((t, v, phi));
        let keep_since = t - self.config.delta_s - 1.0;
        while let Some(&(t0, _, _)) = self.state.history.front() {
            if t0 < keep_since && self.state.history.len() > 2 {
                self.state.history.pop_front();
            } else {
                break;
            }
        }
    }

    /// Internal phasor (magnitude, unwrapped angle) supplied to the facility
    /// loads under the present mode.
    pub fn internal_phasor(&self, m: &GridMeasurement) -> (f64, f64) {
        match self.state.mode {
            UpsMode::Normal | UpsMode::Charging => (m.v_pu, m.phi_rad),
            UpsMode::Emergency => (self.state.held_v_pu, self.state.held_phi_rad),
        }
    }

    /// Advance the state machine by one step and compute the grid-side draw.
    pub fn step(&mut self, m: &GridMeasurement, dc: &DcDemand, dt: f64) -> UpsStepOutput {
        let mut out = UpsStepOutput::default();
        let cause = disconnect_cause(m, &self.config);
        let in_bounds = cause.is_none();

        // elapsed-time-in-bounds accounting; resets on every violation
        if in_bounds {
            if !self.state.prev_in_bounds {
                self.state.t_ok_s = 0.0;
                out.bounds_recovered = true;
            }
            self.state.t_ok_s += dt;
        } else {
            self.state.t_ok_s = 0.0;
        }
        self.state.prev_in_bounds = in_bounds;

        // at most one mode transition per step; protection wins
        match self.state.mode {
            UpsMode::Normal | UpsMode::Charging if cause.is_some() => {
                let from = self.state.mode;
                self.state.mode = UpsMode::Emergency;
                self.state.disturbance_times.push_back(m.t_s);
                self.prune_disturbances(m.t_s);
                self.freeze_internal_phasor(m);
                out.transition = Some((from, UpsMode::Emergency, cause));
            }
            UpsMode::Emergency if reconnection_permitted(&self.state, &self.config, in_bounds, m.t_s) => {
                if self.config.angle_comp {
                    let target = match self.state.lookup(m.t_s - self.config.delta_s) {
                        Some((_, phi, underflow)) => {
                            out.history_underflow = underflow && !self.state.history_warned;
                            self.state.history_warned |= underflow;
                            phi
                        }
                        None => m.phi_rad,
                    };
                    let jump = target - self.state.held_phi_rad;
                    self.state.angle_offset_rad = jump;
                    self.state.held_phi_rad = target;
                    out.reconnect_angle_jump = Some(jump);
                } else {
                    self.state.angle_offset_rad = 0.0;
                }
                self.state.mode = UpsMode::Charging;
                self.state.manual_release = false;
                self.state.depleted = false;
                out.transition = Some((UpsMode::Emergency, UpsMode::Charging, None));
            }
            UpsMode::Charging if self.state.e_mwh >= self.config.e_max_mwh - 1e-12 => {
                self.state.mode = UpsMode::Normal;
                out.transition = Some((UpsMode::Charging, UpsMode::Normal, None));
            }
            _ => {}
        }

        // grid-side draw under the (possibly new) mode
        let supplied = (1.0 + self.config.beta) * dc.p_dc_mw;
        let (p_grid, q_grid) = match self.state.mode {
            UpsMode::Normal => (supplied, dc.q_dc_mvar),
            UpsMode::Emergency => (0.0, 0.0),
            UpsMode::Charging => (supplied + self.config.p_charge_mw, dc.q_dc_mvar),
        };

        // battery energy bookkeeping
        self.state.e_mwh += (p_grid - supplied) * dt * MWH_PER_MW_S;
        if self.state.e_mwh <= 0.0 {
            self.state.e_mwh = 0.0;
            if self.state.mode == UpsMode::Emergency && !self.state.depleted {
                self.state.depleted = true;
                out.depleted_now = true;
            }
        }
        self.state.e_mwh = self.state.e_mwh.min(self.config.e_max_mwh);

        out.p_grid_mw = p_grid;
        out.q_grid_mvar = q_grid;
        out
    }

    fn prune_disturbances(&mut self, t: f64) {
        let window = match self.config.reconnect {
            ReconnectScheme::DisturbanceCounting { window_s, .. } => window_s,
            _ => 120.0,
        };
        while let Some(&t0) = self.state.disturbance_times.front() {
            if t0 <= t - window {
                self.state.disturbance_times.pop_front();
            } else {
                break;
            }
        }
    }

    fn freeze_internal_phasor(&mut self, m: &GridMeasurement) {
        let (v_pref, phi_pref, underflow) = self
            .state
            .lookup(m.t_s - self.config.delta_s)
            .unwrap_or((m.v_pu, m.phi_rad, true));
        if underflow && !self.state.history_warned {
            self.state.history_warned = true;
        }
        self.state.held_v_pu = match (self.config.topology, self.config.v_scheme) {
            // the online UPS keeps supplying what it supplied before the fault
            (UpsTopology::Online, _) => v_pref,
            (_, VoltageScheme::Nominal) => 1.0,
            (_, VoltageScheme::Prefault) => v_pref,
        };
        self.state.held_phi_rad = phi_pref;
    }
}

/// Advance a list of segments, each protecting `share` of the facility
/// demand with its own configuration. Totals are the sums.
pub fn segmented_ups_step(
    segments: &mut [(UpsUnit, f64)],
    m: &GridMeasurement,
    dc: &DcDemand,
    dt: f64,
) -> (f64, f64, Vec<(usize, UpsStepOutput)>) {
    let mut p_total = 0.0;
    let mut q_total = 0.0;
    let mut outputs = Vec::with_capacity(segments.len());
    for (idx, (unit, share)) in segments.iter_mut().enumerate() {
        let out = unit.step(m, &dc.scaled(*share), dt);
        p_total += out.p_grid_mw;
        q_total += out.q_grid_mvar;
        outputs.push((idx, out));
    }
    (p_total, q_total, outputs)
}

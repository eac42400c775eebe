//! Fixed-step hybrid simulation loop.
//!
//! Per-step ordering: (1) advance stochastic drivers and load patterns,
//! (2) advance the facility continuous states against the internal phasor
//! from the previous step, (3) aggregate the facility demand, (4) UPS mode
//! logic and grid injections, (5) network solve, (6) machine and frequency
//! estimator step, (7) scenario events due at this step, (8) log. Discrete
//! switches take effect at step boundaries, so event timing is quantized to
//! one step.

use num_complex::Complex64;

use crate::dcload::motor::{self, MotorParams, MotorState};
use crate::dcload::{
    cpu_raw, dc_demand, gpu_raw, it_filter_step, it_power, zip_power, CpuParams, DcDemand,
    GpuParams, ItState, ZipParams,
};
use crate::grid::{
    gen_step, network_solve, source_injection, Bus, FreqEstimator, GenParams, GenState, Line,
    NetworkModel, PqLoad, SourceSpec, F0_HZ,
};
use crate::stochastic::{jump_step, ou_step, OuParams, RngStream};
use crate::ups::{GridMeasurement, TripCause, UpsConfig, UpsMode, UpsUnit};
use crate::{SimError, SimResult};

/// How the CPU usage is driven. The GPU branch, when present, always runs
/// its pulse train.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LoadPattern {
    /// Fixed CPU usage.
    Constant { u_cpu: f64 },
    /// CPU usage driven by the compound-Poisson jump process, starting
    /// from `u0`.
    Batched { u0: f64 },
    /// Fixed CPU usage with the accelerator pulse train active.
    Ai { u_cpu: f64 },
}

impl LoadPattern {
    fn initial_u(&self) -> f64 {
        match *self {
            LoadPattern::Constant { u_cpu } | LoadPattern::Ai { u_cpu } => u_cpu,
            LoadPattern::Batched { u0 } => u0,
        }
    }
}

/// One data-center definition inside a scenario.
#[derive(Debug, Clone)]
pub struct DcSpec {
    pub name: String,
    pub bus: usize,
    pub cpu: CpuParams,
    pub gpu: Option<GpuParams>,
    pub noise: OuParams,
    pub zip: Option<ZipParams>,
    pub cooling: Option<MotorParams>,
    /// Use the full flux-dynamics motor model instead of the equivalent
    /// circuit.
    pub flux_dynamics: bool,
    pub pattern: LoadPattern,
    /// Protection segments: (UPS configuration, load share). A single
    /// centralized UPS is one segment with share 1.
    pub protection: Vec<(UpsConfig, f64)>,
    /// Time for the facility load to ramp back after a battery-depletion
    /// blackout (cold restart of servers and chillers).
    pub t_restart_s: f64,
}

#[derive(Debug, Clone)]
pub struct GridSpec {
    pub s_sys_mva: f64,
    pub gen_bus: usize,
    pub gen: GenParams,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    /// Washout time constant of the bus frequency estimator.
    pub t_washout_s: f64,
}

#[derive(Debug, Clone)]
pub struct TimedEvent {
    pub t_s: f64,
    pub action: EventAction,
}

#[derive(Debug, Clone)]
pub enum EventAction {
    Fault { bus: usize, y_pu: Complex64 },
    ClearFault,
    OperatorReconnect { dc: usize },
    DemandStep { bus: usize, delta_p_mw: f64, delta_q_mvar: f64 },
    PatternSwitch { dc: usize, pattern: LoadPattern },
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub duration_s: f64,
    pub dt_s: f64,
    pub seed: u64,
    /// Keep every n-th sample in the time series (events are always exact).
    pub log_every: usize,
    pub grid: GridSpec,
    pub dcs: Vec<DcSpec>,
    pub events: Vec<TimedEvent>,
}

impl Scenario {
    pub fn validate(&self) -> SimResult<()> {
        if !(self.dt_s >= 1e-5 && self.dt_s <= 1e-2) {
            return Err(SimError::Config(format!(
                "step size must lie in [1e-5, 1e-2] s, got {}",
                self.dt_s
            )));
        }
        if !(self.duration_s > 0.0) {
            return Err(SimError::Config(format!(
                "duration must be > 0, got {}",
                self.duration_s
            )));
        }
        if self.log_every == 0 {
            return Err(SimError::Config("log_every must be >= 1".into()));
        }
        self.grid.gen.validate()?;
        if self.grid.gen_bus >= self.grid.buses.len() {
            return Err(SimError::Config(format!(
                "generator bus index {} out of range",
                self.grid.gen_bus
            )));
        }
        if !(self.grid.t_washout_s > 0.0) {
            return Err(SimError::Config(
                "frequency washout time constant must be > 0".into(),
            ));
        }
        for b in &self.grid.buses {
            if let Some(z) = &b.zip {
                z.validate()?;
            }
        }
        // NetworkModel::new re-checks line endpoints
        NetworkModel::new(
            self.grid.buses.clone(),
            self.grid.lines.clone(),
            self.grid.s_sys_mva,
        )?;

        for (i, dc) in self.dcs.iter().enumerate() {
            let ctx = |m: String| SimError::Config(format!("dc[{i}] ({}): {m}", dc.name));
            if dc.bus >= self.grid.buses.len() {
                return Err(ctx(format!("bus index {} out of range", dc.bus)));
            }
            dc.cpu.validate()?;
            if let Some(g) = &dc.gpu {
                g.validate()?;
            }
            dc.noise.validate()?;
            if let Some(z) = &dc.zip {
                z.validate()?;
            }
            if let Some(m) = &dc.cooling {
                m.validate()?;
            }
            let u0 = dc.pattern.initial_u();
            if !(0.0..=1.0).contains(&u0) {
                return Err(ctx(format!("initial CPU usage {u0} outside [0,1]")));
            }
            if matches!(dc.pattern, LoadPattern::Ai { .. }) && dc.gpu.is_none() {
                return Err(ctx("the ai pattern requires gpu parameters".into()));
            }
            if dc.protection.is_empty() {
                return Err(ctx("at least one UPS segment is required".into()));
            }
            let share_sum: f64 = dc.protection.iter().map(|(_, s)| s).sum();
            if (share_sum - 1.0).abs() > 1e-9 {
                return Err(ctx(format!("segment shares must sum to 1, got {share_sum}")));
            }
            for (cfg, share) in &dc.protection {
                if !(*share > 0.0) {
                    return Err(ctx(format!("segment share must be > 0, got {share}")));
                }
                cfg.validate()?;
            }
            if dc.flux_dynamics && dc.protection.len() > 1 {
                return Err(ctx(
                    "flux dynamics are only supported with a single centralized UPS".into(),
                ));
            }
            if !(dc.t_restart_s > 0.0) {
                return Err(ctx(format!(
                    "restart ramp time must be > 0, got {}",
                    dc.t_restart_s
                )));
            }
            let mut t_min = dc.cpu.t_filter_s;
            if let Some(g) = &dc.gpu {
                t_min = t_min.min(g.t_filter_s);
            }
            if self.dt_s >= t_min / 2.0 {
                return Err(ctx(format!(
                    "step size {} too large for filter time constant {t_min}",
                    self.dt_s
                )));
            }
        }

        let mut prev_t = 0.0;
        for ev in &self.events {
            if ev.t_s < prev_t {
                return Err(SimError::Config("events must be sorted by time".into()));
            }
            prev_t = ev.t_s;
            match &ev.action {
                EventAction::Fault { bus, .. } | EventAction::DemandStep { bus, .. } => {
                    if *bus >= self.grid.buses.len() {
                        return Err(SimError::Config(format!(
                            "event at t={} references unknown bus {bus}",
                            ev.t_s
                        )));
                    }
                    if matches!(ev.action, EventAction::DemandStep { .. })
                        && self.grid.buses[*bus].zip.is_none()
                    {
                        return Err(SimError::Config(format!(
                            "demand step at t={} targets bus {bus} without a ZIP load",
                            ev.t_s
                        )));
                    }
                }
                EventAction::OperatorReconnect { dc } => {
                    if *dc >= self.dcs.len() {
                        return Err(SimError::Config(format!(
                            "event at t={} references unknown dc {dc}",
                            ev.t_s
                        )));
                    }
                }
                EventAction::PatternSwitch { dc, pattern } => {
                    if *dc >= self.dcs.len() {
                        return Err(SimError::Config(format!(
                            "event at t={} references unknown dc {dc}",
                            ev.t_s
                        )));
                    }
                    if matches!(pattern, LoadPattern::Ai { .. }) && self.dcs[*dc].gpu.is_none() {
                        return Err(SimError::Config(format!(
                            "pattern switch at t={} needs gpu parameters on dc {dc}",
                            ev.t_s
                        )));
                    }
                    let u0 = pattern.initial_u();
                    if !(0.0..=1.0).contains(&u0) {
                        return Err(SimError::Config(format!(
                            "pattern switch at t={} has usage {u0} outside [0,1]",
                            ev.t_s
                        )));
                    }
                }
                EventAction::ClearFault => {}
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> u64 {
        (self.duration_s / self.dt_s).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    FaultOn,
    FaultCleared,
    ModeChange {
        from: UpsMode,
        to: UpsMode,
        cause: Option<TripCause>,
    },
    BoundsRecovered,
    BatteryDepleted,
    OperatorReconnect,
    DemandStep,
    PatternSwitch,
    VoltageCollapse,
    Warning,
}

impl EventKind {
    pub fn label(&self) -> String {
        match self {
            EventKind::FaultOn => "fault_on".into(),
            EventKind::FaultCleared => "fault_cleared".into(),
            EventKind::ModeChange { from, to, cause } => match cause {
                Some(c) => format!(
                    "mode_{}_to_{}[{}]",
                    from.as_str().to_lowercase(),
                    to.as_str().to_lowercase(),
                    c.as_str()
                ),
                None => format!(
                    "mode_{}_to_{}",
                    from.as_str().to_lowercase(),
                    to.as_str().to_lowercase()
                ),
            },
            EventKind::BoundsRecovered => "bounds_recovered".into(),
            EventKind::BatteryDepleted => "battery_depleted".into(),
            EventKind::OperatorReconnect => "operator_reconnect".into(),
            EventKind::DemandStep => "demand_step".into(),
            EventKind::PatternSwitch => "pattern_switch".into(),
            EventKind::VoltageCollapse => "voltage_collapse".into(),
            EventKind::Warning => "warning".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimEvent {
    pub t_s: f64,
    pub kind: EventKind,
    pub dc: Option<usize>,
    pub segment: Option<usize>,
    pub detail: String,
}

/// Columnar per-step time series plus the discrete event record.
#[derive(Debug, Clone)]
pub struct SimLog {
    pub dt_s: f64,
    pub log_every: usize,
    pub bus_names: Vec<String>,
    pub dc_names: Vec<String>,
    pub t_s: Vec<f64>,
    /// Indexed `[bus][row]`.
    pub v_pu: Vec<Vec<f64>>,
    /// Absolute frequency (Hz), `[bus][row]`.
    pub f_hz: Vec<Vec<f64>>,
    pub rocof_hz_s: Vec<Vec<f64>>,
    /// Indexed `[dc][row]`.
    pub p_grid_mw: Vec<Vec<f64>>,
    pub q_grid_mvar: Vec<Vec<f64>>,
    pub mode: Vec<Vec<UpsMode>>,
    pub e_mwh: Vec<Vec<f64>>,
    pub p_it_mw: Vec<Vec<f64>>,
    pub p_cooling_mw: Vec<Vec<f64>>,
    pub events: Vec<SimEvent>,
}

impl SimLog {
    fn new(scen: &Scenario) -> Self {
        let rows = (scen.n_steps() as usize) / scen.log_every + 1;
        let nb = scen.grid.buses.len();
        let nd = scen.dcs.len();
        let cols = |n: usize| vec![Vec::with_capacity(rows); n];
        Self {
            dt_s: scen.dt_s,
            log_every: scen.log_every,
            bus_names: scen.grid.buses.iter().map(|b| b.name.clone()).collect(),
            dc_names: scen.dcs.iter().map(|d| d.name.clone()).collect(),
            t_s: Vec::with_capacity(rows),
            v_pu: cols(nb),
            f_hz: cols(nb),
            rocof_hz_s: cols(nb),
            p_grid_mw: cols(nd),
            q_grid_mvar: cols(nd),
            mode: vec![Vec::with_capacity(rows); nd],
            e_mwh: cols(nd),
            p_it_mw: cols(nd),
            p_cooling_mw: cols(nd),
            events: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.t_s.len()
    }

    /// Index of the first row with `t >= t_s`.
    pub fn row_at(&self, t_s: f64) -> usize {
        self.t_s.partition_point(|&t| t < t_s - 1e-12)
    }

    pub fn events_for_dc(&self, dc: usize) -> impl Iterator<Item = &SimEvent> {
        self.events.iter().filter(move |e| e.dc == Some(dc))
    }
}

struct DcRuntime {
    spec: DcSpec,
    it: ItState,
    motor: Option<MotorState>,
    segments: Vec<(UpsUnit, f64)>,
    v_int: Complex64,
    meas: GridMeasurement,
    rng_noise: RngStream,
    rng_jump: RngStream,
    demand: DcDemand,
    p_grid_mw: f64,
    q_grid_mvar: f64,
    /// Fraction of the facility load restored after a blackout; 1 in
    /// normal operation, reset to 0 by battery depletion.
    restart_mult: f64,
}

impl DcRuntime {
    fn aggregate_mode(&self) -> UpsMode {
        let mut mode = UpsMode::Normal;
        for (unit, _) in &self.segments {
            match unit.state.mode {
                UpsMode::Emergency => return UpsMode::Emergency,
                UpsMode::Charging => mode = UpsMode::Charging,
                UpsMode::Normal => {}
            }
        }
        mode
    }

    fn total_energy(&self) -> f64 {
        self.segments.iter().map(|(u, _)| u.state.e_mwh).sum()
    }
}

pub struct World {
    pub t_s: f64,
    step_idx: u64,
    scen: Scenario,
    net: NetworkModel,
    gen: GenState,
    gen_params: GenParams,
    source: SourceSpec,
    pub v: Vec<Complex64>,
    phi_cont: Vec<f64>,
    phi_prev_raw: Vec<f64>,
    freq: FreqEstimator,
    dcs: Vec<DcRuntime>,
    next_event: usize,
    low_v_since: Vec<Option<f64>>,
    collapse_reported: Vec<bool>,
    angle_warned: bool,
    pub log: SimLog,
}

fn wrap_to_pi(mut a: f64) -> f64 {
    while a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    }
    while a < -std::f64::consts::PI {
        a += 2.0 * std::f64::consts::PI;
    }
    a
}

/// Facility demand at internal voltage `v_int` given the current continuous
/// states.
fn compute_demand(
    dc: &DcSpec,
    it: &ItState,
    motor_pq: (f64, f64),
    v_int_mag: f64,
) -> DcDemand {
    let zip = match &dc.zip {
        Some(z) => zip_power(v_int_mag, z),
        None => (0.0, 0.0),
    };
    let d = dc_demand(it_power(it), motor_pq, zip);
    debug_assert_eq!(d.p_dc_mw, d.p_it_mw + d.p_cooling_mw + d.p_zip_mw);
    debug_assert_eq!(d.q_dc_mvar, d.q_cooling_mvar + d.q_zip_mvar);
    d
}

/// Solve the pre-disturbance equilibrium and build the runtime world.
pub fn initialize(scenario: &Scenario) -> SimResult<World> {
    scenario.validate()?;
    let scen = scenario.clone();
    let n = scen.grid.buses.len();
    let mut net = NetworkModel::new(
        scen.grid.buses.clone(),
        scen.grid.lines.clone(),
        scen.grid.s_sys_mva,
    )?;
    net.clear_fault();

    // fixed point between the network solution and the voltage-dependent
    // facility demand
    let mut v: Vec<Complex64> = vec![Complex64::new(1.0, 0.0); n];
    let slack = SourceSpec::Slack {
        bus: scen.grid.gen_bus,
        v: Complex64::new(1.0, 0.0),
    };
    let mut demands: Vec<DcDemand> = vec![DcDemand::default(); scen.dcs.len()];
    let mut motors: Vec<Option<MotorState>> = vec![None; scen.dcs.len()];
    let mut its: Vec<ItState> = Vec::new();
    for dc in &scen.dcs {
        let u0 = dc.pattern.initial_u();
        its.push(ItState {
            u_cpu: u0,
            p_cpu_mw: cpu_raw(u0, 0.0, &dc.cpu),
            p_gpu_mw: dc.gpu.as_ref().map_or(0.0, |g| gpu_raw(0.0, g)),
            eta_it_mw: 0.0,
        });
    }

    let mut converged = false;
    for _ in 0..100 {
        for (i, dc) in scen.dcs.iter().enumerate() {
            let v_dc = v[dc.bus];
            let motor_pq = match &dc.cooling {
                Some(mp) => {
                    let slip = motor::equilibrium_slip(v_dc.norm(), mp)?;
                    let (state, p_mw, q_mvar) = motor::steady_state(v_dc, slip, mp);
                    motors[i] = Some(state);
                    (p_mw, q_mvar)
                }
                None => (0.0, 0.0),
            };
            demands[i] = compute_demand(dc, &its[i], motor_pq, v_dc.norm());
        }
        let pq: Vec<PqLoad> = scen
            .dcs
            .iter()
            .zip(&demands)
            .map(|(dc, d)| {
                let p_grid: f64 = dc
                    .protection
                    .iter()
                    .map(|(cfg, share)| (1.0 + cfg.beta) * share * d.p_dc_mw)
                    .sum();
                PqLoad {
                    bus: dc.bus,
                    p_mw: p_grid,
                    q_mvar: d.q_dc_mvar,
                }
            })
            .collect();
        let sol = network_solve(&net, slack, &pq, &v).map_err(|(it, mis)| {
            SimError::Initialization(format!(
                "power flow did not converge ({it} iterations, mismatch {mis:.3e} pu)"
            ))
        })?;
        let diff = sol
            .v
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        v = sol.v;
        if diff < 1e-12 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SimError::Initialization(
            "facility demand / network fixed point did not converge".into(),
        ));
    }

    // classical machine internal EMF from the slack injection
    let i_gen = crate::grid::source_current(&net, slack, &v);
    let xd_sys = scen.grid.gen.xd_t_pu * scen.grid.s_sys_mva / scen.grid.gen.s_base_mva;
    let emf = v[scen.grid.gen_bus] + Complex64::new(0.0, xd_sys) * i_gen;
    let p_elec_sys = (v[scen.grid.gen_bus] * i_gen.conj()).re;
    let p_elec_mach = p_elec_sys * scen.grid.s_sys_mva / scen.grid.gen.s_base_mva;
    let gen_params = GenParams {
        e_mag_pu: emf.norm(),
        ..scen.grid.gen
    };
    let gen = GenState {
        delta_rad: emf.arg(),
        omega_dev_pu: 0.0,
        p_gov_pu: p_elec_mach,
        p_ref_pu: p_elec_mach,
    };
    let source = SourceSpec::Norton {
        bus: scen.grid.gen_bus,
        emf,
        y_src: 1.0 / Complex64::new(0.0, xd_sys),
    };

    // equilibrium residual check across the continuous sub-models
    {
        let gen_residual = (gen.p_gov_pu - p_elec_mach).abs();
        if gen_residual > 1e-8 {
            return Err(SimError::Initialization(format!(
                "governor residual {gen_residual:.3e} at t=0"
            )));
        }
        for (i, dc) in scen.dcs.iter().enumerate() {
            if let (Some(mp), Some(ms)) = (&dc.cooling, &motors[i]) {
                let torque_residual =
                    (motor::torque_static(v[dc.bus].norm(), ms.slip, mp) - mp.t_mech_pu).abs();
                if torque_residual > 1e-8 {
                    return Err(SimError::Initialization(format!(
                        "motor torque residual {torque_residual:.3e} for dc {}",
                        dc.name
                    )));
                }
            }
        }
    }

    let mut freq = FreqEstimator::new(scen.grid.t_washout_s, n);
    freq.reset_angles(&v);
    let phi_raw: Vec<f64> = v.iter().map(|vi| vi.arg()).collect();

    let mut dcs = Vec::with_capacity(scen.dcs.len());
    for (i, dc) in scen.dcs.iter().enumerate() {
        let v_dc = v[dc.bus];
        let mut segments: Vec<(UpsUnit, f64)> = dc
            .protection
            .iter()
            .map(|(cfg, share)| (UpsUnit::new(cfg.clone()), *share))
            .collect();
        for (unit, _) in segments.iter_mut() {
            unit.record_measurement(0.0, v_dc.norm(), v_dc.arg());
        }
        let p_grid_init: f64 = dc
            .protection
            .iter()
            .map(|(cfg, share)| (1.0 + cfg.beta) * share * demands[i].p_dc_mw)
            .sum();
        dcs.push(DcRuntime {
            spec: dc.clone(),
            it: its[i],
            motor: motors[i],
            segments,
            v_int: v_dc,
            meas: GridMeasurement {
                v_pu: v_dc.norm(),
                phi_rad: v_dc.arg(),
                f_dev_hz: 0.0,
                v_dev_pu: v_dc.norm() - 1.0,
                t_s: 0.0,
            },
            rng_noise: RngStream::new(scen.seed, 2 * i as u64),
            rng_jump: RngStream::new(scen.seed, 2 * i as u64 + 1),
            demand: demands[i],
            p_grid_mw: p_grid_init,
            q_grid_mvar: demands[i].q_dc_mvar,
            restart_mult: 1.0,
        });
    }

    let mut world = World {
        t_s: 0.0,
        step_idx: 0,
        log: SimLog::new(&scen),
        scen,
        net,
        gen,
        gen_params,
        source,
        phi_cont: phi_raw.clone(),
        phi_prev_raw: phi_raw,
        freq,
        v,
        dcs,
        next_event: 0,
        low_v_since: vec![None; n],
        collapse_reported: vec![false; n],
        angle_warned: false,
    };
    world.log_row();
    Ok(world)
}

impl World {
    pub fn scenario(&self) -> &Scenario {
        &self.scen
    }

    pub fn dc_mode(&self, dc: usize) -> UpsMode {
        self.dcs[dc].aggregate_mode()
    }

    pub fn segment_mode(&self, dc: usize, segment: usize) -> UpsMode {
        self.dcs[dc].segments[segment].0.state.mode
    }

    fn log_row(&mut self) {
        let log = &mut self.log;
        log.t_s.push(self.t_s);
        for b in 0..self.net.n() {
            log.v_pu[b].push(self.v[b].norm());
            log.f_hz[b].push(F0_HZ + self.freq.f_dev_hz(b));
            log.rocof_hz_s[b].push(self.freq.rocof_hz_s(b));
        }
        for (i, dc) in self.dcs.iter().enumerate() {
            log.p_grid_mw[i].push(dc.p_grid_mw);
            log.q_grid_mvar[i].push(dc.q_grid_mvar);
            log.mode[i].push(dc.aggregate_mode());
            log.e_mwh[i].push(dc.total_energy());
            log.p_it_mw[i].push(dc.demand.p_it_mw);
            log.p_cooling_mw[i].push(dc.demand.p_cooling_mw);
        }
    }

    fn push_event(
        &mut self,
        t: f64,
        kind: EventKind,
        dc: Option<usize>,
        segment: Option<usize>,
        detail: String,
    ) {
        self.log.events.push(SimEvent {
            t_s: t,
            kind,
            dc,
            segment,
            detail,
        });
    }

    /// Advance the world by one step of `dt_s`.
    pub fn step(&mut self) -> SimResult<()> {
        let dt = self.scen.dt_s;
        let t = self.t_s;
        let t_next = t + dt;
        let mut events: Vec<(EventKind, Option<usize>, Option<usize>, String)> = Vec::new();

        // (1) stochastic drivers and load patterns
        for dc in self.dcs.iter_mut() {
            dc.it.u_cpu = match dc.spec.pattern {
                LoadPattern::Constant { u_cpu } | LoadPattern::Ai { u_cpu } => u_cpu,
                LoadPattern::Batched { .. } => {
                    jump_step(dc.it.u_cpu, dt, &dc.spec.cpu.jumps, &mut dc.rng_jump)
                }
            };
            dc.it.eta_it_mw = ou_step(dc.it.eta_it_mw, dt, &dc.spec.noise, &mut dc.rng_noise)?;
            // blackout recovery: load ramps back once no segment is dark
            if dc.restart_mult < 1.0 && dc.segments.iter().all(|(u, _)| !u.state.depleted) {
                dc.restart_mult = (dc.restart_mult + dt / dc.spec.t_restart_s).min(1.0);
            }
        }

        // (2) facility continuous states at the previous internal phasor
        for dc in self.dcs.iter_mut() {
            let raw_cpu = cpu_raw(dc.it.u_cpu, t, &dc.spec.cpu);
            let raw_gpu = dc.spec.gpu.as_ref().map_or(0.0, |g| gpu_raw(t, g));
            let gpu_t = dc.spec.gpu.as_ref().map_or(dc.spec.cpu.t_filter_s, |g| g.t_filter_s);
            dc.it = it_filter_step(&dc.it, raw_cpu, raw_gpu, dt, &dc.spec.cpu, gpu_t);

            let motor_pq = match (&dc.spec.cooling, &mut dc.motor) {
                (Some(mp), Some(ms)) => {
                    let out = motor::motor_step(ms, dc.v_int, dt, mp, dc.spec.flux_dynamics)
                        .map_err(|e| SimError::Motor {
                            t_s: t_next,
                            source: e,
                        })?;
                    *ms = out.state;
                    (out.p_mw, out.q_mvar)
                }
                _ => (0.0, 0.0),
            };

            // (3) aggregate demand at the same internal voltage, derated by
            // any post-blackout restart ramp
            dc.demand = compute_demand(&dc.spec, &dc.it, motor_pq, dc.v_int.norm())
                .scaled(dc.restart_mult);
        }

        // (4) UPS mode logic and grid injections
        for (i, dc) in self.dcs.iter_mut().enumerate() {
            let m = dc.meas;
            let mut p_total = 0.0;
            let mut q_total = 0.0;
            // single segment: exact internal phasor (needed by flux dynamics);
            // several segments: share-weighted magnitude mix, since frozen
            // island angles and the drifting grid angle must not cancel
            let mut v_int_phasor = Complex64::new(0.0, 0.0);
            let mut v_int_mag = 0.0;
            let single = dc.segments.len() == 1;
            for (seg_idx, (unit, share)) in dc.segments.iter_mut().enumerate() {
                let was_depleted = unit.state.depleted;
                let seg_demand = if was_depleted {
                    DcDemand::default()
                } else {
                    dc.demand.scaled(*share)
                };
                let out = unit.step(&m, &seg_demand, dt);
                p_total += out.p_grid_mw;
                q_total += out.q_grid_mvar;

                let seg = if single { None } else { Some(seg_idx) };
                if out.bounds_recovered {
                    events.push((EventKind::BoundsRecovered, Some(i), seg, String::new()));
                }
                if let Some((from, to, cause)) = out.transition {
                    let detail = match cause {
                        Some(c) => format!(
                            "{} (df={:+.6} Hz, dv={:+.6} pu)",
                            c.as_str(),
                            m.f_dev_hz,
                            m.v_dev_pu
                        ),
                        None => format!("v={:.4} pu, f={:.4} Hz", m.v_pu, F0_HZ + m.f_dev_hz),
                    };
                    events.push((EventKind::ModeChange { from, to, cause }, Some(i), seg, detail));

                    if from == UpsMode::Emergency && to == UpsMode::Charging {
                        // reconnection: apply the angle re-alignment to the
                        // machine fluxes, and restart a depleted facility
                        if let Some(jump) = out.reconnect_angle_jump {
                            if dc.spec.flux_dynamics {
                                if let Some(ms) = &mut dc.motor {
                                    ms.rotate(wrap_to_pi(jump));
                                }
                            }
                        }
                        if was_depleted {
                            if let (Some(mp), Some(ms)) = (&dc.spec.cooling, &mut dc.motor) {
                                let slip = motor::equilibrium_slip(m.v_pu, mp)?;
                                let (st, _, _) =
                                    motor::steady_state(Complex64::from_polar(m.v_pu, m.phi_rad), slip, mp);
                                *ms = st;
                            }
                        }
                    }
                }
                if out.depleted_now {
                    dc.restart_mult = 0.0;
                    events.push((
                        EventKind::BatteryDepleted,
                        Some(i),
                        seg,
                        "facility load forced to zero".into(),
                    ));
                }
                if out.history_underflow {
                    events.push((
                        EventKind::Warning,
                        Some(i),
                        seg,
                        "measurement history shorter than look-back delta".into(),
                    ));
                }

                if !unit.state.depleted {
                    let (v_mag, phi) = unit.internal_phasor(&m);
                    v_int_phasor += Complex64::from_polar(v_mag, phi) * *share;
                    v_int_mag += v_mag * *share;
                }
            }
            dc.p_grid_mw = p_total;
            dc.q_grid_mvar = q_total;
            dc.v_int = if single {
                v_int_phasor
            } else {
                Complex64::from_polar(v_int_mag, m.phi_rad)
            };
        }

        // (5) network solve with the new injections
        let pq: Vec<PqLoad> = self
            .dcs
            .iter()
            .map(|dc| PqLoad {
                bus: dc.spec.bus,
                p_mw: dc.p_grid_mw,
                q_mvar: dc.q_grid_mvar,
            })
            .collect();
        let sol = network_solve(&self.net, self.source, &pq, &self.v).map_err(|(it, mis)| {
            SimError::SolverDiverged {
                t_s: t_next,
                iterations: it,
                mismatch: mis,
            }
        })?;
        self.v = sol.v;

        for b in 0..self.net.n() {
            let raw = self.v[b].arg();
            self.phi_cont[b] += wrap_to_pi(raw - self.phi_prev_raw[b]);
            self.phi_prev_raw[b] = raw;
        }
        let jumped = self.freq.update(&self.v, dt);
        if jumped && !self.angle_warned {
            self.angle_warned = true;
            events.push((
                EventKind::Warning,
                None,
                None,
                "bus angle jump above pi/2 in one step; unwrapped".into(),
            ));
        }

        // refresh the per-facility measurement cache and history
        for dc in self.dcs.iter_mut() {
            let b = dc.spec.bus;
            let v_mag = self.v[b].norm();
            dc.meas = GridMeasurement {
                v_pu: v_mag,
                phi_rad: self.phi_cont[b],
                f_dev_hz: self.freq.f_dev_hz(b),
                v_dev_pu: v_mag - 1.0,
                t_s: t_next,
            };
            for (unit, _) in dc.segments.iter_mut() {
                unit.record_measurement(t_next, v_mag, self.phi_cont[b]);
            }
        }

        // sustained voltage collapse diagnostic
        for b in 0..self.net.n() {
            if self.v[b].norm() < 0.2 {
                let since = *self.low_v_since[b].get_or_insert(t_next);
                if t_next - since > 0.5 && !self.collapse_reported[b] {
                    self.collapse_reported[b] = true;
                    events.push((
                        EventKind::VoltageCollapse,
                        None,
                        None,
                        format!("bus {} below 0.2 pu for over 0.5 s", self.net.buses[b].name),
                    ));
                }
            } else {
                self.low_v_since[b] = None;
                self.collapse_reported[b] = false;
            }
        }

        // (6) machine and estimator step
        let p_elec_sys = source_injection(&self.net, self.source, &self.v).re;
        let p_elec_mach = p_elec_sys * self.scen.grid.s_sys_mva / self.gen_params.s_base_mva;
        self.gen = gen_step(&self.gen, p_elec_mach, dt, &self.gen_params).map_err(|omega| {
            SimError::Instability {
                t_s: t_next,
                omega_pu: omega,
            }
        })?;
        if let SourceSpec::Norton { bus, y_src, .. } = self.source {
            self.source = SourceSpec::Norton {
                bus,
                emf: Complex64::from_polar(self.gen_params.e_mag_pu, self.gen.delta_rad),
                y_src,
            };
        }

        // (7) scenario events due at this step boundary
        while self.next_event < self.scen.events.len()
            && self.scen.events[self.next_event].t_s <= t_next + 1e-9
        {
            let ev = self.scen.events[self.next_event].clone();
            self.next_event += 1;
            match ev.action {
                EventAction::Fault { bus, y_pu } => {
                    self.net.apply_fault(bus, y_pu)?;
                    events.push((
                        EventKind::FaultOn,
                        None,
                        None,
                        format!(
                            "bus {} shunt {:.3e} pu",
                            self.net.buses[bus].name,
                            y_pu.norm()
                        ),
                    ));
                }
                EventAction::ClearFault => {
                    self.net.clear_fault();
                    events.push((EventKind::FaultCleared, None, None, String::new()));
                }
                EventAction::OperatorReconnect { dc } => {
                    for (unit, _) in self.dcs[dc].segments.iter_mut() {
                        unit.state.manual_release = true;
                    }
                    events.push((EventKind::OperatorReconnect, Some(dc), None, String::new()));
                }
                EventAction::DemandStep {
                    bus,
                    delta_p_mw,
                    delta_q_mvar,
                } => {
                    if let Some(z) = &mut self.net.buses[bus].zip {
                        z.p0_mw += delta_p_mw;
                        z.q0_mvar += delta_q_mvar;
                    }
                    events.push((
                        EventKind::DemandStep,
                        None,
                        None,
                        format!(
                            "bus {} dp={delta_p_mw} MW dq={delta_q_mvar} Mvar",
                            self.net.buses[bus].name
                        ),
                    ));
                }
                EventAction::PatternSwitch { dc, pattern } => {
                    self.dcs[dc].spec.pattern = pattern;
                    if let LoadPattern::Batched { u0 } = pattern {
                        self.dcs[dc].it.u_cpu = u0;
                    }
                    events.push((EventKind::PatternSwitch, Some(dc), None, String::new()));
                }
            }
        }

        self.t_s = t_next;
        self.step_idx += 1;
        for (kind, dc, seg, detail) in events {
            self.push_event(t_next, kind, dc, seg, detail);
        }
        // (8) time-series row
        if self.step_idx % self.scen.log_every as u64 == 0 {
            self.log_row();
        }
        Ok(())
    }
}

/// Initialize and run the full scenario, returning the complete log.
pub fn run(scenario: &Scenario) -> SimResult<SimLog> {
    let mut world = initialize(scenario)?;
    let n = scenario.n_steps();
    for _ in 0..n {
        world.step()?;
    }
    Ok(world.log)
}

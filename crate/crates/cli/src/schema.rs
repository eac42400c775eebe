//! Human-readable scenario files, mapped 1:1 onto the engine scenario.
//!
//! TOML with a schema version field. Unknown keys are rejected and all
//! physical quantities carry explicit units in their key names. Buses and
//! facilities are referenced by name; references are resolved (and every
//! model invariant checked) when converting to the runtime scenario.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use dcsim_core::dcload::motor::MotorParams;
use dcsim_core::dcload::{CpuParams, GpuParams, ZipParams};
use dcsim_core::engine::{
    DcSpec, EventAction, GridSpec, LoadPattern, Scenario, TimedEvent,
};
use dcsim_core::grid::{Bus, GenParams, Line, OMEGA_B_RAD_S};
use dcsim_core::stochastic::{JumpParams, OuParams, PulseParams};
use dcsim_core::ups::{ReconnectScheme, UpsConfig, UpsTopology, VoltageScheme};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub enum SchemaError {
    Io(std::io::Error),
    Parse(String),
    Invalid(String),
}

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SchemaError::Io(e) => write!(f, "cannot read scenario file: {e}"),
            SchemaError::Parse(e) => write!(f, "scenario file rejected: {e}"),
            SchemaError::Invalid(e) => write!(f, "scenario invalid: {e}"),
        }
    }
}

impl std::error::Error for SchemaError {}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub duration_s: f64,
    pub dt_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub log_every: usize,
    pub grid: GridFile,
    #[serde(default, rename = "dc")]
    pub dcs: Vec<DcFile>,
    #[serde(default)]
    pub events: Vec<EventFile>,
}

fn default_name() -> String {
    "scenario".into()
}

fn one() -> usize {
    1
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub s_sys_mva: f64,
    pub gen_bus: String,
    #[serde(default = "default_washout")]
    pub t_washout_s: f64,
    pub gen: GenFile,
    pub buses: Vec<BusFile>,
    pub lines: Vec<LineFile>,
}

fn default_washout() -> f64 {
    0.05
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenFile {
    pub h_s: f64,
    pub d_pu: f64,
    pub r_droop_pu: f64,
    pub t_gov_s: f64,
    pub xd_t_pu: f64,
    pub s_base_mva: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zip: Option<ZipFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZipFile {
    pub p0_mw: f64,
    pub q0_mvar: f64,
    pub a_p: f64,
    pub b_p: f64,
    pub c_p: f64,
    pub a_q: f64,
    pub b_q: f64,
    pub c_q: f64,
}

impl ZipFile {
    fn to_params(&self) -> ZipParams {
        ZipParams {
            p0_mw: self.p0_mw,
            q0_mvar: self.q0_mvar,
            a_p: self.a_p,
            b_p: self.b_p,
            c_p: self.c_p,
            a_q: self.a_q,
            b_q: self.b_q,
            c_q: self.c_q,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineFile {
    pub from: String,
    pub to: String,
    pub r_pu: f64,
    pub x_pu: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcFile {
    pub name: String,
    pub bus: String,
    pub pattern: PatternName,
    pub u_cpu: f64,
    #[serde(default)]
    pub flux_dynamics: bool,
    pub cpu: CpuFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gpu: Option<GpuFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zip: Option<ZipFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cooling: Option<CoolingFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ups: Option<UpsFile>,
    #[serde(default)]
    pub segments: Vec<SegmentFile>,
    #[serde(default = "default_restart")]
    pub t_restart_s: f64,
}

fn default_restart() -> f64 {
    120.0
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternName {
    Constant,
    Batched,
    Ai,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpuFile {
    pub p_idle_mw: f64,
    pub p_full_mw: f64,
    pub t_filter_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burst: Option<BurstFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jumps: Option<JumpsFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurstFile {
    pub period_s: f64,
    pub width_s: f64,
    pub high_mw: f64,
    #[serde(default)]
    pub low_mw: f64,
    #[serde(default)]
    pub phase_offset_s: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpsFile {
    pub scale: f64,
    pub rate_per_s: f64,
    pub amp_lo: f64,
    pub amp_hi: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpuFile {
    pub p_idle_mw: f64,
    pub p_full_mw: f64,
    pub t_filter_s: f64,
    pub period_s: f64,
    pub width_s: f64,
    pub u_max: f64,
    pub u_min: f64,
    #[serde(default)]
    pub phase_offset_s: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseFile {
    pub a_per_s: f64,
    pub b_mw_per_sqrt_s: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoolingFile {
    pub rs_pu: f64,
    pub xls_pu: f64,
    pub xm_pu: f64,
    pub rr_pu: f64,
    pub xlr_pu: f64,
    pub h_s: f64,
    pub t_mech_pu: f64,
    pub s_base_mva: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpsFile {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub v_min_pu: f64,
    pub v_max_pu: f64,
    #[serde(default)]
    pub beta: f64,
    pub p_charge_mw: f64,
    pub e_max_mwh: f64,
    pub topology: TopologyName,
    pub v_scheme: VoltageSchemeName,
    #[serde(default)]
    pub angle_comp: bool,
    #[serde(default = "default_delta")]
    pub delta_s: f64,
    pub reconnect: ReconnectFile,
}

fn default_delta() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyName {
    Offline,
    Online,
    Drups,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoltageSchemeName {
    Nominal,
    Prefault,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconnectFile {
    pub scheme: ReconnectSchemeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_delay_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconnectSchemeName {
    Instant,
    Delayed,
    DisturbanceCounting,
    Manual,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentFile {
    pub share: f64,
    pub ups: UpsFile,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventFile {
    pub t_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<FaultFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clear_fault: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator_reconnect: Option<OperatorFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand_step: Option<DemandStepFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern_switch: Option<PatternSwitchFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultFile {
    pub bus: String,
    pub g_pu: f64,
    #[serde(default)]
    pub b_pu: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorFile {
    pub dc: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandStepFile {
    pub bus: String,
    pub delta_p_mw: f64,
    #[serde(default)]
    pub delta_q_mvar: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSwitchFile {
    pub dc: String,
    pub pattern: PatternName,
    pub u_cpu: f64,
}

impl ScenarioFile {
    pub fn parse_str(text: &str) -> Result<Self, SchemaError> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| SchemaError::Parse(e.to_string()))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(SchemaError::Parse(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn parse_file(path: &Path) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path).map_err(SchemaError::Io)?;
        let mut file = Self::parse_str(&text)
            .map_err(|e| match e {
                SchemaError::Parse(msg) => {
                    SchemaError::Parse(format!("{}: {msg}", path.display()))
                }
                other => other,
            })?;
        if file.name == default_name() {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                file.name = stem.to_string();
            }
        }
        Ok(file)
    }

    /// Resolve names and build the runtime scenario; all engine-level
    /// invariants are checked here so a broken file fails before any run.
    pub fn to_scenario(&self) -> Result<Scenario, SchemaError> {
        let bus_index = |name: &str| -> Result<usize, SchemaError> {
            self.grid
                .buses
                .iter()
                .position(|b| b.name == name)
                .ok_or_else(|| SchemaError::Invalid(format!("unknown bus name '{name}'")))
        };
        let dc_index = |name: &str| -> Result<usize, SchemaError> {
            self.dcs
                .iter()
                .position(|d| d.name == name)
                .ok_or_else(|| SchemaError::Invalid(format!("unknown dc name '{name}'")))
        };

        let buses: Vec<Bus> = self
            .grid
            .buses
            .iter()
            .map(|b| Bus {
                name: b.name.clone(),
                zip: b.zip.as_ref().map(|z| z.to_params()),
            })
            .collect();
        let mut lines = Vec::new();
        for l in &self.grid.lines {
            lines.push(Line {
                from: bus_index(&l.from)?,
                to: bus_index(&l.to)?,
                r_pu: l.r_pu,
                x_pu: l.x_pu,
            });
        }
        let grid = GridSpec {
            s_sys_mva: self.grid.s_sys_mva,
            gen_bus: bus_index(&self.grid.gen_bus)?,
            gen: GenParams {
                h_s: self.grid.gen.h_s,
                d_pu: self.grid.gen.d_pu,
                r_droop_pu: self.grid.gen.r_droop_pu,
                t_gov_s: self.grid.gen.t_gov_s,
                xd_t_pu: self.grid.gen.xd_t_pu,
                s_base_mva: self.grid.gen.s_base_mva,
                e_mag_pu: 1.0,
            },
            buses,
            lines,
            t_washout_s: self.grid.t_washout_s,
        };

        let mut dcs = Vec::new();
        for d in &self.dcs {
            let pattern = match d.pattern {
                PatternName::Constant => LoadPattern::Constant { u_cpu: d.u_cpu },
                PatternName::Batched => LoadPattern::Batched { u0: d.u_cpu },
                PatternName::Ai => LoadPattern::Ai { u_cpu: d.u_cpu },
            };
            let cpu = CpuParams {
                p_idle_mw: d.cpu.p_idle_mw,
                p_full_mw: d.cpu.p_full_mw,
                t_filter_s: d.cpu.t_filter_s,
                burst: match &d.cpu.burst {
                    Some(b) => PulseParams {
                        period_s: b.period_s,
                        width_s: b.width_s,
                        high: b.high_mw,
                        low: b.low_mw,
                        phase_offset_s: b.phase_offset_s,
                    },
                    None => PulseParams::OFF,
                },
                jumps: match &d.cpu.jumps {
                    Some(j) => JumpParams {
                        scale: j.scale,
                        rate_per_s: j.rate_per_s,
                        amp_lo: j.amp_lo,
                        amp_hi: j.amp_hi,
                    },
                    None => JumpParams::OFF,
                },
            };
            if matches!(d.pattern, PatternName::Batched) && d.cpu.jumps.is_none() {
                return Err(SchemaError::Invalid(format!(
                    "dc '{}': the batched pattern requires [dc.cpu.jumps]",
                    d.name
                )));
            }
            let gpu = d.gpu.as_ref().map(|g| GpuParams {
                p_idle_mw: g.p_idle_mw,
                p_full_mw: g.p_full_mw,
                t_filter_s: g.t_filter_s,
                pulse: PulseParams {
                    period_s: g.period_s,
                    width_s: g.width_s,
                    high: g.u_max,
                    low: g.u_min,
                    phase_offset_s: g.phase_offset_s,
                },
            });
            let noise = match &d.noise {
                Some(n) => OuParams {
                    mean_reversion_per_s: n.a_per_s,
                    diffusion_mw: n.b_mw_per_sqrt_s,
                },
                None => OuParams::OFF,
            };
            let cooling = d.cooling.as_ref().map(|c| MotorParams {
                rs_pu: c.rs_pu,
                xls_pu: c.xls_pu,
                xm_pu: c.xm_pu,
                rr_pu: c.rr_pu,
                xlr_pu: c.xlr_pu,
                h_s: c.h_s,
                t_mech_pu: c.t_mech_pu,
                s_base_mva: c.s_base_mva,
                omega_b_rad_s: OMEGA_B_RAD_S,
            });

            let protection = match (&d.ups, d.segments.is_empty()) {
                (Some(u), true) => vec![(convert_ups(u, &d.name)?, 1.0)],
                (None, false) => {
                    let mut segs = Vec::new();
                    for s in &d.segments {
                        segs.push((convert_ups(&s.ups, &d.name)?, s.share));
                    }
                    segs
                }
                (Some(_), false) => {
                    return Err(SchemaError::Invalid(format!(
                        "dc '{}': give either [dc.ups] or [[dc.segments]], not both",
                        d.name
                    )))
                }
                (None, true) => {
                    return Err(SchemaError::Invalid(format!(
                        "dc '{}': a UPS configuration is required",
                        d.name
                    )))
                }
            };

            dcs.push(DcSpec {
                name: d.name.clone(),
                bus: bus_index(&d.bus)?,
                cpu,
                gpu,
                noise,
                zip: d.zip.as_ref().map(|z| z.to_params()),
                cooling,
                flux_dynamics: d.flux_dynamics,
                pattern,
                protection,
                t_restart_s: d.t_restart_s,
            });
        }

        let mut events = Vec::new();
        for (k, e) in self.events.iter().enumerate() {
            let mut actions: Vec<EventAction> = Vec::new();
            if let Some(fa) = &e.fault {
                actions.push(EventAction::Fault {
                    bus: bus_index(&fa.bus)?,
                    y_pu: Complex64::new(fa.g_pu, fa.b_pu),
                });
            }
            if e.clear_fault == Some(true) {
                actions.push(EventAction::ClearFault);
            }
            if let Some(op) = &e.operator_reconnect {
                actions.push(EventAction::OperatorReconnect {
                    dc: dc_index(&op.dc)?,
                });
            }
            if let Some(ds) = &e.demand_step {
                actions.push(EventAction::DemandStep {
                    bus: bus_index(&ds.bus)?,
                    delta_p_mw: ds.delta_p_mw,
                    delta_q_mvar: ds.delta_q_mvar,
                });
            }
            if let Some(ps) = &e.pattern_switch {
                let pattern = match ps.pattern {
                    PatternName::Constant => LoadPattern::Constant { u_cpu: ps.u_cpu },
                    PatternName::Batched => LoadPattern::Batched { u0: ps.u_cpu },
                    PatternName::Ai => LoadPattern::Ai { u_cpu: ps.u_cpu },
                };
                actions.push(EventAction::PatternSwitch {
                    dc: dc_index(&ps.dc)?,
                    pattern,
                });
            }
            if actions.len() != 1 {
                return Err(SchemaError::Invalid(format!(
                    "events[{k}] at t={}: exactly one action is required, found {}",
                    e.t_s,
                    actions.len()
                )));
            }
            events.push(TimedEvent {
                t_s: e.t_s,
                action: actions.pop().unwrap(),
            });
        }

        let scenario = Scenario {
            duration_s: self.duration_s,
            dt_s: self.dt_s,
            seed: self.seed,
            log_every: self.log_every,
            grid,
            dcs,
            events,
        };
        scenario
            .validate()
            .map_err(|e| SchemaError::Invalid(e.to_string()))?;
        Ok(scenario)
    }
}

fn convert_ups(u: &UpsFile, dc_name: &str) -> Result<UpsConfig, SchemaError> {
    let missing = |what: &str| {
        SchemaError::Invalid(format!(
            "dc '{dc_name}': reconnect scheme '{:?}' requires {what}",
            u.reconnect.scheme
        ))
    };
    let reconnect = match u.reconnect.scheme {
        ReconnectSchemeName::Instant => ReconnectScheme::Instant,
        ReconnectSchemeName::Delayed => ReconnectScheme::Delayed {
            t_delay_s: u.reconnect.t_delay_s.ok_or_else(|| missing("t_delay_s"))?,
        },
        ReconnectSchemeName::DisturbanceCounting => ReconnectScheme::DisturbanceCounting {
            n_max: u.reconnect.n_max.ok_or_else(|| missing("n_max"))?,
            window_s: u.reconnect.window_s.ok_or_else(|| missing("window_s"))?,
            t_delay_s: u.reconnect.t_delay_s.ok_or_else(|| missing("t_delay_s"))?,
        },
        ReconnectSchemeName::Manual => ReconnectScheme::Manual,
    };
    Ok(UpsConfig {
        f_min_hz: u.f_min_hz,
        f_max_hz: u.f_max_hz,
        v_min_pu: u.v_min_pu,
        v_max_pu: u.v_max_pu,
        beta: u.beta,
        p_charge_mw: u.p_charge_mw,
        e_max_mwh: u.e_max_mwh,
        topology: match u.topology {
            TopologyName::Offline => UpsTopology::Offline,
            TopologyName::Online => UpsTopology::Online,
            TopologyName::Drups => UpsTopology::Drups,
        },
        reconnect,
        v_scheme: match u.v_scheme {
            VoltageSchemeName::Nominal => VoltageScheme::Nominal,
            VoltageSchemeName::Prefault => VoltageScheme::Prefault,
        },
        angle_comp: u.angle_comp,
        delta_s: u.delta_s,
    })
}

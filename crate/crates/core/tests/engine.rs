//! Engine-level integration tests on a small 3-bus test system.

use dcsim_core::dcload::motor::MotorParams;
use dcsim_core::dcload::{CpuParams, ZipParams};
use dcsim_core::engine::{
    initialize, run, DcSpec, EventAction, EventKind, GridSpec, LoadPattern, Scenario, TimedEvent,
};
use dcsim_core::grid::{Bus, GenParams, Line};
use dcsim_core::stochastic::{JumpParams, OuParams, PulseParams};
use dcsim_core::ups::{ReconnectScheme, UpsConfig, UpsMode, UpsTopology, VoltageScheme};
use num_complex::Complex64;

fn grid_spec() -> GridSpec {
    GridSpec {
        s_sys_mva: 1000.0,
        gen_bus: 0,
        gen: GenParams {
            h_s: 6.0,
            d_pu: 1.0,
            r_droop_pu: 0.10,
            t_gov_s: 0.26,
            xd_t_pu: 0.25,
            s_base_mva: 7083.3333,
            e_mag_pu: 1.0,
        },
        buses: vec![
            Bus {
                name: "gen".into(),
                zip: None,
            },
            Bus {
                name: "dc".into(),
                zip: None,
            },
            Bus {
                name: "load".into(),
                zip: Some(ZipParams {
                    p0_mw: 1000.0,
                    q0_mvar: 150.0,
                    a_p: 0.4,
                    b_p: 0.3,
                    c_p: 0.3,
                    a_q: 0.4,
                    b_q: 0.3,
                    c_q: 0.3,
                }),
            },
        ],
        lines: vec![
            Line {
                from: 0,
                to: 1,
                r_pu: 0.005,
                x_pu: 0.05,
            },
            Line {
                from: 0,
                to: 2,
                r_pu: 0.005,
                x_pu: 0.05,
            },
            Line {
                from: 1,
                to: 2,
                r_pu: 0.005,
                x_pu: 0.05,
            },
        ],
        t_washout_s: 0.05,
    }
}

fn ups_config(t_delay_s: f64) -> UpsConfig {
    UpsConfig {
        f_min_hz: -0.3,
        f_max_hz: 0.3,
        v_min_pu: -0.1,
        v_max_pu: 0.1,
        beta: 0.0,
        p_charge_mw: 120.0,
        e_max_mwh: 30.0,
        topology: UpsTopology::Offline,
        reconnect: ReconnectScheme::Delayed { t_delay_s },
        v_scheme: VoltageScheme::Nominal,
        angle_comp: false,
        delta_s: 0.01,
    }
}

fn dc_spec(t_delay_s: f64) -> DcSpec {
    DcSpec {
        name: "dc1".into(),
        bus: 1,
        cpu: CpuParams {
            p_idle_mw: 90.0,
            p_full_mw: 300.0,
            t_filter_s: 0.05,
            burst: PulseParams::OFF,
            jumps: JumpParams::OFF,
        },
        gpu: None,
        noise: OuParams::OFF,
        zip: Some(ZipParams {
            p0_mw: 6.0,
            q0_mvar: 2.0,
            a_p: 0.3,
            b_p: 0.3,
            c_p: 0.4,
            a_q: 0.3,
            b_q: 0.3,
            c_q: 0.4,
        }),
        cooling: Some(MotorParams {
            rs_pu: 0.01,
            xls_pu: 0.1,
            xm_pu: 3.5,
            rr_pu: 0.009,
            xlr_pu: 0.09,
            h_s: 0.6,
            t_mech_pu: 0.8,
            s_base_mva: 75.0,
            omega_b_rad_s: 2.0 * std::f64::consts::PI * 50.0,
        }),
        flux_dynamics: false,
        pattern: LoadPattern::Constant { u_cpu: 1.0 },
        protection: vec![(ups_config(t_delay_s), 1.0)],
        t_restart_s: 120.0,
    }
}

fn base_scenario() -> Scenario {
    Scenario {
        duration_s: 2.0,
        dt_s: 1e-3,
        seed: 1,
        log_every: 1,
        grid: grid_spec(),
        dcs: vec![dc_spec(30.0)],
        events: vec![],
    }
}

fn fault_events(bus: usize, t_on: f64, t_off: f64) -> Vec<TimedEvent> {
    vec![
        TimedEvent {
            t_s: t_on,
            action: EventAction::Fault {
                bus,
                y_pu: Complex64::new(1e6, 0.0),
            },
        },
        TimedEvent {
            t_s: t_off,
            action: EventAction::ClearFault,
        },
    ]
}

#[test]
fn row_count_matches_grid_arithmetic() {
    let mut scen = base_scenario();
    scen.duration_s = 1.0;
    let log = run(&scen).unwrap();
    assert_eq!(log.rows(), 1001);
}

#[test]
fn equilibrium_is_preserved_without_events() {
    let mut scen = base_scenario();
    scen.duration_s = 2.0;
    let log = run(&scen).unwrap();
    let last = log.rows() - 1;
    for b in 0..3 {
        assert!(
            (log.v_pu[b][last] - log.v_pu[b][0]).abs() < 1e-9,
            "bus {b} voltage drifted: {} -> {}",
            log.v_pu[b][0],
            log.v_pu[b][last]
        );
        assert!((log.f_hz[b][last] - 50.0).abs() < 1e-9);
    }
    assert!((log.p_grid_mw[0][last] - log.p_grid_mw[0][0]).abs() < 1e-9);
    assert!((log.p_it_mw[0][last] - log.p_it_mw[0][0]).abs() < 1e-9);
    assert!((log.p_cooling_mw[0][last] - log.p_cooling_mw[0][0]).abs() < 1e-9);
    assert!(log.events.is_empty(), "unexpected events: {:?}", log.events);
    // sizing sanity: 300 MW of servers plus a roughly 60 MW chiller
    assert!((log.p_it_mw[0][0] - 300.0).abs() < 1.0);
    assert!((log.p_cooling_mw[0][0] - 60.0).abs() < 5.0);
    // pre-disturbance facility bus voltage in the plausible band
    assert!(log.v_pu[1][0] > 0.95 && log.v_pu[1][0] < 1.0);
}

#[test]
fn zero_dc_scenario_stays_flat() {
    let mut scen = base_scenario();
    scen.dcs.clear();
    let log = run(&scen).unwrap();
    let last = log.rows() - 1;
    for b in 0..3 {
        assert!((log.v_pu[b][last] - log.v_pu[b][0]).abs() < 1e-9);
    }
}

#[test]
fn identical_seeds_give_identical_logs() {
    let mut scen = base_scenario();
    scen.dcs[0].noise = OuParams {
        mean_reversion_per_s: 1.0,
        diffusion_mw: 2.0,
    };
    scen.duration_s = 1.0;
    let a = run(&scen).unwrap();
    let b = run(&scen).unwrap();
    assert_eq!(a.rows(), b.rows());
    for r in 0..a.rows() {
        assert_eq!(a.v_pu[1][r].to_bits(), b.v_pu[1][r].to_bits());
        assert_eq!(a.p_grid_mw[0][r].to_bits(), b.p_grid_mw[0][r].to_bits());
    }
    // a different seed must change a stochastic run
    scen.seed = 2;
    let c = run(&scen).unwrap();
    assert!(
        (0..a.rows()).any(|r| a.p_grid_mw[0][r] != c.p_grid_mw[0][r]),
        "seed change had no effect on a stochastic scenario"
    );
}

#[test]
fn fault_ride_through_cycle() {
    let mut scen = base_scenario();
    scen.duration_s = 25.0;
    scen.dcs = vec![dc_spec(5.0)];
    scen.events = fault_events(1, 1.0, 1.15);
    let log = run(&scen).unwrap();

    // collect the mode transitions
    let transitions: Vec<(f64, UpsMode, UpsMode)> = log
        .events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::ModeChange { from, to, .. } => Some((e.t_s, from, to)),
            _ => None,
        })
        .collect();
    let seq: Vec<(UpsMode, UpsMode)> = transitions.iter().map(|&(_, f, t)| (f, t)).collect();
    assert_eq!(
        seq,
        vec![
            (UpsMode::Normal, UpsMode::Emergency),
            (UpsMode::Emergency, UpsMode::Charging),
            (UpsMode::Charging, UpsMode::Normal),
        ],
        "events: {:?}",
        log.events
    );

    // the trip follows the first out-of-bounds measurement within one step
    let t_trip = transitions[0].0;
    let first_bad = log
        .t_s
        .iter()
        .zip(&log.v_pu[1])
        .find(|&(_, v)| (v - 1.0).abs() > 0.1)
        .map(|(t, _)| *t)
        .unwrap();
    assert!(
        (t_trip - first_bad - scen.dt_s).abs() < 1e-9,
        "trip at {t_trip}, first violation at {first_bad}"
    );

    // reconnection happens the configured delay after bounds recovery
    let t_rec = log
        .events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::BoundsRecovered))
        .map(|e| e.t_s)
        .last()
        .unwrap();
    let t_charge = transitions[1].0;
    assert!(
        (t_charge - t_rec - 5.0).abs() <= scen.dt_s + 1e-9,
        "charging at {t_charge}, recovery at {t_rec}"
    );

    // frequency rises while the facility is disconnected
    let r0 = log.row_at(t_trip + 0.1);
    let r1 = log.row_at(t_charge - 0.1);
    assert!(
        log.f_hz[1][r1] > log.f_hz[1][r0] + 0.05,
        "no frequency rise during the island: {} -> {}",
        log.f_hz[1][r0],
        log.f_hz[1][r1]
    );
}

#[test]
fn segmented_reconnection_is_staggered() {
    let mut scen = base_scenario();
    scen.duration_s = 16.0;
    let mut dc = dc_spec(0.0);
    dc.protection = (0..10)
        .map(|k| (ups_config(2.0 + k as f64), 0.1))
        .collect();
    scen.dcs = vec![dc];
    scen.events = fault_events(1, 1.0, 1.15);
    let log = run(&scen).unwrap();

    let mut reconnects: Vec<(f64, usize)> = log
        .events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::ModeChange {
                from: UpsMode::Emergency,
                to: UpsMode::Charging,
                ..
            } => Some((e.t_s, e.segment.unwrap())),
            _ => None,
        })
        .collect();
    assert_eq!(reconnects.len(), 10, "events: {:?}", log.events);
    reconnects.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // staggered by one second each
    for w in reconnects.windows(2) {
        assert!(
            (w[1].0 - w[0].0 - 1.0).abs() < 2.0 * scen.dt_s + 1e-9,
            "reconnect spacing {:?}",
            reconnects
        );
    }
    // exactly one emergency entry per segment
    let mut trips = vec![0usize; 10];
    for e in &log.events {
        if let EventKind::ModeChange {
            to: UpsMode::Emergency,
            ..
        } = e.kind
        {
            trips[e.segment.unwrap()] += 1;
        }
    }
    assert_eq!(trips, vec![1; 10]);
}

#[test]
fn demand_step_moves_frequency() {
    let mut scen = base_scenario();
    scen.duration_s = 4.0;
    scen.events = vec![TimedEvent {
        t_s: 1.0,
        action: EventAction::DemandStep {
            bus: 2,
            delta_p_mw: 200.0,
            delta_q_mvar: 0.0,
        },
    }];
    let log = run(&scen).unwrap();
    let before = log.f_hz[2][log.row_at(0.9)];
    let after = log.f_hz[2][log.row_at(3.5)];
    assert!(
        after < before - 0.05,
        "added demand should depress frequency: {before} -> {after}"
    );
}

#[test]
fn pattern_switch_activates_jumps() {
    let mut scen = base_scenario();
    scen.duration_s = 4.0;
    scen.dcs[0].cpu.jumps = JumpParams {
        scale: 1.0,
        rate_per_s: 20.0,
        amp_lo: -0.4,
        amp_hi: 0.4,
    };
    scen.events = vec![TimedEvent {
        t_s: 1.0,
        action: EventAction::PatternSwitch {
            dc: 0,
            pattern: LoadPattern::Batched { u0: 0.5 },
        },
    }];
    let log = run(&scen).unwrap();
    let r_pre = log.row_at(0.9);
    let r_post_a = log.row_at(2.0);
    let r_post_b = log.row_at(3.5);
    assert!((log.p_it_mw[0][r_pre] - 300.0).abs() < 1.0);
    // after the switch, usage jumps around and the IT power moves
    assert!(
        (log.p_it_mw[0][r_post_a] - log.p_it_mw[0][r_post_b]).abs() > 1.0
            || (log.p_it_mw[0][r_post_a] - 300.0).abs() > 5.0,
        "batched pattern produced no visible variation"
    );
}

#[test]
fn initialization_reports_equilibrium() {
    let scen = base_scenario();
    let world = initialize(&scen).unwrap();
    assert_eq!(world.t_s, 0.0);
    assert_eq!(world.log.rows(), 1);
    assert_eq!(world.dc_mode(0), UpsMode::Normal);
}

#[test]
fn validation_rejects_bad_scenarios() {
    // share sum
    let mut scen = base_scenario();
    scen.dcs[0].protection = (0..9).map(|_| (ups_config(5.0), 0.1)).collect();
    assert!(scen.validate().is_err());

    // zip coefficient sum
    let mut scen = base_scenario();
    scen.dcs[0].zip.as_mut().unwrap().a_p = 0.1;
    assert!(scen.validate().is_err());

    // dt out of range
    let mut scen = base_scenario();
    scen.dt_s = 0.1;
    assert!(scen.validate().is_err());

    // unsorted events
    let mut scen = base_scenario();
    scen.events = vec![
        TimedEvent {
            t_s: 2.0,
            action: EventAction::ClearFault,
        },
        TimedEvent {
            t_s: 1.0,
            action: EventAction::ClearFault,
        },
    ];
    assert!(scen.validate().is_err());

    // ai pattern without gpu
    let mut scen = base_scenario();
    scen.dcs[0].pattern = LoadPattern::Ai { u_cpu: 0.5 };
    assert!(scen.validate().is_err());
}

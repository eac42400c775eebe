//! Continuous-time data-center load model: servers (CPU, GPU, burst and
//! noise terms), induction-motor cooling, ZIP miscellaneous load, and their
//! aggregation into the total facility demand.

pub mod motor;

use crate::stochastic::{pulse_value, JumpParams, OuParams, PulseParams};
use crate::{SimError, SimResult};

/// CPU branch of the server load.
#[derive(Debug, Clone)]
pub struct CpuParams {
    /// Power consumption when the servers are idle.
    pub p_idle_mw: f64,
    /// Power consumption at full capacity.
    pub p_full_mw: f64,
    /// Low-pass filter time constant smoothing frequency/voltage scaling
    /// transients of the processors.
    pub t_filter_s: f64,
    /// Periodic burst term added on top of the usage-driven consumption.
    pub burst: PulseParams,
    /// Compound-Poisson usage jumps (active in the batched pattern only).
    pub jumps: JumpParams,
}

impl CpuParams {
    pub fn validate(&self) -> SimResult<()> {
        if !(0.0 <= self.p_idle_mw && self.p_idle_mw <= self.p_full_mw) {
            return Err(SimError::Config(format!(
                "CPU power range invalid: idle {} MW, full {} MW",
                self.p_idle_mw, self.p_full_mw
            )));
        }
        if !(self.t_filter_s > 0.0) {
            return Err(SimError::Config(format!(
                "CPU filter time constant must be > 0, got {}",
                self.t_filter_s
            )));
        }
        self.burst.validate()?;
        self.jumps.validate()
    }
}

/// GPU / AI-accelerator branch of the server load.
#[derive(Debug, Clone)]
pub struct GpuParams {
    pub p_idle_mw: f64,
    pub p_full_mw: f64,
    pub t_filter_s: f64,
    /// Usage pulse train; levels are the idle and active accelerator usage
    /// fractions in `[0, 1]`.
    pub pulse: PulseParams,
}

impl GpuParams {
    pub fn validate(&self) -> SimResult<()> {
        if !(0.0 <= self.p_idle_mw && self.p_idle_mw <= self.p_full_mw) {
            return Err(SimError::Config(format!(
                "GPU power range invalid: idle {} MW, full {} MW",
                self.p_idle_mw, self.p_full_mw
            )));
        }
        if !(self.t_filter_s > 0.0) {
            return Err(SimError::Config(format!(
                "GPU filter time constant must be > 0, got {}",
                self.t_filter_s
            )));
        }
        self.pulse.validate()?;
        for level in [self.pulse.high, self.pulse.low] {
            if !(0.0..=1.0).contains(&level) {
                return Err(SimError::Config(format!(
                    "GPU usage pulse levels must lie in [0,1], got {level}"
                )));
            }
        }
        Ok(())
    }
}

/// Continuous IT-load states: usage, filtered branch powers and noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItState {
    pub u_cpu: f64,
    pub p_cpu_mw: f64,
    pub p_gpu_mw: f64,
    pub eta_it_mw: f64,
}

/// Voltage-dependent ZIP load. Coefficients of each row sum to one.
#[derive(Debug, Clone, Copy)]
pub struct ZipParams {
    pub p0_mw: f64,
    pub q0_mvar: f64,
    pub a_p: f64,
    pub b_p: f64,
    pub c_p: f64,
    pub a_q: f64,
    pub b_q: f64,
    pub c_q: f64,
}

impl ZipParams {
    pub fn validate(&self) -> SimResult<()> {
        let sp = self.a_p + self.b_p + self.c_p;
        if (sp - 1.0).abs() > 1e-9 {
            return Err(SimError::Config(format!(
                "ZIP active-power coefficients must sum to 1, got a_p+b_p+c_p = {sp}"
            )));
        }
        let sq = self.a_q + self.b_q + self.c_q;
        if (sq - 1.0).abs() > 1e-9 {
            return Err(SimError::Config(format!(
                "ZIP reactive-power coefficients must sum to 1, got a_q+b_q+c_q = {sq}"
            )));
        }
        Ok(())
    }
}

/// Facility demand split into its components. The sums are exact:
/// `p_dc = p_it + p_cooling + p_zip` and `q_dc = q_cooling + q_zip`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DcDemand {
    pub p_dc_mw: f64,
    pub q_dc_mvar: f64,
    pub p_it_mw: f64,
    pub p_cooling_mw: f64,
    pub q_cooling_mvar: f64,
    pub p_zip_mw: f64,
    pub q_zip_mvar: f64,
}

impl DcDemand {
    /// Demand seen by one protection segment carrying `share` of the load.
    pub fn scaled(&self, share: f64) -> DcDemand {
        DcDemand {
            p_dc_mw: self.p_dc_mw * share,
            q_dc_mvar: self.q_dc_mvar * share,
            p_it_mw: self.p_it_mw * share,
            p_cooling_mw: self.p_cooling_mw * share,
            q_cooling_mvar: self.q_cooling_mvar * share,
            p_zip_mw: self.p_zip_mw * share,
            q_zip_mvar: self.q_zip_mvar * share,
        }
    }
}

/// Unfiltered CPU consumption: idle floor, usage-proportional term and the
/// periodic burst.
pub fn cpu_raw(u_cpu: f64, t: f64, p: &CpuParams) -> f64 {
    assert!(
        (0.0..=1.0).contains(&u_cpu),
        "CPU usage out of range: {u_cpu}"
    );
    p.p_idle_mw + (p.p_full_mw - p.p_idle_mw) * u_cpu + pulse_value(t, &p.burst)
}

/// Unfiltered GPU consumption driven by the accelerator usage pulse train.
pub fn gpu_raw(t: f64, p: &GpuParams) -> f64 {
    p.p_idle_mw + (p.p_full_mw - p.p_idle_mw) * pulse_value(t, &p.pulse)
}

/// One implicit-Euler step of the two first-order server filters
/// `T p' = p_raw - p`.
pub fn it_filter_step(
    state: &ItState,
    raw_cpu_mw: f64,
    raw_gpu_mw: f64,
    dt: f64,
    cpu: &CpuParams,
    gpu_t_filter_s: f64,
) -> ItState {
    debug_assert!(dt > 0.0);
    let step = |p: f64, raw: f64, t_f: f64| -> f64 {
        let r = dt / t_f;
        (p + r * raw) / (1.0 + r)
    };
    ItState {
        p_cpu_mw: step(state.p_cpu_mw, raw_cpu_mw, cpu.t_filter_s),
        p_gpu_mw: step(state.p_gpu_mw, raw_gpu_mw, gpu_t_filter_s),
        ..*state
    }
}

/// Total server load: filtered CPU and GPU branches plus the OU noise term,
/// floored at zero (negative aggregate demand is unphysical).
pub fn it_power(state: &ItState) -> f64 {
    (state.p_cpu_mw + state.p_gpu_mw + state.eta_it_mw).max(0.0)
}

/// ZIP consumption at internal voltage magnitude `v` (pu).
pub fn zip_power(v: f64, p: &ZipParams) -> (f64, f64) {
    debug_assert!(v >= 0.0);
    let pw = p.p0_mw * (p.a_p + p.b_p * v + p.c_p * v * v);
    let qw = p.q0_mvar * (p.a_q + p.b_q * v + p.c_q * v * v);
    (pw, qw)
}

/// Aggregate the component demands. All components must have been computed
/// at the same internal voltage. IT load consumes no reactive power (server
/// power supplies operate at unity power factor).
pub fn dc_demand(p_it_mw: f64, cooling: (f64, f64), zip: (f64, f64)) -> DcDemand {
    let (p_cool, q_cool) = cooling;
    let (p_zip, q_zip) = zip;
    DcDemand {
        p_dc_mw: p_it_mw + p_cool + p_zip,
        q_dc_mvar: q_cool + q_zip,
        p_it_mw,
        p_cooling_mw: p_cool,
        q_cooling_mvar: q_cool,
        p_zip_mw: p_zip,
        q_zip_mvar: q_zip,
    }
}

/// Noise parameters bundled with the server branches; convenience used by
/// scenario plumbing.
#[derive(Debug, Clone)]
pub struct ServerParams {
    pub cpu: CpuParams,
    pub gpu: Option<GpuParams>,
    pub noise: OuParams,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cpu_no_burst(idle: f64, full: f64) -> CpuParams {
        CpuParams {
            p_idle_mw: idle,
            p_full_mw: full,
            t_filter_s: 0.05,
            burst: PulseParams::OFF,
            jumps: JumpParams::OFF,
        }
    }

    #[test]
    fn cpu_raw_idle_and_full_endpoints() {
        let p = cpu_no_burst(90.0, 300.0);
        assert_eq!(cpu_raw(0.0, 3.0, &p), 90.0);
        assert_eq!(cpu_raw(1.0, 3.0, &p), 300.0);
    }

    #[test]
    fn cpu_raw_with_burst_inside_window() {
        let mut p = cpu_no_burst(90.0, 300.0);
        p.burst = PulseParams {
            period_s: 300.0,
            width_s: 5.0,
            high: 10.0,
            low: 0.0,
            phase_offset_s: 0.0,
        };
        // hand evaluation: 90 + 210*0.5 + 10 = 205
        assert_relative_eq!(cpu_raw(0.5, 2.0, &p), 205.0, max_relative = 1e-12);
    }

    #[test]
    #[should_panic]
    fn cpu_raw_rejects_out_of_range_usage() {
        let p = cpu_no_burst(90.0, 300.0);
        cpu_raw(1.5, 0.0, &p);
    }

    fn gpu(idle: f64, full: f64, duty: f64) -> GpuParams {
        GpuParams {
            p_idle_mw: idle,
            p_full_mw: full,
            t_filter_s: 0.05,
            pulse: PulseParams {
                period_s: 10.0,
                width_s: 10.0 * duty,
                high: 1.0,
                low: 0.0,
                phase_offset_s: 0.0,
            },
        }
    }

    #[test]
    fn gpu_raw_idle_and_active_instants() {
        let p = gpu(30.0, 150.0, 0.8);
        assert_eq!(gpu_raw(9.0, &p), 30.0); // outside the pulse
        assert_eq!(gpu_raw(1.0, &p), 150.0); // inside
    }

    #[test]
    fn gpu_period_average_follows_duty_cycle() {
        let p = gpu(30.0, 150.0, 0.8);
        let n = 100_000;
        let avg = (0..n)
            .map(|i| gpu_raw(10.0 * i as f64 / n as f64, &p))
            .sum::<f64>()
            / n as f64;
        // analytic period average: 30 + 120 * 0.8 = 126
        assert_relative_eq!(avg, 126.0, max_relative = 1e-3);
    }

    #[test]
    fn filter_fixed_point_is_preserved() {
        let cpu = cpu_no_burst(0.0, 100.0);
        let st = ItState {
            u_cpu: 0.5,
            p_cpu_mw: 50.0,
            p_gpu_mw: 20.0,
            eta_it_mw: 0.0,
        };
        let next = it_filter_step(&st, 50.0, 20.0, 0.001, &cpu, 0.05);
        assert_relative_eq!(next.p_cpu_mw, 50.0, max_relative = 1e-14);
        assert_relative_eq!(next.p_gpu_mw, 20.0, max_relative = 1e-14);
    }

    #[test]
    fn filter_step_response_reaches_one_time_constant_level() {
        // analytic first-order response: p(T) = 100 * (1 - e^-1) = 63.21 MW
        let cpu = cpu_no_burst(0.0, 100.0);
        let mut st = ItState {
            u_cpu: 0.0,
            p_cpu_mw: 0.0,
            p_gpu_mw: 0.0,
            eta_it_mw: 0.0,
        };
        let dt = 0.001;
        for _ in 0..50 {
            st = it_filter_step(&st, 100.0, 0.0, dt, &cpu, 0.05);
        }
        assert!(
            (st.p_cpu_mw - 63.2).abs() < 1.0,
            "step response {} not within scheme error of 63.2",
            st.p_cpu_mw
        );
    }

    #[test]
    fn filter_rise_time_matches_analytic_factor() {
        // 10-90% rise time of a first-order lag is 2.2 * T
        let cpu = cpu_no_burst(0.0, 100.0);
        let mut st = ItState {
            u_cpu: 0.0,
            p_cpu_mw: 0.0,
            p_gpu_mw: 0.0,
            eta_it_mw: 0.0,
        };
        let dt = 1e-4;
        let (mut t10, mut t90) = (None, None);
        for k in 0..20_000 {
            st = it_filter_step(&st, 100.0, 0.0, dt, &cpu, 0.05);
            let t = (k + 1) as f64 * dt;
            if t10.is_none() && st.p_cpu_mw >= 10.0 {
                t10 = Some(t);
            }
            if t90.is_none() && st.p_cpu_mw >= 90.0 {
                t90 = Some(t);
                break;
            }
        }
        let rise = t90.unwrap() - t10.unwrap();
        assert!(
            (rise - 0.110).abs() < 0.005,
            "10-90% rise time {rise} s differs from 2.2*T = 0.110 s"
        );
    }

    #[test]
    fn filter_output_bounded_by_raw_input_bounds() {
        // first-order lag is monotone: output never overshoots the input range
        let cpu = cpu_no_burst(0.0, 100.0);
        let mut st = ItState {
            u_cpu: 0.0,
            p_cpu_mw: 40.0,
            p_gpu_mw: 0.0,
            eta_it_mw: 0.0,
        };
        let mut lo = 40.0f64;
        let mut hi = 40.0f64;
        for k in 0..5_000 {
            let raw = if (k / 700) % 2 == 0 { 97.0 } else { 12.0 };
            lo = lo.min(raw);
            hi = hi.max(raw);
            st = it_filter_step(&st, raw, 0.0, 0.001, &cpu, 0.05);
            assert!(st.p_cpu_mw >= lo - 1e-9 && st.p_cpu_mw <= hi + 1e-9);
        }
    }

    #[test]
    fn it_power_sums_and_floors() {
        let st = |c, g, n| ItState {
            u_cpu: 0.0,
            p_cpu_mw: c,
            p_gpu_mw: g,
            eta_it_mw: n,
        };
        assert_eq!(it_power(&st(100.0, 50.0, 0.0)), 150.0);
        assert_eq!(it_power(&st(100.0, 50.0, -2.0)), 148.0);
        assert_eq!(it_power(&st(0.5, 0.0, -2.0)), 0.0);
    }

    #[test]
    fn zip_rated_voltage_returns_nominal() {
        let z = ZipParams {
            p0_mw: 10.0,
            q0_mvar: 4.0,
            a_p: 0.2,
            b_p: 0.3,
            c_p: 0.5,
            a_q: 0.2,
            b_q: 0.3,
            c_q: 0.5,
        };
        let (p, q) = zip_power(1.0, &z);
        assert_relative_eq!(p, 10.0, max_relative = 1e-12);
        assert_relative_eq!(q, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn zip_constant_power_limit_ignores_voltage() {
        let z = ZipParams {
            p0_mw: 10.0,
            q0_mvar: 0.0,
            a_p: 1.0,
            b_p: 0.0,
            c_p: 0.0,
            a_q: 1.0,
            b_q: 0.0,
            c_q: 0.0,
        };
        assert_eq!(zip_power(0.8, &z).0, zip_power(1.1, &z).0);
    }

    #[test]
    fn zip_hand_evaluated_point() {
        let z = ZipParams {
            p0_mw: 10.0,
            q0_mvar: 0.0,
            a_p: 0.2,
            b_p: 0.3,
            c_p: 0.5,
            a_q: 1.0,
            b_q: 0.0,
            c_q: 0.0,
        };
        // 10 * (0.2 + 0.27 + 0.405) = 8.75
        assert_relative_eq!(zip_power(0.9, &z).0, 8.75, max_relative = 1e-12);
    }

    #[test]
    fn zip_validation_rejects_bad_sum() {
        let z = ZipParams {
            p0_mw: 10.0,
            q0_mvar: 0.0,
            a_p: 0.2,
            b_p: 0.3,
            c_p: 0.4,
            a_q: 1.0,
            b_q: 0.0,
            c_q: 0.0,
        };
        assert!(z.validate().is_err());
    }

    #[test]
    fn demand_aggregation_is_exact() {
        let d = dc_demand(300.0, (60.0, 29.0), (5.0, 2.0));
        assert_eq!(d.p_dc_mw, 365.0);
        assert_eq!(d.q_dc_mvar, 31.0);
        assert_eq!(d.p_dc_mw, d.p_it_mw + d.p_cooling_mw + d.p_zip_mw);
        assert_eq!(d.q_dc_mvar, d.q_cooling_mvar + d.q_zip_mvar);
    }

    #[test]
    fn demand_degenerate_configurations() {
        let zero = dc_demand(0.0, (0.0, 0.0), (0.0, 0.0));
        assert_eq!(zero.p_dc_mw, 0.0);
        assert_eq!(zero.q_dc_mvar, 0.0);

        let zip_only = dc_demand(0.0, (0.0, 0.0), (5.0, 2.0));
        assert_eq!(zip_only.p_dc_mw, zip_only.p_zip_mw);
        assert_eq!(zip_only.q_dc_mvar, zip_only.q_zip_mvar);
    }
}

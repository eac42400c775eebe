//! Reduced test power system: aggregate synchronous machine with a
//! first-order governor, Y-bus network with fault injection, Newton network
//! solution on current mismatch, and washout-based bus frequency estimation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::dcload::ZipParams;
use crate::{SimError, SimResult};

pub const F0_HZ: f64 = 50.0;
pub const OMEGA_B_RAD_S: f64 = 2.0 * std::f64::consts::PI * F0_HZ;

/// Constant-power loads convert to constant impedance below this voltage so
/// the network equations stay solvable through deep fault dips.
pub const PQ_CONVERSION_V_PU: f64 = 0.7;

const NEWTON_TOL: f64 = 1e-8;
const NEWTON_MAX_IT: usize = 50;

/// One network bus; background demand attaches here as a ZIP load scaled to
/// system per-unit inside the solver.
#[derive(Debug, Clone)]
pub struct Bus {
    pub name: String,
    pub zip: Option<ZipParams>,
}

#[derive(Debug, Clone, Copy)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r_pu: f64,
    pub x_pu: f64,
}

/// Y-bus network with an optional fault shunt.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub s_sys_mva: f64,
    y: DMatrix<Complex64>,
    pub fault: Option<(usize, Complex64)>,
}

impl NetworkModel {
    pub fn new(buses: Vec<Bus>, lines: Vec<Line>, s_sys_mva: f64) -> SimResult<Self> {
        if buses.is_empty() {
            return Err(SimError::Config("network needs at least one bus".into()));
        }
        for l in &lines {
            if l.from >= buses.len() || l.to >= buses.len() || l.from == l.to {
                return Err(SimError::Config(format!(
                    "line endpoints invalid: {} -> {}",
                    l.from, l.to
                )));
            }
            if l.x_pu == 0.0 && l.r_pu == 0.0 {
                return Err(SimError::Config("line impedance must be nonzero".into()));
            }
        }
        let mut net = Self {
            y: DMatrix::zeros(buses.len(), buses.len()),
            buses,
            lines,
            s_sys_mva,
            fault: None,
        };
        net.rebuild_y();
        Ok(net)
    }

    fn rebuild_y(&mut self) {
        let n = self.buses.len();
        let mut y = DMatrix::<Complex64>::zeros(n, n);
        for l in &self.lines {
            let y_line = 1.0 / Complex64::new(l.r_pu, l.x_pu);
            y[(l.from, l.from)] += y_line;
            y[(l.to, l.to)] += y_line;
            y[(l.from, l.to)] -= y_line;
            y[(l.to, l.from)] -= y_line;
        }
        if let Some((bus, y_f)) = self.fault {
            y[(bus, bus)] += y_f;
        }
        self.y = y;
    }

    /// Insert a fault shunt at `bus`. Replaces any existing fault.
    pub fn apply_fault(&mut self, bus: usize, y_fault: Complex64) -> SimResult<()> {
        if bus >= self.buses.len() {
            return Err(SimError::Config(format!("unknown fault bus index {bus}")));
        }
        self.fault = Some((bus, y_fault));
        self.rebuild_y();
        Ok(())
    }

    pub fn clear_fault(&mut self) {
        self.fault = None;
        self.rebuild_y();
    }

    pub fn bus_index(&self, name: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.name == name)
    }

    pub fn n(&self) -> usize {
        self.buses.len()
    }
}

/// Voltage source driving the solve: either a fixed-voltage bus (used at
/// initialization) or the machine EMF behind its transient reactance.
#[derive(Debug, Clone, Copy)]
pub enum SourceSpec {
    Slack { bus: usize, v: Complex64 },
    Norton { bus: usize, emf: Complex64, y_src: Complex64 },
}

/// Constant-PQ withdrawal (MW / Mvar) at a bus, converted to constant
/// impedance below [`PQ_CONVERSION_V_PU`].
#[derive(Debug, Clone, Copy)]
pub struct PqLoad {
    pub bus: usize,
    pub p_mw: f64,
    pub q_mvar: f64,
}

#[derive(Debug, Clone)]
pub struct NetworkSolution {
    pub v: Vec<Complex64>,
    pub iterations: usize,
}

/// Load current and its partial derivatives w.r.t. the bus voltage
/// components, for one bus. `s` is in system per-unit.
struct LoadTerm {
    i_re: f64,
    i_im: f64,
    d_ire_de: f64,
    d_ire_df: f64,
    d_iim_de: f64,
    d_iim_df: f64,
}

/// Current drawn by a power function S(vm) evaluated at V = e + jf:
/// I = conj(S/V) = (P - jQ)(e + jf) / vm^2.
fn load_current(e: f64, f: f64, p: f64, q: f64, dp_dvm: f64, dq_dvm: f64) -> LoadTerm {
    let vm2 = e * e + f * f;
    let vm = vm2.sqrt();
    let i_re = (p * e + q * f) / vm2;
    let i_im = (p * f - q * e) / vm2;
    // d(vm)/de = e/vm, d(vm)/df = f/vm
    let d_ire_de = ((dp_dvm * e / vm) * e + p + (dq_dvm * e / vm) * f) / vm2
        - 2.0 * e * (p * e + q * f) / (vm2 * vm2);
    let d_ire_df = ((dp_dvm * f / vm) * e + (dq_dvm * f / vm) * f + q) / vm2
        - 2.0 * f * (p * e + q * f) / (vm2 * vm2);
    let d_iim_de = ((dp_dvm * e / vm) * f - (dq_dvm * e / vm) * e - q) / vm2
        - 2.0 * e * (p * f - q * e) / (vm2 * vm2);
    let d_iim_df = ((dp_dvm * f / vm) * f + p - (dq_dvm * f / vm) * e) / vm2
        - 2.0 * f * (p * f - q * e) / (vm2 * vm2);
    LoadTerm {
        i_re,
        i_im,
        d_ire_de,
        d_ire_df,
        d_iim_de,
        d_iim_df,
    }
}

fn total_load_term(net: &NetworkModel, bus: usize, e: f64, f: f64, pq: &[PqLoad]) -> LoadTerm {
    let mut term = LoadTerm {
        i_re: 0.0,
        i_im: 0.0,
        d_ire_de: 0.0,
        d_ire_df: 0.0,
        d_iim_de: 0.0,
        d_iim_df: 0.0,
    };
    let vm = (e * e + f * f).sqrt();
    let s_base = net.s_sys_mva;

    let mut add = |t: LoadTerm| {
        term.i_re += t.i_re;
        term.i_im += t.i_im;
        term.d_ire_de += t.d_ire_de;
        term.d_ire_df += t.d_ire_df;
        term.d_iim_de += t.d_iim_de;
        term.d_iim_df += t.d_iim_df;
    };

    if let Some(z) = &net.buses[bus].zip {
        let p0 = z.p0_mw / s_base;
        let q0 = z.q0_mvar / s_base;
        let p = p0 * (z.a_p + z.b_p * vm + z.c_p * vm * vm);
        let q = q0 * (z.a_q + z.b_q * vm + z.c_q * vm * vm);
        let dp = p0 * (z.b_p + 2.0 * z.c_p * vm);
        let dq = q0 * (z.b_q + 2.0 * z.c_q * vm);
        add(load_current(e, f, p, q, dp, dq));
    }
    for l in pq.iter().filter(|l| l.bus == bus) {
        let p0 = l.p_mw / s_base;
        let q0 = l.q_mvar / s_base;
        if vm >= PQ_CONVERSION_V_PU {
            add(load_current(e, f, p0, q0, 0.0, 0.0));
        } else {
            // constant-impedance continuation: I = conj(S)/v_th^2 * V
            let g = p0 / (PQ_CONVERSION_V_PU * PQ_CONVERSION_V_PU);
            let b = q0 / (PQ_CONVERSION_V_PU * PQ_CONVERSION_V_PU);
            add(LoadTerm {
                i_re: g * e + b * f,
                i_im: g * f - b * e,
                d_ire_de: g,
                d_ire_df: b,
                d_iim_de: -b,
                d_iim_df: g,
            });
        }
    }
    term
}

/// Full-Newton network solution on nodal current mismatch, cartesian
/// voltage coordinates, warm-started from `v0`.
pub fn network_solve(
    net: &NetworkModel,
    source: SourceSpec,
    pq_loads: &[PqLoad],
    v0: &[Complex64],
) -> Result<NetworkSolution, (usize, f64)> {
    let n = net.n();
    debug_assert_eq!(v0.len(), n);
    let mut v: Vec<Complex64> = v0.to_vec();

    // fold the Norton source admittance into the diagonal
    let mut y = net.y.clone();
    let mut i_src = vec![Complex64::new(0.0, 0.0); n];
    let slack_bus = match source {
        SourceSpec::Slack { bus, v: vs } => {
            v[bus] = vs;
            Some(bus)
        }
        SourceSpec::Norton { bus, emf, y_src } => {
            y[(bus, bus)] += y_src;
            i_src[bus] = emf * y_src;
            None
        }
    };

    let mismatch = |v: &[Complex64]| -> (Vec<Complex64>, f64) {
        let mut f = vec![Complex64::new(0.0, 0.0); n];
        let mut worst = 0.0f64;
        for i in 0..n {
            if Some(i) == slack_bus {
                continue;
            }
            let mut acc = -i_src[i];
            for k in 0..n {
                acc += y[(i, k)] * v[k];
            }
            let lt = total_load_term(net, i, v[i].re, v[i].im, pq_loads);
            acc += Complex64::new(lt.i_re, lt.i_im);
            f[i] = acc;
            worst = worst.max(acc.re.abs()).max(acc.im.abs());
        }
        (f, worst)
    };

    let (mut f, mut worst) = mismatch(&v);
    if worst < NEWTON_TOL {
        return Ok(NetworkSolution { v, iterations: 0 });
    }

    // unknown indices: 2 per bus except the slack
    let unknowns: Vec<usize> = (0..n).filter(|&i| Some(i) != slack_bus).collect();
    let m = unknowns.len();

    for it in 1..=NEWTON_MAX_IT {
        let mut jac = DMatrix::<f64>::zeros(2 * m, 2 * m);
        let mut rhs = DVector::<f64>::zeros(2 * m);
        for (row, &i) in unknowns.iter().enumerate() {
            rhs[2 * row] = -f[i].re;
            rhs[2 * row + 1] = -f[i].im;
            for (col, &k) in unknowns.iter().enumerate() {
                let yik = y[(i, k)];
                // network part: d(Y V)/d(e_k, f_k)
                jac[(2 * row, 2 * col)] = yik.re;
                jac[(2 * row, 2 * col + 1)] = -yik.im;
                jac[(2 * row + 1, 2 * col)] = yik.im;
                jac[(2 * row + 1, 2 * col + 1)] = yik.re;
            }
            // local load part
            let lt = total_load_term(net, i, v[i].re, v[i].im, pq_loads);
            let col = unknowns.iter().position(|&k| k == i).unwrap();
            jac[(2 * row, 2 * col)] += lt.d_ire_de;
            jac[(2 * row, 2 * col + 1)] += lt.d_ire_df;
            jac[(2 * row + 1, 2 * col)] += lt.d_iim_de;
            jac[(2 * row + 1, 2 * col + 1)] += lt.d_iim_df;
        }
        let delta = match jac.lu().solve(&rhs) {
            Some(d) => d,
            None => return Err((it, worst)),
        };
        for (row, &i) in unknowns.iter().enumerate() {
            v[i] += Complex64::new(delta[2 * row], delta[2 * row + 1]);
        }
        let (f_new, worst_new) = mismatch(&v);
        f = f_new;
        worst = worst_new;
        if worst < NEWTON_TOL {
            return Ok(NetworkSolution { v, iterations: it });
        }
    }
    Err((NEWTON_MAX_IT, worst))
}

/// Aggregate machine parameters. Inertia, damping, droop and reactance are
/// on the machine MVA rating.
#[derive(Debug, Clone, Copy)]
pub struct GenParams {
    pub h_s: f64,
    pub d_pu: f64,
    pub r_droop_pu: f64,
    pub t_gov_s: f64,
    pub xd_t_pu: f64,
    pub s_base_mva: f64,
    pub e_mag_pu: f64,
}

impl GenParams {
    pub fn validate(&self) -> SimResult<()> {
        if !(self.h_s > 0.0) {
            return Err(SimError::Config(format!(
                "machine inertia must be > 0, got {}",
                self.h_s
            )));
        }
        if !(self.r_droop_pu > 0.0) {
            return Err(SimError::Config(format!(
                "governor droop must be > 0, got {}",
                self.r_droop_pu
            )));
        }
        if !(self.t_gov_s > 0.0) {
            return Err(SimError::Config(format!(
                "governor time constant must be > 0, got {}",
                self.t_gov_s
            )));
        }
        if !(self.xd_t_pu > 0.0) {
            return Err(SimError::Config(format!(
                "transient reactance must be > 0, got {}",
                self.xd_t_pu
            )));
        }
        if !(self.s_base_mva > 0.0) {
            return Err(SimError::Config(format!(
                "machine rating must be > 0, got {}",
                self.s_base_mva
            )));
        }
        Ok(())
    }
}

/// Classical machine state: rotor angle, speed deviation, governor output
/// and the fixed governor reference.
#[derive(Debug, Clone, Copy)]
pub struct GenState {
    pub delta_rad: f64,
    pub omega_dev_pu: f64,
    pub p_gov_pu: f64,
    pub p_ref_pu: f64,
}

/// One trapezoidal step of the swing and governor equations with the
/// electrical power held constant over the step:
///
/// ```text
/// 2H w' = p_gov - p_elec - D w
/// Tg p_gov' = -w / R - p_gov + p_ref
/// delta' = omega_b w
/// ```
pub fn gen_step(s: &GenState, p_elec_pu: f64, dt: f64, p: &GenParams) -> Result<GenState, f64> {
    let h2 = 2.0 * p.h_s;
    let a = dt / (2.0 * h2);
    let b = dt / (2.0 * p.t_gov_s);

    // trapezoidal update is linear in (w+, g+): solve the 2x2 system
    // w+ = w + a [ (g + g+) - 2 p_e - D (w + w+) ]
    // g+ = g + b [ 2 p_ref - (w + w+)/R - (g + g+) ]
    let w = s.omega_dev_pu;
    let g = s.p_gov_pu;
    let a11 = 1.0 + a * p.d_pu;
    let a12 = -a;
    let a21 = b / p.r_droop_pu;
    let a22 = 1.0 + b;
    let r1 = w + a * (g - 2.0 * p_elec_pu - p.d_pu * w);
    let r2 = g + b * (2.0 * s.p_ref_pu - w / p.r_droop_pu - g);
    let det = a11 * a22 - a12 * a21;
    let w_next = (r1 * a22 - a12 * r2) / det;
    let g_next = (a11 * r2 - a21 * r1) / det;
    let delta_next = s.delta_rad + dt * OMEGA_B_RAD_S * 0.5 * (w + w_next);

    if w_next.abs() > 0.1 {
        return Err(w_next);
    }
    Ok(GenState {
        delta_rad: delta_next,
        omega_dev_pu: w_next,
        p_gov_pu: g_next,
        p_ref_pu: s.p_ref_pu,
    })
}

/// Washout-based bus frequency estimation: angle increments are low-pass
/// filtered into a frequency deviation, and its filtered derivative is
/// emitted as ROCOF.
#[derive(Debug, Clone)]
pub struct FreqEstimator {
    pub t_w_s: f64,
    prev_phi: Vec<f64>,
    f_dev_hz: Vec<f64>,
    rocof_hz_s: Vec<f64>,
    started: bool,
    pub unwrap_warnings: usize,
}

impl FreqEstimator {
    pub fn new(t_w_s: f64, n_bus: usize) -> Self {
        Self {
            t_w_s,
            prev_phi: vec![0.0; n_bus],
            f_dev_hz: vec![0.0; n_bus],
            rocof_hz_s: vec![0.0; n_bus],
            started: false,
            unwrap_warnings: 0,
        }
    }

    pub fn reset_angles(&mut self, v: &[Complex64]) {
        for (i, vi) in v.iter().enumerate() {
            self.prev_phi[i] = vi.arg();
        }
        self.started = true;
    }

    /// Update with the freshly solved phasors; returns true when an angle
    /// jump above pi/2 per step had to be unwrapped.
    pub fn update(&mut self, v: &[Complex64], dt: f64) -> bool {
        if !self.started {
            self.reset_angles(v);
            return false;
        }
        let mut jumped = false;
        let alpha = dt / self.t_w_s;
        for (i, vi) in v.iter().enumerate() {
            let phi = vi.arg();
            let mut dphi = phi - self.prev_phi[i];
            while dphi > std::f64::consts::PI {
                dphi -= 2.0 * std::f64::consts::PI;
            }
            while dphi < -std::f64::consts::PI {
                dphi += 2.0 * std::f64::consts::PI;
            }
            if dphi.abs() > std::f64::consts::FRAC_PI_2 {
                jumped = true;
                self.unwrap_warnings += 1;
            }
            self.prev_phi[i] = phi;
            let f_raw = dphi / (2.0 * std::f64::consts::PI * dt);
            let f_prev = self.f_dev_hz[i];
            // implicit first-order filters
            let f_new = (f_prev + alpha * f_raw) / (1.0 + alpha);
            let rocof_raw = (f_new - f_prev) / dt;
            self.rocof_hz_s[i] = (self.rocof_hz_s[i] + alpha * rocof_raw) / (1.0 + alpha);
            self.f_dev_hz[i] = f_new;
        }
        jumped
    }

    pub fn f_dev_hz(&self, bus: usize) -> f64 {
        self.f_dev_hz[bus]
    }

    pub fn rocof_hz_s(&self, bus: usize) -> f64 {
        self.rocof_hz_s[bus]
    }
}

/// Apparent power injected by the source into the network at its bus.
pub fn source_injection(net: &NetworkModel, source: SourceSpec, v: &[Complex64]) -> Complex64 {
    match source {
        SourceSpec::Slack { bus, .. } => {
            let mut i = Complex64::new(0.0, 0.0);
            for k in 0..net.n() {
                i += net.y[(bus, k)] * v[k];
            }
            v[bus] * i.conj()
        }
        SourceSpec::Norton { bus, emf, y_src } => {
            let i = (emf - v[bus]) * y_src;
            v[bus] * i.conj()
        }
    }
}

/// Current injected by the source into the network at its bus.
pub fn source_current(net: &NetworkModel, source: SourceSpec, v: &[Complex64]) -> Complex64 {
    match source {
        SourceSpec::Slack { bus, .. } => {
            let mut i = Complex64::new(0.0, 0.0);
            for k in 0..net.n() {
                i += net.y[(bus, k)] * v[k];
            }
            i
        }
        SourceSpec::Norton { bus, emf, y_src } => (emf - v[bus]) * y_src,
    }
}

//! Link budget at the authenticated UAV's receiver.
//!
//! Large-scale loss uses UMi street-canyon closed forms with a geometric
//! line-of-sight test against the building field. Fast fading is a reduced
//! CDL-D process: one Rician LOS ray plus `C` equal-power scattered clusters
//! with per-cluster Doppler shifts, power-averaged over `s` subchannels.
//!
//! Carrier frequency, bandwidth and slot rate are not fixed by any public
//! reference scenario; the defaults here (3.5 GHz, 10 MHz, 1 ms slots) are
//! assumptions.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::scenario::{Building, Node, Role, Scenario, Vec3};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConstants {
    pub carrier_freq_ghz: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    pub subchannels: usize,
    pub slots_per_trace: usize,
    pub slot_duration_s: f64,
    pub rician_k_db: f64,
    pub clusters: usize,
    /// Speed of moving scatterers around otherwise static links.
    pub scatterer_speed_mps: f64,
    pub load: LoadModel,
}

impl Default for RadioConstants {
    fn default() -> Self {
        Self {
            carrier_freq_ghz: 3.5,
            bandwidth_hz: 10e6,
            noise_figure_db: 9.0,
            subchannels: 12,
            slots_per_trace: 20_000,
            slot_duration_s: 1e-3,
            rician_k_db: 13.3,
            clusters: 12,
            scatterer_speed_mps: 1.0,
            load: LoadModel::default(),
        }
    }
}

impl RadioConstants {
    /// Constants sized for a scenario's simulation time.
    pub fn for_sim_time(sim_time_s: f64) -> Self {
        let mut c = Self::default();
        c.slots_per_trace = (sim_time_s / c.slot_duration_s).round().max(1.0) as usize;
        c
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::Config("bandwidth must be positive".into()));
        }
        if self.subchannels == 0 || self.subchannels > self.slots_per_trace {
            return Err(Error::Config(format!(
                "subchannels must satisfy 1 <= s <= N_i (s={}, N_i={})",
                self.subchannels, self.slots_per_trace
            )));
        }
        if !(self.slot_duration_s > 0.0) || self.clusters == 0 {
            return Err(Error::Config("slot duration and cluster count must be positive".into()));
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / (self.carrier_freq_ghz * 1e9)
    }

    /// Thermal noise floor over the channel bandwidth, dBm.
    pub fn noise_dbm(&self) -> f64 {
        -174.0 + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db
    }

    pub fn rician_k_linear(&self) -> f64 {
        db_to_linear(self.rician_k_db)
    }
}

/// On/off traffic of small cells that do not serve the authenticated UAV.
///
/// A cell serving `u` ground users is busy in a slot with stationary
/// probability `1 - (1 - per_user_activity)^u`, in bursts of mean length
/// `mean_burst_slots`. Idle cells still radiate reference signals at
/// `idle_offset_db` below full power.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadModel {
    pub per_user_activity: f64,
    pub mean_burst_slots: f64,
    pub idle_offset_db: f64,
}

impl Default for LoadModel {
    fn default() -> Self {
        Self {
            per_user_activity: 0.2,
            mean_burst_slots: 20.0,
            idle_offset_db: -10.0,
        }
    }
}

impl LoadModel {
    pub fn busy_probability(&self, users: usize) -> f64 {
        1.0 - (1.0 - self.per_user_activity).powi(users as i32)
    }

    /// (P(idle -> busy), P(busy -> idle)) per slot.
    pub fn transition_probabilities(&self, users: usize) -> (f64, f64) {
        let rho = self.busy_probability(users);
        let off = 1.0 / self.mean_burst_slots.max(1.0);
        if rho <= 0.0 {
            return (0.0, off);
        }
        let on = (rho / (1.0 - rho).max(1e-12) * off).min(1.0);
        (on, off)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Geometric line-of-sight test: true iff no building volume cuts the segment.
pub fn los_probability(tx: Vec3, rx: Vec3, buildings: &[Building]) -> bool {
    !buildings.iter().any(|b| b.blocks_segment(tx, rx))
}

/// UMi street-canyon pathloss in dB.
pub fn pathloss_db(d3: f64, los: bool, constants: &RadioConstants) -> Result<f64> {
    if !(d3 >= 1.0) {
        return Err(Error::Domain(format!("3-D distance must be >= 1 m, got {d3}")));
    }
    let slope = if los { 21.0 } else { 31.9 };
    Ok(32.4 + slope * d3.log10() + 20.0 * constants.carrier_freq_ghz.log10())
}

/// Fast-fading state of one transmitter -> receiver link.
#[derive(Debug, Clone)]
pub struct LinkState {
    pub tx: usize,
    pub rx: usize,
    pub los: bool,
    pub pathloss_db: f64,
    pub rician_k: f64,
    /// Maximum Doppler shift of the scattered clusters, Hz.
    pub doppler_hz: f64,
    /// Doppler shift of the direct ray, Hz.
    pub los_doppler_hz: f64,
    /// Arrival-angle cosines, one per cluster.
    pub cluster_cos: Vec<f64>,
    /// Cluster phases, `subchannels x clusters`, row-major.
    pub cluster_phases: Vec<f64>,
    pub los_phase: f64,
    clusters: usize,
}

impl LinkState {
    /// Fresh link with random cluster phases and angles.
    pub fn new<R: Rng>(
        tx: usize,
        rx: usize,
        los: bool,
        pathloss_db: f64,
        rician_k: f64,
        constants: &RadioConstants,
        rng: &mut R,
    ) -> Self {
        let clusters = constants.clusters;
        let cluster_cos = (0..clusters).map(|_| rng.random_range(0.0..TAU).cos()).collect();
        let cluster_phases = (0..clusters * constants.subchannels)
            .map(|_| rng.random_range(0.0..TAU))
            .collect();
        Self {
            tx,
            rx,
            los,
            pathloss_db,
            rician_k,
            doppler_hz: 0.0,
            los_doppler_hz: 0.0,
            cluster_cos,
            cluster_phases,
            los_phase: 0.0,
            clusters,
        }
    }

    pub fn subchannels(&self) -> usize {
        self.cluster_phases.len() / self.clusters
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    /// Complex gain of one subchannel at time `t`.
    pub fn gain(&self, t: f64, subchannel: usize) -> Complex64 {
        let k = self.rician_k;
        let scatter: Complex64 = if k.is_infinite() {
            Complex64::new(0.0, 0.0)
        } else {
            let phases = &self.cluster_phases[subchannel * self.clusters..][..self.clusters];
            let mut acc = Complex64::new(0.0, 0.0);
            for (phi, cos) in phases.iter().zip(&self.cluster_cos) {
                let (s, c) = (phi + TAU * self.doppler_hz * cos * t).sin_cos();
                acc.re += c;
                acc.im += s;
            }
            acc * ((1.0 / (k + 1.0)).sqrt() / (self.clusters as f64).sqrt())
        };
        let los_amp = if k.is_infinite() {
            1.0
        } else {
            (k / (k + 1.0)).sqrt()
        };
        let (s, c) = (self.los_phase + TAU * self.los_doppler_hz * t).sin_cos();
        Complex64::new(los_amp * c, los_amp * s) + scatter
    }

    /// Mean of `|g|^2` over subchannels.
    pub fn mean_power_gain(&self, t: f64) -> f64 {
        let s = self.subchannels();
        (0..s).map(|i| self.gain(t, i).norm_sqr()).sum::<f64>() / s as f64
    }

    /// Changes the Doppler shifts while keeping the gain continuous at `t`.
    pub fn retune_doppler(&mut self, t: f64, doppler_hz: f64, los_doppler_hz: f64) {
        let d_scatter = TAU * (self.doppler_hz - doppler_hz) * t;
        let s = self.subchannels();
        for sc in 0..s {
            for (c, cos) in self.cluster_cos.iter().enumerate() {
                let phi = &mut self.cluster_phases[sc * self.clusters + c];
                *phi = (*phi + d_scatter * cos).rem_euclid(TAU);
            }
        }
        self.los_phase =
            (self.los_phase + TAU * (self.los_doppler_hz - los_doppler_hz) * t).rem_euclid(TAU);
        self.doppler_hz = doppler_hz;
        self.los_doppler_hz = los_doppler_hz;
    }
}

/// Gain of subchannel 0 at time `t`.
pub fn cdl_fading_sample(link: &LinkState, t: f64) -> Complex64 {
    link.gain(t, 0)
}

/// Received power in milliwatts, averaged across subchannels.
pub fn received_power_mw(tx_power_dbm: f64, link: &LinkState, t: f64) -> f64 {
    db_to_linear(tx_power_dbm - link.pathloss_db) * link.mean_power_gain(t)
}

/// Linear powers (mW) seen by the authenticated UAV in one slot.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SlotPowers {
    pub serving_mw: f64,
    pub other_cells_mw: Vec<f64>,
    pub attackers_mw: Vec<f64>,
    pub noise_mw: f64,
}

impl SlotPowers {
    pub fn interference_mw(&self, include_attackers: bool) -> f64 {
        let cells: f64 = self.other_cells_mw.iter().sum();
        let jam: f64 = if include_attackers {
            self.attackers_mw.iter().sum()
        } else {
            0.0
        };
        cells + jam
    }

    /// (RSSI dBm, SINR dB).
    pub fn measurements(&self, include_attackers: bool) -> (f64, f64) {
        combine_measurements(
            self.serving_mw,
            &self.other_cells_mw,
            if include_attackers {
                &self.attackers_mw
            } else {
                &[]
            },
            self.noise_mw,
        )
    }
}

/// RSSI (dBm) and SINR (dB) from linear powers.
pub fn combine_measurements(
    serving_mw: f64,
    other_cells_mw: &[f64],
    attackers_mw: &[f64],
    noise_mw: f64,
) -> (f64, f64) {
    let interference = other_cells_mw.iter().sum::<f64>() + attackers_mw.iter().sum::<f64>();
    let rssi = linear_to_db(serving_mw + interference + noise_mw);
    let sinr = linear_to_db(serving_mw / (interference + noise_mw));
    (rssi, sinr)
}

#[derive(Debug, Clone)]
struct CellLoad {
    users: usize,
    busy: bool,
    rng: ChaCha8Rng,
}

/// Per-trace receiver state: one link per transmitter plus cell load chains.
#[derive(Debug, Clone)]
pub struct ReceiverChannel {
    constants: RadioConstants,
    rx: usize,
    serving: usize,
    links: Vec<(usize, LinkState)>,
    loads: Vec<Option<CellLoad>>,
    /// Slot from which attackers radiate; `None` means from the start.
    jammer_onset_s: Option<f64>,
}

/// Independent stream per (trace seed, transmitter id).
fn link_rng(trace_seed: u64, tx: usize, salt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(trace_seed);
    rng.set_stream(((tx as u64) << 8) | salt);
    rng
}

impl ReceiverChannel {
    pub fn new(scenario: &Scenario, constants: &RadioConstants, trace_seed: u64) -> Result<Self> {
        constants.validate()?;
        let uav = scenario.auth_uav();
        let serving = uav
            .serving_cell
            .ok_or_else(|| Error::Domain("authenticated UAV has no serving cell".into()))?;
        let k_los = constants.rician_k_linear();
        let mut links = Vec::new();
        let mut loads = Vec::new();
        for n in &scenario.nodes {
            if !matches!(n.role, Role::SmallCell | Role::Attacker) {
                continue;
            }
            let mut rng = link_rng(trace_seed, n.id, 1);
            let los = los_probability(n.position, uav.position, &scenario.buildings);
            let d = n.position.distance(uav.position).max(1.0);
            let pl = pathloss_db(d, los, constants)?;
            let k = if los { k_los } else { 0.0 };
            let mut link = LinkState::new(n.id, uav.id, los, pl, k, constants, &mut rng);
            let (fd, fd_los) = doppler_for(n, uav, constants);
            link.retune_doppler(0.0, fd, fd_los);
            links.push((n.id, link));
            let load = (n.role == Role::SmallCell && n.id != serving).then(|| {
                let users = scenario
                    .nodes_with_role(Role::User)
                    .filter(|u| u.serving_cell == Some(n.id))
                    .count();
                let mut rng = link_rng(trace_seed, n.id, 2);
                let busy = rng.random::<f64>() < constants.load.busy_probability(users);
                CellLoad { users, busy, rng }
            });
            loads.push(load);
        }
        Ok(Self {
            constants: constants.clone(),
            rx: uav.id,
            serving,
            links,
            loads,
            jammer_onset_s: None,
        })
    }

    pub fn with_jammer_onset(mut self, onset_s: Option<f64>) -> Self {
        self.jammer_onset_s = onset_s;
        self
    }

    pub fn links(&self) -> impl Iterator<Item = &LinkState> {
        self.links.iter().map(|(_, l)| l)
    }

    /// Re-evaluates geometry (LOS, pathloss, Doppler) for the snapshot at `t`.
    pub fn update_geometry(&mut self, scenario: &Scenario, t: f64) -> Result<()> {
        let uav = &scenario.nodes[self.rx];
        let k_los = self.constants.rician_k_linear();
        for (id, link) in &mut self.links {
            let n = &scenario.nodes[*id];
            let los = los_probability(n.position, uav.position, &scenario.buildings);
            let d = n.position.distance(uav.position).max(1.0);
            link.los = los;
            link.rician_k = if los { k_los } else { 0.0 };
            link.pathloss_db = pathloss_db(d, los, &self.constants)?;
            let (fd, fd_los) = doppler_for(n, uav, &self.constants);
            if fd != link.doppler_hz || fd_los != link.los_doppler_hz {
                link.retune_doppler(t, fd, fd_los);
            }
        }
        Ok(())
    }

    /// Powers at slot time `t`; advances the cell load chains by one slot.
    pub fn slot_powers(&mut self, scenario: &Scenario, t: f64) -> SlotPowers {
        let noise_mw = db_to_linear(self.constants.noise_dbm());
        let jam_on = self.jammer_onset_s.map_or(true, |onset| t >= onset);
        let mut out = SlotPowers {
            noise_mw,
            ..Default::default()
        };
        for ((id, link), load) in self.links.iter().zip(self.loads.iter_mut()) {
            let node = &scenario.nodes[*id];
            match node.role {
                Role::SmallCell if *id == self.serving => {
                    out.serving_mw = received_power_mw(node.tx_power_dbm, link, t);
                }
                Role::SmallCell => {
                    let load = load.as_mut().expect("interfering cells carry a load chain");
                    let (on, off) = self.constants.load.transition_probabilities(load.users);
                    let u: f64 = load.rng.random();
                    load.busy = if load.busy { u >= off } else { u < on };
                    let power = if load.busy {
                        node.tx_power_dbm
                    } else {
                        node.tx_power_dbm + self.constants.load.idle_offset_db
                    };
                    out.other_cells_mw.push(received_power_mw(power, link, t));
                }
                Role::Attacker => {
                    let p = if jam_on {
                        received_power_mw(node.tx_power_dbm, link, t)
                    } else {
                        0.0
                    };
                    out.attackers_mw.push(p);
                }
                _ => {}
            }
        }
        out
    }
}

fn doppler_for(tx: &Node, rx: &Node, constants: &RadioConstants) -> (f64, f64) {
    let lambda = constants.wavelength_m();
    let rel = tx.velocity.sub(rx.velocity);
    let speed = (rel.dot(rel) + constants.scatterer_speed_mps.powi(2)).sqrt();
    let los_dir = rx.position.sub(tx.position);
    let dist = los_dir.norm();
    let radial = if dist > 0.0 {
        rel.dot(los_dir) / dist
    } else {
        0.0
    };
    (speed / lambda, radial / lambda)
}

/// RSSI and SINR at the authenticated UAV for a single slot of a fresh channel.
pub fn slot_measurements(
    scenario: &Scenario,
    constants: &RadioConstants,
    t: f64,
    trace_seed: u64,
) -> Result<(f64, f64)> {
    let mut rx = ReceiverChannel::new(scenario, constants, trace_seed)?;
    Ok(rx.slot_powers(scenario, t).measurements(true))
}

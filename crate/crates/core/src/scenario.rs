//! Urban air-to-ground world: small cells, ground users, the authenticated
//! UAV, jammer UAVs and a grid of rectangular buildings.
//!
//! Node tables are ordered cells, users, authenticated UAV, attackers. The
//! attackers are drawn last from the placement stream so that two configs
//! differing only in the attacker count share every other node position.

use std::fmt;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const USER_HEIGHT_M: f64 = 1.5;
pub const AUTH_UAV_HEIGHT_M: f64 = 100.0;
pub const ATTACKER_HEIGHT_RANGE_M: (f64, f64) = (30.0, 120.0);
pub const BUILDING_HEIGHT_RANGE_M: (f64, f64) = (10.0, 40.0);
pub const BUILDING_GRID: usize = 5;
pub const BUILDING_OCCUPANCY: f64 = 0.5;
pub const PLACEMENT_RETRIES: usize = 10_000;
/// Attackers stop short of the victim so link distances stay >= 1 m.
pub const ATTACKER_STANDOFF_M: f64 = 1.0;

pub const CANONICAL_USERS: [usize; 5] = [0, 3, 5, 10, 20];
pub const CANONICAL_ATTACKERS: [usize; 5] = [0, 1, 2, 3, 4];
pub const CANONICAL_ATTACKER_POWERS_DBM: [f64; 4] = [0.0, 2.0, 10.0, 20.0];
pub const CANONICAL_DISTANCES_M: [f64; 3] = [100.0, 200.0, 500.0];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Vec3) -> f64 {
        self.sub(o).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityGroup {
    NoneSpeed,
    AttackerSpeed,
    UserSpeed,
    BothSpeed,
}

impl MobilityGroup {
    pub const ALL: [MobilityGroup; 4] = [
        MobilityGroup::NoneSpeed,
        MobilityGroup::AttackerSpeed,
        MobilityGroup::UserSpeed,
        MobilityGroup::BothSpeed,
    ];

    pub fn attackers_move(self) -> bool {
        matches!(self, MobilityGroup::AttackerSpeed | MobilityGroup::BothSpeed)
    }

    pub fn users_move(self) -> bool {
        matches!(self, MobilityGroup::UserSpeed | MobilityGroup::BothSpeed)
    }

    /// Directory name used in the dataset tree.
    pub fn dir_name(self) -> &'static str {
        match self {
            MobilityGroup::NoneSpeed => "none_speed",
            MobilityGroup::AttackerSpeed => "attacker_speed",
            MobilityGroup::UserSpeed => "user_speed",
            MobilityGroup::BothSpeed => "both_speed",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            MobilityGroup::NoneSpeed => "None speed",
            MobilityGroup::AttackerSpeed => "Attacker speed",
            MobilityGroup::UserSpeed => "User speed",
            MobilityGroup::BothSpeed => "Both speed",
        }
    }
}

impl fmt::Display for MobilityGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

impl FromStr for MobilityGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none_speed" | "none" => Ok(MobilityGroup::NoneSpeed),
            "attacker_speed" | "attacker" => Ok(MobilityGroup::AttackerSpeed),
            "user_speed" | "user" => Ok(MobilityGroup::UserSpeed),
            "both_speed" | "both" => Ok(MobilityGroup::BothSpeed),
            other => Err(Error::Config(format!("unknown mobility group `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_users: usize,
    pub num_attackers: usize,
    pub num_small_cells: usize,
    pub num_auth_uavs: usize,
    pub attacker_power_dbm: f64,
    pub auth_uav_power_dbm: f64,
    pub small_cell_power_dbm: f64,
    pub serving_distance_m: f64,
    pub mobility_group: MobilityGroup,
    pub speed_mps: f64,
    pub sim_time_s: f64,
    pub area_m: (f64, f64),
    pub small_cell_height_m: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_users: 0,
            num_attackers: 0,
            num_small_cells: 10,
            num_auth_uavs: 1,
            attacker_power_dbm: 20.0,
            auth_uav_power_dbm: 2.0,
            small_cell_power_dbm: 4.0,
            serving_distance_m: 100.0,
            mobility_group: MobilityGroup::NoneSpeed,
            speed_mps: 10.0,
            sim_time_s: 20.0,
            area_m: (1000.0, 1000.0),
            small_cell_height_m: 10.0,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sim_time_s > 0.0) {
            return Err(Error::Config(format!(
                "sim_time must be positive, got {}",
                self.sim_time_s
            )));
        }
        if !(self.area_m.0 > 0.0 && self.area_m.1 > 0.0) {
            return Err(Error::Config(format!(
                "area dimensions must be positive, got {:?}",
                self.area_m
            )));
        }
        if self.num_auth_uavs != 1 {
            return Err(Error::Config(format!(
                "exactly one authenticated UAV is supported, got {}",
                self.num_auth_uavs
            )));
        }
        if self.num_small_cells == 0 {
            return Err(Error::Config("at least one small cell is required".into()));
        }
        if !(self.serving_distance_m > 0.0) {
            return Err(Error::Config(format!(
                "serving distance must be positive, got {}",
                self.serving_distance_m
            )));
        }
        if !(self.speed_mps >= 0.0) || !(self.small_cell_height_m > 0.0) {
            return Err(Error::Config("speed and cell height must be non-negative".into()));
        }
        Ok(())
    }

    /// True when every field sits in the published parameter domains.
    pub fn is_canonical(&self) -> bool {
        CANONICAL_USERS.contains(&self.num_users)
            && CANONICAL_ATTACKERS.contains(&self.num_attackers)
            && self.num_small_cells == 10
            && self.num_auth_uavs == 1
            && CANONICAL_ATTACKER_POWERS_DBM.contains(&self.attacker_power_dbm)
            && self.auth_uav_power_dbm == 2.0
            && self.small_cell_power_dbm == 4.0
            && CANONICAL_DISTANCES_M.contains(&self.serving_distance_m)
            && self.speed_mps == 10.0
            && self.sim_time_s == 20.0
            && self.area_m == (1000.0, 1000.0)
            && self.small_cell_height_m == 10.0
    }

    /// Short human-readable identifier used in error messages.
    pub fn cell_label(&self) -> String {
        format!(
            "group={} users={} attackers={} power={}dBm distance={}m seed={}",
            self.mobility_group,
            self.num_users,
            self.num_attackers,
            self.attacker_power_dbm,
            self.serving_distance_m,
            self.seed
        )
    }

    /// `key=value` lines for every field, in a fixed order.
    pub fn to_kv_lines(&self) -> Vec<(String, String)> {
        vec![
            ("num_users".into(), self.num_users.to_string()),
            ("num_attackers".into(), self.num_attackers.to_string()),
            ("num_small_cells".into(), self.num_small_cells.to_string()),
            ("num_auth_uavs".into(), self.num_auth_uavs.to_string()),
            ("attacker_power_dbm".into(), self.attacker_power_dbm.to_string()),
            ("auth_uav_power_dbm".into(), self.auth_uav_power_dbm.to_string()),
            ("small_cell_power_dbm".into(), self.small_cell_power_dbm.to_string()),
            ("serving_distance_m".into(), self.serving_distance_m.to_string()),
            ("mobility_group".into(), self.mobility_group.to_string()),
            ("speed_mps".into(), self.speed_mps.to_string()),
            ("sim_time_s".into(), self.sim_time_s.to_string()),
            ("area_x_m".into(), self.area_m.0.to_string()),
            ("area_y_m".into(), self.area_m.1.to_string()),
            ("small_cell_height_m".into(), self.small_cell_height_m.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }

    /// Inverse of [`ScenarioConfig::to_kv_lines`]; unknown keys are ignored.
    pub fn from_kv<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad value for {key}: `{v}`")))
        }
        let mut c = ScenarioConfig::default();
        for (k, v) in pairs {
            match k {
                "num_users" => c.num_users = num(k, v)?,
                "num_attackers" => c.num_attackers = num(k, v)?,
                "num_small_cells" => c.num_small_cells = num(k, v)?,
                "num_auth_uavs" => c.num_auth_uavs = num(k, v)?,
                "attacker_power_dbm" => c.attacker_power_dbm = num(k, v)?,
                "auth_uav_power_dbm" => c.auth_uav_power_dbm = num(k, v)?,
                "small_cell_power_dbm" => c.small_cell_power_dbm = num(k, v)?,
                "serving_distance_m" => c.serving_distance_m = num(k, v)?,
                "mobility_group" => c.mobility_group = v.parse()?,
                "speed_mps" => c.speed_mps = num(k, v)?,
                "sim_time_s" => c.sim_time_s = num(k, v)?,
                "area_x_m" => c.area_m.0 = num(k, v)?,
                "area_y_m" => c.area_m.1 = num(k, v)?,
                "small_cell_height_m" => c.small_cell_height_m = num(k, v)?,
                "seed" => c.seed = num(k, v)?,
                _ => {}
            }
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    SmallCell,
    User,
    AuthUav,
    Attacker,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::SmallCell => "small_cell",
            Role::User => "user",
            Role::AuthUav => "auth_uav",
            Role::Attacker => "attacker",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub role: Role,
    pub position: Vec3,
    pub velocity: Vec3,
    pub tx_power_dbm: f64,
    pub serving_cell: Option<usize>,
}

/// Axis-aligned building volume standing on the ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Building {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub height: f64,
}

impl Building {
    pub fn footprint_contains(&self, x: f64, y: f64) -> bool {
        x > self.x_min && x < self.x_max && y > self.y_min && y < self.y_max
    }

    pub fn contains(&self, p: Vec3) -> bool {
        self.footprint_contains(p.x, p.y) && p.z >= 0.0 && p.z < self.height
    }

    /// True when the open segment `a -> b` passes through the building interior.
    pub fn blocks_segment(&self, a: Vec3, b: Vec3) -> bool {
        const EPS: f64 = 1e-9;
        let lo = [self.x_min, self.y_min, 0.0];
        let hi = [self.x_max, self.y_max, self.height];
        let p = [a.x, a.y, a.z];
        let d = [b.x - a.x, b.y - a.y, b.z - a.z];
        let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
        for axis in 0..3 {
            if d[axis].abs() < 1e-15 {
                if p[axis] <= lo[axis] + EPS || p[axis] >= hi[axis] - EPS {
                    return false;
                }
            } else {
                let mut ta = (lo[axis] - p[axis]) / d[axis];
                let mut tb = (hi[axis] - p[axis]) / d[axis];
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
                if t1 - t0 <= EPS {
                    return false;
                }
            }
        }
        t1 - t0 > EPS
    }
}

/// Immutable snapshot of the world at `time_s`.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub time_s: f64,
    pub nodes: Vec<Node>,
    pub buildings: Arc<[Building]>,
    waypoints: Vec<Vec3>,
    mobility_rng: ChaCha8Rng,
}

impl Scenario {
    pub fn nodes_with_role(&self, role: Role) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(move |n| n.role == role)
    }

    pub fn cells(&self) -> impl Iterator<Item = &Node> {
        self.nodes_with_role(Role::SmallCell)
    }

    pub fn attackers(&self) -> impl Iterator<Item = &Node> {
        self.nodes_with_role(Role::Attacker)
    }

    pub fn auth_uav(&self) -> &Node {
        self.nodes
            .iter()
            .find(|n| n.role == Role::AuthUav)
            .expect("scenario always holds an authenticated UAV")
    }

    pub fn inside_building(&self, p: Vec3) -> bool {
        self.buildings.iter().any(|b| b.contains(p))
    }

    /// Node table as `nodes.csv` text.
    pub fn nodes_csv(&self) -> String {
        let mut out = String::from("id,role,x,y,z,tx_power_dbm,serving_cell\n");
        for n in &self.nodes {
            let serving = n.serving_cell.map(|c| c.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                n.id,
                n.role.as_str(),
                n.position.x,
                n.position.y,
                n.position.z,
                n.tx_power_dbm,
                serving
            );
        }
        out
    }

    /// Key-value metadata capturing the full config and seed.
    pub fn metadata_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.config.to_kv_lines() {
            if k == "seed" {
                continue;
            }
            let _ = writeln!(out, "{k}={v}");
        }
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "canonical={}", self.config.is_canonical());
        out
    }

    /// Writes `nodes.csv` and `scenario.txt` into `dir`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            ("nodes.csv", self.nodes_csv()),
            ("scenario.txt", self.metadata_kv()),
        ] {
            let path = dir.join(name);
            let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            f.write_all(body.as_bytes()).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn placement_error(config: &ScenarioConfig, reason: impl Into<String>) -> Error {
    Error::InfeasiblePlacement {
        config: config.cell_label(),
        reason: reason.into(),
    }
}

fn building_field(rng: &mut ChaCha8Rng, area: (f64, f64)) -> Vec<Building> {
    let cell_w = area.0 / BUILDING_GRID as f64;
    let cell_h = area.1 / BUILDING_GRID as f64;
    let mut buildings = Vec::new();
    for gx in 0..BUILDING_GRID {
        for gy in 0..BUILDING_GRID {
            // Draw every random value so the stream position does not depend
            // on which cells end up occupied.
            let occupied = rng.random::<f64>() < BUILDING_OCCUPANCY;
            let fw = rng.random_range(0.4..0.8) * cell_w;
            let fh = rng.random_range(0.4..0.8) * cell_h;
            let height = rng.random_range(BUILDING_HEIGHT_RANGE_M.0..BUILDING_HEIGHT_RANGE_M.1);
            if !occupied {
                continue;
            }
            let cx = (gx as f64 + 0.5) * cell_w;
            let cy = (gy as f64 + 0.5) * cell_h;
            buildings.push(Building {
                x_min: cx - fw / 2.0,
                y_min: cy - fh / 2.0,
                x_max: cx + fw / 2.0,
                y_max: cy + fh / 2.0,
                height,
            });
        }
    }
    buildings
}

fn sample_ground_point(
    rng: &mut ChaCha8Rng,
    config: &ScenarioConfig,
    buildings: &[Building],
    z: f64,
    what: &str,
) -> Result<Vec3> {
    for _ in 0..PLACEMENT_RETRIES {
        let p = Vec3::new(
            rng.random_range(0.0..config.area_m.0),
            rng.random_range(0.0..config.area_m.1),
            z,
        );
        if !buildings.iter().any(|b| b.contains(p)) {
            return Ok(p);
        }
    }
    Err(placement_error(config, format!("no free position for {what}")))
}

/// Builds the initial world for `config` from `rng_seed`.
pub fn generate_scenario(config: &ScenarioConfig, rng_seed: u64) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let buildings = building_field(&mut rng, config.area_m);
    let mut nodes = Vec::with_capacity(
        config.num_small_cells + config.num_users + 1 + config.num_attackers,
    );

    // Small cells: pole-mounted at street level, or on a rooftop when the
    // drawn spot falls on a building.
    for _ in 0..config.num_small_cells {
        let x = rng.random_range(0.0..config.area_m.0);
        let y = rng.random_range(0.0..config.area_m.1);
        let z = buildings
            .iter()
            .find(|b| b.footprint_contains(x, y))
            .map(|b| b.height)
            .unwrap_or(config.small_cell_height_m);
        nodes.push(Node {
            id: nodes.len(),
            role: Role::SmallCell,
            position: Vec3::new(x, y, z),
            velocity: Vec3::ZERO,
            tx_power_dbm: config.small_cell_power_dbm,
            serving_cell: None,
        });
    }
    let cell_positions: Vec<Vec3> = nodes.iter().map(|n| n.position).collect();
    let nearest_cell = |p: Vec3| -> usize {
        let mut best = 0;
        for (i, c) in cell_positions.iter().enumerate() {
            if c.distance(p) < cell_positions[best].distance(p) {
                best = i;
            }
        }
        best
    };

    for _ in 0..config.num_users {
        let p = sample_ground_point(&mut rng, config, &buildings, USER_HEIGHT_M, "user")?;
        nodes.push(Node {
            id: nodes.len(),
            role: Role::User,
            position: p,
            velocity: Vec3::ZERO,
            // Users are downlink receivers; no uplink power is modelled.
            tx_power_dbm: 0.0,
            serving_cell: Some(nearest_cell(p)),
        });
    }

    let (uav_pos, uav_cell) = place_auth_uav(&mut rng, config, &cell_positions, &buildings)?;
    let uav_id = nodes.len();
    nodes.push(Node {
        id: uav_id,
        role: Role::AuthUav,
        position: uav_pos,
        velocity: Vec3::ZERO,
        tx_power_dbm: config.auth_uav_power_dbm,
        serving_cell: Some(uav_cell),
    });

    for _ in 0..config.num_attackers {
        let mut placed = None;
        for _ in 0..PLACEMENT_RETRIES {
            let p = Vec3::new(
                rng.random_range(0.0..config.area_m.0),
                rng.random_range(0.0..config.area_m.1),
                rng.random_range(ATTACKER_HEIGHT_RANGE_M.0..ATTACKER_HEIGHT_RANGE_M.1),
            );
            if !buildings.iter().any(|b| b.contains(p)) && p.distance(uav_pos) > ATTACKER_STANDOFF_M
            {
                placed = Some(p);
                break;
            }
        }
        let p = placed.ok_or_else(|| placement_error(config, "no free airspace for attacker"))?;
        nodes.push(Node {
            id: nodes.len(),
            role: Role::Attacker,
            position: p,
            velocity: Vec3::ZERO,
            tx_power_dbm: config.attacker_power_dbm,
            serving_cell: None,
        });
    }

    let mut mobility_rng = ChaCha8Rng::seed_from_u64(rng_seed ^ 0x6d6f_6269_6c69_7479);
    let mut waypoints = Vec::new();
    if config.mobility_group.users_move() {
        for _ in 0..config.num_users {
            waypoints.push(sample_ground_point(
                &mut mobility_rng,
                config,
                &buildings,
                USER_HEIGHT_M,
                "user waypoint",
            )?);
        }
    }

    let mut scenario = Scenario {
        config: config.clone(),
        seed: rng_seed,
        time_s: 0.0,
        nodes,
        buildings: buildings.into(),
        waypoints,
        mobility_rng,
    };
    scenario.set_initial_velocities();
    Ok(scenario)
}

fn place_auth_uav(
    rng: &mut ChaCha8Rng,
    config: &ScenarioConfig,
    cells: &[Vec3],
    buildings: &[Building],
) -> Result<(Vec3, usize)> {
    let d = config.serving_distance_m;
    for _ in 0..PLACEMENT_RETRIES {
        let cell = rng.random_range(0..cells.len());
        let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
        let c = cells[cell];
        let dz = AUTH_UAV_HEIGHT_M - c.z;
        if dz.abs() > d {
            continue;
        }
        let horizontal = (d * d - dz * dz).sqrt();
        let p = Vec3::new(
            c.x + horizontal * azimuth.cos(),
            c.y + horizontal * azimuth.sin(),
            AUTH_UAV_HEIGHT_M,
        );
        let inside_area =
            p.x >= 0.0 && p.x <= config.area_m.0 && p.y >= 0.0 && p.y <= config.area_m.1;
        if inside_area && !buildings.iter().any(|b| b.contains(p)) {
            return Ok((p, cell));
        }
    }
    Err(placement_error(
        config,
        format!("cannot place the UAV {d} m from any small cell inside the area"),
    ))
}

impl Scenario {
    fn set_initial_velocities(&mut self) {
        let group = self.config.mobility_group;
        let speed = self.config.speed_mps;
        let target = self.auth_uav().position;
        let mut wp = self.waypoints.iter();
        for n in &mut self.nodes {
            n.velocity = match n.role {
                Role::Attacker if group.attackers_move() => {
                    heading(n.position, target).scale(speed)
                }
                Role::User if group.users_move() => {
                    let w = *wp.next().expect("one waypoint per user");
                    heading(n.position, w).scale(speed)
                }
                _ => Vec3::ZERO,
            };
        }
    }
}

fn heading(from: Vec3, to: Vec3) -> Vec3 {
    let d = to.sub(from);
    let n = d.norm();
    if n < 1e-12 {
        Vec3::ZERO
    } else {
        d.scale(1.0 / n)
    }
}

/// Advances the world by `dt` seconds and returns the new snapshot.
pub fn step_mobility(scenario: &Scenario, dt: f64) -> Result<Scenario> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let mut next = scenario.clone();
    next.time_s += dt;
    let group = scenario.config.mobility_group;
    let step = scenario.config.speed_mps * dt;
    let target = scenario.auth_uav().position;
    let (ax, ay) = scenario.config.area_m;

    if group.attackers_move() {
        for n in next.nodes.iter_mut().filter(|n| n.role == Role::Attacker) {
            let to_target = target.sub(n.position);
            let dist = to_target.norm();
            let travel = step.min((dist - ATTACKER_STANDOFF_M).max(0.0));
            let mut candidate = n.position.add(heading(n.position, target).scale(travel));
            if scenario.buildings.iter().any(|b| b.contains(candidate)) {
                // Climb over the obstacle; the victim flies above every roof,
                // so climbing still closes the distance.
                candidate = n.position.add(Vec3::new(0.0, 0.0, travel));
            }
            n.velocity = candidate.sub(n.position).scale(1.0 / dt);
            n.position = candidate;
        }
    }

    if group.users_move() {
        let mut user_idx = 0;
        for ni in 0..next.nodes.len() {
            if next.nodes[ni].role != Role::User {
                continue;
            }
            let pos = next.nodes[ni].position;
            let mut wp = next.waypoints[user_idx];
            if pos.distance(wp) <= step {
                wp = sample_ground_point(
                    &mut next.mobility_rng,
                    &scenario.config,
                    &scenario.buildings,
                    USER_HEIGHT_M,
                    "user waypoint",
                )?;
            }
            let mut candidate = pos.add(heading(pos, wp).scale(step.min(pos.distance(wp))));
            candidate.x = candidate.x.clamp(0.0, ax);
            candidate.y = candidate.y.clamp(0.0, ay);
            if scenario.buildings.iter().any(|b| b.contains(candidate)) {
                // Blocked by a building: hold position and re-route.
                candidate = pos;
                wp = sample_ground_point(
                    &mut next.mobility_rng,
                    &scenario.config,
                    &scenario.buildings,
                    USER_HEIGHT_M,
                    "user waypoint",
                )?;
            }
            next.waypoints[user_idx] = wp;
            next.nodes[ni].velocity = candidate.sub(pos).scale(1.0 / dt);
            next.nodes[ni].position = candidate;
            user_idx += 1;
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ScenarioConfig {
        ScenarioConfig::default()
    }

    #[test]
    fn empty_population_has_cells_plus_uav() {
        let s = generate_scenario(&cfg(), 7).unwrap();
        assert_eq!(s.nodes.len(), 11);
        assert_eq!(s.cells().count(), 10);
        assert_eq!(s.nodes_with_role(Role::AuthUav).count(), 1);
    }

    #[test]
    fn generation_is_deterministic() {
        let c = ScenarioConfig {
            num_users: 5,
            num_attackers: 3,
            ..cfg()
        };
        let a = generate_scenario(&c, 42).unwrap();
        let b = generate_scenario(&c, 42).unwrap();
        assert_eq!(a.nodes_csv(), b.nodes_csv());
        let other = generate_scenario(&c, 43).unwrap();
        assert_ne!(a.nodes_csv(), other.nodes_csv());
    }

    #[test]
    fn serving_distance_is_honoured() {
        for &d in &CANONICAL_DISTANCES_M {
            for seed in 0..20 {
                let c = ScenarioConfig {
                    serving_distance_m: d,
                    ..cfg()
                };
                let s = generate_scenario(&c, seed).unwrap();
                let uav = s.auth_uav();
                let cell = &s.nodes[uav.serving_cell.unwrap()];
                let p = uav.position;
                let q = cell.position;
                let norm = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2)).sqrt();
                assert!((norm - d).abs() <= 1.0, "d={d} got {norm}");
            }
        }
    }

    #[test]
    fn users_associate_with_nearest_cell() {
        let c = ScenarioConfig {
            num_users: 20,
            ..cfg()
        };
        let s = generate_scenario(&c, 3).unwrap();
        let cells: Vec<&Node> = s.cells().collect();
        for u in s.nodes_with_role(Role::User) {
            let serving = u.serving_cell.unwrap();
            let d_serv = cells[serving].position.distance(u.position);
            for c in &cells {
                assert!(d_serv <= c.position.distance(u.position) + 1e-12);
            }
            assert_eq!(u.position.z, USER_HEIGHT_M);
        }
    }

    #[test]
    fn nodes_avoid_building_volumes() {
        let c = ScenarioConfig {
            num_users: 20,
            num_attackers: 4,
            ..cfg()
        };
        for seed in 0..10 {
            let s = generate_scenario(&c, seed).unwrap();
            for n in &s.nodes {
                assert!(!s.inside_building(n.position), "{n:?}");
            }
            for b in s.buildings.iter() {
                assert!(b.x_min >= 0.0 && b.x_max <= 1000.0 && b.height > 0.0);
            }
        }
    }

    #[test]
    fn infeasible_distance_is_reported() {
        let c = ScenarioConfig {
            serving_distance_m: 5000.0,
            ..cfg()
        };
        match generate_scenario(&c, 1) {
            Err(Error::InfeasiblePlacement { .. }) => {}
            other => panic!("expected InfeasiblePlacement, got {other:?}"),
        }
    }

    #[test]
    fn none_speed_is_static() {
        let c = ScenarioConfig {
            num_users: 5,
            num_attackers: 2,
            ..cfg()
        };
        let s = generate_scenario(&c, 9).unwrap();
        let t = step_mobility(&s, 3.0).unwrap();
        for (a, b) in s.nodes.iter().zip(&t.nodes) {
            assert_eq!(a.position, b.position);
            assert_eq!(b.velocity, Vec3::ZERO);
        }
    }

    #[test]
    fn attacker_moves_at_configured_speed() {
        let c = ScenarioConfig {
            num_attackers: 2,
            mobility_group: MobilityGroup::AttackerSpeed,
            ..cfg()
        };
        let s = generate_scenario(&c, 11).unwrap();
        let t = step_mobility(&s, 1.0).unwrap();
        let uav = s.auth_uav().position;
        for (a, b) in s.attackers().zip(t.attackers()) {
            let moved = a.position.distance(b.position);
            let before = a.position.distance(uav);
            if before > 11.0 {
                assert!((moved - 10.0).abs() < 1e-9, "moved {moved}");
            } else {
                assert!(moved <= 10.0 + 1e-9);
            }
        }
    }

    #[test]
    fn approaching_attacker_closes_two_hundred_metres() {
        // 500 m away, 20 s at 10 m/s along a straight line: 300 m remain.
        let c = ScenarioConfig {
            num_attackers: 1,
            mobility_group: MobilityGroup::AttackerSpeed,
            ..cfg()
        };
        let mut s = generate_scenario(&c, 5).unwrap();
        let uav = s.auth_uav().position;
        let dir = Vec3::new(1.0, 1.0, 0.0).scale(1.0 / 2f64.sqrt());
        let mut start = uav.sub(dir.scale(500.0));
        start.z = uav.z;
        let idx = s.nodes.iter().position(|n| n.role == Role::Attacker).unwrap();
        s.nodes[idx].position = start;
        // Clear the field so the straight line is unobstructed.
        s.buildings = Vec::new().into();
        for _ in 0..200 {
            s = step_mobility(&s, 0.1).unwrap();
        }
        let d = s.nodes[idx].position.distance(uav);
        assert!((d - 300.0).abs() < 1e-6, "{d}");
    }

    #[test]
    fn attacker_distance_never_increases() {
        for group in [MobilityGroup::AttackerSpeed, MobilityGroup::BothSpeed] {
            let c = ScenarioConfig {
                num_users: 3,
                num_attackers: 4,
                mobility_group: group,
                ..cfg()
            };
            let mut s = generate_scenario(&c, 21).unwrap();
            let uav = s.auth_uav().position;
            let mut prev: Vec<f64> = s.attackers().map(|a| a.position.distance(uav)).collect();
            for _ in 0..300 {
                s = step_mobility(&s, 0.25).unwrap();
                let cur: Vec<f64> = s.attackers().map(|a| a.position.distance(uav)).collect();
                for (p, c) in prev.iter().zip(&cur) {
                    assert!(c <= &(p + 1e-9));
                }
                for n in &s.nodes {
                    assert!(!s.inside_building(n.position));
                }
                prev = cur;
            }
        }
    }

    #[test]
    fn users_stay_in_area_and_keep_association() {
        let c = ScenarioConfig {
            num_users: 10,
            mobility_group: MobilityGroup::UserSpeed,
            ..cfg()
        };
        let mut s = generate_scenario(&c, 4).unwrap();
        let assoc: Vec<_> = s.nodes.iter().map(|n| n.serving_cell).collect();
        for _ in 0..500 {
            s = step_mobility(&s, 0.5).unwrap();
            for u in s.nodes_with_role(Role::User) {
                assert!(u.position.x >= 0.0 && u.position.x <= 1000.0);
                assert!(u.position.y >= 0.0 && u.position.y <= 1000.0);
                assert!(u.velocity.norm() <= 10.0 + 1e-9);
            }
        }
        let after: Vec<_> = s.nodes.iter().map(|n| n.serving_cell).collect();
        assert_eq!(assoc, after);
    }

    #[test]
    fn adding_attackers_keeps_other_nodes() {
        let a = generate_scenario(&cfg(), 8).unwrap();
        let b = generate_scenario(
            &ScenarioConfig {
                num_attackers: 2,
                ..cfg()
            },
            8,
        )
        .unwrap();
        assert_eq!(a.nodes[..], b.nodes[..a.nodes.len()]);
    }

    #[test]
    fn segment_test_matches_geometry() {
        let b = Building {
            x_min: 0.0,
            y_min: 0.0,
            x_max: 10.0,
            y_max: 10.0,
            height: 20.0,
        };
        assert!(b.blocks_segment(Vec3::new(-5.0, 5.0, 5.0), Vec3::new(15.0, 5.0, 5.0)));
        assert!(!b.blocks_segment(Vec3::new(-5.0, 5.0, 25.0), Vec3::new(15.0, 5.0, 25.0)));
        // Rooftop mount looking upward is clear.
        assert!(!b.blocks_segment(Vec3::new(5.0, 5.0, 20.0), Vec3::new(50.0, 50.0, 100.0)));
        assert!(!b.blocks_segment(Vec3::new(-5.0, -5.0, 5.0), Vec3::new(-5.0, 50.0, 5.0)));
    }

    #[test]
    fn kv_round_trip() {
        let c = ScenarioConfig {
            num_users: 3,
            num_attackers: 2,
            attacker_power_dbm: 2.0,
            mobility_group: MobilityGroup::BothSpeed,
            seed: 99,
            ..cfg()
        };
        let lines = c.to_kv_lines();
        let back =
            ScenarioConfig::from_kv(lines.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
        assert_eq!(c, back);
        assert!(c.is_canonical());
        assert!(!ScenarioConfig { num_users: 4, ..c }.is_canonical());
    }
}

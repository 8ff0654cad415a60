use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::scenario::{MobilityGroup, ScenarioConfig};

/// One evaluated window together with the configuration that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub config: ScenarioConfig,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub key: Vec<String>,
    pub correct: u64,
    pub total: u64,
}

impl SweepRow {
    /// `None` marks an empty group.
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub name: &'static str,
    pub key_columns: Vec<&'static str>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn empty_groups(&self) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.total == 0).collect()
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().map(|r| r.total).sum()
    }

    /// Support-weighted mean of the non-empty group accuracies.
    pub fn weighted_accuracy(&self) -> f64 {
        let (num, den) = self
            .rows
            .iter()
            .filter_map(|r| r.accuracy().map(|a| (a * r.total as f64, r.total as f64)))
            .fold((0.0, 0.0), |(n, d), (a, b)| (n + a, d + b));
        num / den
    }

    pub fn row(&self, key: &[&str]) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.key.iter().map(String::as_str).eq(key.iter().copied()))
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.key_columns.join(",");
        s.push_str(",correct,total,accuracy\n");
        for r in &self.rows {
            let acc = r.accuracy().map_or_else(|| "EMPTY".to_string(), |a| format!("{a:.6}"));
            let _ = writeln!(s, "{},{},{},{acc}", r.key.join(","), r.correct, r.total);
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("|");
        for k in &self.key_columns {
            let _ = write!(s, " {k} |");
        }
        s.push_str(" accuracy | support |\n|");
        s.push_str(&"---|".repeat(self.key_columns.len()));
        s.push_str("---:|---:|\n");
        for r in &self.rows {
            s.push('|');
            for k in &r.key {
                let _ = write!(s, " {k} |");
            }
            let acc = r.accuracy().map_or_else(|| "empty".to_string(), |a| format!("{:.2}%", 100.0 * a));
            let _ = writeln!(s, " {acc} | {} |", r.total);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweeps {
    pub users: SweepTable,
    pub power_distance: SweepTable,
    pub attackers: SweepTable,
    pub mobility: SweepTable,
}

impl Sweeps {
    pub fn tables(&self) -> [&SweepTable; 4] {
        [&self.users, &self.power_distance, &self.attackers, &self.mobility]
    }
}

pub const USER_AXIS: [usize; 5] = [0, 3, 5, 10, 20];
pub const ATTACKER_AXIS: [usize; 5] = [0, 1, 2, 3, 4];
pub const POWER_AXIS: [f64; 4] = [0.0, 2.0, 10.0, 20.0];
pub const DISTANCE_AXIS: [f64; 3] = [100.0, 200.0, 500.0];

fn num_key(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Groups by `key`; canonical cells always appear (possibly empty), extra
/// keys are appended in sorted order.
fn group<K: Ord + Clone>(
    records: &[SweepRecord],
    canonical: Vec<K>,
    key: impl Fn(&ScenarioConfig) -> K,
    render: impl Fn(&K) -> Vec<String>,
) -> Vec<SweepRow> {
    let mut counts: BTreeMap<K, (u64, u64)> = BTreeMap::new();
    for r in records {
        let e = counts.entry(key(&r.config)).or_default();
        e.0 += u64::from(r.correct);
        e.1 += 1;
    }
    let mut rows = Vec::new();
    for k in &canonical {
        let (c, t) = counts.remove(k).unwrap_or_default();
        rows.push(SweepRow {
            key: render(k),
            correct: c,
            total: t,
        });
    }
    for (k, (c, t)) in counts {
        rows.push(SweepRow {
            key: render(&k),
            correct: c,
            total: t,
        });
    }
    rows
}

/// Milli-unit integer key, so float axes sort and compare exactly.
fn milli(v: f64) -> i64 {
    (v * 1000.0).round() as i64
}

pub fn report_sweeps(records: &[SweepRecord]) -> Sweeps {
    let users = SweepTable {
        name: "sweep_users",
        key_columns: vec!["users"],
        rows: group(records, USER_AXIS.to_vec(), |c| c.num_users, |k| vec![k.to_string()]),
    };
    let pd_canonical: Vec<(i64, i64)> = POWER_AXIS
        .iter()
        .flat_map(|&p| DISTANCE_AXIS.iter().map(move |&d| (milli(p), milli(d))))
        .collect();
    let power_distance = SweepTable {
        name: "sweep_power_distance",
        key_columns: vec!["attacker_power_dbm", "distance_m"],
        rows: group(
            records,
            pd_canonical,
            |c| (milli(c.attacker_power_dbm), milli(c.serving_distance_m)),
            |&(p, d)| vec![num_key(p as f64 / 1000.0), num_key(d as f64 / 1000.0)],
        ),
    };
    let attackers = SweepTable {
        name: "sweep_attackers",
        key_columns: vec!["attackers"],
        rows: group(records, ATTACKER_AXIS.to_vec(), |c| c.num_attackers, |k| vec![k.to_string()]),
    };
    let mobility = SweepTable {
        name: "sweep_mobility",
        key_columns: vec!["mobility_group"],
        rows: group(
            records,
            MobilityGroup::ALL.to_vec(),
            |c| c.mobility_group,
            |g| vec![g.display_name().to_string()],
        ),
    };
    Sweeps {
        users,
        power_distance,
        attackers,
        mobility,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(users: usize, attackers: usize, power: f64, dist: f64, g: MobilityGroup, ok: bool) -> SweepRecord {
        SweepRecord {
            config: ScenarioConfig {
                num_users: users,
                num_attackers: attackers,
                attacker_power_dbm: power,
                serving_distance_m: dist,
                mobility_group: g,
                ..ScenarioConfig::default()
            },
            correct: ok,
        }
    }

    #[test]
    fn fixed_row_layouts() {
        let s = report_sweeps(&[record(3, 1, 2.0, 200.0, MobilityGroup::BothSpeed, true)]);
        assert_eq!(s.mobility.rows.len(), 4);
        let users: Vec<&str> = s.users.rows.iter().map(|r| r.key[0].as_str()).collect();
        assert_eq!(users, ["0", "3", "5", "10", "20"]);
        assert_eq!(s.power_distance.rows.len(), 12);
        assert_eq!(s.users.empty_groups().len(), 4);
        assert_eq!(s.power_distance.row(&["2", "200"]).unwrap().total, 1);
        assert!(s.users.to_csv().contains("0,0,0,EMPTY"));
    }

    #[test]
    fn off_grid_keys_are_appended() {
        let s = report_sweeps(&[record(7, 9, 40.0, 50.0, MobilityGroup::NoneSpeed, false)]);
        assert_eq!(s.users.rows.last().unwrap().key, vec!["7"]);
        assert_eq!(s.attackers.rows.last().unwrap().key, vec!["9"]);
        assert_eq!(s.power_distance.rows.last().unwrap().key, vec!["40", "50"]);
    }

    proptest! {
        #[test]
        fn weighted_mean_is_pooled_accuracy(
            raw in prop::collection::vec((0usize..5, 0usize..5, 0usize..4, 0usize..3, 0usize..4, any::<bool>()), 1..150)
        ) {
            let records: Vec<SweepRecord> = raw
                .iter()
                .map(|&(u, a, p, d, g, ok)| record(USER_AXIS[u], a, POWER_AXIS[p], DISTANCE_AXIS[d], MobilityGroup::ALL[g], ok))
                .collect();
            let pooled = records.iter().filter(|r| r.correct).count() as f64 / records.len() as f64;
            let s = report_sweeps(&records);
            for t in s.tables() {
                prop_assert_eq!(t.total() as usize, records.len());
                prop_assert!((t.weighted_accuracy() - pooled).abs() < 1e-9);
                for r in &t.rows {
                    if let Some(a) = r.accuracy() {
                        prop_assert!((0.0..=1.0).contains(&a));
                    }
                }
            }
        }
    }
}

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;
use toml::Spanned;

use crate::group_crypto::{MemberId, DEFAULT_GROUP_THRESHOLD};

use super::model::{PiecewiseLinear, RelayComplexityModel};
use super::ScenarioError;

/// Upper bound on members per group and on messages per group, so every
/// transmission count fits comfortably in a `u64`.
pub const MAX_COUNT: u64 = 1_000_000;

/// One room: members attached to named delegation nodes plus members on
/// their own local client nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupSpec {
    pub name: String,
    /// Delegation node name → attached members (`M_{i,d}`).
    pub delegation: BTreeMap<String, u64>,
    /// Members on local client nodes (`M_{i,o}`).
    pub other: u64,
}

impl GroupSpec {
    pub fn members(&self) -> u64 {
        self.delegation.values().sum::<u64>() + self.other
    }

    /// First member id that sits on a local node. Delegation members come
    /// first, in node-name order.
    pub fn first_local(&self) -> MemberId {
        self.delegation.values().sum::<u64>() as MemberId
    }

    /// Delegation node of `member`, or `None` for a local member.
    pub fn delegation_of(&self, member: MemberId) -> Option<&str> {
        let mut start = 0u64;
        for (name, &count) in &self.delegation {
            if (member as u64) < start + count {
                return Some(name);
            }
            start += count;
        }
        None
    }
}

/// A local member is unreachable during ticks `[from, until)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OfflineWindow {
    pub group: usize,
    pub member: MemberId,
    pub from: u64,
    pub until: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimScenario {
    pub seed: u64,
    /// Sending intervals in the run.
    pub intervals: u64,
    /// Messages per group per interval.
    pub rate: u64,
    pub interval_ticks: u64,
    pub hop_latency: u64,
    pub edge_nodes: usize,
    /// `k`: edge nodes each client node subscribes to.
    pub edges_per_client_node: usize,
    /// Rooms above this size switch to a shared group key.
    pub group_threshold: usize,
    /// Fixed point, [`crate::por::COEFFICIENT_SCALE`] is 1.000.
    pub cost_coefficient: u64,
    pub payload_bytes: usize,
    pub groups: Vec<GroupSpec>,
    pub offline: Vec<OfflineWindow>,
    pub model: RelayComplexityModel,
}

impl SimScenario {
    /// Messages each group sends over the run (`T`).
    pub fn messages_per_group(&self) -> u64 {
        self.rate * self.intervals
    }

    /// Delegation node names across all groups, sorted.
    pub fn delegation_nodes(&self) -> BTreeSet<&str> {
        self.groups
            .iter()
            .flat_map(|g| g.delegation.keys().map(String::as_str))
            .collect()
    }

    pub fn total_members(&self) -> u64 {
        self.groups.iter().map(GroupSpec::members).sum()
    }

    /// Delegation nodes plus one local node per local member.
    pub fn client_node_count(&self) -> usize {
        self.delegation_nodes().len() + self.groups.iter().map(|g| g.other as usize).sum::<usize>()
    }

    pub fn from_path(path: &Path) -> Result<SimScenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        SimScenario::parse(&text)
    }

    pub fn parse(text: &str) -> Result<SimScenario, ScenarioError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| {
            let (line, col) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            ScenarioError::Syntax {
                line,
                col,
                message: e.message().to_string(),
            }
        })?;
        raw.validate(text)
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

fn invalid<T>(text: &str, spanned: &Spanned<T>, message: String) -> ScenarioError {
    let (line, col) = line_col(text, spanned.span().start);
    ScenarioError::Invalid { line, col, message }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    seed: u64,
    #[serde(default = "one")]
    intervals: Spanned<u64>,
    #[serde(default = "one")]
    rate: Spanned<u64>,
    #[serde(default = "ten")]
    interval_ticks: Spanned<u64>,
    #[serde(default = "one")]
    hop_latency: Spanned<u64>,
    #[serde(default = "default_edges")]
    edge_nodes: Spanned<usize>,
    #[serde(default = "default_k")]
    edges_per_client_node: Spanned<usize>,
    #[serde(default = "default_threshold")]
    group_threshold: usize,
    #[serde(default = "default_coefficient")]
    cost_coefficient: Spanned<u64>,
    #[serde(default = "default_payload")]
    payload_bytes: Spanned<usize>,
    #[serde(default)]
    group: Vec<Spanned<RawGroup>>,
    #[serde(default)]
    offline: Vec<Spanned<RawOffline>>,
    model: Option<Spanned<RawModel>>,
}

fn one() -> Spanned<u64> {
    Spanned::new(0..0, 1)
}
fn ten() -> Spanned<u64> {
    Spanned::new(0..0, 10)
}
fn default_edges() -> Spanned<usize> {
    Spanned::new(0..0, 8)
}
fn default_k() -> Spanned<usize> {
    Spanned::new(0..0, 3)
}
fn default_threshold() -> usize {
    DEFAULT_GROUP_THRESHOLD
}
fn default_coefficient() -> Spanned<u64> {
    Spanned::new(0..0, crate::por::COEFFICIENT_SCALE)
}
fn default_payload() -> Spanned<usize> {
    Spanned::new(0..0, 64)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroup {
    name: String,
    /// Optional cross-check of the member total.
    members: Option<u64>,
    #[serde(default)]
    delegation: BTreeMap<String, u64>,
    #[serde(default)]
    other: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOffline {
    group: String,
    member: MemberId,
    from: u64,
    until: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    messages: Option<f64>,
    client_nodes: Option<u64>,
    k: Option<u64>,
    #[serde(default = "unit")]
    t_m: f64,
    horizon: Option<f64>,
    #[serde(default)]
    latency: Vec<(f64, f64)>,
    #[serde(default)]
    loss: Vec<(f64, f64)>,
    #[serde(default)]
    retransmissions: Vec<(f64, f64)>,
}

fn unit() -> f64 {
    1.0
}

impl RawScenario {
    fn validate(self, text: &str) -> Result<SimScenario, ScenarioError> {
        let positive = |v: &Spanned<u64>, what: &str| {
            if *v.get_ref() == 0 {
                Err(invalid(text, v, format!("{what} must be at least 1")))
            } else {
                Ok(*v.get_ref())
            }
        };
        let intervals = positive(&self.intervals, "intervals")?;
        let interval_ticks = positive(&self.interval_ticks, "interval_ticks")?;
        let hop_latency = positive(&self.hop_latency, "hop_latency")?;
        let rate = *self.rate.get_ref();
        if rate.saturating_mul(intervals) > MAX_COUNT {
            return Err(invalid(text, &self.rate, format!("rate × intervals exceeds {MAX_COUNT}")));
        }
        let edge_nodes = *self.edge_nodes.get_ref();
        if edge_nodes == 0 {
            return Err(invalid(text, &self.edge_nodes, "edge_nodes must be at least 1".into()));
        }
        let k = *self.edges_per_client_node.get_ref();
        if k == 0 || k > edge_nodes {
            return Err(invalid(
                text,
                &self.edges_per_client_node,
                format!("edges_per_client_node must be in 1..={edge_nodes}"),
            ));
        }
        if *self.cost_coefficient.get_ref() == 0 {
            return Err(invalid(text, &self.cost_coefficient, "cost_coefficient must be positive".into()));
        }
        if *self.payload_bytes.get_ref() == 0 {
            return Err(invalid(text, &self.payload_bytes, "payload_bytes must be positive".into()));
        }

        let mut groups = Vec::with_capacity(self.group.len());
        for g in &self.group {
            let raw = g.get_ref();
            if raw.name.is_empty() || groups.iter().any(|x: &GroupSpec| x.name == raw.name) {
                return Err(invalid(text, g, format!("group name {:?} is empty or repeated", raw.name)));
            }
            if raw.delegation.keys().any(|n| n.is_empty()) {
                return Err(invalid(text, g, "delegation node names must be nonempty".into()));
            }
            let spec = GroupSpec {
                name: raw.name.clone(),
                delegation: raw.delegation.iter().filter(|(_, &c)| c > 0).map(|(n, &c)| (n.clone(), c)).collect(),
                other: raw.other,
            };
            let total = raw.delegation.values().fold(raw.other, |a, &c| a.saturating_add(c));
            if total > MAX_COUNT {
                return Err(invalid(text, g, format!("group has more than {MAX_COUNT} members")));
            }
            if let Some(m) = raw.members {
                if m != total {
                    return Err(invalid(
                        text,
                        g,
                        format!("members = {m} but delegation and other members sum to {total}"),
                    ));
                }
            }
            groups.push(spec);
        }

        let mut offline = Vec::with_capacity(self.offline.len());
        for o in &self.offline {
            let raw = o.get_ref();
            let Some(gi) = groups.iter().position(|g| g.name == raw.group) else {
                return Err(invalid(text, o, format!("unknown group {:?}", raw.group)));
            };
            let g = &groups[gi];
            if (raw.member as u64) >= g.members() || raw.member < g.first_local() {
                return Err(invalid(
                    text,
                    o,
                    format!(
                        "member {} is not a local member of {:?} (local ids are {}..{})",
                        raw.member,
                        g.name,
                        g.first_local(),
                        g.members()
                    ),
                ));
            }
            if raw.from >= raw.until {
                return Err(invalid(text, o, "offline window needs from < until".into()));
            }
            offline.push(OfflineWindow {
                group: gi,
                member: raw.member,
                from: raw.from,
                until: raw.until,
            });
        }

        let mut scenario = SimScenario {
            seed: self.seed,
            intervals,
            rate,
            interval_ticks,
            hop_latency,
            edge_nodes,
            edges_per_client_node: k,
            group_threshold: self.group_threshold,
            cost_coefficient: *self.cost_coefficient.get_ref(),
            payload_bytes: *self.payload_bytes.get_ref(),
            groups,
            offline,
            model: RelayComplexityModel::constant(1.0, 2, 1, 1.0, 1.0),
        };
        let raw_model = self.model.as_ref().map(|m| m.get_ref());
        let defaults = RawModel {
            messages: None,
            client_nodes: None,
            k: None,
            t_m: 1.0,
            horizon: None,
            latency: Vec::new(),
            loss: Vec::new(),
            retransmissions: Vec::new(),
        };
        let m = raw_model.unwrap_or(&defaults);
        let model_err = |message: String| match &self.model {
            Some(s) => invalid(text, s, message),
            None => ScenarioError::Invalid { line: 0, col: 0, message },
        };
        let curve = |points: &[(f64, f64)], what: &str| {
            PiecewiseLinear::new(points.to_vec()).map_err(|e| model_err(format!("{what}: {e}")))
        };
        let groups_total = scenario.groups.len() as f64;
        let model = RelayComplexityModel {
            messages: m
                .messages
                .unwrap_or(scenario.messages_per_group() as f64 * groups_total),
            client_nodes: m.client_nodes.unwrap_or_else(|| scenario.total_members().max(2)),
            k: m.k.unwrap_or(k as u64),
            t_m: m.t_m,
            horizon: m.horizon.unwrap_or((intervals * interval_ticks) as f64),
            latency: curve(&m.latency, "latency")?,
            loss: curve(&m.loss, "loss")?,
            retransmissions: curve(&m.retransmissions, "retransmissions")?,
        };
        model.validate().map_err(|e| model_err(e.to_string()))?;
        scenario.model = model;
        Ok(scenario)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
seed = 9
rate = 2
intervals = 3

[[group]]
name = "lobby"
members = 7
delegation = { beta = 2, alpha = 3 }
other = 2

[[offline]]
group = "lobby"
member = 6
from = 0
until = 15
"#;

    #[test]
    fn parses_and_orders_members() {
        let s = SimScenario::parse(SMALL).unwrap();
        assert_eq!(s.messages_per_group(), 6);
        let g = &s.groups[0];
        assert_eq!(g.members(), 7);
        assert_eq!(g.first_local(), 5);
        assert_eq!(g.delegation_of(0), Some("alpha"));
        assert_eq!(g.delegation_of(3), Some("beta"));
        assert_eq!(g.delegation_of(5), None);
        assert_eq!(s.client_node_count(), 4);
        assert_eq!(s.offline[0].member, 6);
        assert_eq!(s.edges_per_client_node, 3);
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = SimScenario::parse("seed = 1\nrate = \"x\"\n").unwrap_err();
        match err {
            ScenarioError::Syntax { line, col, .. } => assert_eq!((line, col), (2, 8)),
            other => panic!("unexpected {other:?}"),
        }
        let err = SimScenario::parse("seed = 1\nbogus = 3\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Syntax { line: 2, .. }), "{err}");
    }

    #[test]
    fn semantic_errors_point_at_the_table() {
        let bad = SMALL.replace("members = 7", "members = 8");
        let err = SimScenario::parse(&bad).unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid { line: 6, col: 1, .. }), "{err}");

        let bad = SMALL.replace("member = 6", "member = 1");
        let err = SimScenario::parse(&bad).unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid { line: 12, .. }), "{err}");

        let err = SimScenario::parse("seed = 1\nedge_nodes = 2\n").unwrap_err();
        assert!(err.to_string().contains("edges_per_client_node"), "{err}");
    }

    #[test]
    fn model_defaults_follow_the_scenario() {
        let s = SimScenario::parse(SMALL).unwrap();
        assert_eq!(s.model.client_nodes, 7);
        assert_eq!(s.model.k, 3);
        assert_eq!(s.model.messages, 6.0);
        assert_eq!(s.model.horizon, 30.0);
        let bad = format!("{SMALL}\n[model]\nloss = [[0.0, 1.5]]\n");
        assert!(SimScenario::parse(&bad).is_err());
    }
}

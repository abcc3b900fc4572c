use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::group_crypto::RoomMode;

use super::model::{CategoryCounts, Prediction};
use super::settle::SettlementTotals;

/// Measured transmissions by hop. Only the first five count towards
/// `T_deleg`; echoes, key exchange and the baseline are kept apart.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Transmissions {
    pub client_to_clientnode: u64,
    pub clientnode_to_edge: u64,
    pub edge_to_clientnode: u64,
    pub delegation_direct: u64,
    pub cache_retrieval: u64,
    /// Edge → publishing node copies, discarded on arrival.
    pub edge_echo: u64,
    pub key_exchange: u64,
    pub prekey_announcements: u64,
    /// The same traffic with every member unicasting to every peer.
    pub baseline_unicast: u64,
}

impl Transmissions {
    pub fn delegation_total(&self) -> u64 {
        self.client_to_clientnode
            + self.clientnode_to_edge
            + self.edge_to_clientnode
            + self.delegation_direct
            + self.cache_retrieval
    }
}

/// Send-to-decrypt latency in ticks.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LatencyStats {
    pub count: u64,
    pub sum: u64,
    pub min: u64,
    pub max: u64,
    pub histogram: BTreeMap<u64, u64>,
}

impl LatencyStats {
    pub fn record(&mut self, ticks: u64) {
        if self.count == 0 || ticks < self.min {
            self.min = ticks;
        }
        self.max = self.max.max(ticks);
        self.count += 1;
        self.sum += ticks;
        *self.histogram.entry(ticks).or_insert(0) += 1;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum as f64 / self.count as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupSummary {
    pub name: String,
    pub members: u64,
    pub delegation_nodes: u64,
    pub mode: RoomMode,
    pub key_exchange: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub seed: u64,
    pub end_tick: u64,
    pub groups: Vec<GroupSummary>,
    pub messages_sent: u64,
    pub sends_skipped: u64,
    pub expected_deliveries: u64,
    pub deliveries: u64,
    pub duplicates_delivered: u64,
    pub duplicates_discarded: u64,
    pub echo_discarded: u64,
    pub crypto_failures: u64,
    pub did_lookups: u64,
    pub cached: u64,
    pub cache_dropped: u64,
    pub cache_residual: u64,
    pub transmissions: Transmissions,
    pub latency: LatencyStats,
    pub settlement: SettlementTotals,
    pub settlement_trace: Vec<String>,
    pub prediction: Option<Prediction>,
    pub predicted_categories: CategoryCounts,
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

impl MetricsReport {
    /// Measured counterpart of [`MetricsReport::predicted_categories`].
    pub fn measured_categories(&self) -> CategoryCounts {
        let t = &self.transmissions;
        CategoryCounts {
            client_to_clientnode: t.client_to_clientnode,
            delegation_direct: t.delegation_direct,
            clientnode_to_edge: t.clientnode_to_edge,
            edge_to_clientnode: t.edge_to_clientnode + t.cache_retrieval,
        }
    }

    /// Measured totals equal `T_deleg` and `T_no_deleg`.
    pub fn matches_prediction(&self) -> bool {
        self.prediction.is_some_and(|p| {
            p.t_deleg == self.transmissions.delegation_total() && p.t_no_deleg == self.transmissions.baseline_unicast
        })
    }

    /// Measured vs predicted, one row per category.
    pub fn comparison_table(&self) -> String {
        let m = self.measured_categories();
        let p = self.predicted_categories;
        let mut rows: Vec<(&str, u64, Option<u64>)> = vec![
            ("client_to_clientnode", m.client_to_clientnode, Some(p.client_to_clientnode)),
            ("delegation_direct", m.delegation_direct, Some(p.delegation_direct)),
            ("clientnode_to_edge", m.clientnode_to_edge, Some(p.clientnode_to_edge)),
            ("edge_to_clientnode", m.edge_to_clientnode, Some(p.edge_to_clientnode)),
        ];
        let pred = self.prediction;
        rows.push(("t_deleg", self.transmissions.delegation_total(), pred.map(|p| p.t_deleg)));
        rows.push(("t_no_deleg", self.transmissions.baseline_unicast, pred.map(|p| p.t_no_deleg)));
        let mut out = format!("{:<22} {:>12} {:>12} {:>6}\n", "category", "measured", "predicted", "equal");
        for (name, measured, predicted) in rows {
            let shown = predicted.map_or("-".to_string(), |v| v.to_string());
            let eq = predicted.map_or("-", |v| yes_no(v == measured));
            let _ = writeln!(out, "{name:<22} {measured:>12} {shown:>12} {eq:>6}");
        }
        if let Some(p) = pred {
            let measured_i = if self.transmissions.delegation_total() == 0 {
                0.0
            } else {
                self.transmissions.baseline_unicast as f64 / self.transmissions.delegation_total() as f64
            };
            let _ = writeln!(
                out,
                "{:<22} {:>12.3} {:>12.3} {:>6}",
                "improvement",
                measured_i,
                p.improvement,
                yes_no(measured_i == p.improvement)
            );
        }
        out
    }

    /// Structured text report.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[run]");
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "end_tick = {}", self.end_tick);
        let _ = writeln!(out, "messages_sent = {}", self.messages_sent);
        let _ = writeln!(out, "sends_skipped = {}", self.sends_skipped);
        for g in &self.groups {
            let _ = writeln!(out);
            let _ = writeln!(out, "[group.{}]", g.name);
            let _ = writeln!(out, "members = {}", g.members);
            let _ = writeln!(out, "delegation_nodes = {}", g.delegation_nodes);
            let _ = writeln!(out, "mode = {}", g.mode.as_str());
            let _ = writeln!(out, "key_exchange = {}", g.key_exchange);
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "[comparison]");
        out += &self.comparison_table();
        let _ = writeln!(out);
        let _ = writeln!(out, "[delivery]");
        let _ = writeln!(out, "expected = {}", self.expected_deliveries);
        let _ = writeln!(out, "delivered = {}", self.deliveries);
        let _ = writeln!(out, "complete = {}", yes_no(self.deliveries == self.expected_deliveries));
        let _ = writeln!(out, "duplicates_delivered = {}", self.duplicates_delivered);
        let _ = writeln!(out, "crypto_failures = {}", self.crypto_failures);
        let _ = writeln!(out, "cached = {} dropped = {} residual = {}", self.cached, self.cache_dropped, self.cache_residual);
        let _ = writeln!(out);
        let _ = writeln!(out, "[latency]");
        let l = &self.latency;
        let _ = writeln!(out, "count = {} min = {} max = {} mean = {:.3}", l.count, l.min, l.max, l.mean());
        for (ticks, n) in &l.histogram {
            let _ = writeln!(out, "ticks {ticks:>4} {n:>10}");
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "[settlement]");
        let s = &self.settlement;
        let _ = writeln!(out, "relayed = {} epochs = {} rejected = {}", s.relayed, s.epochs, s.rejected);
        let _ = writeln!(
            out,
            "outbound_total = {} relay_total = {} inbound_total = {} credited = {}",
            s.outbound_total, s.relay_total, s.inbound_total, s.credited
        );
        let _ = writeln!(out, "balanced = {}", yes_no(s.balanced()));
        out
    }

    /// Flat `key=value` lines, one counter per line.
    pub fn counters(&self) -> String {
        let t = &self.transmissions;
        let s = &self.settlement;
        let mut pairs: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("end_tick", self.end_tick.to_string()),
            ("messages_sent", self.messages_sent.to_string()),
            ("sends_skipped", self.sends_skipped.to_string()),
            ("tx.client_to_clientnode", t.client_to_clientnode.to_string()),
            ("tx.clientnode_to_edge", t.clientnode_to_edge.to_string()),
            ("tx.edge_to_clientnode", t.edge_to_clientnode.to_string()),
            ("tx.delegation_direct", t.delegation_direct.to_string()),
            ("tx.cache_retrieval", t.cache_retrieval.to_string()),
            ("tx.edge_echo", t.edge_echo.to_string()),
            ("tx.key_exchange", t.key_exchange.to_string()),
            ("tx.prekey_announcements", t.prekey_announcements.to_string()),
            ("tx.baseline_unicast", t.baseline_unicast.to_string()),
            ("measured.t_deleg", t.delegation_total().to_string()),
            ("measured.t_no_deleg", t.baseline_unicast.to_string()),
        ];
        if let Some(p) = self.prediction {
            pairs.push(("predicted.t_deleg", p.t_deleg.to_string()));
            pairs.push(("predicted.t_no_deleg", p.t_no_deleg.to_string()));
            pairs.push(("predicted.improvement", format!("{:.6}", p.improvement)));
        }
        pairs.extend([
            ("match", yes_no(self.matches_prediction()).to_string()),
            ("delivery.expected", self.expected_deliveries.to_string()),
            ("delivery.delivered", self.deliveries.to_string()),
            ("delivery.duplicates", self.duplicates_delivered.to_string()),
            ("delivery.crypto_failures", self.crypto_failures.to_string()),
            ("delivery.did_lookups", self.did_lookups.to_string()),
            ("dedup.echo_discarded", self.echo_discarded.to_string()),
            ("dedup.duplicates_discarded", self.duplicates_discarded.to_string()),
            ("cache.stored", self.cached.to_string()),
            ("cache.dropped", self.cache_dropped.to_string()),
            ("cache.residual", self.cache_residual.to_string()),
            ("latency.count", self.latency.count.to_string()),
            ("latency.sum", self.latency.sum.to_string()),
            ("latency.min", self.latency.min.to_string()),
            ("latency.max", self.latency.max.to_string()),
            ("settlement.relayed", s.relayed.to_string()),
            ("settlement.epochs", s.epochs.to_string()),
            ("settlement.rejected", s.rejected.to_string()),
            ("settlement.outbound_total", s.outbound_total.to_string()),
            ("settlement.relay_total", s.relay_total.to_string()),
            ("settlement.inbound_total", s.inbound_total.to_string()),
            ("settlement.credited", s.credited.to_string()),
        ]);
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// One line per settled or rejected epoch, then the totals.
    pub fn settlement_text(&self) -> String {
        let mut out = String::new();
        for line in &self.settlement_trace {
            let _ = writeln!(out, "{line}");
        }
        let s = &self.settlement;
        let _ = writeln!(
            out,
            "totals outbound={} relay={} inbound={} credited={} rejected={}",
            s.outbound_total, s.relay_total, s.inbound_total, s.credited, s.rejected
        );
        out
    }
}

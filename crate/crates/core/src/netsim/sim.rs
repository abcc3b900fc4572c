use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::group_crypto::{CipherEnvelope, MemberId, RoomCrypto, RoomMode};
use crate::hash::sha256;
use crate::identity::{issue_did, Address, DidRegistry, KeyPair};
use crate::por::Membership;
use crate::room_state::EventId;

use super::model::{predicted_categories, predicted_transmissions};
use super::report::{GroupSummary, LatencyStats, MetricsReport, Transmissions};
use super::scenario::SimScenario;
use super::settle::{Party, Settler};

/// Envelopes an edge node keeps per offline client before dropping the
/// oldest.
pub const CACHE_CAPACITY: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum NodeKind {
    Delegation,
    Local,
}

struct ClientNode {
    name: String,
    kind: NodeKind,
    key: KeyPair,
    edges: Vec<usize>,
    publishes: u64,
    seen: BTreeSet<usize>,
    members: BTreeMap<usize, Vec<MemberId>>,
}

struct EdgeNode {
    name: String,
    key: KeyPair,
    cache: BTreeMap<(usize, MemberId), VecDeque<Cached>>,
}

#[derive(Clone, Copy)]
struct Cached {
    msg: usize,
    publisher: usize,
}

struct Member {
    node: usize,
    online: bool,
    master: Address,
}

struct Group {
    room: RoomCrypto,
    members: Vec<Member>,
    nodes: BTreeSet<usize>,
    membership: Membership,
    cursor: u64,
}

struct Message {
    group: usize,
    origin: MemberId,
    origin_node: usize,
    sent_at: u64,
    event_id: EventId,
    plaintext: Vec<u8>,
    envelopes: Vec<CipherEnvelope>,
    by_recipient: BTreeMap<MemberId, usize>,
}

#[derive(Clone, Copy, Debug)]
enum Event {
    Send { group: usize },
    /// `from_edge` is `None` when the message comes from the node's own client.
    AtNode { node: usize, msg: usize, from_edge: Option<usize> },
    AtEdge { edge: usize, msg: usize, publisher: usize },
    AtClient { member: MemberId, msg: usize },
    Offline { group: usize, member: MemberId },
    Reconnect { group: usize, member: MemberId },
}

struct Scheduled {
    time: u64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // min-heap on (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

struct Sim<'a> {
    scenario: &'a SimScenario,
    now: u64,
    seq: u64,
    queue: BinaryHeap<Scheduled>,
    rng: ChaCha20Rng,
    nodes: Vec<ClientNode>,
    edges: Vec<EdgeNode>,
    groups: Vec<Group>,
    dids: DidRegistry,
    messages: Vec<Message>,
    delivered: BTreeSet<(usize, MemberId)>,
    settler: Settler,
    tx: Transmissions,
    latency: LatencyStats,
    report: MetricsReport,
}

fn tag(label: &str, seed: u64, parts: &[&[u8]]) -> Vec<u8> {
    let mut out = label.as_bytes().to_vec();
    out.extend_from_slice(&seed.to_be_bytes());
    for p in parts {
        out.extend_from_slice(&(p.len() as u32).to_be_bytes());
        out.extend_from_slice(p);
    }
    out
}

/// Runs the scenario to completion. Deterministic in the scenario
/// (including its seed).
pub fn run(scenario: &SimScenario) -> MetricsReport {
    let mut sim = Sim::build(scenario);
    sim.schedule_workload();
    while let Some(s) = sim.queue.pop() {
        sim.now = s.time;
        sim.handle(s.event);
    }
    sim.finish()
}

impl<'a> Sim<'a> {
    fn build(scenario: &'a SimScenario) -> Sim<'a> {
        let seed = scenario.seed;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let edges: Vec<EdgeNode> = (0..scenario.edge_nodes)
            .map(|i| EdgeNode {
                name: format!("edge-{i}"),
                key: KeyPair::from_seed(&tag("edge", seed, &[&(i as u64).to_be_bytes()])),
                cache: BTreeMap::new(),
            })
            .collect();

        let mut nodes: Vec<ClientNode> = Vec::new();
        let mut by_name: BTreeMap<String, usize> = BTreeMap::new();
        let new_node = |name: String, kind: NodeKind, rng: &mut ChaCha20Rng, nodes: &mut Vec<ClientNode>| {
            let mut picked = rand::seq::index::sample(rng, scenario.edge_nodes, scenario.edges_per_client_node).into_vec();
            picked.sort_unstable();
            nodes.push(ClientNode {
                key: KeyPair::from_seed(&tag("client-node", seed, &[name.as_bytes()])),
                name,
                kind,
                edges: picked,
                publishes: 0,
                seen: BTreeSet::new(),
                members: BTreeMap::new(),
            });
            nodes.len() - 1
        };
        for name in scenario.delegation_nodes() {
            let i = new_node(name.to_string(), NodeKind::Delegation, &mut rng, &mut nodes);
            by_name.insert(name.to_string(), i);
        }

        let mut dids = DidRegistry::new();
        let mut groups = Vec::with_capacity(scenario.groups.len());
        for (gi, spec) in scenario.groups.iter().enumerate() {
            let mut members = Vec::new();
            let mut keys = Vec::new();
            for id in 0..spec.members() as MemberId {
                let node = match spec.delegation_of(id) {
                    Some(d) => by_name[d],
                    None => new_node(format!("local-{}-{id}", spec.name), NodeKind::Local, &mut rng, &mut nodes),
                };
                nodes[node].members.entry(gi).or_default().push(id);
                let id_bytes = id.to_be_bytes();
                let parts: [&[u8]; 2] = [spec.name.as_bytes(), &id_bytes];
                let master = KeyPair::from_seed(&tag("master", seed, &parts));
                let device = KeyPair::from_seed(&tag("device", seed, &parts));
                dids.publish(issue_did(&master, &device, 0)).expect("freshly issued document verifies");
                members.push(Member {
                    node,
                    online: true,
                    master: master.address(),
                });
                keys.push((id, device));
            }
            let room_seed = u64::from_be_bytes(sha256(&[b"room-seed", &seed.to_be_bytes(), spec.name.as_bytes()])[..8].try_into().unwrap());
            let mut room = RoomCrypto::new(&spec.name, &keys, scenario.group_threshold, room_seed);
            if room.mode() == RoomMode::Group && !room.is_empty() {
                let (_, exchanges) = room.rekey_group(0).expect("member 0 exists");
                for x in &exchanges {
                    room.deliver(x).expect("fresh distribution opens");
                }
            }
            let node_set: BTreeSet<usize> = members.iter().map(|m| m.node).collect();
            let membership = Membership::new(*room.room_id(), node_set.iter().map(|&n| nodes[n].key.address()));
            groups.push(Group {
                room,
                members,
                nodes: node_set,
                membership,
                cursor: 0,
            });
        }

        Sim {
            scenario,
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            rng,
            nodes,
            edges,
            groups,
            dids,
            messages: Vec::new(),
            delivered: BTreeSet::new(),
            settler: Settler::new(scenario.cost_coefficient),
            tx: Transmissions::default(),
            latency: LatencyStats::default(),
            report: MetricsReport::default(),
        }
    }

    fn at(&mut self, time: u64, event: Event) {
        self.queue.push(Scheduled {
            time,
            seq: self.seq,
            event,
        });
        self.seq += 1;
    }

    fn schedule_workload(&mut self) {
        let s = self.scenario;
        for w in &s.offline {
            self.at(w.from, Event::Offline { group: w.group, member: w.member });
            self.at(w.until, Event::Reconnect { group: w.group, member: w.member });
        }
        for interval in 0..s.intervals {
            for group in 0..s.groups.len() {
                for _ in 0..s.rate {
                    self.at(interval * s.interval_ticks, Event::Send { group });
                }
            }
        }
    }

    fn handle(&mut self, event: Event) {
        match event {
            Event::Send { group } => self.send(group),
            Event::AtNode { node, msg, from_edge: None } => self.forward_from_client(node, msg),
            Event::AtNode {
                node,
                msg,
                from_edge: Some(_),
            } => self.forward_from_edge(node, msg),
            Event::AtEdge { edge, msg, publisher } => self.fan_out(edge, msg, publisher),
            Event::AtClient { member, msg } => self.deliver(member, msg),
            Event::Offline { group, member } => self.groups[group].members[member as usize].online = false,
            Event::Reconnect { group, member } => self.reconnect(group, member),
        }
    }

    fn send(&mut self, group: usize) {
        let hop = self.scenario.hop_latency;
        let g = &mut self.groups[group];
        let m = g.members.len() as u64;
        if m == 0 {
            return;
        }
        let Some(step) = (0..m).find(|i| g.members[((g.cursor + i) % m) as usize].online) else {
            self.report.sends_skipped += 1;
            return;
        };
        let origin = ((g.cursor + step) % m) as MemberId;
        g.cursor = (g.cursor + step + 1) % m;

        let index = self.messages.len();
        let mut plaintext = vec![0u8; self.scenario.payload_bytes.max(8)];
        self.rng.fill_bytes(&mut plaintext);
        plaintext[..8].copy_from_slice(&(index as u64).to_be_bytes());
        let envelopes = match g.room.encrypt(origin, &plaintext) {
            Ok(e) => e,
            Err(_) => {
                self.report.crypto_failures += 1;
                return;
            }
        };
        let by_recipient = match g.room.mode() {
            RoomMode::Group => g.room.member_ids().filter(|&id| id != origin).map(|id| (id, 0)).collect(),
            RoomMode::Pairwise => envelopes
                .iter()
                .enumerate()
                .filter_map(|(i, e)| g.room.recipient_of(e).map(|id| (id, i)))
                .collect(),
        };
        let origin_node = g.members[origin as usize].node;
        self.report.messages_sent += 1;
        self.report.expected_deliveries += m - 1;
        self.messages.push(Message {
            group,
            origin,
            origin_node,
            sent_at: self.now,
            event_id: sha256(&[b"sim-event", &self.scenario.seed.to_be_bytes(), &(index as u64).to_be_bytes()]),
            plaintext,
            envelopes,
            by_recipient,
        });
        match self.nodes[origin_node].kind {
            NodeKind::Delegation => {
                self.tx.client_to_clientnode += 1;
                self.at(self.now + hop, Event::AtNode { node: origin_node, msg: index, from_edge: None });
            }
            // the local node runs on the sender's device
            NodeKind::Local => self.at(self.now, Event::AtNode { node: origin_node, msg: index, from_edge: None }),
        }
    }

    /// Direct delivery to co-attached members, then one publish to an
    /// edge node, rotating over the node's `k` edges.
    fn forward_from_client(&mut self, node: usize, msg: usize) {
        let hop = self.scenario.hop_latency;
        let (group, origin) = (self.messages[msg].group, self.messages[msg].origin);
        let n = &mut self.nodes[node];
        n.seen.insert(msg);
        let peers: Vec<MemberId> = n.members[&group].iter().copied().filter(|&m| m != origin).collect();
        let edge = n.edges[(n.publishes % n.edges.len() as u64) as usize];
        n.publishes += 1;
        for member in peers {
            self.tx.delegation_direct += 1;
            self.at(self.now + hop, Event::AtClient { member, msg });
        }
        self.tx.clientnode_to_edge += 1;
        self.at(self.now + hop, Event::AtEdge { edge, msg, publisher: node });
    }

    /// The entry edge forwards to every client node of the room. Offline
    /// local clients get the envelope cached instead.
    fn fan_out(&mut self, edge: usize, msg: usize, publisher: usize) {
        let hop = self.scenario.hop_latency;
        let group = self.messages[msg].group;
        let targets: Vec<usize> = self.groups[group].nodes.iter().copied().collect();
        for node in targets {
            if node == publisher {
                self.tx.edge_echo += 1;
                self.at(self.now + hop, Event::AtNode { node, msg, from_edge: Some(edge) });
                continue;
            }
            if let Some(member) = self.offline_local(node, group) {
                let q = self.edges[edge].cache.entry((group, member)).or_default();
                if q.len() == CACHE_CAPACITY {
                    q.pop_front();
                    self.report.cache_dropped += 1;
                }
                q.push_back(Cached { msg, publisher });
                self.report.cached += 1;
                continue;
            }
            self.tx.edge_to_clientnode += 1;
            self.settle(msg, publisher, edge, node);
            self.at(self.now + hop, Event::AtNode { node, msg, from_edge: Some(edge) });
        }
    }

    fn offline_local(&self, node: usize, group: usize) -> Option<MemberId> {
        let n = &self.nodes[node];
        if n.kind != NodeKind::Local {
            return None;
        }
        let &member = n.members.get(&group)?.first()?;
        (!self.groups[group].members[member as usize].online).then_some(member)
    }

    fn settle(&mut self, msg: usize, publisher: usize, edge: usize, inbound: usize) {
        let m = &self.messages[msg];
        let g = &self.groups[m.group];
        let payload: Vec<u8> = match g.room.mode() {
            RoomMode::Group => m.envelopes[0].to_bytes(),
            RoomMode::Pairwise => self.nodes[inbound].members[&m.group]
                .iter()
                .filter_map(|id| m.by_recipient.get(id))
                .flat_map(|&i| m.envelopes[i].to_bytes())
                .collect(),
        };
        let party = |i: usize| Party {
            index: i,
            name: &self.nodes[i].name,
            key: &self.nodes[i].key,
        };
        let relay = Party {
            index: edge,
            name: &self.edges[edge].name,
            key: &self.edges[edge].key,
        };
        self.settler.relay(
            *g.room.room_id(),
            &g.membership,
            &m.event_id,
            payload,
            party(publisher),
            relay,
            party(inbound),
            self.now,
        );
    }

    fn forward_from_edge(&mut self, node: usize, msg: usize) {
        let hop = self.scenario.hop_latency;
        let m = &self.messages[msg];
        let (group, origin_node) = (m.group, m.origin_node);
        let n = &mut self.nodes[node];
        if !n.seen.insert(msg) {
            if node == origin_node {
                self.report.echo_discarded += 1;
            } else {
                self.report.duplicates_discarded += 1;
            }
            return;
        }
        let kind = n.kind;
        let members = n.members[&group].clone();
        for member in members {
            match kind {
                NodeKind::Delegation => {
                    self.tx.delegation_direct += 1;
                    self.at(self.now + hop, Event::AtClient { member, msg });
                }
                NodeKind::Local => self.at(self.now, Event::AtClient { member, msg }),
            }
        }
    }

    fn deliver(&mut self, member: MemberId, msg: usize) {
        let m = &self.messages[msg];
        let g = &mut self.groups[m.group];
        if !self.delivered.insert((msg, member)) {
            self.report.duplicates_delivered += 1;
            return;
        }
        let Some(&i) = m.by_recipient.get(&member) else {
            self.report.crypto_failures += 1;
            return;
        };
        let envelope = &m.envelopes[i];
        // the sender's device key comes from its DID document
        self.report.did_lookups += 1;
        let sender_master = g.members[m.origin as usize].master;
        let device_ok = self
            .dids
            .device_key(&sender_master)
            .is_some_and(|k| k.to_bytes() == envelope.sender);
        match g.room.decrypt(member, envelope) {
            Ok(pt) if device_ok && pt == m.plaintext => {
                self.report.deliveries += 1;
                self.latency.record(self.now - m.sent_at);
            }
            _ => self.report.crypto_failures += 1,
        }
    }

    fn reconnect(&mut self, group: usize, member: MemberId) {
        let hop = self.scenario.hop_latency;
        self.groups[group].members[member as usize].online = true;
        let node = self.groups[group].members[member as usize].node;
        for edge in 0..self.edges.len() {
            let Some(queue) = self.edges[edge].cache.remove(&(group, member)) else {
                continue;
            };
            for c in queue {
                self.tx.cache_retrieval += 1;
                self.settle(c.msg, c.publisher, edge, node);
                self.at(self.now + hop, Event::AtNode { node, msg: c.msg, from_edge: Some(edge) });
            }
        }
    }

    fn finish(mut self) -> MetricsReport {
        self.settler.finish(self.now);
        let s = self.scenario;
        let t = s.messages_per_group();
        for g in &s.groups {
            // every member unicasts each of its T messages to every peer
            let m = g.members();
            for _sender in 0..m {
                for _ in 0..t {
                    self.tx.baseline_unicast += m - 1;
                }
            }
        }
        for g in &self.groups {
            let c = g.room.counters();
            self.tx.key_exchange += c.pairwise_exchange + c.group_distribution;
            self.tx.prekey_announcements += c.prekey_announcements;
        }
        let mut report = self.report;
        report.seed = s.seed;
        report.groups = s
            .groups
            .iter()
            .zip(&self.groups)
            .map(|(spec, g)| GroupSummary {
                name: spec.name.clone(),
                members: spec.members(),
                delegation_nodes: spec.delegation.len() as u64,
                mode: g.room.mode(),
                key_exchange: g.room.counters().pairwise_exchange + g.room.counters().group_distribution,
            })
            .collect();
        report.cache_residual = self
            .edges
            .iter()
            .flat_map(|e| e.cache.values())
            .map(|q| q.len() as u64)
            .sum();
        report.end_tick = self.now;
        report.transmissions = self.tx;
        report.latency = self.latency;
        report.settlement = self.settler.totals;
        report.settlement_trace = self.settler.trace;
        report.prediction = predicted_transmissions(s).ok();
        report.predicted_categories = predicted_categories(s);
        report
    }
}

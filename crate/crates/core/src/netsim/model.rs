use std::fmt;

use super::scenario::SimScenario;
use super::ModelError;

/// Transmission counts with and without delegation, and their ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    /// Messages per group (`T`).
    pub per_group: u64,
    pub t_no_deleg: u64,
    pub t_deleg: u64,
    pub improvement: f64,
}

/// Delegation-run transmissions by hop. Cache retrievals are folded into
/// `edge_to_clientnode` on the predicted side.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CategoryCounts {
    pub client_to_clientnode: u64,
    pub delegation_direct: u64,
    pub clientnode_to_edge: u64,
    pub edge_to_clientnode: u64,
}

impl CategoryCounts {
    pub fn total(&self) -> u64 {
        self.client_to_clientnode + self.delegation_direct + self.clientnode_to_edge + self.edge_to_clientnode
    }
}

/// `T_deleg = Σᵢ T·(Σ_d (M_{i,d} + 1) + M_{i,o})`,
/// `T_no_deleg = Σᵢ Mᵢ·T·(Mᵢ − 1)`, `I = T_no_deleg / T_deleg`.
///
/// Groups without members contribute nothing.
pub fn predicted_transmissions(scenario: &SimScenario) -> Result<Prediction, ModelError> {
    let t = scenario.messages_per_group();
    let mut t_deleg = 0u64;
    let mut t_no_deleg = 0u64;
    for g in &scenario.groups {
        let m = g.members();
        let per_message = g.delegation.values().map(|c| c + 1).sum::<u64>() + g.other;
        let deleg = t.checked_mul(per_message).ok_or(ModelError::Overflow)?;
        let plain = m
            .checked_mul(t)
            .and_then(|x| x.checked_mul(m.saturating_sub(1)))
            .ok_or(ModelError::Overflow)?;
        t_deleg = t_deleg.checked_add(deleg).ok_or(ModelError::Overflow)?;
        t_no_deleg = t_no_deleg.checked_add(plain).ok_or(ModelError::Overflow)?;
    }
    if t_deleg == 0 {
        return Err(ModelError::ZeroTransmissions);
    }
    Ok(Prediction {
        per_group: t,
        t_no_deleg,
        t_deleg,
        improvement: t_no_deleg as f64 / t_deleg as f64,
    })
}

/// Per-hop split of `T_deleg`, assuming every member is online so the
/// origins rotate through all members in id order.
pub fn predicted_categories(scenario: &SimScenario) -> CategoryCounts {
    let t = scenario.messages_per_group();
    let mut c = CategoryCounts::default();
    for g in &scenario.groups {
        let m = g.members();
        if m == 0 {
            continue;
        }
        let d = g.delegation.len() as u64;
        let attached = g.first_local() as u64;
        // origins are j mod m for j < t; the first `attached` ids sit on delegation nodes
        let deleg_origins = (t / m) * attached + (t % m).min(attached);

        c.client_to_clientnode += deleg_origins;
        c.clientnode_to_edge += t;
        // every attached member except a delegation-attached origin
        c.delegation_direct += t * attached - deleg_origins;
        // every client node except the origin's own
        c.edge_to_clientnode += t * (d + g.other - 1);
    }
    c
}

/// A function of time given by breakpoints, linear in between and constant
/// outside. No breakpoints means the zero function.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLinear {
    points: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, ModelError> {
        if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(ModelError::BadCurve("breakpoints must be finite".into()));
        }
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(ModelError::BadCurve("breakpoint times must increase".into()));
        }
        Ok(PiecewiseLinear { points })
    }

    pub fn constant(v: f64) -> Self {
        PiecewiseLinear { points: vec![(0.0, v)] }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn eval(&self, t: f64) -> f64 {
        let p = &self.points;
        match p.len() {
            0 => 0.0,
            1 => p[0].1,
            _ if t <= p[0].0 => p[0].1,
            n if t >= p[n - 1].0 => p[n - 1].1,
            _ => {
                let i = p.partition_point(|&(x, _)| x <= t);
                let (t0, v0) = p[i - 1];
                let (t1, v1) = p[i];
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }

    fn values_within(&self, lo: f64, hi: f64) -> bool {
        self.points.iter().all(|&(_, v)| v >= lo && v <= hi)
    }
}

/// Inputs of the relay-time integrals: `M` messages, `N` client nodes,
/// `k` edge nodes per client node, per-message transmit time `t_m`, the
/// horizon, and latency, loss probability and retransmission curves.
#[derive(Clone, Debug, PartialEq)]
pub struct RelayComplexityModel {
    pub messages: f64,
    pub client_nodes: u64,
    pub k: u64,
    pub t_m: f64,
    pub horizon: f64,
    pub latency: PiecewiseLinear,
    pub loss: PiecewiseLinear,
    pub retransmissions: PiecewiseLinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Broadcast,
    EdgeNetwork,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Broadcast => "broadcast",
            Scheme::EdgeNetwork => "edge_network",
        })
    }
}

/// Integration stops once halving the step moves the result by less than
/// this, relative.
pub const INTEGRATION_TOLERANCE: f64 = 1e-9;
const MIN_INTERVALS: usize = 16;
const MAX_INTERVALS: usize = 1 << 24;

impl RelayComplexityModel {
    /// Constant-function model with zero latency, loss and retransmissions.
    pub fn constant(messages: f64, client_nodes: u64, k: u64, t_m: f64, horizon: f64) -> Self {
        RelayComplexityModel {
            messages,
            client_nodes,
            k,
            t_m,
            horizon,
            latency: PiecewiseLinear::constant(0.0),
            loss: PiecewiseLinear::constant(0.0),
            retransmissions: PiecewiseLinear::constant(0.0),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let finite = [self.messages, self.t_m, self.horizon].iter().all(|x| x.is_finite() && *x >= 0.0);
        if !finite {
            return Err(ModelError::BadCurve("messages, t_m and horizon must be finite and ≥ 0".into()));
        }
        if self.client_nodes < 2 {
            return Err(ModelError::BadCurve("at least two client nodes".into()));
        }
        if !self.latency.values_within(0.0, f64::INFINITY) {
            return Err(ModelError::BadCurve("latency must be ≥ 0".into()));
        }
        if !self.retransmissions.values_within(0.0, f64::INFINITY) {
            return Err(ModelError::BadCurve("retransmissions must be ≥ 0".into()));
        }
        if !self.loss.values_within(0.0, 1.0) {
            return Err(ModelError::BadCurve("loss probability must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// `(t_m + l(t))·(1 + r(t)·p_loss(t))`.
    pub fn integrand(&self, t: f64) -> f64 {
        (self.t_m + self.latency.eval(t)) * (1.0 + self.retransmissions.eval(t) * self.loss.eval(t))
    }

    /// Fan-out factor: `N − 1` for broadcast, `k` for the edge network.
    pub fn fan_out(&self, scheme: Scheme) -> u64 {
        match scheme {
            Scheme::Broadcast => self.client_nodes - 1,
            Scheme::EdgeNetwork => self.k,
        }
    }

    /// Trapezoid rule over `[0, horizon]`, halving the step until the
    /// relative change drops below [`INTEGRATION_TOLERANCE`].
    pub fn time_integral(&self) -> f64 {
        let a = 0.0;
        let b = self.horizon;
        if b == 0.0 {
            return 0.0;
        }
        let mut n = MIN_INTERVALS;
        let h = (b - a) / n as f64;
        let mut sum = (self.integrand(a) + self.integrand(b)) / 2.0
            + (1..n).map(|i| self.integrand(a + i as f64 * h)).sum::<f64>();
        let mut estimate = sum * h;
        while n < MAX_INTERVALS {
            let h = (b - a) / (2 * n) as f64;
            sum += (0..n).map(|i| self.integrand(a + (2 * i + 1) as f64 * h)).sum::<f64>();
            n *= 2;
            let next = sum * h;
            let scale = next.abs().max(f64::MIN_POSITIVE);
            let done = (next - estimate).abs() <= INTEGRATION_TOLERANCE * scale;
            estimate = next;
            if done {
                break;
            }
        }
        estimate
    }
}

/// `∫₀^T M·F·(t_m + l(t))·(1 + r(t)·p_loss(t)) dt` with `F = N − 1` for
/// broadcast and `F = k` for the edge network. Both schemes share one
/// evaluation of the time integral, so their ratio is the ratio of the
/// fan-out factors up to the final rounding.
pub fn expected_total_time(model: &RelayComplexityModel, scheme: Scheme) -> f64 {
    model.messages * model.fan_out(scheme) as f64 * model.time_integral()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::scenario::SimScenario;
    use proptest::prelude::*;

    fn scenario(groups: &str, rate: u64) -> SimScenario {
        SimScenario::parse(&format!("seed = 1\nrate = {rate}\n{groups}")).unwrap()
    }

    #[test]
    fn single_delegation_node_of_500() {
        let s = scenario("[[group]]\nname = \"g\"\ndelegation = { dn = 500 }\n", 1);
        let p = predicted_transmissions(&s).unwrap();
        assert_eq!((p.t_no_deleg, p.t_deleg), (249_500, 501));
        assert!((p.improvement - 498.0).abs() / 498.0 < 1e-3);
    }

    #[test]
    fn two_members_without_delegation() {
        let s = scenario("[[group]]\nname = \"g\"\nother = 2\n", 1);
        let p = predicted_transmissions(&s).unwrap();
        assert_eq!((p.t_no_deleg, p.t_deleg, p.improvement), (2, 2, 1.0));
        let c = predicted_categories(&s);
        assert_eq!(c.total(), 2);
        assert_eq!(c.clientnode_to_edge, 1);
    }

    #[test]
    fn small_delegated_group_can_lose() {
        // M = D + 1 is not enough: two members on one node cost 3 against 2
        let s = scenario("[[group]]\nname = \"g\"\ndelegation = { dn = 2 }\n", 1);
        let p = predicted_transmissions(&s).unwrap();
        assert_eq!((p.t_no_deleg, p.t_deleg), (2, 3));
        assert!(p.improvement < 1.0);
    }

    #[test]
    fn zero_traffic_is_an_error() {
        let s = scenario("[[group]]\nname = \"g\"\nother = 0\n", 1);
        assert_eq!(predicted_transmissions(&s).unwrap_err(), ModelError::ZeroTransmissions);
        let s = scenario("[[group]]\nname = \"g\"\nother = 4\n", 0);
        assert_eq!(predicted_transmissions(&s).unwrap_err(), ModelError::ZeroTransmissions);
    }

    #[test]
    fn constant_integrand_matches_closed_form() {
        let m = RelayComplexityModel::constant(40.0, 11, 3, 0.25, 12.0);
        let b = expected_total_time(&m, Scheme::Broadcast);
        let closed = 40.0 * 10.0 * 0.25 * 12.0;
        assert!((b - closed).abs() <= 1e-9 * closed);
        let e = expected_total_time(&m, Scheme::EdgeNetwork);
        assert!((e / b - 0.3).abs() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn latency_ramp_matches_antiderivative() {
        // l(t) = t/10 on [0, 10], then flat at 1; loss 0.1, one retransmission
        let mut m = RelayComplexityModel::constant(2.0, 5, 2, 0.5, 20.0);
        m.latency = PiecewiseLinear::new(vec![(0.0, 0.0), (10.0, 1.0)]).unwrap();
        m.loss = PiecewiseLinear::constant(0.1);
        m.retransmissions = PiecewiseLinear::constant(1.0);
        let inner = 0.5 * 20.0 + (10.0 * 10.0 / 20.0) + 10.0;
        let closed = 2.0 * 4.0 * 1.1 * inner;
        let got = expected_total_time(&m, Scheme::Broadcast);
        assert!((got - closed).abs() <= 1e-8 * closed, "{got} vs {closed}");
    }

    #[test]
    fn piecewise_eval_clamps() {
        let f = PiecewiseLinear::new(vec![(1.0, 2.0), (3.0, 6.0)]).unwrap();
        assert_eq!(f.eval(0.0), 2.0);
        assert_eq!(f.eval(2.0), 4.0);
        assert_eq!(f.eval(9.0), 6.0);
        assert!(PiecewiseLinear::new(vec![(1.0, 0.0), (1.0, 1.0)]).is_err());
        assert_eq!(PiecewiseLinear::new(vec![]).unwrap().eval(3.0), 0.0);
    }

    fn brute_force(groups: &[(Vec<u64>, u64)], t: u64) -> (u64, u64) {
        let (mut deleg, mut plain) = (0, 0);
        for (ds, o) in groups {
            let m: u64 = ds.iter().sum::<u64>() + o;
            for _ in 0..t {
                for d in ds {
                    deleg += d + 1;
                }
                deleg += o;
            }
            for _sender in 0..m {
                for _msg in 0..t {
                    plain += m - 1;
                }
            }
        }
        (plain, deleg)
    }

    fn render(groups: &[(Vec<u64>, u64)]) -> String {
        let mut s = String::new();
        for (i, (ds, o)) in groups.iter().enumerate() {
            let nodes: Vec<String> = ds.iter().enumerate().map(|(j, c)| format!("n{j} = {c}")).collect();
            s += &format!("[[group]]\nname = \"g{i}\"\nother = {o}\ndelegation = {{ {} }}\n", nodes.join(", "));
        }
        s
    }

    proptest! {
        #[test]
        fn formulas_match_brute_force(
            groups in prop::collection::vec((prop::collection::vec(1u64..30, 0..4), 0u64..10), 1..4),
            t in 1u64..5,
        ) {
            let s = scenario(&render(&groups), t);
            let (plain, deleg) = brute_force(&groups, t);
            match predicted_transmissions(&s) {
                Ok(p) => {
                    prop_assert_eq!((p.t_no_deleg, p.t_deleg), (plain, deleg));
                    prop_assert_eq!(predicted_categories(&s).total(), deleg);
                }
                Err(e) => {
                    prop_assert_eq!(e, ModelError::ZeroTransmissions);
                    prop_assert_eq!(deleg, 0);
                }
            }
        }

        #[test]
        fn delegation_helps_exactly_when_fan_out_dominates(
            nodes in prop::collection::vec(1u64..40, 1..5),
            t in 1u64..4,
        ) {
            // all members on delegation nodes: I = M(M − 1) / (M + D)
            let d = nodes.len() as u64;
            let m: u64 = nodes.iter().sum();
            let s = scenario(&render(&[(nodes, 0)]), t);
            let i = predicted_transmissions(&s).unwrap().improvement;
            prop_assert_eq!(i >= 1.0, m * (m - 1) >= m + d);
        }

        #[test]
        fn edge_to_broadcast_ratio_is_k_over_n_minus_1(
            n in 3u64..2000,
            k in 1u64..3,
            t_m in 0.01f64..5.0,
            lat in 0.0f64..3.0,
            loss in 0.0f64..1.0,
        ) {
            let mut m = RelayComplexityModel::constant(7.0, n, k, t_m, 9.0);
            m.latency = PiecewiseLinear::new(vec![(0.0, 0.0), (9.0, lat)]).unwrap();
            m.loss = PiecewiseLinear::constant(loss);
            m.retransmissions = PiecewiseLinear::constant(2.0);
            let b = expected_total_time(&m, Scheme::Broadcast);
            let e = expected_total_time(&m, Scheme::EdgeNetwork);
            let want = k as f64 / (n - 1) as f64;
            prop_assert!((e / b - want).abs() <= 4.0 * f64::EPSILON * want);
        }
    }
}

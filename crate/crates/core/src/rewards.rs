//! Layer-specific reward functions and the per-layer sub-objective report.
//!
//! Reciprocal terms clamp their denominators at `epsilon_clamp` so every
//! reward is finite; delay and unserved excesses are floored at zero before
//! weighting, so beating a budget is not rewarded through the denominator.

use serde::{Deserialize, Serialize};

use crate::domain::SlotLedger;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardCoefficients {
    /// Layer-1 place-cost weight.
    pub a: f64,
    /// Layer-1 unserved-demand weight.
    pub b: f64,
    /// Layer-2 offload-cost weight.
    pub c: f64,
    /// Layer-2 delay weight.
    pub d: f64,
    /// Layer-2 workload-variance weight; negative penalizes imbalance.
    pub e: f64,
    /// Layer-3 allocation-cost weight.
    pub f: f64,
    /// Layer-3 delay weight.
    pub g: f64,
    /// Sub-objective weights for covered demand, offloaded-in-budget demand,
    /// load variance and computed-in-budget demand.
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub phi: f64,
    /// Unserved-demand tolerance before the Layer-1 denominator grows.
    pub budget_unserved: f64,
    /// Mean-delay tolerance in slots.
    pub budget_delay: f64,
    /// Denominator floor.
    pub epsilon_clamp: f64,
}

impl Default for RewardCoefficients {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            c: 1.0,
            d: 1.0,
            e: -1.0,
            f: 1.0,
            g: 1.0,
            alpha: 1.0,
            beta: 1.0,
            sigma: 0.5,
            phi: 1.0,
            budget_unserved: 0.0,
            budget_delay: 0.0,
            epsilon_clamp: 1e-3,
        }
    }
}

impl RewardCoefficients {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.epsilon_clamp > 0.0) {
            errs.push("epsilon_clamp must be positive".into());
        }
        for (name, v) in [
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
            ("d", self.d),
            ("e", self.e),
            ("f", self.f),
            ("g", self.g),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("sigma", self.sigma),
            ("phi", self.phi),
        ] {
            if !v.is_finite() {
                errs.push(format!("coefficient {name} must be finite"));
            }
        }
        errs
    }
}

fn gated(cost: f64, bit: bool) -> f64 {
    if bit {
        cost
    } else {
        0.0
    }
}

/// Sum over edges of 1 / max(eps, a*PlaceCost_i + b*[unserved_i - budget]+).
pub fn layer1_reward(ledger: &SlotLedger, k: &RewardCoefficients) -> f64 {
    (0..ledger.revenue.len())
        .map(|i| {
            let cost = gated(ledger.place_cost[i], ledger.update_bits[i].a1);
            let excess = (ledger.unserved_demand[i] - k.budget_unserved).max(0.0);
            1.0 / (k.a * cost + k.b * excess).max(k.epsilon_clamp)
        })
        .sum()
}

/// Reciprocal offload-cost/delay term plus the weighted workload variance.
pub fn layer2_reward(ledger: &SlotLedger, k: &RewardCoefficients) -> f64 {
    let recip: f64 = (0..ledger.revenue.len())
        .map(|i| {
            let cost = gated(ledger.offload_cost[i], ledger.update_bits[i].a2);
            let excess = (ledger.mean_delay_origin[i] - k.budget_delay).max(0.0);
            1.0 / (k.c * cost + k.d * excess).max(k.epsilon_clamp)
        })
        .sum();
    recip + k.e * ledger.load_variance
}

/// Sum over edges of UndelayedWorkload_i / max(eps, f*AllocCost_i + g*[delay]+).
pub fn layer3_reward(ledger: &SlotLedger, k: &RewardCoefficients) -> f64 {
    (0..ledger.revenue.len())
        .map(|i| {
            let cost = gated(ledger.alloc_cost[i], ledger.update_bits[i].a3);
            let excess = (ledger.mean_delay_exec[i] - k.budget_delay).max(0.0);
            ledger.undelayed_workload[i] / (k.f * cost + k.g * excess).max(k.epsilon_clamp)
        })
        .sum()
}

pub fn layer_reward(layer: crate::domain::Layer, ledger: &SlotLedger, k: &RewardCoefficients) -> f64 {
    match layer {
        crate::domain::Layer::Placement => layer1_reward(ledger, k),
        crate::domain::Layer::Offloading => layer2_reward(ledger, k),
        crate::domain::Layer::Allocation => layer3_reward(ledger, k),
    }
}

/// Episode totals of the three decomposed sub-objectives:
/// P1 = sum_t [alpha*d - sum_i a1*c1], P2 = sum_t [beta*u - sigma*v - sum_i a2*c2],
/// P3 = sum_t [phi*l - sum_i a3*c3].
pub fn subobjective_report(ledgers: &[SlotLedger], k: &RewardCoefficients) -> (f64, f64, f64) {
    let mut p1 = 0.0;
    let mut p2 = 0.0;
    let mut p3 = 0.0;
    for l in ledgers {
        let mut c1 = 0.0;
        let mut c2 = 0.0;
        let mut c3 = 0.0;
        for i in 0..l.revenue.len() {
            c1 += gated(l.place_cost[i], l.update_bits[i].a1);
            c2 += gated(l.offload_cost[i], l.update_bits[i].a2);
            c3 += gated(l.alloc_cost[i], l.update_bits[i].a3);
        }
        p1 += k.alpha * l.covered_demand - c1;
        p2 += k.beta * l.offload_in_budget - k.sigma * l.load_variance - c2;
        p3 += k.phi * l.comp_in_budget - c3;
    }
    (p1, p2, p3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::UpdateAction;

    fn ledger(n: usize) -> SlotLedger {
        SlotLedger::zero(0, n)
    }

    #[test]
    fn clamp_keeps_rewards_finite_at_zero_denominator() {
        let k = RewardCoefficients::default();
        let l = ledger(3);
        let r = layer1_reward(&l, &k);
        assert_eq!(r, 3.0 / k.epsilon_clamp);
        assert!(r.is_finite());
    }

    #[test]
    fn layer1_matches_hand_computation() {
        let k = RewardCoefficients::default();
        let mut l = ledger(1);
        l.place_cost[0] = 2.0;
        l.update_bits[0] = UpdateAction::ALL_UPDATE;
        l.unserved_demand[0] = 3.0;
        assert_eq!(layer1_reward(&l, &k), 1.0 / 5.0);
    }

    #[test]
    fn layer1_reciprocal_halves_when_cost_doubles() {
        let mut k = RewardCoefficients::default();
        k.b = 0.0;
        let mut l = ledger(1);
        l.update_bits[0] = UpdateAction::ALL_UPDATE;
        l.place_cost[0] = 2.0;
        let r1 = layer1_reward(&l, &k);
        l.place_cost[0] = 4.0;
        let r2 = layer1_reward(&l, &k);
        assert_eq!(r1, 2.0 * r2);
    }

    #[test]
    fn layer2_variance_term() {
        let k = RewardCoefficients::default();
        let mut l = ledger(2);
        l.load_variance = 4.0;
        // e = -1 contributes -4 on top of the clamped reciprocal sum
        assert_eq!(layer2_reward(&l, &k), 2.0 / k.epsilon_clamp - 4.0);
        l.load_variance = 0.0;
        assert_eq!(layer2_reward(&l, &k), 2.0 / k.epsilon_clamp);
    }

    #[test]
    fn layer3_zero_numerator_and_direct_substitution() {
        let k = RewardCoefficients::default();
        let mut l = ledger(1);
        assert_eq!(layer3_reward(&l, &k), 0.0);
        l.undelayed_workload[0] = 6.0;
        l.alloc_cost[0] = 2.0;
        l.update_bits[0] = UpdateAction::ALL_UPDATE;
        l.mean_delay_exec[0] = 1.0;
        // 6 / (1*2 + 1*1) = 2
        assert_eq!(layer3_reward(&l, &k), 2.0);
        l.undelayed_workload[0] = 12.0;
        assert_eq!(layer3_reward(&l, &k), 4.0);
    }

    #[test]
    fn costs_are_gated_by_update_bits() {
        let k = RewardCoefficients::default();
        let mut l = ledger(1);
        l.place_cost[0] = 100.0;
        l.update_bits[0] = UpdateAction::ALL_HOLD;
        assert_eq!(layer1_reward(&l, &k), 1.0 / k.epsilon_clamp);
    }

    #[test]
    fn under_budget_delay_is_floored_not_rewarded() {
        let mut k = RewardCoefficients::default();
        k.budget_delay = 5.0;
        let mut l = ledger(1);
        l.mean_delay_origin[0] = 1.0; // under budget
        assert_eq!(layer2_reward(&l, &k), 1.0 / k.epsilon_clamp);
    }

    #[test]
    fn subobjectives_sum_over_slots() {
        let k = RewardCoefficients::default();
        let idle = vec![ledger(2); 4];
        assert_eq!(subobjective_report(&idle, &k), (0.0, 0.0, 0.0));

        let mut l = ledger(2);
        l.covered_demand = 5.0;
        let ls = vec![l; 10];
        let (p1, _, _) = subobjective_report(&ls, &k);
        assert_eq!(p1, 50.0);

        let mut k0 = k.clone();
        k0.sigma = 0.0;
        let mut l = ledger(2);
        l.offload_in_budget = 3.0;
        l.load_variance = 7.0;
        let (_, p2, _) = subobjective_report(&[l], &k0);
        assert_eq!(p2, 3.0);
    }

    #[test]
    fn increasing_gated_cost_never_increases_reward() {
        let k = RewardCoefficients::default();
        let mut l = ledger(2);
        l.update_bits = vec![UpdateAction::ALL_UPDATE; 2];
        l.undelayed_workload = vec![4.0, 4.0];
        let mut previous = f64::INFINITY;
        for step in 0..20 {
            l.alloc_cost = vec![step as f64 * 0.5; 2];
            let r = layer3_reward(&l, &k);
            assert!(r <= previous + 1e-12);
            previous = r;
        }
    }
}

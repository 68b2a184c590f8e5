//! Regret accounting: standard, simple and the three lenient notions.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LenientKind {
    Indicator,
    Gap,
    Hinge,
}

/// Penalty of instantaneous regret `r` at tolerance `gap`. Zero whenever
/// `r ≤ gap`; the comparison is strict.
pub fn phi(kind: LenientKind, r: f64, gap: f64) -> f64 {
    match kind {
        LenientKind::Indicator => {
            if r > gap {
                1.0
            } else {
                0.0
            }
        }
        LenientKind::Gap => {
            if r > gap {
                r
            } else {
                0.0
            }
        }
        LenientKind::Hinge => (r - gap).max(0.0),
    }
}

/// Running regret totals for one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    pub gap: f64,
    pub instantaneous: Vec<f64>,
    pub standard: f64,
    pub indicator: f64,
    pub large_gap: f64,
    pub hinge: f64,
    pub bad_rounds: usize,
    /// 1-based index of the first round with `r ≤ gap`.
    pub first_good_round: Option<usize>,
}

/// Snapshot of the cumulatives after one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretRow {
    pub r: f64,
    pub standard: f64,
    pub indicator: f64,
    pub large_gap: f64,
    pub hinge: f64,
}

impl RegretLedger {
    pub fn new(gap: f64) -> Self {
        RegretLedger {
            gap,
            instantaneous: Vec::new(),
            standard: 0.0,
            indicator: 0.0,
            large_gap: 0.0,
            hinge: 0.0,
            bad_rounds: 0,
            first_good_round: None,
        }
    }

    pub fn rounds(&self) -> usize {
        self.instantaneous.len()
    }

    pub fn record_round(&mut self, f_star: f64, f_x: f64) -> RegretRow {
        let r = (f_star - f_x).max(0.0);
        self.instantaneous.push(r);
        self.standard += r;
        let ind = phi(LenientKind::Indicator, r, self.gap);
        self.indicator += ind;
        self.large_gap += phi(LenientKind::Gap, r, self.gap);
        self.hinge += phi(LenientKind::Hinge, r, self.gap);
        if ind > 0.0 {
            self.bad_rounds += 1;
        } else if self.first_good_round.is_none() {
            self.first_good_round = Some(self.rounds());
        }
        self.row()
    }

    pub fn row(&self) -> RegretRow {
        RegretRow {
            r: self.instantaneous.last().copied().unwrap_or(0.0),
            standard: self.standard,
            indicator: self.indicator,
            large_gap: self.large_gap,
            hinge: self.hinge,
        }
    }

    /// Rebuilds a ledger from stored instantaneous regrets.
    pub fn replay(gap: f64, regrets: &[f64]) -> Self {
        let mut l = RegretLedger::new(gap);
        for &r in regrets {
            l.record_round(r, 0.0);
        }
        l
    }
}

pub fn simple_regret(f_star: f64, estimate_value: f64) -> f64 {
    (f_star - estimate_value).max(0.0)
}

/// One measured-vs-bound comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub quantity: String,
    pub measured: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Measured lenient regrets against the upper-bound report of the matching
/// algorithm (`elimination` selects the second theorem's forms).
pub fn bound_comparison(ledger: &RegretLedger, report: &crate::theory::BoundReport, elimination: bool) -> Vec<BoundCheck> {
    let (n, gap_bound) = if elimination {
        (report.n_max_prime, report.gap_bound_elimination)
    } else {
        (report.n_max, report.gap_bound_gp_ucb)
    };
    let check = |q: &str, measured: f64, bound: f64| BoundCheck {
        quantity: q.to_string(),
        measured,
        bound,
        holds: measured <= bound,
    };
    vec![
        check("indicator", ledger.indicator, n.value as f64),
        check("large_gap", ledger.large_gap, gap_bound),
        check("hinge", ledger.hinge, gap_bound),
    ]
}

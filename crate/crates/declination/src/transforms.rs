//! Packing and cracking as election-to-election transforms.
//!
//! Both transforms move party-P votes out of district `k+1`, the
//! lowest-share district P wins. A *crack* spreads them over the districts
//! P already loses (each recipient must stay at or below 1/2); a *pack*
//! concentrates them in the districts P wins by more (each recipient must
//! stay at or below 1). Either way district `k+1` ends at or below 1/2, so
//! P loses exactly one more seat.
//!
//! The monotonicity guarantees (the declination strictly increases when
//! the source district ends above the mean lost-district share; every
//! `Gap_tau` strictly increases when it ends above the highest
//! lost-district share) are exercised by the seeded generators and
//! [`run_theorem_check`].

use crate::metrics::{Election, MetricsError};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::ops::RangeInclusive;
use thiserror::Error;

/// Tolerance on vote conservation when validating and applying plans.
pub const CONSERVATION_TOL: f64 = 1e-12;

/// Generators keep the moved share strictly inside open bounds by this
/// margin so downstream strict-inequality checks are numerically clean.
pub const BOUNDARY_MARGIN: f64 = 1e-6;

// Slack subtracted from total recipient headroom when drawing plans, so
// rounding in the proportional allocation cannot push a recipient past
// its bound.
const HEADROOM_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("invalid plan: {reason}")]
    InvalidPlan { reason: String },
    #[error("transform requires each party to win at least one district")]
    DegenerateElection,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn invalid<T>(reason: &str) -> Result<T, TransformError> {
    Err(TransformError::InvalidPlan {
        reason: reason.to_owned(),
    })
}

/// A cracking move: votes leave district `k+1` (1-based `source_index`)
/// and are spread over the `k` districts party P loses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrackPlan {
    /// 1-based index of the source district; always `k + 1`.
    pub source_index: usize,
    /// Share remaining in the source district; must end at or below 1/2.
    pub new_source_share: f64,
    /// Nonnegative share increments for districts `1..=k`, in sorted
    /// order; must sum to the share removed from the source.
    pub allocation: Vec<f64>,
}

/// A packing move: votes leave district `k+1` and are concentrated in the
/// districts `k+2..=N` that party P wins by more.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackPlan {
    /// 1-based index of the source district; always `k + 1`.
    pub source_index: usize,
    /// Share remaining in the source district; must end at or below 1/2.
    pub new_source_share: f64,
    /// Nonnegative share increments for districts `k+2..=N`.
    pub allocation: Vec<f64>,
}

fn validate_common(
    source: f64,
    new_source_share: f64,
    allocation: &[f64],
) -> Result<(), TransformError> {
    if allocation.iter().any(|b| !b.is_finite() || *b < 0.0) {
        return invalid("allocation entries must be nonnegative");
    }
    if !new_source_share.is_finite() || new_source_share < 0.0 {
        return invalid("source share must be nonnegative");
    }
    if new_source_share > 0.5 {
        return invalid("source share must end at or below 1/2");
    }
    let moved: f64 = allocation.iter().sum();
    if (moved - (source - new_source_share)).abs() > CONSERVATION_TOL {
        return invalid("allocation does not conserve votes");
    }
    Ok(())
}

/// Applies a crack, returning the resulting election with shares re-sorted.
/// District identity is not tracked across the transform.
pub fn apply_crack(e: &Election, plan: &CrackPlan) -> Result<Election, TransformError> {
    let split = e.split();
    if split.k == 0 || split.k_prime == 0 {
        return Err(TransformError::DegenerateElection);
    }
    if plan.source_index != split.k + 1 {
        return invalid("source index must be the lowest district won by party P");
    }
    if plan.allocation.len() != split.k {
        return invalid("allocation length must equal the number of lost districts");
    }
    validate_common(e.shares()[split.k], plan.new_source_share, &plan.allocation)?;

    let mut shares = e.shares().to_vec();
    for (i, &b) in plan.allocation.iter().enumerate() {
        let bumped = shares[i] + b;
        if bumped > 0.5 {
            return invalid("recipient exceeds 1/2");
        }
        shares[i] = bumped;
    }
    shares[split.k] = plan.new_source_share;
    Ok(Election::new(shares, e.party_p_name(), e.party_q_name())
        .expect("cracked shares stay within [0, 1]"))
}

/// Applies a pack, returning the resulting election with shares re-sorted.
pub fn apply_pack(e: &Election, plan: &PackPlan) -> Result<Election, TransformError> {
    let split = e.split();
    if split.k == 0 || split.k_prime == 0 {
        return Err(TransformError::DegenerateElection);
    }
    if plan.source_index != split.k + 1 {
        return invalid("source index must be the lowest district won by party P");
    }
    if plan.allocation.len() != split.k_prime - 1 {
        return invalid("allocation length must equal the number of districts above the source");
    }
    validate_common(e.shares()[split.k], plan.new_source_share, &plan.allocation)?;

    let mut shares = e.shares().to_vec();
    for (offset, &b) in plan.allocation.iter().enumerate() {
        let i = split.k + 1 + offset;
        let bumped = shares[i] + b;
        if bumped > 1.0 {
            return invalid("share exceeds 1");
        }
        shares[i] = bumped;
    }
    shares[split.k] = plan.new_source_share;
    Ok(Election::new(shares, e.party_p_name(), e.party_q_name())
        .expect("packed shares stay within [0, 1]"))
}

/// Reflects an election through share 1/2: every share becomes `1 - p`
/// (re-sorted) and the party labels swap. Applying a P-side plan inside a
/// mirror pair realizes the corresponding Q-side transform.
pub fn mirror_q(e: &Election) -> Election {
    let shares = e.shares().iter().map(|&p| 1.0 - p).collect();
    Election::new(shares, e.party_q_name(), e.party_p_name())
        .expect("mirrored shares stay within [0, 1]")
}

/// Draws a feasible crack plan, or `None` when every lost district is
/// saturated at 1/2 (or the feasible interval is otherwise empty).
///
/// The remaining source share is drawn uniformly from the feasible
/// interval, intersected with `(y_bar, 1/2]` when
/// `require_theorem_hypotheses` is set, and the moved mass is split over
/// recipients proportionally to their headroom `1/2 - p_i`.
pub fn random_crack_plan(
    e: &Election,
    rng_seed: u64,
    require_theorem_hypotheses: bool,
) -> Result<Option<CrackPlan>, TransformError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let bound = if require_theorem_hypotheses {
        let split = e.split();
        if split.k == 0 || split.k_prime == 0 {
            return Err(TransformError::DegenerateElection);
        }
        split.y_bar
    } else {
        None
    };
    draw_crack_plan(e, &mut rng, bound)
}

/// Pack-side analogue of [`random_crack_plan`]. The hypothesis interval
/// here is `(p_k, 1/2]`, the bound under which every `Gap_tau` strictly
/// increases.
pub fn random_pack_plan(
    e: &Election,
    rng_seed: u64,
    require_theorem_hypotheses: bool,
) -> Result<Option<PackPlan>, TransformError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let bound = if require_theorem_hypotheses {
        let split = e.split();
        if split.k == 0 || split.k_prime == 0 {
            return Err(TransformError::DegenerateElection);
        }
        Some(e.shares()[split.k - 1])
    } else {
        None
    };
    draw_pack_plan(e, &mut rng, bound)
}

fn draw_source_share<R: Rng>(
    rng: &mut R,
    source: f64,
    total_headroom: f64,
    lower_bound: Option<f64>,
) -> Option<f64> {
    let mut lo = source - total_headroom + HEADROOM_SLACK;
    if let Some(bound) = lower_bound {
        lo = lo.max(bound + BOUNDARY_MARGIN);
    }
    lo = lo.max(0.0);
    let hi = 0.5 - BOUNDARY_MARGIN;
    if lo > hi {
        return None;
    }
    Some(rng.gen_range(lo..=hi))
}

fn draw_crack_plan<R: Rng>(
    e: &Election,
    rng: &mut R,
    lower_bound: Option<f64>,
) -> Result<Option<CrackPlan>, TransformError> {
    let split = e.split();
    if split.k == 0 || split.k_prime == 0 {
        return Err(TransformError::DegenerateElection);
    }
    let source = e.shares()[split.k];
    let headroom: Vec<f64> = e.shares()[..split.k].iter().map(|&p| 0.5 - p).collect();
    let total: f64 = headroom.iter().sum();
    let new_source_share = match draw_source_share(rng, source, total, lower_bound) {
        Some(p) => p,
        None => return Ok(None),
    };
    let moved = source - new_source_share;
    let allocation = headroom.iter().map(|h| moved * h / total).collect();
    Ok(Some(CrackPlan {
        source_index: split.k + 1,
        new_source_share,
        allocation,
    }))
}

fn draw_pack_plan<R: Rng>(
    e: &Election,
    rng: &mut R,
    lower_bound: Option<f64>,
) -> Result<Option<PackPlan>, TransformError> {
    let split = e.split();
    if split.k == 0 || split.k_prime == 0 {
        return Err(TransformError::DegenerateElection);
    }
    let source = e.shares()[split.k];
    let headroom: Vec<f64> = e.shares()[split.k + 1..].iter().map(|&p| 1.0 - p).collect();
    let total: f64 = headroom.iter().sum();
    let new_source_share = match draw_source_share(rng, source, total, lower_bound) {
        Some(p) => p,
        None => return Ok(None),
    };
    let moved = source - new_source_share;
    let allocation = headroom.iter().map(|h| moved * h / total).collect();
    Ok(Some(PackPlan {
        source_index: split.k + 1,
        new_source_share,
        allocation,
    }))
}

/// Random election with every share at least `margin` away from 1/2.
pub fn random_election<R: Rng>(rng: &mut R, n_districts: usize, margin: f64) -> Election {
    let shares = (0..n_districts)
        .map(|_| {
            if rng.gen_bool(0.5) {
                rng.gen_range(0.0..=0.5 - margin)
            } else {
                rng.gen_range(0.5 + margin..=1.0)
            }
        })
        .collect();
    Election::from_shares(shares).expect("generated shares lie in [0, 1]")
}

/// Random election guaranteed to give each party at least one seat, with
/// shares bounded away from 1/2 by `margin`. `k` is drawn uniformly from
/// `1..n_districts`.
pub fn random_contested_election<R: Rng>(rng: &mut R, n_districts: usize, margin: f64) -> Election {
    assert!(n_districts >= 2, "contested election needs two districts");
    let k = rng.gen_range(1..n_districts);
    let shares = (0..n_districts)
        .map(|i| {
            if i < k {
                rng.gen_range(0.0..=0.5 - margin)
            } else {
                rng.gen_range(0.5 + margin..=1.0)
            }
        })
        .collect();
    Election::from_shares(shares).expect("generated shares lie in [0, 1]")
}

/// Which transform a theorem-check trial applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    Crack,
    Pack,
}

/// First failing trial of a theorem check, with everything needed to
/// replay it.
#[derive(Debug, Clone, Serialize)]
pub struct TheoremCounterexample {
    pub kind: PlanKind,
    pub shares: Vec<f64>,
    pub crack_plan: Option<CrackPlan>,
    pub pack_plan: Option<PackPlan>,
    /// Metric that failed to increase: "declination" or "gap_tau".
    pub metric: String,
    pub tau: Option<f64>,
    pub before: f64,
    pub after: f64,
}

/// Outcome of [`run_theorem_check`].
#[derive(Debug, Clone, Serialize)]
pub struct TheoremCheckReport {
    pub trials: usize,
    pub cracks: usize,
    pub packs: usize,
    pub declination_violations: usize,
    pub gap_violations: usize,
    pub taus: Vec<f64>,
    pub counterexample: Option<TheoremCounterexample>,
}

impl TheoremCheckReport {
    pub fn passed(&self) -> bool {
        self.declination_violations == 0 && self.gap_violations == 0
    }
}

/// Configuration for the packing/cracking monotonicity suite.
#[derive(Debug, Clone)]
pub struct TheoremCheckConfig {
    pub trials: usize,
    pub seed: u64,
    pub taus: Vec<f64>,
    pub n_districts: RangeInclusive<usize>,
    /// Shares are kept at least this far from 1/2.
    pub share_margin: f64,
}

impl Default for TheoremCheckConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            seed: 0,
            taus: vec![0.0, 0.4, 1.0, 2.0, 5.0],
            n_districts: 3..=50,
            share_margin: 1e-3,
        }
    }
}

/// Runs `trials` seeded random elections, applies a random crack or pack
/// whose remaining source share exceeds the highest lost-district share
/// (which implies both monotonicity hypotheses, since that share is at
/// least the lost-block mean), and counts strict-increase violations for
/// the declination and for `Gap_tau` at every requested `tau`.
pub fn run_theorem_check(
    config: &TheoremCheckConfig,
) -> Result<TheoremCheckReport, TransformError> {
    for &tau in &config.taus {
        if !tau.is_finite() || tau < 0.0 {
            return Err(MetricsError::InvalidTau { value: tau }.into());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = TheoremCheckReport {
        trials: config.trials,
        cracks: 0,
        packs: 0,
        declination_violations: 0,
        gap_violations: 0,
        taus: config.taus.clone(),
        counterexample: None,
    };

    for _ in 0..config.trials {
        let want_crack = rng.gen_bool(0.5);
        let (election, crack, pack) = loop {
            let n = rng.gen_range(config.n_districts.clone());
            // keep k' >= 2 so the declination stays defined after the
            // transform removes one P seat
            let e = loop {
                let e = random_contested_election(&mut rng, n, config.share_margin);
                if e.split().k_prime >= 2 {
                    break e;
                }
            };
            let bound = Some(e.shares()[e.split().k - 1]);
            if want_crack {
                if let Some(plan) = draw_crack_plan(&e, &mut rng, bound)? {
                    break (e, Some(plan), None);
                }
            } else if let Some(plan) = draw_pack_plan(&e, &mut rng, bound)? {
                break (e, None, Some(plan));
            }
        };

        let kind = if crack.is_some() {
            report.cracks += 1;
            PlanKind::Crack
        } else {
            report.packs += 1;
            PlanKind::Pack
        };
        let transformed = match (&crack, &pack) {
            (Some(plan), _) => apply_crack(&election, plan).expect("generated plan is valid"),
            (_, Some(plan)) => apply_pack(&election, plan).expect("generated plan is valid"),
            _ => unreachable!(),
        };

        let record = |metric: &str,
                      tau: Option<f64>,
                      before: f64,
                      after: f64,
                      report: &mut TheoremCheckReport| {
            if report.counterexample.is_none() {
                report.counterexample = Some(TheoremCounterexample {
                    kind,
                    shares: election.shares().to_vec(),
                    crack_plan: crack.clone(),
                    pack_plan: pack.clone(),
                    metric: metric.to_owned(),
                    tau,
                    before,
                    after,
                });
            }
        };

        let before = election.declination().expect("both parties hold seats");
        let after = transformed
            .declination()
            .expect("transform leaves party P at least one seat");
        if after <= before {
            report.declination_violations += 1;
            record("declination", None, before, after, &mut report);
        }

        for &tau in &config.taus {
            let before = election.tau_gap(tau)?;
            let after = transformed.tau_gap(tau)?;
            if after <= before {
                report.gap_violations += 1;
                record("gap_tau", Some(tau), before, after, &mut report);
            }
        }
    }
    Ok(report)
}

//! Share imputation for uncontested races.
//!
//! Uncontested races get an estimated two-party share from an additive
//! model fit to the contested races of the same chamber and districting
//! cycle:
//!
//! ```text
//! y = 1/2 + state effect + district effect + year effect
//!       + b1*won_by_dem + b2*won_by_rep + b3*dem_incumbent + b4*rep_incumbent
//! ```
//!
//! The fit is ridge-penalized least squares with one penalty weight per
//! effect family, which plays the role of random-effect shrinkage while
//! staying deterministic. The families are centered after the fit (their
//! compensating constant moves into the winner coefficients, which every
//! race has exactly one of), so the parametrization is unique.
//!
//! Imputed values are clamped onto the winner-consistent side of 1/2:
//! a predicted 0.50-or-less for a race the Democrat won becomes 0.505,
//! and a prediction above 0.50 for a race the Democrat lost becomes
//! 0.495. Districts never contested during a cycle have no fitted effect;
//! for those, a district effect is drawn from the fitted effects of
//! districts held by the same party throughout the cycle (or from all of
//! them, when the district changed hands).

use crate::ingest::{
    national_cycle_start, Chamber, DistrictRaceRecord, ElectionGroup, GroupKey, TwoPartyShare,
    Winner,
};
use crate::metrics::Election;
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImputeError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no fitted district effect for {key}")]
    MissingEffect { key: String },
    #[error("no fitted district effects to draw a fallback from")]
    EmptyEffectPool,
    #[error("ridge system is singular; raise the penalty weights")]
    SingularSystem,
}

/// One contested race prepared for fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct FitObservation {
    pub chamber: Chamber,
    pub state: String,
    pub district_id: String,
    pub cycle_id: String,
    pub year: i32,
    /// Democratic fraction of the two-party vote.
    pub share: f64,
    pub winner: Winner,
    pub dem_incumbent: bool,
    pub rep_incumbent: bool,
}

/// Ridge penalty weight per effect family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeLambdas {
    pub state: f64,
    pub district: f64,
    pub year: f64,
    pub beta: f64,
}

impl Default for RidgeLambdas {
    fn default() -> Self {
        Self {
            state: 0.1,
            district: 0.1,
            year: 0.1,
            beta: 0.1,
        }
    }
}

/// How penalty weights are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaSelection {
    Fixed(RidgeLambdas),
    /// Coordinate search over `grid`, one family at a time, scored by RMSE
    /// on a seeded holdout split.
    GridSearch {
        grid: Vec<f64>,
        holdout_fraction: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub lambdas: LambdaSelection,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambdas: LambdaSelection::GridSearch {
                grid: vec![0.01, 0.1, 1.0, 10.0],
                holdout_fraction: 0.1,
                seed: 17,
            },
        }
    }
}

impl FitConfig {
    pub fn fixed(lambdas: RidgeLambdas) -> Self {
        Self {
            lambdas: LambdaSelection::Fixed(lambdas),
        }
    }
}

/// Which party held a district over a cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeldBy {
    Dem,
    Rep,
    Mixed,
}

impl HeldBy {
    fn merge(self, winner: Winner) -> HeldBy {
        match (self, winner) {
            (HeldBy::Dem, Winner::D) => HeldBy::Dem,
            (HeldBy::Rep, Winner::R) => HeldBy::Rep,
            _ => HeldBy::Mixed,
        }
    }
}

/// Composite key for district effects: `"ST/district/cycle"`.
pub fn district_key(state: &str, district_id: &str, cycle_id: &str) -> String {
    format!("{state}/{district_id}/{cycle_id}")
}

/// Fitted effect estimates for one (chamber, national cycle) partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationModel {
    pub chamber: Chamber,
    /// First year of the national districting cycle this model covers.
    pub cycle_start: i32,
    /// Centered state effects.
    pub state_effects: BTreeMap<String, f64>,
    /// Centered district effects keyed by `"ST/district/cycle"`.
    pub district_effects: BTreeMap<String, f64>,
    /// Centered year effects.
    pub year_effects: BTreeMap<i32, f64>,
    pub beta_win_d: f64,
    pub beta_win_r: f64,
    pub beta_inc_d: f64,
    pub beta_inc_r: f64,
    pub ridge_lambda: RidgeLambdas,
    pub residual_sd: f64,
    pub n_obs: usize,
    /// Which party held each fitted district across the cycle; fallback
    /// draws filter on this.
    pub district_party: BTreeMap<String, HeldBy>,
}

/// Winner-consistency clamps applied to every imputed share: a Democratic
/// win predicted at or below 0.50 becomes 0.505, a Democratic loss
/// predicted above 0.50 becomes 0.495, and everything is clipped to
/// [0.005, 0.995].
pub fn apply_winner_clamps(raw: f64, winner: Winner) -> f64 {
    let clamped = match winner {
        Winner::D if raw <= 0.50 => 0.505,
        Winner::R if raw > 0.50 => 0.495,
        _ => raw,
    };
    clamped.clamp(0.005, 0.995)
}

/// The flat baseline imputation: the winner's party gets `winner_share`
/// of the two-party vote.
pub fn uniform_baseline(winner: Winner, winner_share: f64) -> f64 {
    match winner {
        Winner::D => winner_share,
        Winner::R => 1.0 - winner_share,
    }
}

impl ImputationModel {
    fn effects_for(&self, state: &str, dkey: &str, year: i32) -> f64 {
        // unseen state/year effects contribute their prior mean of zero;
        // a missing *district* effect is the caller's signal to fall back
        self.state_effects.get(state).copied().unwrap_or(0.0)
            + self.district_effects.get(dkey).copied().unwrap_or(0.0)
            + self.year_effects.get(&year).copied().unwrap_or(0.0)
    }

    fn fixed_terms(&self, winner: Winner, dem_incumbent: bool, rep_incumbent: bool) -> f64 {
        let w = match winner {
            Winner::D => self.beta_win_d,
            Winner::R => self.beta_win_r,
        };
        w + if dem_incumbent { self.beta_inc_d } else { 0.0 }
            + if rep_incumbent { self.beta_inc_r } else { 0.0 }
    }

    /// Raw model prediction for a fitted-style observation, with missing
    /// effects treated as zero and no winner clamps. Used for validation.
    pub fn predict_observation(&self, obs: &FitObservation) -> f64 {
        let dkey = district_key(&obs.state, &obs.district_id, &obs.cycle_id);
        let raw = 0.5
            + self.effects_for(&obs.state, &dkey, obs.year)
            + self.fixed_terms(obs.winner, obs.dem_incumbent, obs.rep_incumbent);
        raw.clamp(0.005, 0.995)
    }

    /// Imputed share for an uncontested race whose district was contested
    /// at some point in the cycle. Fails with `MissingEffect` when the
    /// district has no fitted effect; use [`Self::fallback_district_effect`]
    /// then [`Self::impute_share_with_effect`] for those.
    pub fn impute_share(
        &self,
        record: &DistrictRaceRecord,
        cycle_id: &str,
    ) -> Result<f64, ImputeError> {
        let dkey = district_key(&record.state, &record.district_id, cycle_id);
        if !self.district_effects.contains_key(&dkey) {
            return Err(ImputeError::MissingEffect { key: dkey });
        }
        let raw = 0.5
            + self.effects_for(&record.state, &dkey, record.year)
            + self.fixed_terms(record.winner, record.dem_incumbent, record.rep_incumbent);
        Ok(apply_winner_clamps(raw, record.winner))
    }

    /// Imputed share using an explicit district effect (the fallback path
    /// for never-contested districts).
    pub fn impute_share_with_effect(&self, record: &DistrictRaceRecord, phi: f64) -> f64 {
        let raw = 0.5
            + self
                .state_effects
                .get(&record.state)
                .copied()
                .unwrap_or(0.0)
            + phi
            + self.year_effects.get(&record.year).copied().unwrap_or(0.0)
            + self.fixed_terms(record.winner, record.dem_incumbent, record.rep_incumbent);
        apply_winner_clamps(raw, record.winner)
    }

    /// Seeded draw of a district effect for a district that was never
    /// contested during the cycle. Districts held by one party draw from
    /// the effects of districts consistently won by that same party;
    /// districts held by both draw from all fitted effects.
    pub fn fallback_district_effect(
        &self,
        held: HeldBy,
        rng_seed: u64,
    ) -> Result<f64, ImputeError> {
        let pool: Vec<f64> = self
            .district_effects
            .iter()
            .filter(|(key, _)| match held {
                HeldBy::Mixed => true,
                held => self.district_party.get(*key).copied() == Some(held),
            })
            .map(|(_, &phi)| phi)
            .collect();
        if pool.is_empty() {
            return Err(ImputeError::EmptyEffectPool);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        Ok(pool[rng.gen_range(0..pool.len())])
    }

    /// Records a race winner for the district-party classification. Has no
    /// effect on districts without a fitted effect.
    pub fn note_winner(&mut self, state: &str, district_id: &str, cycle_id: &str, winner: Winner) {
        let dkey = district_key(state, district_id, cycle_id);
        if !self.district_effects.contains_key(&dkey) {
            return;
        }
        self.district_party
            .entry(dkey)
            .and_modify(|h| *h = h.merge(winner))
            .or_insert(match winner {
                Winner::D => HeldBy::Dem,
                Winner::R => HeldBy::Rep,
            });
    }
}

struct DesignIndex {
    states: Vec<String>,
    districts: Vec<String>,
    years: Vec<i32>,
}

impl DesignIndex {
    fn build(obs: &[FitObservation]) -> Self {
        let mut states: Vec<String> = obs.iter().map(|o| o.state.clone()).collect();
        states.sort();
        states.dedup();
        let mut districts: Vec<String> = obs
            .iter()
            .map(|o| district_key(&o.state, &o.district_id, &o.cycle_id))
            .collect();
        districts.sort();
        districts.dedup();
        let mut years: Vec<i32> = obs.iter().map(|o| o.year).collect();
        years.sort_unstable();
        years.dedup();
        Self {
            states,
            districts,
            years,
        }
    }

    fn n_effect_cols(&self) -> usize {
        self.states.len() + self.districts.len() + self.years.len()
    }

    /// Nonzero design-matrix entries for one observation.
    fn entries(&self, obs: &FitObservation) -> Vec<(usize, f64)> {
        let dkey = district_key(&obs.state, &obs.district_id, &obs.cycle_id);
        let s = self
            .states
            .binary_search(&obs.state)
            .expect("indexed state");
        let d = self
            .districts
            .binary_search(&dkey)
            .expect("indexed district");
        let y = self.years.binary_search(&obs.year).expect("indexed year");
        let base = self.n_effect_cols();
        let win_col = match obs.winner {
            Winner::D => base,
            Winner::R => base + 1,
        };
        let mut entries = vec![
            (s, 1.0),
            (self.states.len() + d, 1.0),
            (self.states.len() + self.districts.len() + y, 1.0),
            (win_col, 1.0),
        ];
        if obs.dem_incumbent {
            entries.push((base + 2, 1.0));
        }
        if obs.rep_incumbent {
            entries.push((base + 3, 1.0));
        }
        entries
    }
}

fn solve_ridge(
    obs: &[FitObservation],
    lambdas: &RidgeLambdas,
) -> Result<ImputationModel, ImputeError> {
    let index = DesignIndex::build(obs);
    let (n_s, n_d, n_y) = (index.states.len(), index.districts.len(), index.years.len());
    let p = n_s + n_d + n_y + 4;
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);

    for o in obs {
        let entries = index.entries(o);
        let target = o.share - 0.5;
        for &(ci, vi) in &entries {
            b[ci] += vi * target;
            for &(cj, vj) in &entries {
                a[(ci, cj)] += vi * vj;
            }
        }
    }
    for i in 0..n_s {
        a[(i, i)] += lambdas.state;
    }
    for i in n_s..n_s + n_d {
        a[(i, i)] += lambdas.district;
    }
    for i in n_s + n_d..n_s + n_d + n_y {
        a[(i, i)] += lambdas.year;
    }
    for i in p - 4..p {
        a[(i, i)] += lambdas.beta;
    }

    let chol = Cholesky::new(a).ok_or(ImputeError::SingularSystem)?;
    let theta = chol.solve(&b);

    let mut state_effects: BTreeMap<String, f64> = index
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), theta[i]))
        .collect();
    let mut district_effects: BTreeMap<String, f64> = index
        .districts
        .iter()
        .enumerate()
        .map(|(i, d)| (d.clone(), theta[n_s + i]))
        .collect();
    let mut year_effects: BTreeMap<i32, f64> = index
        .years
        .iter()
        .enumerate()
        .map(|(i, &y)| (y, theta[n_s + n_d + i]))
        .collect();

    // center each family; the removed means move into the winner
    // coefficients, which enter every prediction exactly once
    let shift = center(&mut state_effects)
        + center(&mut district_effects)
        + center_years(&mut year_effects);
    let beta_win_d = theta[p - 4] + shift;
    let beta_win_r = theta[p - 3] + shift;
    let beta_inc_d = theta[p - 2];
    let beta_inc_r = theta[p - 1];

    let mut model = ImputationModel {
        chamber: obs[0].chamber,
        cycle_start: national_cycle_start(obs[0].year),
        state_effects,
        district_effects,
        year_effects,
        beta_win_d,
        beta_win_r,
        beta_inc_d,
        beta_inc_r,
        ridge_lambda: *lambdas,
        residual_sd: 0.0,
        n_obs: obs.len(),
        district_party: BTreeMap::new(),
    };
    let sse: f64 = obs
        .iter()
        .map(|o| {
            let dkey = district_key(&o.state, &o.district_id, &o.cycle_id);
            let fitted = 0.5
                + model.effects_for(&o.state, &dkey, o.year)
                + model.fixed_terms(o.winner, o.dem_incumbent, o.rep_incumbent);
            (o.share - fitted).powi(2)
        })
        .sum();
    model.residual_sd = (sse / obs.len() as f64).sqrt();
    for o in obs {
        model.note_winner(&o.state, &o.district_id, &o.cycle_id, o.winner);
    }
    Ok(model)
}

fn center(map: &mut BTreeMap<String, f64>) -> f64 {
    let mean = map.values().sum::<f64>() / map.len() as f64;
    for v in map.values_mut() {
        *v -= mean;
    }
    mean
}

fn center_years(map: &mut BTreeMap<i32, f64>) -> f64 {
    let mean = map.values().sum::<f64>() / map.len() as f64;
    for v in map.values_mut() {
        *v -= mean;
    }
    mean
}

fn holdout_rmse(model: &ImputationModel, holdout: &[&FitObservation]) -> f64 {
    let sse: f64 = holdout
        .iter()
        .map(|o| (o.share - model.predict_observation(o)).powi(2))
        .sum();
    (sse / holdout.len() as f64).sqrt()
}

fn select_lambdas(
    obs: &[FitObservation],
    grid: &[f64],
    holdout_fraction: f64,
    seed: u64,
) -> Result<RidgeLambdas, ImputeError> {
    if obs.len() < 4 || grid.is_empty() {
        return Ok(RidgeLambdas::default());
    }
    let mut indices: Vec<usize> = (0..obs.len()).collect();
    indices.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_hold = ((obs.len() as f64 * holdout_fraction).round() as usize).clamp(1, obs.len() - 1);
    let holdout: Vec<&FitObservation> = indices[..n_hold].iter().map(|&i| &obs[i]).collect();
    let train: Vec<FitObservation> = indices[n_hold..].iter().map(|&i| obs[i].clone()).collect();

    let mut best = RidgeLambdas {
        state: grid[grid.len() / 2],
        district: grid[grid.len() / 2],
        year: grid[grid.len() / 2],
        beta: grid[grid.len() / 2],
    };
    let set = |l: &RidgeLambdas, family: usize, v: f64| {
        let mut out = *l;
        match family {
            0 => out.state = v,
            1 => out.district = v,
            2 => out.year = v,
            _ => out.beta = v,
        }
        out
    };
    for _sweep in 0..2 {
        for family in 0..4 {
            let mut best_rmse = f64::INFINITY;
            let mut best_value = None;
            for &g in grid {
                let candidate = set(&best, family, g);
                let Ok(model) = solve_ridge(&train, &candidate) else {
                    continue;
                };
                let rmse = holdout_rmse(&model, &holdout);
                if rmse < best_rmse {
                    best_rmse = rmse;
                    best_value = Some(g);
                }
            }
            if let Some(v) = best_value {
                best = set(&best, family, v);
            }
        }
    }
    Ok(best)
}

/// Fits the effect model to one (chamber, cycle) partition of contested
/// races. Callers are responsible for the partitioning; use
/// [`fit_partitions`] over grouped records for the standard pipeline.
pub fn fit(obs: &[FitObservation], config: &FitConfig) -> Result<ImputationModel, ImputeError> {
    if obs.is_empty() {
        return Err(ImputeError::InsufficientData(
            "partition has no contested races".to_owned(),
        ));
    }
    let lambdas = match &config.lambdas {
        LambdaSelection::Fixed(l) => *l,
        LambdaSelection::GridSearch {
            grid,
            holdout_fraction,
            seed,
        } => select_lambdas(obs, grid, *holdout_fraction, *seed)?,
    };
    solve_ridge(obs, &lambdas)
}

/// All fitted partitions of a dataset, ordered by (chamber, cycle start).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelSet {
    pub models: Vec<ImputationModel>,
}

impl ModelSet {
    pub fn find(&self, chamber: Chamber, year: i32) -> Option<&ImputationModel> {
        let cycle_start = national_cycle_start(year);
        self.models
            .iter()
            .find(|m| m.chamber == chamber && m.cycle_start == cycle_start)
    }
}

/// Contested observations from non-excluded groups, in group order.
/// Races with two zero vote counts are left for resolution to report.
pub fn contested_observations(groups: &[ElectionGroup]) -> Vec<FitObservation> {
    let mut obs = Vec::new();
    for group in groups {
        if group.exclusion_reason.is_some() {
            continue;
        }
        for r in &group.records {
            if let Ok(TwoPartyShare::Contested(share)) = r.two_party_share() {
                obs.push(FitObservation {
                    chamber: r.chamber,
                    state: r.state.clone(),
                    district_id: r.district_id.clone(),
                    cycle_id: group.key.cycle_id.clone(),
                    year: r.year,
                    share,
                    winner: r.winner,
                    dem_incumbent: r.dem_incumbent,
                    rep_incumbent: r.rep_incumbent,
                });
            }
        }
    }
    obs
}

/// Fits one model per (chamber, national cycle) partition present in the
/// groups. Partitions without any contested race are skipped; elections
/// needing them surface errors at resolution time. Every race's winner
/// (contested or not) feeds the district-party classification used by
/// fallback draws.
pub fn fit_partitions(
    groups: &[ElectionGroup],
    config: &FitConfig,
) -> Result<ModelSet, ImputeError> {
    let obs = contested_observations(groups);
    let mut partitions: BTreeMap<(Chamber, i32), Vec<FitObservation>> = BTreeMap::new();
    for o in obs {
        partitions
            .entry((o.chamber, national_cycle_start(o.year)))
            .or_default()
            .push(o);
    }
    let mut models = Vec::new();
    for ((chamber, cycle_start), partition_obs) in partitions {
        let mut model = fit(&partition_obs, config)?;
        for group in groups {
            if group.exclusion_reason.is_some()
                || group.key.chamber != chamber
                || national_cycle_start(group.key.year) != cycle_start
            {
                continue;
            }
            for r in &group.records {
                model.note_winner(&r.state, &r.district_id, &group.key.cycle_id, r.winner);
            }
        }
        models.push(model);
    }
    Ok(ModelSet { models })
}

/// How uncontested races are resolved into shares.
#[derive(Debug, Clone)]
pub enum ImputePolicy<'a> {
    /// Model-based imputation with the never-contested fallback.
    Model(&'a ModelSet),
    /// The winner's party gets this flat share.
    Uniform(f64),
    /// Refuse: elections containing uncontested races become errors.
    Disabled,
}

/// One election with every district share resolved. `shares[i]` pairs
/// with `district_ids[i]` and `imputed[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedGroup {
    pub key: GroupKey,
    pub district_ids: Vec<String>,
    pub shares: Vec<f64>,
    pub imputed: Vec<bool>,
}

impl ResolvedGroup {
    pub fn election(&self) -> Election {
        Election::from_shares(self.shares.clone()).expect("resolved shares lie in [0, 1]")
    }

    pub fn n_imputed(&self) -> usize {
        self.imputed.iter().filter(|&&i| i).count()
    }

    pub fn imputed_fraction(&self) -> f64 {
        self.n_imputed() as f64 / self.shares.len() as f64
    }
}

/// An election that could not be resolved, and why.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupError {
    pub key: GroupKey,
    pub reason: String,
}

// Stable string hash for deriving per-district fallback seeds.
fn mix_seed(seed: u64, key: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x0100_0000_01b3);
    for byte in key.bytes() {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Resolves every non-excluded group into district shares, imputing
/// uncontested races per `policy`. Groups that cannot be resolved come
/// back as errors; the batch never aborts. `fallback_seed` feeds the
/// seeded draws for never-contested districts.
pub fn resolve_groups(
    groups: &[ElectionGroup],
    policy: &ImputePolicy,
    fallback_seed: u64,
) -> (Vec<ResolvedGroup>, Vec<GroupError>) {
    // party that held each district-cycle, over all analyzable races
    let mut held: BTreeMap<String, HeldBy> = BTreeMap::new();
    for group in groups {
        if group.exclusion_reason.is_some() {
            continue;
        }
        for r in &group.records {
            let dkey = district_key(&r.state, &r.district_id, &group.key.cycle_id);
            held.entry(dkey)
                .and_modify(|h| *h = h.merge(r.winner))
                .or_insert(match r.winner {
                    Winner::D => HeldBy::Dem,
                    Winner::R => HeldBy::Rep,
                });
        }
    }

    let mut resolved = Vec::new();
    let mut errors = Vec::new();
    'groups: for group in groups {
        if group.exclusion_reason.is_some() {
            continue;
        }
        let mut out = ResolvedGroup {
            key: group.key.clone(),
            district_ids: Vec::with_capacity(group.records.len()),
            shares: Vec::with_capacity(group.records.len()),
            imputed: Vec::with_capacity(group.records.len()),
        };
        for r in &group.records {
            let share = match r.two_party_share() {
                Ok(TwoPartyShare::Contested(share)) => {
                    out.imputed.push(false);
                    // a share of exactly 1/2 counts as a loss for party P,
                    // so an exact tie the winner column awards to the
                    // Democrat moves onto the winning side
                    if share == 0.5 && r.winner == Winner::D {
                        0.505
                    } else {
                        share
                    }
                }
                Ok(TwoPartyShare::Uncontested) => {
                    out.imputed.push(true);
                    match resolve_uncontested(r, &group.key, policy, &held, fallback_seed) {
                        Ok(share) => share,
                        Err(reason) => {
                            errors.push(GroupError {
                                key: group.key.clone(),
                                reason,
                            });
                            continue 'groups;
                        }
                    }
                }
                Err(_) => {
                    errors.push(GroupError {
                        key: group.key.clone(),
                        reason: format!("district {}: both vote counts are zero", r.district_id),
                    });
                    continue 'groups;
                }
            };
            out.district_ids.push(r.district_id.clone());
            out.shares.push(share);
        }
        resolved.push(out);
    }
    (resolved, errors)
}

fn resolve_uncontested(
    r: &DistrictRaceRecord,
    key: &GroupKey,
    policy: &ImputePolicy,
    held: &BTreeMap<String, HeldBy>,
    fallback_seed: u64,
) -> Result<f64, String> {
    match policy {
        ImputePolicy::Disabled => Err(format!(
            "district {}: uncontested race with imputation disabled",
            r.district_id
        )),
        ImputePolicy::Uniform(w) => Ok(uniform_baseline(r.winner, *w)),
        ImputePolicy::Model(models) => {
            let model = models.find(r.chamber, r.year).ok_or_else(|| {
                format!(
                    "no fitted model for {} cycle starting {}",
                    r.chamber,
                    national_cycle_start(r.year)
                )
            })?;
            match model.impute_share(r, &key.cycle_id) {
                Ok(share) => Ok(share),
                Err(ImputeError::MissingEffect { key: dkey }) => {
                    let held_by = held.get(&dkey).copied().unwrap_or(HeldBy::Mixed);
                    let phi = model
                        .fallback_district_effect(held_by, mix_seed(fallback_seed, &dkey))
                        .map_err(|e| format!("district {}: {e}", r.district_id))?;
                    Ok(model.impute_share_with_effect(r, phi))
                }
                Err(other) => Err(format!("district {}: {other}", r.district_id)),
            }
        }
    }
}

/// Cross-validation outcome: model RMSE on held-out contested races
/// against the uniform-baseline RMSE on the same races.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossValidation {
    pub n_train: usize,
    pub n_holdout: usize,
    pub model_rmse: f64,
    pub baseline_rmse: f64,
    pub baseline_winner_share: f64,
}

/// Holds out `n_holdout` randomly chosen contested races, refits on the
/// rest, and reports model and baseline RMSE on the held-out set. Model
/// predictions use raw (unclamped) values with missing effects at zero.
pub fn cross_validate(
    obs: &[FitObservation],
    config: &FitConfig,
    n_holdout: usize,
    baseline_winner_share: f64,
    rng_seed: u64,
) -> Result<CrossValidation, ImputeError> {
    if obs.len() < 2 {
        return Err(ImputeError::InsufficientData(
            "cross-validation needs at least two contested races".to_owned(),
        ));
    }
    let n_hold = n_holdout.clamp(1, obs.len() - 1);
    let mut indices: Vec<usize> = (0..obs.len()).collect();
    indices.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));
    let holdout: Vec<&FitObservation> = indices[..n_hold].iter().map(|&i| &obs[i]).collect();
    let train: Vec<FitObservation> = indices[n_hold..].iter().map(|&i| obs[i].clone()).collect();

    let model = fit(&train, config)?;
    let model_sse: f64 = holdout
        .iter()
        .map(|o| (o.share - model.predict_observation(o)).powi(2))
        .sum();
    let baseline_sse: f64 = holdout
        .iter()
        .map(|o| (o.share - uniform_baseline(o.winner, baseline_winner_share)).powi(2))
        .sum();
    Ok(CrossValidation {
        n_train: train.len(),
        n_holdout: n_hold,
        model_rmse: (model_sse / n_hold as f64).sqrt(),
        baseline_rmse: (baseline_sse / n_hold as f64).sqrt(),
        baseline_winner_share,
    })
}

/// One election's declination response to shifting its imputed shares.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityPoint {
    pub state: String,
    pub chamber: Chamber,
    pub year: i32,
    pub imputed_fraction: f64,
    pub declination_before: f64,
    pub declination_after: f64,
    pub declination_change: f64,
}

/// Sensitivity of the declination to a systematic imputation bias, with
/// the least-squares fit of the change against the imputed fraction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub shift: f64,
    pub points: Vec<SensitivityPoint>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: Option<f64>,
    /// Elections omitted because one party won every seat.
    pub n_omitted: usize,
}

/// Adds `shift` to every imputed share (clipped to [0, 1]), recomputes
/// the declination, and regresses the change on the imputed fraction.
/// Elections where one party won all seats, before or after the shift,
/// are omitted.
pub fn sensitivity_shift(resolved: &[ResolvedGroup], shift: f64) -> SensitivityReport {
    let mut points = Vec::new();
    let mut n_omitted = 0;
    for group in resolved {
        let before = group.election().declination();
        let shifted: Vec<f64> = group
            .shares
            .iter()
            .zip(&group.imputed)
            .map(|(&s, &imp)| if imp { (s + shift).clamp(0.0, 1.0) } else { s })
            .collect();
        let after = Election::from_shares(shifted)
            .expect("shifted shares lie in [0, 1]")
            .declination();
        match (before, after) {
            (Some(b), Some(a)) => points.push(SensitivityPoint {
                state: group.key.state.clone(),
                chamber: group.key.chamber,
                year: group.key.year,
                imputed_fraction: group.imputed_fraction(),
                declination_before: b,
                declination_after: a,
                declination_change: a - b,
            }),
            _ => n_omitted += 1,
        }
    }

    let n = points.len() as f64;
    let (slope, intercept, r_squared) = if points.is_empty() {
        (0.0, 0.0, None)
    } else {
        let mean_x = points.iter().map(|p| p.imputed_fraction).sum::<f64>() / n;
        let mean_y = points.iter().map(|p| p.declination_change).sum::<f64>() / n;
        let sxx: f64 = points
            .iter()
            .map(|p| (p.imputed_fraction - mean_x).powi(2))
            .sum();
        let syy: f64 = points
            .iter()
            .map(|p| (p.declination_change - mean_y).powi(2))
            .sum();
        let sxy: f64 = points
            .iter()
            .map(|p| (p.imputed_fraction - mean_x) * (p.declination_change - mean_y))
            .sum();
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let r2 = (sxx > 0.0 && syy > 0.0).then(|| sxy * sxy / (sxx * syy));
        (slope, mean_y - slope * mean_x, r2)
    };
    SensitivityReport {
        shift,
        points,
        slope,
        intercept,
        r_squared,
        n_omitted,
    }
}

//! Seeded data generators shared by this crate's validation suites and by
//! downstream acceptance tests. Not part of the stable API.

use crate::impute::FitObservation;
use crate::ingest::{Chamber, Winner};
use crate::metrics::Election;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::f64::consts::TAU;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; u1 is kept away from zero so ln() stays finite
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// Election whose vote and seat margins are in the exact 1:2 proportion
/// (plus `violation`, which perturbs the vote-margin side). With
/// `violation = 0` the tau = 0 gap is zero up to round-off.
///
/// Construction: pick `k` losers at `1/2 - v_i` and `k'` winners at
/// `1/2 + u_i`, then rescale the `u_i` so that
/// `sum(u) - sum(v) = (k' - k)/4 + N*violation/2`, which makes
/// `2(mean - 1/2) - (k'/N - 1/2) = violation`.
pub fn proportional_election<R: Rng>(rng: &mut R, violation: f64) -> Election {
    loop {
        let n = rng.gen_range(4..=30usize);
        let k = rng.gen_range(1..n);
        let k_prime = n - k;
        let target = (k_prime as f64 - k as f64) / 4.0 + n as f64 * violation / 2.0;

        let v: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..0.49)).collect();
        let u: Vec<f64> = (0..k_prime).map(|_| rng.gen_range(0.01..0.49)).collect();
        let sum_v: f64 = v.iter().sum();
        let sum_u: f64 = u.iter().sum();
        let needed = target + sum_v;
        if needed <= 0.0 {
            continue;
        }
        let scale = needed / sum_u;
        if u.iter().any(|&x| x * scale >= 0.499 || x * scale <= 1e-4) {
            continue;
        }
        let mut shares: Vec<f64> = v.iter().map(|&x| 0.5 - x).collect();
        shares.extend(u.iter().map(|&x| 0.5 + x * scale));
        return Election::from_shares(shares).expect("constructed shares lie in [0, 1]");
    }
}

/// Ground truth behind a synthetic contested-race dataset.
pub struct SyntheticTruth {
    pub state_effects: BTreeMap<String, f64>,
    pub district_effects: BTreeMap<String, f64>,
    pub year_effects: BTreeMap<i32, f64>,
    pub beta_win_d: f64,
    pub beta_win_r: f64,
    pub beta_inc_d: f64,
    pub beta_inc_r: f64,
    pub noise_sd: f64,
}

pub struct SyntheticSpec {
    pub n_states: usize,
    pub districts_per_state: usize,
    pub years: Vec<i32>,
    pub state_sd: f64,
    pub district_sd: f64,
    pub year_sd: f64,
    pub beta_win: f64,
    pub beta_inc: f64,
    pub noise_sd: f64,
    pub incumbency_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_states: 20,
            districts_per_state: 25,
            years: vec![2012, 2014, 2016, 2018, 2020],
            state_sd: 0.04,
            district_sd: 0.05,
            year_sd: 0.02,
            beta_win: 0.10,
            beta_inc: 0.04,
            noise_sd: 0.05,
            incumbency_rate: 0.25,
        }
    }
}

fn centered_normal<R: Rng>(rng: &mut R, n: usize, sd: f64) -> Vec<f64> {
    let mut values: Vec<f64> = (0..n).map(|_| sd * standard_normal(rng)).collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    for v in &mut values {
        *v -= mean;
    }
    values
}

/// Contested races drawn exactly from the additive share model. Effect
/// families are centered, with district effects centered within each
/// state (states nest districts, so only that gauge of the decomposition
/// is identified); fitted and true parameters therefore compare directly.
pub fn synthetic_races(spec: &SyntheticSpec, seed: u64) -> (Vec<FitObservation>, SyntheticTruth) {
    let mut rng = rng(seed);

    let state_names: Vec<String> = (0..spec.n_states).map(state_code).collect();
    let state_vals = centered_normal(&mut rng, spec.n_states, spec.state_sd);
    let n_districts = spec.n_states * spec.districts_per_state;
    let mut district_vals = centered_normal(&mut rng, n_districts, spec.district_sd);
    for chunk in district_vals.chunks_mut(spec.districts_per_state) {
        let mean = chunk.iter().sum::<f64>() / chunk.len() as f64;
        for v in chunk {
            *v -= mean;
        }
    }
    let year_vals = centered_normal(&mut rng, spec.years.len(), spec.year_sd);

    let mut truth = SyntheticTruth {
        state_effects: BTreeMap::new(),
        district_effects: BTreeMap::new(),
        year_effects: BTreeMap::new(),
        beta_win_d: spec.beta_win,
        beta_win_r: -spec.beta_win,
        beta_inc_d: spec.beta_inc,
        beta_inc_r: -spec.beta_inc,
        noise_sd: spec.noise_sd,
    };
    for (name, &v) in state_names.iter().zip(&state_vals) {
        truth.state_effects.insert(name.clone(), v);
    }
    for (i, &y) in spec.years.iter().enumerate() {
        truth.year_effects.insert(y, year_vals[i]);
    }

    let mut obs = Vec::new();
    for (si, state) in state_names.iter().enumerate() {
        let cycle_id = format!("{state}-2012");
        for d in 0..spec.districts_per_state {
            let district_id = format!("{d:03}");
            let phi = district_vals[si * spec.districts_per_state + d];
            truth
                .district_effects
                .insert(format!("{state}/{district_id}/{cycle_id}"), phi);
            for (yi, &year) in spec.years.iter().enumerate() {
                let winner = if rng.gen_bool(0.5) {
                    Winner::D
                } else {
                    Winner::R
                };
                let dem_incumbent = rng.gen_bool(spec.incumbency_rate);
                let rep_incumbent = rng.gen_bool(spec.incumbency_rate);
                let mut share = 0.5
                    + state_vals[si]
                    + phi
                    + year_vals[yi]
                    + match winner {
                        Winner::D => truth.beta_win_d,
                        Winner::R => truth.beta_win_r,
                    }
                    + if dem_incumbent { truth.beta_inc_d } else { 0.0 }
                    + if rep_incumbent { truth.beta_inc_r } else { 0.0 }
                    + spec.noise_sd * standard_normal(&mut rng);
                share = share.clamp(0.001, 0.999);
                obs.push(FitObservation {
                    chamber: Chamber::Congress,
                    state: state.clone(),
                    district_id: district_id.clone(),
                    cycle_id: cycle_id.clone(),
                    year,
                    share,
                    winner,
                    dem_incumbent,
                    rep_incumbent,
                });
            }
        }
    }
    (obs, truth)
}

/// Two-letter synthetic state codes: QA, QB, ..., RA, RB, ...
pub fn state_code(i: usize) -> String {
    let first = b'Q' + (i / 26) as u8;
    let second = b'A' + (i % 26) as u8;
    String::from_utf8(vec![first, second]).unwrap()
}

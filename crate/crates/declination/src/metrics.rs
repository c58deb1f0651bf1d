//! Asymmetry metrics computed from a canonical vote-share vector.
//!
//! Every metric here is a pure function of the sorted share vector held by
//! an [`Election`]; district order in the original data never matters.
//! Districts with a share of exactly 1/2 count as losses for party P, so
//! the seat split is `k = #{i : p_i <= 1/2}` lost and `k' = N - k` won.
//!
//! Sign conventions follow the identification of party P with the
//! Democrats: positive declination and positive efficiency gap favor the
//! opposing party Q.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("election must contain at least one district")]
    EmptyElection,
    #[error("share {value} at index {index} is outside [0, 1]")]
    InvalidShare { index: usize, value: f64 },
    #[error("tau must be finite and nonnegative, got {value}")]
    InvalidTau { value: f64 },
}

/// An election: party labels plus the fraction of the two-party vote won
/// by party P in each district, stored sorted weakly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawElection")]
pub struct Election {
    party_p_name: String,
    party_q_name: String,
    shares: Vec<f64>,
}

#[derive(Deserialize)]
struct RawElection {
    party_p_name: String,
    party_q_name: String,
    shares: Vec<f64>,
}

impl TryFrom<RawElection> for Election {
    type Error = MetricsError;

    fn try_from(raw: RawElection) -> Result<Self, Self::Error> {
        Election::new(raw.shares, &raw.party_p_name, &raw.party_q_name)
    }
}

/// Seat split of an election and the mean share within each block.
///
/// `y_bar`/`z_bar` are `None` when the corresponding block is empty, which
/// is exactly the case where the declination is undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitIndices {
    /// Number of districts lost by party P (share <= 1/2).
    pub k: usize,
    /// Number of districts won by party P.
    pub k_prime: usize,
    /// Mean share over the lost districts.
    pub y_bar: Option<f64>,
    /// Mean share over the won districts.
    pub z_bar: Option<f64>,
}

/// One `Gap_tau` evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauGap {
    pub tau: f64,
    pub gap: f64,
}

/// Every asymmetry metric for one election. `None` marks metrics that are
/// undefined because one party won all of the seats.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSet {
    pub declination: Option<f64>,
    pub delta_n: Option<f64>,
    pub delta_tilde: Option<f64>,
    pub efficiency_gap: f64,
    pub tau_gaps: Vec<TauGap>,
    pub mean_median: f64,
    pub seat_share_p: f64,
    pub vote_share_p: f64,
}

/// Declination scaled to seat-equivalent units: `delta * N / 2`.
pub fn delta_n_from(declination: f64, n_districts: usize) -> f64 {
    declination * n_districts as f64 / 2.0
}

/// Declination scaled for comparison across district counts:
/// `delta * ln(N) / 2`.
pub fn delta_tilde_from(declination: f64, n_districts: usize) -> f64 {
    declination * (n_districts as f64).ln() / 2.0
}

impl Election {
    /// Builds an election from unordered district shares. Shares are
    /// validated to lie in [0, 1] and stored sorted weakly increasing.
    pub fn new(
        mut shares: Vec<f64>,
        party_p_name: &str,
        party_q_name: &str,
    ) -> Result<Self, MetricsError> {
        if shares.is_empty() {
            return Err(MetricsError::EmptyElection);
        }
        for (index, &value) in shares.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(MetricsError::InvalidShare { index, value });
            }
        }
        shares.sort_by(|a, b| a.partial_cmp(b).expect("shares validated finite"));
        Ok(Self {
            party_p_name: party_p_name.to_owned(),
            party_q_name: party_q_name.to_owned(),
            shares,
        })
    }

    /// Convenience constructor with the conventional party labels.
    pub fn from_shares(shares: Vec<f64>) -> Result<Self, MetricsError> {
        Self::new(shares, "Democrats", "Republicans")
    }

    pub fn party_p_name(&self) -> &str {
        &self.party_p_name
    }

    pub fn party_q_name(&self) -> &str {
        &self.party_q_name
    }

    /// Shares sorted weakly increasing.
    pub fn shares(&self) -> &[f64] {
        &self.shares
    }

    pub fn n_districts(&self) -> usize {
        self.shares.len()
    }

    /// Seat split and per-block mean shares. Shares of exactly 1/2 count
    /// as losses for party P.
    pub fn split(&self) -> SplitIndices {
        let n = self.shares.len();
        let k = self.shares.iter().filter(|&&p| p <= 0.5).count();
        let y_bar = (k > 0).then(|| self.shares[..k].iter().sum::<f64>() / k as f64);
        let z_bar = (k < n).then(|| self.shares[k..].iter().sum::<f64>() / (n - k) as f64);
        SplitIndices {
            k,
            k_prime: n - k,
            y_bar,
            z_bar,
        }
    }

    /// The declination: the angle, in fractions of 90 degrees, between the
    /// two lines joining the midpoint of the seat axis at share 1/2 to the
    /// centers of mass of the lost and won blocks. `None` when one party
    /// won every district. Positive values favor party Q.
    pub fn declination(&self) -> Option<f64> {
        let split = self.split();
        let y_bar = split.y_bar?;
        let z_bar = split.z_bar?;
        let n = self.shares.len() as f64;
        let theta_p = ((2.0 * z_bar - 1.0) / (split.k_prime as f64 / n)).atan();
        let theta_q = ((1.0 - 2.0 * y_bar) / (split.k as f64 / n)).atan();
        Some(2.0 * (theta_p - theta_q) / PI)
    }

    /// Declination in seat-equivalent units, `delta * N / 2`.
    pub fn delta_n(&self) -> Option<f64> {
        self.declination()
            .map(|d| delta_n_from(d, self.n_districts()))
    }

    /// Declination normalized to have minimal correlation with district
    /// count, `delta * ln(N) / 2`.
    pub fn delta_tilde(&self) -> Option<f64> {
        self.declination()
            .map(|d| delta_tilde_from(d, self.n_districts()))
    }

    /// The efficiency gap: the per-district difference in wasted votes
    /// between the parties, averaged over districts. A vote is wasted if
    /// it is cast for a loser or is in excess of the half needed to win.
    /// Positive values mean party P wastes more.
    pub fn efficiency_gap(&self) -> f64 {
        let n = self.shares.len() as f64;
        let total: f64 = self
            .shares
            .iter()
            .map(|&p| {
                let w_p = if p > 0.5 { p - 0.5 } else { p };
                let w_q = 0.5 - w_p;
                w_p - w_q
            })
            .sum();
        total / n
    }

    /// The `Gap_tau` family: wasted votes are weighted by a power law in
    /// the margin, so `tau = 0` recovers twice the efficiency gap and
    /// larger `tau` discounts waste near the 50% threshold.
    ///
    /// With `a_i = 2 p_i - 1` and `eps_i = -1` on lost districts, `+1` on
    /// won ones, the value is
    /// `2 * [sum_i eps_i (eps_i a_i)^(tau+1) / N + 1/2 - k'/N]`.
    pub fn tau_gap(&self, tau: f64) -> Result<f64, MetricsError> {
        if !tau.is_finite() || tau < 0.0 {
            return Err(MetricsError::InvalidTau { value: tau });
        }
        let split = self.split();
        let n = self.shares.len() as f64;
        let mut sum = 0.0;
        for (i, &p) in self.shares.iter().enumerate() {
            let a = 2.0 * p - 1.0;
            let eps = if i < split.k { -1.0 } else { 1.0 };
            // eps * a is nonnegative by the seat split; the a = 0 term
            // contributes nothing and must not reach ln().
            let x = eps * a;
            if x > 0.0 {
                sum += eps * ((tau + 1.0) * x.ln()).exp();
            }
        }
        Ok(2.0 * (sum / n + 0.5 - split.k_prime as f64 / n))
    }

    /// Limit of `Gap_tau` as `tau -> infinity`: `1 - 2 k'/N`, a statistic
    /// of seat counts alone. The limit is exact whenever every district
    /// has `0 < |2 p_i - 1| < 1`; districts at a share of exactly 0, 1/2,
    /// or 1 violate that genericity, and this function still returns the
    /// seats-only value for them.
    pub fn tau_gap_limit(&self) -> f64 {
        let split = self.split();
        1.0 - 2.0 * split.k_prime as f64 / self.shares.len() as f64
    }

    /// Mean share minus median share. For even N the median is the
    /// average of the two middle order statistics.
    pub fn mean_median(&self) -> f64 {
        let n = self.shares.len();
        let mean = self.shares.iter().sum::<f64>() / n as f64;
        let median = if n % 2 == 1 {
            self.shares[n / 2]
        } else {
            0.5 * (self.shares[n / 2 - 1] + self.shares[n / 2])
        };
        mean - median
    }

    /// Fraction of districts won by party P.
    pub fn seat_share_p(&self) -> f64 {
        let split = self.split();
        split.k_prime as f64 / self.shares.len() as f64
    }

    /// Mean district share for party P. Under the equal-population
    /// convention this is P's overall vote fraction.
    pub fn vote_share_p(&self) -> f64 {
        self.shares.iter().sum::<f64>() / self.shares.len() as f64
    }

    /// Bundles every metric, with `Gap_tau` evaluated at each requested
    /// `tau` (sorted, duplicates dropped).
    pub fn metric_set(&self, taus: &[f64]) -> Result<MetricSet, MetricsError> {
        let mut taus = taus.to_vec();
        for &tau in &taus {
            if !tau.is_finite() || tau < 0.0 {
                return Err(MetricsError::InvalidTau { value: tau });
            }
        }
        taus.sort_by(|a, b| a.partial_cmp(b).expect("taus validated finite"));
        taus.dedup();
        let tau_gaps = taus
            .iter()
            .map(|&tau| {
                Ok(TauGap {
                    tau,
                    gap: self.tau_gap(tau)?,
                })
            })
            .collect::<Result<Vec<_>, MetricsError>>()?;
        Ok(MetricSet {
            declination: self.declination(),
            delta_n: self.delta_n(),
            delta_tilde: self.delta_tilde(),
            efficiency_gap: self.efficiency_gap(),
            tau_gaps,
            mean_median: self.mean_median(),
            seat_share_p: self.seat_share_p(),
            vote_share_p: self.vote_share_p(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn election(shares: &[f64]) -> Election {
        Election::from_shares(shares.to_vec()).unwrap()
    }

    #[test]
    fn new_sorts_shares() {
        let e = election(&[0.75, 0.25]);
        assert_eq!(e.shares(), &[0.25, 0.75]);
        let e = election(&[0.4, 0.45, 0.75]);
        assert_eq!(e.shares(), &[0.4, 0.45, 0.75]);
    }

    #[test]
    fn new_rejects_bad_input() {
        assert_eq!(
            Election::from_shares(vec![]).unwrap_err(),
            MetricsError::EmptyElection
        );
        assert_eq!(
            Election::from_shares(vec![1.2]).unwrap_err(),
            MetricsError::InvalidShare {
                index: 0,
                value: 1.2
            }
        );
        assert!(matches!(
            Election::from_shares(vec![0.3, f64::NAN]).unwrap_err(),
            MetricsError::InvalidShare { index: 1, .. }
        ));
    }

    #[test]
    fn split_counts_boundary_as_loss() {
        let s = election(&[0.25, 0.75]).split();
        assert_eq!((s.k, s.k_prime), (1, 1));
        assert_eq!(s.y_bar, Some(0.25));
        assert_eq!(s.z_bar, Some(0.75));

        let s = election(&[0.5, 0.75]).split();
        assert_eq!((s.k, s.k_prime), (1, 1));
        assert_eq!(s.y_bar, Some(0.5));

        let s = election(&[0.4, 0.45, 0.75]).split();
        assert_eq!((s.k, s.k_prime), (2, 1));
        assert_abs_diff_eq!(s.y_bar.unwrap(), 0.425, epsilon = 1e-15);
        assert_eq!(s.z_bar, Some(0.75));
    }

    #[test]
    fn declination_symmetric_is_zero() {
        assert_eq!(election(&[0.25, 0.75]).declination(), Some(0.0));
    }

    #[test]
    fn declination_matches_direct_evaluation() {
        // theta_P = atan(1.5), theta_Q = atan(0.225), delta = 2(tP - tQ)/pi
        let d = election(&[0.4, 0.45, 0.75]).declination().unwrap();
        assert_abs_diff_eq!(d, 0.484_772_766_468_893_3, epsilon = 1e-14);
    }

    #[test]
    fn declination_undefined_on_sweep() {
        assert_eq!(election(&[0.6, 0.7]).declination(), None);
        assert_eq!(election(&[0.2, 0.3]).delta_n(), None);
        assert_eq!(election(&[0.9]).delta_tilde(), None);
    }

    #[test]
    fn delta_scalings() {
        assert_abs_diff_eq!(delta_n_from(0.53, 18), 4.77, epsilon = 1e-12);
        assert_abs_diff_eq!(delta_tilde_from(0.53, 18), 0.766, epsilon = 5e-4);
        assert_abs_diff_eq!(delta_tilde_from(0.55, 16), 0.7625, epsilon = 5e-4);
        assert_eq!(delta_n_from(0.0, 7), 0.0);
        assert_eq!(delta_tilde_from(0.0, 7), 0.0);

        let e = election(&[0.4, 0.45, 0.75]);
        assert_abs_diff_eq!(e.delta_n().unwrap(), 0.727_159_149_703_34, epsilon = 1e-14);
        assert_abs_diff_eq!(
            e.delta_tilde().unwrap(),
            0.266_288_659_227_180_9,
            epsilon = 1e-14
        );
    }

    #[test]
    fn efficiency_gap_examples() {
        assert_eq!(election(&[0.25, 0.75]).efficiency_gap(), 0.0);
        // w_P = (0.4, 0.45, 0.25), w_Q = (0.1, 0.05, 0.25)
        assert_abs_diff_eq!(
            election(&[0.4, 0.45, 0.75]).efficiency_gap(),
            0.7 / 3.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            election(&[0.75, 0.75, 0.75, 0.75]).efficiency_gap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn tau_gap_examples() {
        let e = election(&[0.25, 0.75]);
        for tau in [0.0, 0.4, 1.0, 2.0, 5.0] {
            assert_abs_diff_eq!(e.tau_gap(tau).unwrap(), 0.0, epsilon = 1e-15);
        }

        let e = election(&[0.4, 0.45, 0.75]);
        assert_abs_diff_eq!(e.tau_gap(0.0).unwrap(), 0.4666666666666667, epsilon = 1e-14);
        assert_abs_diff_eq!(
            e.tau_gap(0.0).unwrap(),
            2.0 * e.efficiency_gap(),
            epsilon = 1e-14
        );
        // third-moment form: 2 * [M_3(a) + 1/2 - 1/3]
        assert_abs_diff_eq!(
            e.tau_gap(2.0).unwrap(),
            0.410_666_666_666_666_6,
            epsilon = 1e-14
        );
    }

    #[test]
    fn tau_gap_rejects_bad_tau() {
        let e = election(&[0.25, 0.75]);
        assert!(matches!(
            e.tau_gap(-1.0),
            Err(MetricsError::InvalidTau { .. })
        ));
        assert!(matches!(
            e.tau_gap(f64::INFINITY),
            Err(MetricsError::InvalidTau { .. })
        ));
    }

    #[test]
    fn tau_gap_boundary_share_contributes_nothing() {
        // p = 1/2 gives a = 0; its term vanishes for every tau.
        let with = election(&[0.3, 0.5, 0.8]);
        for tau in [0.0, 1.0, 2.5] {
            let g = with.tau_gap(tau).unwrap();
            assert!(g.is_finite());
        }
    }

    #[test]
    fn tau_gap_limit_examples() {
        assert_eq!(election(&[0.25, 0.75]).tau_gap_limit(), 0.0);
        assert_abs_diff_eq!(
            election(&[0.4, 0.45, 0.75]).tau_gap_limit(),
            1.0 / 3.0,
            epsilon = 1e-15
        );
        assert_eq!(election(&[0.1, 0.2, 0.6, 0.7]).tau_gap_limit(), 0.0);
    }

    #[test]
    fn mean_median_examples() {
        assert_eq!(election(&[0.25, 0.75]).mean_median(), 0.0);
        let e = election(&[0.4, 0.45, 0.75]);
        assert_abs_diff_eq!(e.mean_median(), 1.6 / 3.0 - 0.45, epsilon = 1e-15);
    }

    #[test]
    fn metric_set_bundles_everything() {
        let e = election(&[0.25, 0.75]);
        let m = e.metric_set(&[0.0, 1.0]).unwrap();
        assert_eq!(m.declination, Some(0.0));
        assert_eq!(m.delta_n, Some(0.0));
        assert_eq!(m.delta_tilde, Some(0.0));
        assert_abs_diff_eq!(m.efficiency_gap, 0.0, epsilon = 1e-15);
        assert_eq!(m.tau_gaps.len(), 2);
        assert_abs_diff_eq!(m.mean_median, 0.0, epsilon = 1e-15);

        let sweep = election(&[0.6, 0.7]).metric_set(&[0.0]).unwrap();
        assert_eq!(sweep.declination, None);
        assert!(sweep.efficiency_gap.is_finite());
        assert!(sweep.mean_median.is_finite());
        assert_eq!(sweep.seat_share_p, 1.0);

        let e = election(&[0.4, 0.45, 0.75]);
        let m = e.metric_set(&[0.0]).unwrap();
        assert_eq!(m.declination, e.declination());
        assert_eq!(m.tau_gaps[0].gap, e.tau_gap(0.0).unwrap());
        assert_abs_diff_eq!(m.seat_share_p, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.vote_share_p, 1.6 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn metric_set_sorts_and_dedups_taus() {
        let e = election(&[0.3, 0.8]);
        let m = e.metric_set(&[2.0, 0.0, 2.0, 1.0]).unwrap();
        let taus: Vec<f64> = m.tau_gaps.iter().map(|t| t.tau).collect();
        assert_eq!(taus, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn election_serde_round_trip() {
        let e = election(&[0.4, 0.45, 0.75]);
        let json = serde_json::to_string(&e).unwrap();
        let back: Election = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
        // deserialization revalidates and resorts
        let bad: Result<Election, _> =
            serde_json::from_str(r#"{"party_p_name":"D","party_q_name":"R","shares":[1.5]}"#);
        assert!(bad.is_err());
    }
}

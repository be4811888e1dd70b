//! Supply (budget) and demand (agent-count) processes.
//!
//! Every process draws i.i.d. nonnegative values, optionally with a periodic
//! mean schedule: at round `t` the effective mean parameter is
//! `schedule[t % C]` where `C` is the cycle length. Sampling is driven by
//! [`RngStream`], a counter-based stream so that replications are
//! reproducible independently of scheduling order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parametric description of a supply or demand process.
///
/// Serialized form uses a `family` tag, e.g.
/// `{"family":"truncated_normal","mean":5.0,"sigma":1.0}` or, with a
/// periodic mean, `{"family":"truncated_normal","mean_schedule":[4,6],"sigma":1.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    /// Point mass. `value` (or the schedule entry) is returned verbatim.
    Deterministic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean_schedule: Option<Vec<f64>>,
    },
    /// 0/1 coin with success probability `p` (the mean).
    Bernoulli {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean_schedule: Option<Vec<f64>>,
    },
    /// `max(0, Normal(mean, sigma))`: the normal clamped at zero.
    TruncatedNormal {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean: Option<f64>,
        sigma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean_schedule: Option<Vec<f64>>,
    },
    Poisson {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean_schedule: Option<Vec<f64>>,
    },
    /// Exponential parameterized by its mean (rate `1/mean`).
    Exponential {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean_schedule: Option<Vec<f64>>,
    },
    /// Finite set of point masses.
    BoundedDiscrete { values: Vec<f64>, probs: Vec<f64> },
}

impl DistributionSpec {
    pub fn deterministic(value: f64) -> Result<Self> {
        let spec = Self::Deterministic {
            value: Some(value),
            mean_schedule: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        let spec = Self::Bernoulli {
            p: Some(p),
            mean_schedule: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn truncated_normal(mean: f64, sigma: f64) -> Result<Self> {
        let spec = Self::TruncatedNormal {
            mean: Some(mean),
            sigma,
            mean_schedule: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn truncated_normal_schedule(schedule: Vec<f64>, sigma: f64) -> Result<Self> {
        let spec = Self::TruncatedNormal {
            mean: None,
            sigma,
            mean_schedule: Some(schedule),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn poisson(mean: f64) -> Result<Self> {
        let spec = Self::Poisson {
            mean: Some(mean),
            mean_schedule: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn exponential(mean: f64) -> Result<Self> {
        let spec = Self::Exponential {
            mean: Some(mean),
            mean_schedule: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn bounded_discrete(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let spec = Self::BoundedDiscrete { values, probs };
        spec.validate()?;
        Ok(spec)
    }

    /// Rejects bad parameterizations (negative sigma, nonpositive Exponential
    /// mean, probabilities outside the simplex, negative support points).
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidDistribution(msg));
        let check_point_or_schedule =
            |point: &Option<f64>, schedule: &Option<Vec<f64>>, what: &str| -> Result<()> {
                match (point, schedule) {
                    (Some(_), Some(_)) => invalid(format!(
                        "{what}: give either a point parameter or a mean_schedule, not both"
                    )),
                    (None, None) => invalid(format!(
                        "{what}: either a point parameter or a mean_schedule is required"
                    )),
                    (_, Some(s)) if s.is_empty() => {
                        invalid(format!("{what}: mean_schedule must be nonempty"))
                    }
                    _ => Ok(()),
                }
            };
        let check_each = |vals: &[f64], ok: &dyn Fn(f64) -> bool, msg: &str| -> Result<()> {
            if vals.iter().all(|&v| v.is_finite() && ok(v)) {
                Ok(())
            } else {
                invalid(msg.to_string())
            }
        };

        match self {
            Self::Deterministic {
                value,
                mean_schedule,
            } => {
                check_point_or_schedule(value, mean_schedule, "deterministic")?;
                let vals = self.effective_means();
                check_each(&vals, &|v| v >= 0.0, "deterministic value must be >= 0")
            }
            Self::Bernoulli { p, mean_schedule } => {
                check_point_or_schedule(p, mean_schedule, "bernoulli")?;
                let vals = self.effective_means();
                check_each(&vals, &|v| (0.0..=1.0).contains(&v), "bernoulli p must be in [0,1]")
            }
            Self::TruncatedNormal {
                mean,
                sigma,
                mean_schedule,
            } => {
                check_point_or_schedule(mean, mean_schedule, "truncated_normal")?;
                if !sigma.is_finite() || *sigma < 0.0 {
                    return invalid("truncated_normal sigma must be >= 0".into());
                }
                let vals = self.effective_means();
                check_each(&vals, &|v| v.is_finite(), "truncated_normal mean must be finite")
            }
            Self::Poisson {
                mean,
                mean_schedule,
            } => {
                check_point_or_schedule(mean, mean_schedule, "poisson")?;
                let vals = self.effective_means();
                check_each(&vals, &|v| v > 0.0, "poisson mean must be > 0")
            }
            Self::Exponential {
                mean,
                mean_schedule,
            } => {
                check_point_or_schedule(mean, mean_schedule, "exponential")?;
                let vals = self.effective_means();
                check_each(&vals, &|v| v > 0.0, "exponential mean must be > 0")
            }
            Self::BoundedDiscrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return invalid("bounded_discrete needs matching nonempty values/probs".into());
                }
                check_each(values, &|v| v >= 0.0, "bounded_discrete values must be >= 0")?;
                check_each(probs, &|p| p >= 0.0, "bounded_discrete probs must be >= 0")?;
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return invalid(format!("bounded_discrete probs sum to {total}, expected 1"));
                }
                Ok(())
            }
        }
    }

    fn point_param(&self) -> Option<f64> {
        match self {
            Self::Deterministic { value, .. } => *value,
            Self::Bernoulli { p, .. } => *p,
            Self::TruncatedNormal { mean, .. } => *mean,
            Self::Poisson { mean, .. } => *mean,
            Self::Exponential { mean, .. } => *mean,
            Self::BoundedDiscrete { values, probs } => Some(
                values
                    .iter()
                    .zip(probs)
                    .map(|(v, p)| v * p)
                    .sum(),
            ),
        }
    }

    /// Periodic mean schedule, if one was configured.
    pub fn mean_schedule(&self) -> Option<&[f64]> {
        match self {
            Self::Deterministic { mean_schedule, .. }
            | Self::Bernoulli { mean_schedule, .. }
            | Self::TruncatedNormal { mean_schedule, .. }
            | Self::Poisson { mean_schedule, .. }
            | Self::Exponential { mean_schedule, .. } => mean_schedule.as_deref(),
            Self::BoundedDiscrete { .. } => None,
        }
    }

    /// The schedule as a vector, falling back to the single-period schedule
    /// `[nominal mean]` for scheduleless specs.
    pub fn schedule_or_nominal(&self) -> Vec<f64> {
        self.effective_means()
    }

    fn effective_means(&self) -> Vec<f64> {
        match self.mean_schedule() {
            Some(s) => s.to_vec(),
            None => vec![self.point_param().unwrap_or(f64::NAN)],
        }
    }

    /// Nominal mean parameter at round `t` (for scheduled specs,
    /// `schedule[t % C]`).
    pub fn mean_at(&self, t: u64) -> f64 {
        match self.mean_schedule() {
            Some(s) => s[(t % s.len() as u64) as usize],
            None => self.point_param().unwrap_or(f64::NAN),
        }
    }

    /// Nominal mean, i.e. the mean parameter of a scheduleless spec. For a
    /// scheduled spec this is the per-period average.
    pub fn nominal_mean(&self) -> f64 {
        let means = self.effective_means();
        means.iter().sum::<f64>() / means.len() as f64
    }

    /// Finite support as `(value, prob)` atoms, when the family has one.
    /// Scheduled specs and continuous/unbounded families return `None`.
    pub fn finite_support(&self) -> Option<Vec<(f64, f64)>> {
        if self.mean_schedule().is_some() {
            return None;
        }
        match self {
            Self::Deterministic { value, .. } => Some(vec![(value.unwrap(), 1.0)]),
            Self::Bernoulli { p, .. } => {
                let p = p.unwrap();
                Some(vec![(0.0, 1.0 - p), (1.0, p)])
            }
            Self::BoundedDiscrete { values, probs } => {
                Some(values.iter().copied().zip(probs.iter().copied()).collect())
            }
            _ => None,
        }
    }

    /// Draw one value for round `t`. All draws are nonnegative; integer
    /// families (Bernoulli, Poisson, BoundedDiscrete with integral atoms)
    /// produce integer-valued reals.
    pub fn sample(&self, rng: &mut RngStream, t: u64) -> f64 {
        match self {
            Self::Deterministic { .. } => self.mean_at(t),
            Self::Bernoulli { .. } => {
                let p = self.mean_at(t);
                if rng.gen::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
            Self::TruncatedNormal { sigma, .. } => {
                let mu = self.mean_at(t);
                if *sigma == 0.0 {
                    mu.max(0.0)
                } else {
                    let z: f64 = StandardNormal.sample(rng);
                    (mu + sigma * z).max(0.0)
                }
            }
            Self::Poisson { .. } => {
                let lambda = self.mean_at(t);
                let d = Poisson::new(lambda).expect("validated at construction");
                d.sample(rng)
            }
            Self::Exponential { .. } => {
                let mean = self.mean_at(t);
                let d = Exp::new(1.0 / mean).expect("validated at construction");
                d.sample(rng)
            }
            Self::BoundedDiscrete { values, probs } => {
                let u = rng.gen::<f64>();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().unwrap()
            }
        }
    }
}

/// Per-cycle reference ratio: cumulative supply mean divided by cumulative
/// demand mean over one cycle.
pub fn cycle_reference(supply_schedule: &[f64], demand_schedule: &[f64]) -> Result<f64> {
    if supply_schedule.is_empty() || demand_schedule.is_empty() {
        return Err(Error::InvalidParameter(
            "cycle_reference: schedules must be nonempty".into(),
        ));
    }
    if supply_schedule.len() != demand_schedule.len() {
        return Err(Error::DimensionMismatch(format!(
            "cycle_reference: supply cycle length {} != demand cycle length {}",
            supply_schedule.len(),
            demand_schedule.len()
        )));
    }
    let supply_sum: f64 = supply_schedule.iter().sum();
    let demand_sum: f64 = demand_schedule.iter().sum();
    if demand_sum <= 0.0 {
        return Err(Error::InvalidParameter(
            "cycle_reference: demand schedule sums to zero".into(),
        ));
    }
    Ok(supply_sum / demand_sum)
}

/// Deterministic, counter-based random stream.
///
/// Built from a `(root_seed, stream_id)` pair; identical pairs reproduce the
/// sample path bit-exactly and distinct stream ids give statistically
/// independent streams (ChaCha stream cipher with the id as the nonce), so
/// replications can run in parallel in any order.
#[derive(Debug, Clone)]
pub struct RngStream {
    root_seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(root_seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(root_seed);
        inner.set_stream(stream_id);
        Self {
            root_seed,
            stream_id,
            inner,
        }
    }

    /// Stream for a numbered replication.
    pub fn replication(root_seed: u64, replication_id: u64) -> Self {
        Self::new(root_seed, replication_id)
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// Mixes arbitrary labels into a stream id (splitmix64 finalizer), so streams
/// can be derived from experiment coordinates without collisions in practice.
pub fn derive_stream_id(labels: &[u64]) -> u64 {
    let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
    for &label in labels {
        state = state.wrapping_add(label).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        state ^= state >> 31;
        state = state.wrapping_mul(0x94d0_49bb_1331_11eb);
        state ^= state >> 27;
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mc_mean(spec: &DistributionSpec, n: u64, seed: u64) -> f64 {
        let mut rng = RngStream::new(seed, 0);
        let mut sum = 0.0;
        for t in 0..n {
            sum += spec.sample(&mut rng, t);
        }
        sum / n as f64
    }

    #[test]
    fn deterministic_returns_value() {
        let spec = DistributionSpec::deterministic(5.0).unwrap();
        let mut rng = RngStream::new(1, 0);
        for t in 0..10 {
            assert_eq!(spec.sample(&mut rng, t), 5.0);
        }
    }

    #[test]
    fn truncated_normal_zero_sigma_is_point_mass() {
        let spec = DistributionSpec::truncated_normal(5.0, 0.0).unwrap();
        let mut rng = RngStream::new(1, 0);
        assert_eq!(spec.sample(&mut rng, 3), 5.0);
    }

    #[test]
    fn truncated_normal_monte_carlo_mean() {
        let spec = DistributionSpec::truncated_normal(5.0, 1.0).unwrap();
        let mean = mc_mean(&spec, 1_000_000, 42);
        assert!((4.99..=5.01).contains(&mean), "mean = {mean}");
    }

    #[test]
    fn poisson_monte_carlo_mean() {
        let spec = DistributionSpec::poisson(5.0).unwrap();
        let mean = mc_mean(&spec, 1_000_000, 43);
        assert!((4.99..=5.01).contains(&mean), "mean = {mean}");
    }

    #[test]
    fn bernoulli_monte_carlo_frequency() {
        let spec = DistributionSpec::bernoulli(0.5).unwrap();
        let mean = mc_mean(&spec, 1_000_000, 44);
        assert!((0.498..=0.502).contains(&mean), "freq = {mean}");
    }

    #[test]
    fn poisson_and_bernoulli_draws_are_integral() {
        let mut rng = RngStream::new(9, 0);
        let poisson = DistributionSpec::poisson(3.0).unwrap();
        let bern = DistributionSpec::bernoulli(0.3).unwrap();
        for t in 0..1000 {
            assert_eq!(poisson.sample(&mut rng, t).fract(), 0.0);
            assert_eq!(bern.sample(&mut rng, t).fract(), 0.0);
        }
    }

    #[test]
    fn all_draws_nonnegative() {
        let specs = [
            DistributionSpec::truncated_normal(0.5, 2.0).unwrap(),
            DistributionSpec::exponential(5.0).unwrap(),
            DistributionSpec::poisson(0.5).unwrap(),
            DistributionSpec::bernoulli(0.1).unwrap(),
            DistributionSpec::bounded_discrete(vec![0.0, 10.0], vec![0.5, 0.5]).unwrap(),
        ];
        let mut rng = RngStream::new(7, 3);
        for spec in &specs {
            for t in 0..10_000 {
                let v = spec.sample(&mut rng, t);
                assert!(v >= 0.0, "{spec:?} produced {v}");
            }
        }
    }

    #[test]
    fn replication_determinism() {
        let spec = DistributionSpec::truncated_normal(5.0, 1.0).unwrap();
        let draw = |rep: u64| {
            let mut rng = RngStream::replication(123, rep);
            (0..1000).map(|t| spec.sample(&mut rng, t)).collect::<Vec<_>>()
        };
        assert_eq!(draw(17), draw(17));
        assert_ne!(draw(17), draw(18));
    }

    #[test]
    fn schedule_periodicity() {
        let spec = DistributionSpec::truncated_normal_schedule(vec![4.0, 6.0], 0.0).unwrap();
        let mut rng = RngStream::new(1, 0);
        for t in 0..6 {
            let a = spec.sample(&mut rng, t);
            let b = spec.sample(&mut rng, t + 2);
            assert_eq!(a, b);
            assert_eq!(spec.mean_at(t), spec.mean_at(t + 2));
        }
        assert_eq!(spec.mean_at(0), 4.0);
        assert_eq!(spec.mean_at(1), 6.0);
    }

    #[test]
    fn cycle_reference_examples() {
        assert_eq!(cycle_reference(&[4.0, 6.0], &[5.0, 5.0]).unwrap(), 1.0);
        assert_eq!(cycle_reference(&[5.0], &[5.0]).unwrap(), 1.0);
        assert_eq!(cycle_reference(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]).unwrap(), 2.0);
    }

    #[test]
    fn cycle_reference_errors() {
        assert!(cycle_reference(&[], &[]).is_err());
        assert!(cycle_reference(&[1.0, 2.0], &[1.0]).is_err());
        assert!(cycle_reference(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(DistributionSpec::truncated_normal(5.0, -1.0).is_err());
        assert!(DistributionSpec::exponential(0.0).is_err());
        assert!(DistributionSpec::exponential(-2.0).is_err());
        assert!(DistributionSpec::poisson(0.0).is_err());
        assert!(DistributionSpec::bernoulli(1.5).is_err());
        assert!(DistributionSpec::deterministic(-1.0).is_err());
        assert!(DistributionSpec::bounded_discrete(vec![1.0], vec![0.9]).is_err());
        assert!(DistributionSpec::bounded_discrete(vec![-1.0, 1.0], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn serde_matches_documented_shape() {
        let spec: DistributionSpec =
            serde_json::from_str(r#"{"family":"truncated_normal","mean":5.0,"sigma":1.0}"#)
                .unwrap();
        spec.validate().unwrap();
        assert_eq!(spec, DistributionSpec::truncated_normal(5.0, 1.0).unwrap());

        let scheduled: DistributionSpec = serde_json::from_str(
            r#"{"family":"truncated_normal","mean_schedule":[4,6],"sigma":1.0}"#,
        )
        .unwrap();
        scheduled.validate().unwrap();
        assert_eq!(scheduled.mean_at(0), 4.0);

        let unknown = serde_json::from_str::<DistributionSpec>(
            r#"{"family":"truncated_normal","mean":5.0,"sigma":1.0,"bogus":1}"#,
        );
        assert!(unknown.is_err());
    }

    #[test]
    fn bounded_discrete_mean_and_support() {
        let spec = DistributionSpec::bounded_discrete(vec![0.0, 10.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(spec.nominal_mean(), 5.0);
        assert_eq!(spec.finite_support().unwrap(), vec![(0.0, 0.5), (10.0, 0.5)]);
        let mean = mc_mean(&spec, 200_000, 5);
        assert!((mean - 5.0).abs() < 0.05);
    }
}

//! Stationary law of the M/M/∞ node population and truncated sums over it.
//!
//! Nodes arrive at rate `Nλ` and each present node leaves at rate `λ`, so
//! the population is Poisson with mean `N` in steady state. The pmf is
//! evaluated in log space using the saddle-point form
//! `π(i) = exp(-stirlerr(i) - bd0(i, N)) / sqrt(2πi)`, which avoids the
//! cancellation between `i ln N`, `N` and `ln i!` that a direct log-gamma
//! evaluation suffers for `N` in the tens of thousands.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{compensated_sum, CompensatedSum};

/// Tail tolerance used by every analytic sum in the crate.
pub const DEFAULT_TAIL_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkovError {
    #[error("expected node count N must be positive and finite, got {0}")]
    InvalidExpectedNodes(f64),
    #[error("departure rate lambda must be positive and finite, got {0}")]
    InvalidDepartureRate(f64),
    #[error("tail tolerance must lie in (0, 1), got {0}")]
    InvalidTailEps(f64),
    #[error("weight grows super-polynomially; truncation error cannot be bounded")]
    UnboundedWeight,
    #[error("weight must be finite and nonnegative, got {value} at state {state}")]
    InvalidWeight { state: u64, value: f64 },
}

/// M/M/∞ population: arrivals at rate `Nλ`, per-node departures at rate `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationModel {
    expected_nodes: f64,
    departure_rate: f64,
}

impl PopulationModel {
    pub fn new(expected_nodes: f64, departure_rate: f64) -> Result<Self, MarkovError> {
        if !(expected_nodes.is_finite() && expected_nodes > 0.0) {
            return Err(MarkovError::InvalidExpectedNodes(expected_nodes));
        }
        if !(departure_rate.is_finite() && departure_rate > 0.0) {
            return Err(MarkovError::InvalidDepartureRate(departure_rate));
        }
        Ok(Self {
            expected_nodes,
            departure_rate,
        })
    }

    pub fn expected_nodes(&self) -> f64 {
        self.expected_nodes
    }

    pub fn departure_rate(&self) -> f64 {
        self.departure_rate
    }

    /// Arrival rate `Nλ`.
    pub fn arrival_rate(&self) -> f64 {
        self.expected_nodes * self.departure_rate
    }

    /// Most likely state `⌊N⌋`.
    pub fn mode(&self) -> u64 {
        self.expected_nodes.floor() as u64
    }
}

/// Contiguous block of states carrying all but at most `tail_mass_bound` of
/// the stationary mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationWindow {
    pub i_min: u64,
    pub i_max: u64,
    /// Requested bound on the excluded mass.
    pub tail_mass_bound: f64,
    /// Mass outside `[i_min, i_max]`, including an analytic bound for the
    /// far tails that are never evaluated.
    pub excluded_mass: f64,
}

impl TruncationWindow {
    pub fn len(&self) -> usize {
        (self.i_max - self.i_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: u64) -> bool {
        (self.i_min..=self.i_max).contains(&i)
    }
}

// stirlerr(n) = ln n! - (n + 1/2) ln n + n - ln sqrt(2π) for n = 1..=15.
#[allow(clippy::excessive_precision)]
const STIRLERR_SMALL: [f64; 16] = [
    0.0,
    0.081_061_466_795_327_258_22,
    0.041_340_695_955_409_294_09,
    0.027_677_925_684_998_339_15,
    0.020_790_672_103_765_093_11,
    0.016_644_691_189_821_192_16,
    0.013_876_128_823_070_748_00,
    0.011_896_709_945_891_770_10,
    0.010_411_265_261_972_096_50,
    0.009_255_462_182_712_732_918,
    0.008_330_563_433_362_871_257,
    0.007_573_675_487_951_840_795,
    0.006_942_840_107_209_529_866,
    0.006_408_994_188_004_207_068,
    0.005_951_370_112_758_847_736,
    0.005_554_733_551_962_801_371,
];

fn stirlerr(n: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15 {
        return STIRLERR_SMALL[n as usize];
    }
    let n = n as f64;
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x/m) + m - x`, evaluated without cancellation when
/// `x` is close to `m`.
fn bd0(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let mut v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / f64::from(2 * j + 1);
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / m).ln() + m - x
    }
}

/// `ln π(i)` for a Poisson law with mean `expected_nodes`.
pub fn ln_stationary_pmf(expected_nodes: f64, i: u64) -> f64 {
    if i == 0 {
        return -expected_nodes;
    }
    let x = i as f64;
    -stirlerr(i) - bd0(x, expected_nodes) - 0.5 * (2.0 * PI * x).ln()
}

/// Stationary probability `π(i) = N^i e^{-N} / i!` of holding `i` nodes.
pub fn stationary_pmf(model: &PopulationModel, i: u64) -> f64 {
    ln_stationary_pmf(model.expected_nodes, i).exp()
}

/// Smallest window around the mode whose excluded mass is at most
/// `tail_eps`.
pub fn truncation_window(model: &PopulationModel, tail_eps: f64) -> Result<TruncationWindow, MarkovError> {
    Ok(StationaryTable::new(model, tail_eps)?.window())
}

/// Growth class of a tail-sum weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Growth {
    Polynomial,
    SuperPolynomial,
}

/// Weight function for [`weighted_tail_sum`], tagged with its growth class.
pub struct TailWeight<F> {
    f: F,
    growth: Growth,
}

impl<F: Fn(u64) -> f64> TailWeight<F> {
    pub fn polynomial(f: F) -> Self {
        Self {
            f,
            growth: Growth::Polynomial,
        }
    }

    pub fn super_polynomial(f: F) -> Self {
        Self {
            f,
            growth: Growth::SuperPolynomial,
        }
    }

    pub fn growth(&self) -> Growth {
        self.growth
    }

    fn eval(&self, i: u64) -> Result<f64, MarkovError> {
        let value = (self.f)(i);
        if value.is_finite() && value >= 0.0 {
            Ok(value)
        } else {
            Err(MarkovError::InvalidWeight { state: i, value })
        }
    }
}

/// `Σ_{i ≥ i_from} π(i) weight(i)`, truncated at tail tolerance 1e-12.
pub fn weighted_tail_sum<F: Fn(u64) -> f64>(
    model: &PopulationModel,
    i_from: u64,
    weight: &TailWeight<F>,
) -> Result<f64, MarkovError> {
    StationaryTable::new(model, DEFAULT_TAIL_EPS)?.weighted_tail_sum(i_from, weight)
}

/// Which constant converts per-event costs into cost per time unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalizer {
    /// The large-`N` constant `2Nλ`.
    Asymptotic,
    /// `1 / Σ π(i) / ((i + N) λ)`, the inverse mean time between churn events.
    Exact,
}

pub fn event_rate_normalizer(model: &PopulationModel, mode: Normalizer) -> f64 {
    match mode {
        Normalizer::Asymptotic => 2.0 * model.arrival_rate(),
        Normalizer::Exact => {
            let n = model.expected_nodes;
            // The weight is bounded by 1/N, so the truncated tail is negligible.
            let table = StationaryTable::new(model, DEFAULT_TAIL_EPS).expect("valid tolerance");
            let mean_interval = table
                .weighted_tail_sum(0, &TailWeight::polynomial(|i| 1.0 / ((i as f64 + n) * model.departure_rate)))
                .expect("bounded weight");
            1.0 / mean_interval
        }
    }
}

/// Stationary pmf tabulated over a truncation window, with suffix sums for
/// the tail weights the cost model needs (`1`, `i`, `1/(i+N)`).
#[derive(Debug, Clone)]
pub struct StationaryTable {
    model: PopulationModel,
    window: TruncationWindow,
    pmf: Vec<f64>,
    // suffix[j] = Σ_{t ≥ j} over window offsets
    suffix_mass: Vec<f64>,
    suffix_mean: Vec<f64>,
    suffix_inverse: Vec<f64>,
}

impl StationaryTable {
    pub fn new(model: &PopulationModel, tail_eps: f64) -> Result<Self, MarkovError> {
        if !(tail_eps > 0.0 && tail_eps < 1.0) {
            return Err(MarkovError::InvalidTailEps(tail_eps));
        }
        let n = model.expected_nodes;
        let mode = model.mode();
        // Evaluate well past the point where terms fall below tail_eps, so the
        // greedy search below sees accurate tail masses.
        let ln_cut = tail_eps.ln() - 40.0;
        let mut lo = mode;
        while lo > 0 && ln_stationary_pmf(n, lo - 1) > ln_cut {
            lo -= 1;
        }
        let mut hi = mode;
        while ln_stationary_pmf(n, hi + 1) > ln_cut {
            hi += 1;
        }
        let ext: Vec<f64> = (lo..=hi).map(|i| ln_stationary_pmf(n, i).exp()).collect();

        // Geometric bounds for the mass beyond the evaluated range: the ratio
        // π(i-1)/π(i) = i/N below the mode, π(i+1)/π(i) = N/(i+1) above it.
        let below_ext = if lo == 0 {
            0.0
        } else {
            let first = ln_stationary_pmf(n, lo - 1).exp();
            first / (1.0 - (lo - 1) as f64 / n)
        };
        let above_ext = {
            let first = ln_stationary_pmf(n, hi + 1).exp();
            first / (1.0 - n / (hi + 2) as f64)
        };

        // left[j] = mass strictly below ext index j; right[j] = mass strictly above.
        let len = ext.len();
        let mut left = vec![0.0; len];
        let mut acc = CompensatedSum::default();
        acc.add(below_ext);
        for j in 0..len {
            left[j] = acc.value();
            acc.add(ext[j]);
        }
        let mut right = vec![0.0; len];
        let mut acc = CompensatedSum::default();
        acc.add(above_ext);
        for j in (0..len).rev() {
            right[j] = acc.value();
            acc.add(ext[j]);
        }

        let mut a = (mode - lo) as usize;
        let mut b = a;
        // Slack absorbs rounding when tail_eps is itself computed as 1 - π(mode).
        let limit = tail_eps * (1.0 + 1e-12);
        while left[a] + right[b] > limit {
            let grow_left = a > 0 && (b + 1 >= len || ext[a - 1] >= ext[b + 1]);
            if grow_left {
                a -= 1;
            } else if b + 1 < len {
                b += 1;
            } else {
                break;
            }
        }

        let window = TruncationWindow {
            i_min: lo + a as u64,
            i_max: lo + b as u64,
            tail_mass_bound: tail_eps,
            excluded_mass: left[a] + right[b],
        };
        let pmf = ext[a..=b].to_vec();
        let suffix = |w: &dyn Fn(u64) -> f64| -> Vec<f64> {
            let mut out = vec![0.0; pmf.len() + 1];
            let mut acc = CompensatedSum::default();
            for j in (0..pmf.len()).rev() {
                acc.add(pmf[j] * w(window.i_min + j as u64));
                out[j] = acc.value();
            }
            out
        };
        let suffix_mass = suffix(&|_| 1.0);
        let suffix_mean = suffix(&|i| i as f64);
        let suffix_inverse = suffix(&|i| 1.0 / (i as f64 + n));

        Ok(Self {
            model: *model,
            window,
            pmf,
            suffix_mass,
            suffix_mean,
            suffix_inverse,
        })
    }

    pub fn model(&self) -> &PopulationModel {
        &self.model
    }

    pub fn window(&self) -> TruncationWindow {
        self.window
    }

    /// `π(i)`; read from the table inside the window, evaluated directly outside.
    pub fn pmf(&self, i: u64) -> f64 {
        if self.window.contains(i) {
            self.pmf[(i - self.window.i_min) as usize]
        } else {
            stationary_pmf(&self.model, i)
        }
    }

    /// Tabulated window pmf, indexed from `window().i_min`.
    pub fn window_pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Mass below the window starting at `i_from`, summed downward until the
    /// terms vanish.
    fn below_window<F: Fn(u64) -> f64>(&self, i_from: u64, weight: &TailWeight<F>) -> Result<f64, MarkovError> {
        let mut acc = CompensatedSum::default();
        let mut i = self.window.i_min;
        while i > i_from {
            i -= 1;
            let term = self.pmf(i) * weight.eval(i)?;
            acc.add(term);
            if term < f64::MIN_POSITIVE || term < acc.value() * 1e-18 {
                break;
            }
        }
        Ok(acc.value())
    }

    pub fn weighted_tail_sum<F: Fn(u64) -> f64>(&self, i_from: u64, weight: &TailWeight<F>) -> Result<f64, MarkovError> {
        if weight.growth == Growth::SuperPolynomial {
            return Err(MarkovError::UnboundedWeight);
        }
        let mut total = CompensatedSum::default();
        if i_from < self.window.i_min {
            total.add(self.below_window(i_from, weight)?);
        }
        let start = i_from.max(self.window.i_min);
        if start <= self.window.i_max {
            for i in start..=self.window.i_max {
                total.add(self.pmf[(i - self.window.i_min) as usize] * weight.eval(i)?);
            }
        }
        Ok(total.value())
    }

    fn suffix_at(&self, suffix: &[f64], i_from: u64, weight: impl Fn(u64) -> f64) -> f64 {
        if i_from > self.window.i_max {
            return 0.0;
        }
        let in_window = suffix[i_from.saturating_sub(self.window.i_min) as usize];
        if i_from >= self.window.i_min {
            return in_window;
        }
        let below = self
            .below_window(i_from, &TailWeight::polynomial(weight))
            .expect("built-in weights are finite and nonnegative");
        compensated_sum([below, in_window])
    }

    /// `Σ_{i ≥ i_from} π(i)`.
    pub fn tail_mass(&self, i_from: u64) -> f64 {
        self.suffix_at(&self.suffix_mass, i_from, |_| 1.0)
    }

    /// `Σ_{i ≥ i_from} i π(i)`.
    pub fn tail_mean(&self, i_from: u64) -> f64 {
        self.suffix_at(&self.suffix_mean, i_from, |i| i as f64)
    }

    /// `Σ_{i ≥ i_from} π(i) / (i + N)`.
    pub fn tail_inverse(&self, i_from: u64) -> f64 {
        let n = self.model.expected_nodes;
        self.suffix_at(&self.suffix_inverse, i_from, move |i| 1.0 / (i as f64 + n))
    }

    /// `Σ_{i=from}^{to} π(i) w(i)` over an explicit finite range; empty when `from > to`.
    pub fn range_sum(&self, from: u64, to: u64, weight: impl Fn(u64) -> f64) -> f64 {
        if from > to {
            return 0.0;
        }
        compensated_sum((from..=to).map(|i| self.pmf(i) * weight(i)))
    }
}

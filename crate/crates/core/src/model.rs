//! Transmission model: value normalization, budget arithmetic, arrival
//! probabilities, requirement-driven value solving and the feasibility test.
//!
//! Everything here is a pure function over immutable inputs.

use thiserror::Error;

/// Absolute tolerance used when a probability vector is checked for summing to one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Slack below zero that the feasibility test still accepts, per block.
///
/// The boundary case `Σ (1 - R_i)^(1/N) = |I| - 1 + L^K` must be reported as
/// feasible even when the roots pick up a few ulps of rounding error.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("degenerate value map: no block has a positive value")]
    DegenerateValueMap,
    #[error("negative value {value} at block {index}")]
    NegativeValue { index: usize, value: f64 },
    #[error("value at block {index} is not finite")]
    NonFiniteValue { index: usize },
    #[error("empty block set")]
    EmptyBlockSet,
    #[error("loss rate {0} outside [0, 1]")]
    InvalidLossRate(f64),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("packet size must be at least one byte")]
    ZeroPacketSize,
    #[error("block size {block_size} is not a multiple of packet size {packet_size}")]
    IndivisibleBlock { block_size: usize, packet_size: usize },
    #[error("original size {original_size} != {count} blocks x {block_size} bytes")]
    SizeMismatch {
        original_size: usize,
        count: usize,
        block_size: usize,
    },
    #[error("empty budget: transmit size {0} rounds to zero block transmissions")]
    EmptyBudget(f64),
    #[error("channel delivers nothing (L^K = 1)")]
    ChannelDeliversNothing,
    #[error("unattainable requirement {0} (must be < 1)")]
    UnattainableRequirement(f64),
    #[error("length mismatch: expected {expected} entries, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("transmission count must be at least 1")]
    ZeroTransmissions,
    #[error("fragment count must be at least 1")]
    ZeroFragments,
    #[error("requirements are infeasible: {0}")]
    Infeasible(FeasibilityReport),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// The set of blocks of one image, identified densely as `0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockIndexSet {
    count: usize,
}

impl BlockIndexSet {
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(ModelError::EmptyBlockSet);
        }
        Ok(Self { count })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn ids(&self) -> std::ops::Range<usize> {
        0..self.count
    }
}

/// I.i.d. per-packet loss rate and the packet payload size in bytes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    loss_rate: f64,
    packet_size: usize,
}

impl ChannelParams {
    pub fn new(loss_rate: f64, packet_size: usize) -> Result<Self> {
        check_unit(loss_rate).map_err(|_| ModelError::InvalidLossRate(loss_rate))?;
        if packet_size == 0 {
            return Err(ModelError::ZeroPacketSize);
        }
        Ok(Self {
            loss_rate,
            packet_size,
        })
    }

    pub fn loss_rate(&self) -> f64 {
        self.loss_rate
    }

    pub fn packet_size(&self) -> usize {
        self.packet_size
    }

    /// `L^K`: the loss term of the block success model.
    pub fn loss_pow(&self, fragments: u32) -> f64 {
        self.loss_rate.powi(fragments as i32)
    }
}

/// Block size, original image size and the byte budget for one transmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizingParams {
    pub block_size: usize,
    pub original_size: usize,
    pub transmit_size: f64,
}

impl SizingParams {
    /// Sizing for `count` blocks where the budget is `ratio` times the original size.
    pub fn from_ratio(block_size: usize, count: usize, ratio: f64) -> Self {
        let original_size = block_size * count;
        Self {
            block_size,
            original_size,
            transmit_size: ratio * original_size as f64,
        }
    }

    pub fn ratio(&self) -> f64 {
        self.transmit_size / self.original_size as f64
    }
}

/// Per-block values and the transmission probabilities derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueMap {
    values: Vec<f64>,
    probabilities: Vec<f64>,
}

impl ValueMap {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn uniform(count: usize) -> Result<Self> {
        normalize_values(&vec![1.0; count])
    }

    /// Ids of the `ceil(fraction * len)` highest-probability blocks, ties going to
    /// the lower id. The result is sorted ascending.
    pub fn top_fraction(&self, fraction: f64) -> Vec<usize> {
        let take = ((fraction * self.len() as f64).ceil() as usize).clamp(1, self.len());
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.probabilities[b]
                .total_cmp(&self.probabilities[a])
                .then(a.cmp(&b))
        });
        let mut top = order[..take].to_vec();
        top.sort_unstable();
        top
    }
}

/// Per-block required reception probabilities, each in `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Requirements(Vec<f64>);

impl Requirements {
    pub fn new(required: Vec<f64>) -> Result<Self> {
        if required.is_empty() {
            return Err(ModelError::EmptyBlockSet);
        }
        for &r in &required {
            check_requirement(r)?;
        }
        Ok(Self(required))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A fully derived transmission plan for one image and one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionPlan {
    pub channel: ChannelParams,
    pub sizing: SizingParams,
    pub value_map: ValueMap,
    pub total_transmissions: u32,
    pub fragments_per_block: u32,
    pub expected_counts: Vec<f64>,
    pub arrival_probs: Vec<f64>,
}

impl TransmissionPlan {
    pub fn block_count(&self) -> usize {
        self.value_map.len()
    }

    pub fn probabilities(&self) -> &[f64] {
        self.value_map.probabilities()
    }

    /// `r_blk` for this plan's channel and fragment count.
    pub fn block_success(&self) -> f64 {
        block_success_prob(&self.channel, self.fragments_per_block)
    }

    /// Arrival probabilities under all-fragments delivery, `(1 - L)^K` per attempt.
    pub fn fragment_faithful_arrival_probs(&self) -> Vec<f64> {
        let r = fragment_success_prob(&self.channel, self.fragments_per_block);
        self.probabilities()
            .iter()
            .map(|&p| arrival_probability_with(p, r, self.total_transmissions))
            .collect()
    }

    /// Arrival probabilities under per-packet loss with a receiver that keeps
    /// fragments across repeated attempts, see [`reassembly_arrival_probability`].
    pub fn reassembly_arrival_probs(&self) -> Vec<f64> {
        self.probabilities()
            .iter()
            .map(|&p| {
                reassembly_arrival_probability(
                    p,
                    self.channel.loss_rate(),
                    self.fragments_per_block,
                    self.total_transmissions,
                )
            })
            .collect()
    }

    /// Expected fraction of blocks received at least once.
    pub fn expected_filling_rate(&self) -> f64 {
        self.arrival_probs.iter().sum::<f64>() / self.block_count() as f64
    }
}

/// Outcome of the feasibility test `Σ (1 - R_i)^(1/N) ≥ |I| - 1 + L^K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub feasible: bool,
}

impl std::fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "lhs={:.12} rhs={:.12} slack={:.3e} feasible={}",
            self.lhs, self.rhs, self.slack, self.feasible
        )
    }
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(ModelError::InvalidProbability(x))
    }
}

fn check_requirement(r: f64) -> Result<()> {
    if r.is_nan() || r < 0.0 {
        return Err(ModelError::InvalidProbability(r));
    }
    if r >= 1.0 {
        return Err(ModelError::UnattainableRequirement(r));
    }
    Ok(())
}

/// Normalizes non-negative block values into transmission probabilities.
pub fn normalize_values(values: &[f64]) -> Result<ValueMap> {
    if values.is_empty() {
        return Err(ModelError::EmptyBlockSet);
    }
    for (index, &value) in values.iter().enumerate() {
        if value.is_nan() || value.is_infinite() {
            return Err(ModelError::NonFiniteValue { index });
        }
        if value < 0.0 {
            return Err(ModelError::NegativeValue { index, value });
        }
    }
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Err(ModelError::DegenerateValueMap);
    }
    Ok(ValueMap {
        values: values.to_vec(),
        probabilities: values.iter().map(|v| v / total).collect(),
    })
}

/// Heatmap values `max(f_i, floor * max f)`, normalized.
pub fn values_from_heatmap(frequencies: &[u64], floor: f64) -> Result<ValueMap> {
    if frequencies.is_empty() {
        return Err(ModelError::EmptyBlockSet);
    }
    if floor.is_nan() || floor < 0.0 {
        return Err(ModelError::NegativeValue {
            index: 0,
            value: floor,
        });
    }
    let max = frequencies.iter().copied().max().unwrap_or(0) as f64;
    let min_value = floor * max;
    let values: Vec<f64> = frequencies
        .iter()
        .map(|&f| (f as f64).max(min_value))
        .collect();
    normalize_values(&values)
}

/// Builds the plan: `N = round(|I| S_prp / S_org)`, `K = s_blk / s_pkt`,
/// `e_i = p_i N` and the per-block arrival probabilities.
pub fn plan_transmission(
    channel: ChannelParams,
    sizing: SizingParams,
    value_map: ValueMap,
    block_set: BlockIndexSet,
) -> Result<TransmissionPlan> {
    let count = block_set.count();
    if value_map.len() != count {
        return Err(ModelError::LengthMismatch {
            expected: count,
            actual: value_map.len(),
        });
    }
    if sizing.block_size == 0 || sizing.original_size != count * sizing.block_size {
        return Err(ModelError::SizeMismatch {
            original_size: sizing.original_size,
            count,
            block_size: sizing.block_size,
        });
    }
    if !sizing.block_size.is_multiple_of(channel.packet_size()) {
        return Err(ModelError::IndivisibleBlock {
            block_size: sizing.block_size,
            packet_size: channel.packet_size(),
        });
    }
    let fragments = (sizing.block_size / channel.packet_size()) as u32;

    let exact = count as f64 * sizing.transmit_size / sizing.original_size as f64;
    if !exact.is_finite() || exact < 0.0 {
        return Err(ModelError::EmptyBudget(sizing.transmit_size));
    }
    let rounded = exact.round();
    if rounded < 1.0 {
        return Err(ModelError::EmptyBudget(sizing.transmit_size));
    }
    let total = rounded.min(u32::MAX as f64) as u32;

    let expected_counts = value_map
        .probabilities()
        .iter()
        .map(|p| p * total as f64)
        .collect();
    let r_blk = block_success_prob(&channel, fragments);
    let arrival_probs = value_map
        .probabilities()
        .iter()
        .map(|&p| arrival_probability_with(p, r_blk, total))
        .collect();

    Ok(TransmissionPlan {
        channel,
        sizing,
        value_map,
        total_transmissions: total,
        fragments_per_block: fragments,
        expected_counts,
        arrival_probs,
    })
}

/// `r_blk = 1 - L^K`, the block success probability of the model.
///
/// This is the probability that at least one of the K packets survives. Under
/// fragment reassembly a block needs all K packets, see [`fragment_success_prob`].
pub fn block_success_prob(channel: &ChannelParams, fragments: u32) -> f64 {
    1.0 - channel.loss_pow(fragments)
}

/// `(1 - L)^K`: probability that every one of K fragments survives.
pub fn fragment_success_prob(channel: &ChannelParams, fragments: u32) -> f64 {
    (1.0 - channel.loss_rate()).powi(fragments as i32)
}

/// Probability that every fragment of a block arrives at least once when each
/// packet is lost independently and fragments from different attempts of the
/// same block combine.
///
/// With `M ~ Bin(N, p)` attempts this is `E[(1 - L^M)^K]`, which expands to
/// `Σ_j C(K, j) (-1)^j (1 - p (1 - L^j))^N`. The alternating sum loses at most
/// about `2^K` ulps. Equals [`arrival_probability`] at `K = 1`, and lies
/// between the per-attempt `(1 - L)^K` variant and `r = 1 - L^K`.
pub fn reassembly_arrival_probability(p: f64, loss: f64, fragments: u32, n: u32) -> f64 {
    let mut binom = 1.0;
    let mut total = 0.0;
    for j in 0..=fragments {
        if j > 0 {
            binom = binom * (fragments - j + 1) as f64 / j as f64;
        }
        let miss_some = 1.0 - loss.powi(j as i32);
        let none = (n as f64 * (-p * miss_some).ln_1p()).exp();
        let term = binom * none;
        total += if j % 2 == 0 { term } else { -term };
    }
    total.clamp(0.0, 1.0)
}

/// `ρ = 1 - ((1 - p) + p L^K)^N`.
pub fn arrival_probability(p: f64, channel: &ChannelParams, fragments: u32, n: u32) -> Result<f64> {
    check_unit(p)?;
    if fragments == 0 {
        return Err(ModelError::ZeroFragments);
    }
    if n == 0 {
        return Err(ModelError::ZeroTransmissions);
    }
    Ok(arrival_probability_with(
        p,
        block_success_prob(channel, fragments),
        n,
    ))
}

/// Arrival probability for an arbitrary per-attempt block success probability.
///
/// `1 - (1 - p r)^N`, evaluated as `-expm1(N ln(1 - p r))` so that small
/// `p r` and large `N` keep full relative precision.
pub fn arrival_probability_with(p: f64, block_success: f64, n: u32) -> f64 {
    let hit = p * block_success;
    if hit >= 1.0 {
        return 1.0;
    }
    -(n as f64 * (-hit).ln_1p()).exp_m1()
}

/// `(1 - R)^(1/N)`, exact for `N = 1`.
fn survival_root(requirement: f64, n: u32) -> f64 {
    if n == 1 {
        1.0 - requirement
    } else {
        ((-requirement).ln_1p() / n as f64).exp()
    }
}

/// `1 - (1 - R)^(1/N)`, computed without cancellation.
fn miss_root_complement(requirement: f64, n: u32) -> f64 {
    if n == 1 {
        requirement
    } else {
        -((-requirement).ln_1p() / n as f64).exp_m1()
    }
}

/// Smallest transmission probability meeting `ρ ≥ R`:
/// `(1 - (1 - R)^(1/N)) / (1 - L^K)`.
///
/// The result can exceed 1 when even a dedicated channel cannot meet `R`.
pub fn min_probability_for(
    requirement: f64,
    channel: &ChannelParams,
    fragments: u32,
    n: u32,
) -> Result<f64> {
    check_requirement(requirement)?;
    if fragments == 0 {
        return Err(ModelError::ZeroFragments);
    }
    if n == 0 {
        return Err(ModelError::ZeroTransmissions);
    }
    let r_blk = block_success_prob(channel, fragments);
    if r_blk <= 0.0 {
        return Err(ModelError::ChannelDeliversNothing);
    }
    if requirement == 0.0 {
        return Ok(0.0);
    }
    Ok(miss_root_complement(requirement, n) / r_blk)
}

pub fn feasibility_check(
    requirements: &Requirements,
    channel: &ChannelParams,
    fragments: u32,
    n: u32,
) -> FeasibilityReport {
    let count = requirements.len() as f64;
    let lhs: f64 = requirements
        .as_slice()
        .iter()
        .map(|&r| survival_root(r, n.max(1)))
        .sum();
    let rhs = count - 1.0 + channel.loss_pow(fragments);
    let slack = lhs - rhs;
    FeasibilityReport {
        lhs,
        rhs,
        slack,
        feasible: slack >= -FEASIBILITY_TOLERANCE * count,
    }
}

/// Solves block values from reception requirements.
///
/// Each block first gets its minimum probability; the remaining mass is
/// spread in proportion to those minima, or uniformly when every minimum is
/// zero.
pub fn values_from_requirements(
    requirements: &Requirements,
    channel: &ChannelParams,
    fragments: u32,
    n: u32,
) -> Result<ValueMap> {
    let report = feasibility_check(requirements, channel, fragments, n);
    if !report.feasible {
        return Err(ModelError::Infeasible(report));
    }
    let minima = requirements
        .as_slice()
        .iter()
        .map(|&r| min_probability_for(r, channel, fragments, n))
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = minima.iter().sum();
    if total <= 0.0 {
        return ValueMap::uniform(requirements.len());
    }
    let leftover = (1.0 - total).max(0.0);
    let probabilities: Vec<f64> = minima
        .iter()
        .map(|&m| m + leftover * m / total)
        .collect();
    normalize_values(&probabilities)
}

/// Probability that every block of a region arrives at least once.
///
/// Arrivals of different blocks are negatively dependent, because each of
/// the N transmissions carries a single block, so this is at most the
/// product of the individual arrival probabilities. The value is exact under
/// the per-transmission model: draw `i` with probability `p_i` and deliver it
/// with probability `block_success`.
///
/// Runs in `O(|region| N^2)`.
pub fn region_full_coverage_probability(region_probs: &[f64], block_success: f64, n: u32) -> f64 {
    let n = n as usize;
    if region_probs.is_empty() {
        return 1.0;
    }
    if region_probs.len() > n {
        return 0.0;
    }
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=n).scan(0.0, |acc, k| {
            *acc += (k as f64).ln();
            Some(*acc)
        }))
        .collect();

    // covered[m]: probability that m remaining draws cover every block after
    // the current one, conditional on none landing in earlier blocks.
    let mut covered = vec![1.0; n + 1];
    let mut prefix_mass: Vec<f64> = Vec::with_capacity(region_probs.len());
    let mut acc = 0.0;
    for &p in region_probs {
        prefix_mass.push(acc);
        acc += p * block_success;
    }
    for (j, &p) in region_probs.iter().enumerate().rev() {
        let remaining = 1.0 - prefix_mass[j];
        let a = if remaining > 0.0 {
            (p * block_success / remaining).min(1.0)
        } else {
            0.0
        };
        let mut next = vec![0.0; n + 1];
        if a <= 0.0 {
            covered = next;
            continue;
        }
        let ln_a = a.ln();
        let ln_b = (-a).ln_1p();
        for (m, slot) in next.iter_mut().enumerate().skip(1) {
            let mut total = 0.0;
            for c in 1..=m {
                let rest = covered[m - c];
                if rest == 0.0 {
                    continue;
                }
                let ln_pmf = ln_fact[m] - ln_fact[c] - ln_fact[m - c]
                    + c as f64 * ln_a
                    + if c == m { 0.0 } else { (m - c) as f64 * ln_b };
                total += ln_pmf.exp() * rest;
            }
            *slot = total.min(1.0);
        }
        covered = next;
    }
    covered[n]
}

/// Product of individual arrival probabilities over a region.
pub fn region_independent_coverage(region_probs: &[f64], block_success: f64, n: u32) -> f64 {
    region_probs
        .iter()
        .map(|&p| arrival_probability_with(p, block_success, n))
        .product()
}

#[cfg(test)]
mod tests {
    #[test]
    fn reassembly_matches_binomial_expectation() {
        // Oracle: sum over the attempt count M of P(M = m) (1 - L^m)^K.
        let oracle = |p: f64, loss: f64, k: i32, n: usize| {
            let mut pmf = (1.0 - p).powi(n as i32);
            let mut total = 0.0;
            for m in 0..=n {
                if m > 0 {
                    pmf *= (n - m + 1) as f64 / m as f64 * p / (1.0 - p);
                }
                total += pmf * (1.0 - loss.powi(m as i32)).powi(k);
            }
            total
        };
        for (p, loss, k, n) in [(0.1, 0.3, 2, 64), (0.02, 0.5, 4, 300), (0.5, 0.25, 3, 5), (0.3, 0.0, 2, 10)] {
            let got = super::reassembly_arrival_probability(p, loss, k as u32, n as u32);
            let want = oracle(p, loss, k, n);
            assert!((got - want).abs() < 1e-12, "{p} {loss} {k} {n}: {got} vs {want}");
            let ch = super::ChannelParams::new(loss, 1).unwrap();
            let per_attempt = super::arrival_probability_with(p, super::fragment_success_prob(&ch, k as u32), n as u32);
            let literal = super::arrival_probability(p, &ch, k as u32, n as u32).unwrap();
            assert!(per_attempt <= got + 1e-15 && got <= literal + 1e-15);
        }
        let ch = super::ChannelParams::new(0.2, 1).unwrap();
        let one = super::arrival_probability(0.07, &ch, 1, 40).unwrap();
        let r = super::reassembly_arrival_probability(0.07, 0.2, 1, 40);
        assert!((one - r).abs() < 1e-15);
    }

    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn lossless() -> ChannelParams {
        ChannelParams::new(0.0, 64).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let m = normalize_values(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(m.probabilities(), &[0.25; 4]);
        let m = normalize_values(&[3.0, 1.0]).unwrap();
        assert_eq!(m.probabilities(), &[0.75, 0.25]);
        let m = normalize_values(&[0.0, 5.0, 0.0, 5.0]).unwrap();
        assert_eq!(m.probabilities(), &[0.0, 0.5, 0.0, 0.5]);
    }

    #[test]
    fn normalize_errors() {
        assert_eq!(
            normalize_values(&[0.0, 0.0]),
            Err(ModelError::DegenerateValueMap)
        );
        assert!(matches!(
            normalize_values(&[1.0, -1.0]),
            Err(ModelError::NegativeValue { index: 1, .. })
        ));
        assert_eq!(normalize_values(&[]), Err(ModelError::EmptyBlockSet));
    }

    #[test]
    fn plan_default_image_budget() {
        // 256x144 grayscale in 8x8 blocks, twice the original size.
        let count = (256 / 8) * (144 / 8);
        assert_eq!(count, 576);
        let sizing = SizingParams::from_ratio(64, count, 2.0);
        let plan = plan_transmission(
            ChannelParams::new(0.1, 64).unwrap(),
            sizing,
            ValueMap::uniform(count).unwrap(),
            BlockIndexSet::new(count).unwrap(),
        )
        .unwrap();
        assert_eq!(plan.total_transmissions, 1152);
        assert_eq!(plan.fragments_per_block, 1);
        let sum: f64 = plan.expected_counts.iter().sum();
        assert!(close(sum, 1152.0, 1e-6));
    }

    #[test]
    fn plan_fragment_count() {
        let plan = plan_transmission(
            ChannelParams::new(0.0, 256).unwrap(),
            SizingParams::from_ratio(1024, 2, 1.0),
            ValueMap::uniform(2).unwrap(),
            BlockIndexSet::new(2).unwrap(),
        )
        .unwrap();
        assert_eq!(plan.fragments_per_block, 4);
    }

    #[test]
    fn plan_single_block_certainty() {
        let plan = plan_transmission(
            lossless(),
            SizingParams::from_ratio(64, 1, 1.0),
            ValueMap::uniform(1).unwrap(),
            BlockIndexSet::new(1).unwrap(),
        )
        .unwrap();
        assert_eq!(plan.total_transmissions, 1);
        assert_eq!(plan.expected_counts, vec![1.0]);
        assert_eq!(plan.arrival_probs, vec![1.0]);
    }

    #[test]
    fn plan_errors() {
        let vm = ValueMap::uniform(4).unwrap();
        let set = BlockIndexSet::new(4).unwrap();
        let err = plan_transmission(
            ChannelParams::new(0.0, 48).unwrap(),
            SizingParams::from_ratio(64, 4, 1.0),
            vm.clone(),
            set,
        );
        assert!(matches!(err, Err(ModelError::IndivisibleBlock { .. })));
        let err = plan_transmission(lossless(), SizingParams::from_ratio(64, 4, 0.1), vm.clone(), set);
        assert!(matches!(err, Err(ModelError::EmptyBudget(_))));
        let bad = SizingParams {
            block_size: 64,
            original_size: 100,
            transmit_size: 100.0,
        };
        assert!(matches!(
            plan_transmission(lossless(), bad, vm, set),
            Err(ModelError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn plan_rounds_to_nearest() {
        let vm = ValueMap::uniform(10).unwrap();
        let set = BlockIndexSet::new(10).unwrap();
        let n = |ratio| {
            plan_transmission(lossless(), SizingParams::from_ratio(64, 10, ratio), vm.clone(), set)
                .unwrap()
                .total_transmissions
        };
        assert_eq!(n(1.04), 10);
        assert_eq!(n(1.06), 11);
        assert_eq!(n(0.05), 1);
    }

    #[test]
    fn block_success_examples() {
        let k = |l: f64, k| block_success_prob(&ChannelParams::new(l, 1).unwrap(), k);
        assert_eq!(k(0.0, 3), 1.0);
        assert_eq!(k(1.0, 3), 0.0);
        assert_eq!(k(0.5, 2), 0.75);
    }

    #[test]
    fn arrival_two_transmission_enumeration() {
        // Four equally likely patterns; the block is missing only on (skip, skip).
        let rho = arrival_probability(0.5, &lossless(), 1, 2).unwrap();
        assert!(close(rho, 0.75, 1e-15));
        assert_eq!(arrival_probability(0.0, &ChannelParams::new(0.3, 1).unwrap(), 3, 50).unwrap(), 0.0);
    }

    #[test]
    fn arrival_matches_literal_formula() {
        let ch = ChannelParams::new(0.3, 1).unwrap();
        for &p in &[0.01, 0.2, 0.5, 0.9, 1.0] {
            for &n in &[1u32, 7, 100, 5000] {
                let lk = 0.3f64.powi(2);
                let literal = 1.0 - ((1.0 - p) + p * lk).powi(n as i32);
                let got = arrival_probability(p, &ch, 2, n).unwrap();
                assert!(close(got, literal, 1e-12 * literal.max(1e-3)), "{p} {n}");
            }
        }
    }

    #[test]
    fn arrival_rejects_bad_inputs() {
        assert!(arrival_probability(1.5, &lossless(), 1, 1).is_err());
        assert!(arrival_probability(0.5, &lossless(), 1, 0).is_err());
    }

    #[test]
    fn min_probability_examples() {
        let ch = ChannelParams::new(0.1, 1).unwrap();
        assert_eq!(min_probability_for(0.0, &ch, 1, 10).unwrap(), 0.0);
        assert!(close(min_probability_for(0.75, &lossless(), 1, 2).unwrap(), 0.5, 1e-15));
        assert_eq!(
            min_probability_for(1.0, &ch, 1, 10),
            Err(ModelError::UnattainableRequirement(1.0))
        );
        let dead = ChannelParams::new(1.0, 1).unwrap();
        assert_eq!(
            min_probability_for(0.5, &dead, 1, 10),
            Err(ModelError::ChannelDeliversNothing)
        );
    }

    #[test]
    fn min_probability_matches_root_finding() {
        // Bisection on the equality ρ(p) = R, independent of the closed form.
        let ch = ChannelParams::new(0.1, 1).unwrap();
        let target = 0.99;
        let f = |p: f64| 1.0 - ((1.0 - p) + p * 0.1).powi(100) - target;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        let closed = min_probability_for(target, &ch, 1, 100).unwrap();
        assert!(close(closed, root, 1e-12), "{closed} vs {root}");
        assert!(close(closed, 0.050_008_237_754, 1e-11));
    }

    #[test]
    fn feasibility_examples() {
        let r = Requirements::new(vec![0.5, 0.5]).unwrap();
        let rep = feasibility_check(&r, &lossless(), 1, 1);
        assert_eq!(rep.lhs, 1.0);
        assert_eq!(rep.rhs, 1.0);
        assert_eq!(rep.slack, 0.0);
        assert!(rep.feasible);

        let r = Requirements::new(vec![0.9, 0.9]).unwrap();
        let rep = feasibility_check(&r, &lossless(), 1, 1);
        assert!(close(rep.lhs, 0.2, 1e-15));
        assert!(!rep.feasible);

        let r = Requirements::new(vec![0.0; 5]).unwrap();
        let rep = feasibility_check(&r, &ChannelParams::new(0.9, 1).unwrap(), 1, 3);
        assert_eq!(rep.lhs, 5.0);
        assert!(rep.feasible);
    }

    #[test]
    fn requirements_validation() {
        assert!(matches!(
            Requirements::new(vec![0.2, 1.0]),
            Err(ModelError::UnattainableRequirement(_))
        ));
        assert!(Requirements::new(vec![-0.1]).is_err());
    }

    #[test]
    fn values_from_requirements_examples() {
        let r = Requirements::new(vec![0.5, 0.5]).unwrap();
        let vm = values_from_requirements(&r, &lossless(), 1, 1).unwrap();
        assert_eq!(vm.probabilities(), &[0.5, 0.5]);

        let r = Requirements::new(vec![0.0; 4]).unwrap();
        let vm = values_from_requirements(&r, &lossless(), 1, 1).unwrap();
        assert_eq!(vm.probabilities(), &[0.25; 4]);

        let ch = ChannelParams::new(0.1, 1).unwrap();
        let r = Requirements::new(vec![0.99, 0.0]).unwrap();
        let vm = values_from_requirements(&r, &ch, 1, 100).unwrap();
        let p = vm.probabilities();
        assert!(p[0] >= 0.050007);
        assert!(close(p[0] + p[1], 1.0, 1e-12));
        assert!(arrival_probability(p[0], &ch, 1, 100).unwrap() >= 0.99);

        let r = Requirements::new(vec![0.9, 0.9]).unwrap();
        assert!(matches!(
            values_from_requirements(&r, &lossless(), 1, 1),
            Err(ModelError::Infeasible(_))
        ));
    }

    #[test]
    fn heatmap_examples() {
        let vm = values_from_heatmap(&[10, 30], 0.0).unwrap();
        assert_eq!(vm.probabilities(), &[0.25, 0.75]);
        let vm = values_from_heatmap(&[0, 100], 0.01).unwrap();
        assert_eq!(vm.values(), &[1.0, 100.0]);
        assert!(close(vm.probabilities()[0], 1.0 / 101.0, 1e-15));
        let vm = values_from_heatmap(&[7; 9], 0.01).unwrap();
        assert!(vm.probabilities().iter().all(|&p| close(p, 1.0 / 9.0, 1e-15)));
        assert_eq!(
            values_from_heatmap(&[0, 0], 0.0),
            Err(ModelError::DegenerateValueMap)
        );
    }

    #[test]
    fn top_fraction_breaks_ties_low() {
        let vm = normalize_values(&[1.0, 5.0, 5.0, 2.0, 5.0]).unwrap();
        assert_eq!(vm.top_fraction(0.4), vec![1, 2]);
        assert_eq!(vm.top_fraction(0.0), vec![1]);
    }

    /// Inclusion-exclusion over subsets, feasible for small regions.
    fn coverage_by_inclusion_exclusion(q: &[f64], n: u32) -> f64 {
        let m = q.len();
        (0..(1u32 << m))
            .map(|mask| {
                let mass: f64 = (0..m).filter(|i| mask & (1 << i) != 0).map(|i| q[i]).sum();
                let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                sign * (1.0 - mass).powi(n as i32)
            })
            .sum()
    }

    #[test]
    fn full_coverage_matches_inclusion_exclusion() {
        let probs = [0.05, 0.1, 0.02, 0.2, 0.08, 0.01];
        for &r in &[1.0, 0.75, 0.3] {
            for &n in &[1u32, 3, 6, 20, 80] {
                let q: Vec<f64> = probs.iter().map(|p| p * r).collect();
                let oracle = coverage_by_inclusion_exclusion(&q, n);
                let got = region_full_coverage_probability(&probs, r, n);
                assert!(close(got, oracle, 1e-10), "r={r} n={n}: {got} vs {oracle}");
                assert!(got <= region_independent_coverage(&probs, r, n) + 1e-12);
            }
        }
    }

    #[test]
    fn full_coverage_single_block_is_arrival() {
        let got = region_full_coverage_probability(&[0.3], 0.8, 10);
        assert!(close(got, arrival_probability_with(0.3, 0.8, 10), 1e-12));
        assert_eq!(region_full_coverage_probability(&[1.0], 1.0, 1), 1.0);
        assert_eq!(region_full_coverage_probability(&[0.5, 0.5], 1.0, 1), 0.0);
    }
}

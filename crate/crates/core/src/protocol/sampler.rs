use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ProtocolError;
use crate::channel::unit_f64;

/// Weighted block sampler using Vose's alias method.
///
/// Draw algorithm, fixed so logs reproduce across platforms: the stream is
/// ChaCha8 seeded with `seed_from_u64`. Each draw takes one 64-bit word `w`
/// and picks column `(w * m) >> 64` among the `m` positive-probability
/// blocks, then takes a second word as a 53-bit uniform `u` and keeps the
/// column if `u < threshold[column]`, else its alias. Blocks with zero
/// probability are excluded from the table and can never be drawn.
#[derive(Debug, Clone)]
pub struct Sampler {
    probabilities: Vec<f64>,
    ids: Vec<u32>,
    threshold: Vec<f64>,
    alias: Vec<u32>,
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(probabilities: &[f64], seed: u64) -> Result<Self, ProtocolError> {
        let ids: Vec<u32> = probabilities
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, _)| i as u32)
            .collect();
        if ids.is_empty() || probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(ProtocolError::InvalidSession(
                "sampler needs non-negative probabilities with positive mass".into(),
            ));
        }
        let m = ids.len();
        let total: f64 = ids.iter().map(|&i| probabilities[i as usize]).sum();
        let mut scaled: Vec<f64> = ids
            .iter()
            .map(|&i| probabilities[i as usize] * m as f64 / total)
            .collect();
        let mut threshold = vec![1.0; m];
        let mut alias: Vec<u32> = (0..m as u32).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) =
            (0..m).partition(|&j| scaled[j] < 1.0);
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            threshold[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers are 1 up to rounding.
        for j in small.into_iter().chain(large) {
            threshold[j] = 1.0;
        }
        Ok(Self {
            probabilities: probabilities.to_vec(),
            ids,
            threshold,
            alias,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn sample(&mut self) -> usize {
        let m = self.ids.len() as u128;
        let column = ((self.rng.next_u64() as u128 * m) >> 64) as usize;
        let u = unit_f64(&mut self.rng);
        let slot = if u < self.threshold[column] {
            column
        } else {
            self.alias[column] as usize
        };
        self.ids[slot] as usize
    }
}

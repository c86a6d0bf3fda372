//! Passenger demand: piecewise-constant Poisson rate schedules per ordered
//! origin-destination pair.
//!
//! Arrivals are generated counter-style: the count for `(step, pair)` is drawn
//! from a generator keyed only by `(seed, step, pair)`, so the stream does not
//! depend on the order in which entries are evaluated or on the controller in
//! use.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::link_count;

/// One piece of the rate schedule. Rates are customers per control step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandBlock {
    pub duration: usize,
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandScenario {
    blocks: Vec<DemandBlock>,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArrivalBatch {
    pub step: usize,
    pub counts: Vec<u32>,
}

impl ArrivalBatch {
    pub fn zeros(step: usize, links: usize) -> Self {
        Self {
            step,
            counts: vec![0; links],
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

impl DemandScenario {
    pub fn new(blocks: Vec<DemandBlock>, seed: u64) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::InvalidScenario("scenario has no blocks".into()));
        };
        let width = first.rates.len();
        for (i, b) in blocks.iter().enumerate() {
            if b.duration == 0 {
                return Err(Error::InvalidScenario(format!("block {i} has zero duration")));
            }
            if b.rates.len() != width {
                return Err(Error::InvalidScenario(format!(
                    "block {i} has {} rates, expected {width}",
                    b.rates.len()
                )));
            }
            if b.rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
                return Err(Error::InvalidScenario(format!(
                    "block {i} has a negative or non-finite rate"
                )));
            }
        }
        Ok(Self { blocks, seed })
    }

    /// A single block of constant rates.
    pub fn constant(rates: Vec<f64>, duration: usize, seed: u64) -> Result<Self> {
        Self::new(vec![DemandBlock { duration, rates }], seed)
    }

    pub fn blocks(&self) -> &[DemandBlock] {
        &self.blocks
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            blocks: self.blocks.clone(),
            seed,
        }
    }

    pub fn pair_count(&self) -> usize {
        self.blocks[0].rates.len()
    }

    pub fn duration(&self) -> usize {
        self.blocks.iter().map(|b| b.duration).sum()
    }

    /// Index of the block containing `step`.
    pub fn block_index(&self, step: usize) -> Result<usize> {
        let mut end = 0;
        for (i, b) in self.blocks.iter().enumerate() {
            end += b.duration;
            if step < end {
                return Ok(i);
            }
        }
        Err(Error::StepOutOfRange {
            step,
            len: self.duration(),
        })
    }

    /// First step of every block.
    pub fn block_starts(&self) -> Vec<usize> {
        let mut starts = Vec::with_capacity(self.blocks.len());
        let mut t = 0;
        for b in &self.blocks {
            starts.push(t);
            t += b.duration;
        }
        starts
    }

    /// Block with the largest total rate.
    pub fn peak_block(&self) -> &DemandBlock {
        self.blocks
            .iter()
            .max_by(|a, b| a.rates.iter().sum::<f64>().total_cmp(&b.rates.iter().sum::<f64>()))
            .unwrap()
    }
}

pub fn active_lambda(scenario: &DemandScenario, step: usize) -> Result<&[f64]> {
    let i = scenario.block_index(step)?;
    Ok(&scenario.blocks[i].rates)
}

pub fn total_expected_requests(scenario: &DemandScenario) -> f64 {
    scenario
        .blocks
        .iter()
        .map(|b| b.duration as f64 * b.rates.iter().sum::<f64>())
        .sum()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator seed for one `(seed, step, pair)` cell.
fn cell_seed(seed: u64, step: usize, pair: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ step as u64) ^ (pair as u64).rotate_left(32))
}

/// One Poisson draw with mean `lambda`, keyed by the cell.
fn poisson_cell(lambda: f64, seed: u64, step: usize, pair: usize) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(seed, step, pair));
    let draw: f64 = Poisson::new(lambda)
        .expect("rates validated positive and finite")
        .sample(&mut rng);
    draw as u32
}

pub fn sample_arrivals(scenario: &DemandScenario, step: usize) -> Result<ArrivalBatch> {
    let rates = active_lambda(scenario, step)?;
    let counts = rates
        .iter()
        .enumerate()
        .map(|(pair, &lambda)| poisson_cell(lambda, scenario.seed, step, pair))
        .collect();
    Ok(ArrivalBatch { step, counts })
}

/// Step-independent scenario description: block lengths in minutes and rate
/// matrices in customers per hour. Converted to per-step rates once, by
/// [`ScenarioFile::to_scenario`].
///
/// ```toml
/// zones = 3
/// [[block]]
/// minutes = 120
/// label = "07:00-09:00"   # optional
/// rates_per_hour = [[0, 4, 2], [1, 0, 3], [2, 2, 0]]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub zones: usize,
    #[serde(rename = "block")]
    pub blocks: Vec<BlockSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub minutes: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Row = origin zone, column = destination zone, in zone-id order.
    pub rates_per_hour: Vec<Vec<f64>>,
}

impl ScenarioFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        file.check()?;
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    fn check(&self) -> Result<()> {
        let n = self.zones;
        if n < 2 {
            return Err(Error::InvalidScenario("need at least 2 zones".into()));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.rates_per_hour.len() != n || b.rates_per_hour.iter().any(|row| row.len() != n) {
                return Err(Error::InvalidScenario(format!("block {i}: rate matrix must be {n}x{n}")));
            }
            for (r, row) in b.rates_per_hour.iter().enumerate() {
                if row[r] != 0.0 {
                    return Err(Error::InvalidScenario(format!(
                        "block {i}: intra-zone rate at zone index {r} must be 0"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn total_minutes(&self) -> f64 {
        self.blocks.iter().map(|b| b.minutes).sum()
    }

    /// Per-step scenario for a given control step length. Every block must
    /// span a whole number of steps.
    pub fn to_scenario(&self, step_minutes: f64, seed: u64) -> Result<DemandScenario> {
        self.check()?;
        let n = self.zones;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            let steps = b.minutes / step_minutes;
            let whole = steps.round();
            if (steps - whole).abs() > 1e-9 || whole < 1.0 {
                return Err(Error::InvalidScenario(format!(
                    "block {i}: {} minutes is not a whole number of {step_minutes}-minute steps",
                    b.minutes
                )));
            }
            let mut rates = Vec::with_capacity(link_count(n));
            for r in 0..n {
                for s in 0..n {
                    if r != s {
                        rates.push(b.rates_per_hour[r][s] * step_minutes / 60.0);
                    }
                }
            }
            blocks.push(DemandBlock {
                duration: whole as usize,
                rates,
            });
        }
        DemandScenario::new(blocks, seed)
    }
}

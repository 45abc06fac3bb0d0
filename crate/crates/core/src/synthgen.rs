//! Synthetic labelled flow tables with class-conditional feature
//! distributions.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{Cell, RawTable};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const LABEL_COLUMN: &str = "Label";
pub const BENIGN_LABEL: &str = "BENIGN";
pub const ATTACK_LABEL: &str = "ATTACK";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, std: f64 },
    Bernoulli { p: f64 },
    Constant { value: f64 },
}

impl Distribution {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Distribution::Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
            Distribution::Normal { mean, std } => mean.is_finite() && std.is_finite() && std >= 0.0,
            Distribution::Bernoulli { p } => (0.0..=1.0).contains(&p),
            Distribution::Constant { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid distribution {self:?}")))
        }
    }

    /// Draws one value. Every variant consumes a fixed number of RNG words
    /// (constant: none, uniform and bernoulli: one, normal: two).
    fn sample(&self, rng: &mut SeededRng) -> f64 {
        match *self {
            Distribution::Uniform { low, high } => low + (high - low) * rng.uniform(),
            Distribution::Normal { mean, std } => mean + std * rng.normal(),
            Distribution::Bernoulli { p } => {
                if rng.uniform() < p {
                    1.0
                } else {
                    0.0
                }
            }
            Distribution::Constant { value } => value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub benign: Distribution,
    pub attack: Distribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub features: Vec<FeatureSpec>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::invalid("synthetic spec has no features"));
        }
        let mut names = HashSet::new();
        for f in &self.features {
            if f.name == LABEL_COLUMN || !names.insert(f.name.as_str()) {
                return Err(Error::invalid(format!("duplicate feature name {:?}", f.name)));
            }
            f.benign.validate()?;
            f.attack.validate()?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let spec: Self = crate::dataio::read_json(path)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::dataio::write_json(path, self)
    }

    /// Looks up a built-in preset by name.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "ddos-like" => Some(ddos_like()),
            _ => None,
        }
    }
}

pub const PRESETS: [&str; 1] = ["ddos-like"];

/// Reflection-attack flavoured preset.
///
/// Attack flows arrive inbound, carry near-zero minimum packet length and
/// almost never set URG, while benign flows show the opposite tendencies.
/// Every informative continuous feature is separated by at least four
/// standard deviations. A handful of features are identical across classes
/// and two are constant, and the identifier columns are present so the
/// default drop list has something to remove.
fn ddos_like() -> SynthSpec {
    use Distribution::*;
    let f = |name: &str, benign, attack| FeatureSpec {
        name: name.to_string(),
        benign,
        attack,
    };
    SynthSpec {
        features: vec![
            f("Source Port", Uniform { low: 1024.0, high: 65535.0 }, Uniform { low: 1024.0, high: 65535.0 }),
            f("Destination Port", Uniform { low: 0.0, high: 1024.0 }, Uniform { low: 0.0, high: 1024.0 }),
            f("Inbound", Bernoulli { p: 0.05 }, Bernoulli { p: 0.97 }),
            f("Min Packet Length", Normal { mean: 60.0, std: 8.0 }, Normal { mean: 2.0, std: 1.5 }),
            f("URG Flag Count", Bernoulli { p: 0.6 }, Bernoulli { p: 0.02 }),
            f("Flow Duration", Normal { mean: 50_000.0, std: 8_000.0 }, Normal { mean: 1_500.0, std: 600.0 }),
            f("Fwd Packet Length Max", Normal { mean: 400.0, std: 50.0 }, Normal { mean: 1_400.0, std: 60.0 }),
            f("Fwd Packet Length Mean", Normal { mean: 250.0, std: 40.0 }, Normal { mean: 1_200.0, std: 50.0 }),
            f("Packet Length Std", Normal { mean: 180.0, std: 25.0 }, Normal { mean: 10.0, std: 6.0 }),
            f("Average Packet Size", Normal { mean: 300.0, std: 45.0 }, Normal { mean: 1_250.0, std: 55.0 }),
            f("Total Fwd Packets", Normal { mean: 20.0, std: 4.0 }, Normal { mean: 2.0, std: 0.5 }),
            f("Init_Win_bytes_forward", Normal { mean: 8_000.0, std: 1_200.0 }, Normal { mean: 200.0, std: 150.0 }),
            f("ACK Flag Count", Bernoulli { p: 0.7 }, Bernoulli { p: 0.1 }),
            f("Flow IAT Mean", Normal { mean: 4_000.0, std: 600.0 }, Normal { mean: 100.0, std: 60.0 }),
            f("Protocol", Bernoulli { p: 0.2 }, Bernoulli { p: 0.95 }),
            f("Down/Up Ratio", Normal { mean: 1.0, std: 0.3 }, Normal { mean: 1.0, std: 0.3 }),
            f("Active Mean", Normal { mean: 100.0, std: 30.0 }, Normal { mean: 100.0, std: 30.0 }),
            f("Idle Std", Uniform { low: 0.0, high: 500.0 }, Uniform { low: 0.0, high: 500.0 }),
            f("Bwd IAT Min", Normal { mean: 30.0, std: 10.0 }, Normal { mean: 30.0, std: 10.0 }),
            f("CWE Flag Count", Bernoulli { p: 0.5 }, Bernoulli { p: 0.5 }),
            f("Subflow Bwd Bytes", Uniform { low: 0.0, high: 3_000.0 }, Uniform { low: 0.0, high: 3_000.0 }),
            f("Fwd Header Length", Normal { mean: 300.0, std: 80.0 }, Normal { mean: 300.0, std: 80.0 }),
            f("Bwd Packet Length Min", Normal { mean: 5.0, std: 2.0 }, Normal { mean: 5.0, std: 2.0 }),
            f("ECE Flag Count", Bernoulli { p: 0.1 }, Bernoulli { p: 0.1 }),
            f("Bwd PSH Flags", Constant { value: 0.0 }, Constant { value: 0.0 }),
            f("Fwd URG Flags", Constant { value: 0.0 }, Constant { value: 0.0 }),
        ],
    }
}

/// Draws `n_benign` rows labelled [`BENIGN_LABEL`] followed by `n_attack` rows
/// labelled [`ATTACK_LABEL`]. Cells are drawn row by row, feature by feature.
pub fn generate(spec: &SynthSpec, n_benign: usize, n_attack: usize, seed: u64) -> Result<RawTable> {
    spec.validate()?;
    if n_benign + n_attack < 2 {
        return Err(Error::invalid("need at least two rows"));
    }
    let mut rng = SeededRng::new(seed);
    let mut column_names: Vec<String> = spec.features.iter().map(|f| f.name.clone()).collect();
    column_names.push(LABEL_COLUMN.to_string());
    let mut rows = Vec::with_capacity(n_benign + n_attack);
    for i in 0..n_benign + n_attack {
        let benign = i < n_benign;
        let mut row: Vec<Cell> = spec
            .features
            .iter()
            .map(|f| {
                let d = if benign { &f.benign } else { &f.attack };
                Cell::Number(d.sample(&mut rng))
            })
            .collect();
        row.push(Cell::Text(
            if benign { BENIGN_LABEL } else { ATTACK_LABEL }.to_string(),
        ));
        rows.push(row);
    }
    RawTable::new(column_names, rows, LABEL_COLUMN)
}

//! Hyperparameter grid and feature-family resolution.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::svm::{KernelConfig, KernelKind};

pub const DEFAULT_C: [f64; 5] = [1e-1, 1e0, 1e1, 1e2, 1e3];
pub const DEFAULT_GAMMA: [f64; 5] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
pub const W2V2_LAYERS: std::ops::RangeInclusive<u32> = 1..=12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub kernels: Vec<KernelKind>,
    pub c_set: Vec<f64>,
    pub gamma_set: Vec<f64>,
    /// Layers searched for layered feature families. `None` means
    /// every layer 1..=12.
    pub layer_set: Option<Vec<u32>>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            kernels: vec![KernelKind::Linear, KernelKind::Rbf],
            c_set: DEFAULT_C.to_vec(),
            gamma_set: DEFAULT_GAMMA.to_vec(),
            layer_set: None,
        }
    }
}

/// One point of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperPoint {
    pub kernel: KernelConfig,
    pub c: f64,
    pub layer: Option<u32>,
    pub feature_set: String,
}

impl std::fmt::Display for HyperPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {} C={:e}", self.feature_set, self.kernel, self.c)
    }
}

/// Feature set name of one layer of a layered family, e.g. `w2v2.L07`.
pub fn layer_feature_set(family: &str, layer: u32) -> String {
    format!("{family}.L{layer:02}")
}

/// How a feature family maps onto a corpus's feature sets.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilySets {
    Single(String),
    Layered(Vec<(u32, String)>),
}

impl HyperGrid {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |m: String| Err(ProtocolError::Precondition(m));
        if self.kernels.is_empty() || self.c_set.is_empty() {
            return bad("grid needs at least one kernel and one C".into());
        }
        if self.kernels.contains(&KernelKind::Rbf) && self.gamma_set.is_empty() {
            return bad("RBF kernel needs at least one gamma".into());
        }
        if let Some(c) = self.c_set.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return bad(format!("C must be positive, got {c}"));
        }
        if let Some(g) = self.gamma_set.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return bad(format!("gamma must be positive, got {g}"));
        }
        Ok(())
    }

    /// Resolves `family` against the feature sets available on every
    /// session. A set named exactly `family` wins; otherwise the family is
    /// layered and each grid layer must exist as `family.LNN`.
    pub fn resolve_family(&self, family: &str, available: &BTreeSet<String>) -> Result<FamilySets, ProtocolError> {
        if available.contains(family) {
            return Ok(FamilySets::Single(family.to_string()));
        }
        let prefix = format!("{family}.L");
        if !available.iter().any(|s| s.starts_with(&prefix)) {
            return Err(ProtocolError::UnknownFamily(family.to_string()));
        }
        let layers: Vec<u32> = match &self.layer_set {
            Some(l) => {
                let mut l = l.clone();
                l.sort_unstable();
                l.dedup();
                l
            }
            None => W2V2_LAYERS.collect(),
        };
        let mut out = Vec::new();
        for layer in layers {
            let name = layer_feature_set(family, layer);
            if !available.contains(&name) {
                return Err(ProtocolError::MissingLayer { family: family.to_string(), layer });
            }
            out.push((layer, name));
        }
        Ok(FamilySets::Layered(out))
    }

    /// Grid points in the fixed order: kernel (linear first), then layer,
    /// then C, then gamma, all ascending.
    pub fn points(&self, sets: &FamilySets) -> Result<Vec<HyperPoint>, ProtocolError> {
        self.validate()?;
        let layers: Vec<(Option<u32>, String)> = match sets {
            FamilySets::Single(name) => vec![(None, name.clone())],
            FamilySets::Layered(l) => l.iter().map(|(layer, name)| (Some(*layer), name.clone())).collect(),
        };
        let mut kernels = self.kernels.clone();
        kernels.sort_unstable();
        kernels.dedup();
        let mut cs = self.c_set.clone();
        cs.sort_by(f64::total_cmp);
        cs.dedup();
        let mut gammas = self.gamma_set.clone();
        gammas.sort_by(f64::total_cmp);
        gammas.dedup();

        let mut points = Vec::new();
        for kind in kernels {
            for (layer, name) in &layers {
                for &c in &cs {
                    let kernels: Vec<KernelConfig> = match kind {
                        KernelKind::Linear => vec![KernelConfig::Linear],
                        KernelKind::Rbf => gammas
                            .iter()
                            .map(|&g| KernelConfig::rbf(g))
                            .collect::<Result<_, _>>()?,
                    };
                    for kernel in kernels {
                        points.push(HyperPoint {
                            kernel,
                            c,
                            layer: *layer,
                            feature_set: name.clone(),
                        });
                    }
                }
            }
        }
        Ok(points)
    }
}

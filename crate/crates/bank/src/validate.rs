//! Stability of reference answers under perturbed inputs, shifted solver
//! tolerances and reordered commutative steps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use stepwise_tools::json::canonical_string;

use crate::compare::values_match;
use crate::instance::{concretize, instance_id, instantiate, with_derived, Concrete, Variation};
use crate::template::ProblemTemplate;

pub const PERTURBATION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantOutcome {
    pub seed: u64,
    pub variant: String,
    pub stable: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub template_id: String,
    pub n_seeds: usize,
    pub outcomes: Vec<VariantOutcome>,
}

impl ValidationReport {
    pub fn stable(&self) -> bool {
        self.outcomes.iter().all(|o| o.stable)
    }

    pub fn failures(&self) -> impl Iterator<Item = &VariantOutcome> {
        self.outcomes.iter().filter(|o| !o.stable)
    }
}

fn variants(template: &ProblemTemplate, sampled: &BTreeMap<String, f64>) -> Vec<(String, BTreeMap<String, f64>, Variation)> {
    let mut out = Vec::new();
    for sign in [1.0, -1.0] {
        let p = sampled
            .iter()
            .enumerate()
            .map(|(i, (k, v))| {
                let s = if i % 2 == 0 { sign } else { -sign };
                (k.clone(), v * (1.0 + s * PERTURBATION))
            })
            .collect();
        let name = if sign > 0.0 { "perturb+" } else { "perturb-" };
        out.push((name.to_string(), p, Variation::default()));
    }
    for (name, scale) in [("tolerance*10", 10.0), ("tolerance/10", 0.1)] {
        let v = Variation {
            tolerance_scale: Some(scale),
            ..Default::default()
        };
        out.push((name.to_string(), sampled.clone(), v));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in template.canonical_trace.iter().enumerate() {
        if let Some(g) = &s.commutative_group {
            groups.entry(g).or_default().push(i);
        }
    }
    for (g, members) in groups {
        let mut order: Vec<usize> = (0..template.canonical_trace.len()).collect();
        for (slot, idx) in members.iter().zip(members.iter().rev()) {
            order[*slot] = *idx;
        }
        let v = Variation {
            order: Some(order),
            ..Default::default()
        };
        out.push((format!("reorder:{g}"), sampled.clone(), v));
    }
    out
}

fn compare(base: &Concrete, other: &Concrete, exact: bool) -> Result<(), String> {
    if let Some(u) = other.unmet.first() {
        return Err(u.clone());
    }
    for (a, b) in base.reference.iter().zip(&other.reference) {
        if !values_match(&a.value, &b.value, a.equivalence, a.tolerance) {
            return Err(format!("answer {} moved: {} -> {}", a.name, a.value, b.value));
        }
    }
    if exact {
        for (id, a) in &base.execution.artifacts {
            let b = &other.execution.artifacts[id];
            if canonical_string(&a.output) != canonical_string(&b.output) {
                return Err(format!("{id} output differs after reordering"));
            }
        }
    }
    Ok(())
}

fn validate_seed(template: &ProblemTemplate, seed: u64) -> Vec<VariantOutcome> {
    let outcome = |variant: &str, r: Result<(), String>| VariantOutcome {
        seed,
        variant: variant.to_string(),
        stable: r.is_ok(),
        detail: r.err().unwrap_or_default(),
    };
    let inst = match instantiate(template, seed) {
        Ok(i) => i,
        Err(e) => return vec![outcome("instantiate", Err(e.to_string()))],
    };
    let sampled: BTreeMap<String, f64> = inst
        .parameters
        .iter()
        .filter(|(k, _)| template.parameters.contains_key(*k))
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    let id = instance_id(&template.id, seed);
    let base = match concretize(template, &inst.parameters, &Variation::default(), &id) {
        Ok(c) => c,
        Err(e) => return vec![outcome("base", Err(e.to_string()))],
    };
    let mut out = vec![outcome("base", Ok(()))];
    for (name, params, variation) in variants(template, &sampled) {
        let exact = variation.order.is_some();
        let r = with_derived(template, params)
            .and_then(|p| concretize(template, &p, &variation, &id).map_err(|e| e.to_string()))
            .and_then(|c| compare(&base, &c, exact));
        out.push(outcome(&name, r));
    }
    out
}

/// Runs every variant for seeds `0..n_seeds`; failures are report entries.
pub fn validate(template: &ProblemTemplate, n_seeds: usize) -> ValidationReport {
    let seeds: Vec<u64> = (0..n_seeds as u64).collect();
    #[cfg(feature = "parallel")]
    let per_seed: Vec<Vec<VariantOutcome>> = {
        use rayon::prelude::*;
        seeds.par_iter().map(|s| validate_seed(template, *s)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_seed: Vec<Vec<VariantOutcome>> = seeds.iter().map(|s| validate_seed(template, *s)).collect();
    ValidationReport {
        template_id: template.id.clone(),
        n_seeds,
        outcomes: per_seed.into_iter().flatten().collect(),
    }
}

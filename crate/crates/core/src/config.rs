//! JSON problem specifications: parsing, validation, defaulting.
//!
//! A spec fully describes one experiment: domain, constraint body, problem
//! constants, spacing, solver knobs, and the RNG seed. Unknown top-level
//! keys are rejected; every validation error names the offending field.

use serde::{Deserialize, Serialize};

use crate::convex::{BodyFamily, ConvexBody};
use crate::error::{Error, Result};
use crate::grid::DomainShape;

/// Which formulation(s) a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    Obstacle,
    GradientConstrained,
    VectorValued,
    Both,
}

/// Scalar source or vector source direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSpec {
    Scalar(f64),
    Vector(Vec<f64>),
}

/// Config form of the zero-order term. Absent means the linear `-eta v`.
/// `quadratic` adds `coeff v^2` to the linear part (a pluggable convex term).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ZeroOrderSpec {
    Linear,
    Quadratic { coeff: f64 },
}

fn default_k() -> f64 {
    1.0
}
fn default_omega() -> f64 {
    1.8
}
fn default_psor_tol() -> f64 {
    1e-10
}
fn default_tol_act() -> f64 {
    1e-9
}
fn default_psor_max_sweeps() -> usize {
    200_000
}
fn default_rho() -> f64 {
    10.0
}
fn default_admm_tol() -> f64 {
    1e-8
}
fn default_admm_max_iters() -> usize {
    50_000
}

/// Full description of one variational problem plus solver knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub domain: DomainShape,
    pub body: BodyFamily,
    #[serde(default)]
    pub formulation: Option<Formulation>,
    #[serde(default)]
    pub c: f64,
    #[serde(default = "default_k")]
    pub k: f64,
    pub eta: EtaSpec,
    #[serde(default)]
    pub zero_order: Option<ZeroOrderSpec>,
    pub h: f64,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default = "default_psor_tol")]
    pub psor_tol: f64,
    #[serde(default = "default_tol_act")]
    pub tol_act: f64,
    #[serde(default = "default_psor_max_sweeps")]
    pub psor_max_sweeps: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_admm_tol")]
    pub admm_tol: f64,
    #[serde(default = "default_admm_max_iters")]
    pub admm_max_iters: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ProblemSpec {
    /// The formulation after defaulting: `both` for scalar sources,
    /// `vector_valued` for vector ones.
    pub fn effective_formulation(&self) -> Formulation {
        match self.formulation {
            Some(f) => f,
            None => match self.eta {
                EtaSpec::Scalar(_) => Formulation::Both,
                EtaSpec::Vector(_) => Formulation::VectorValued,
            },
        }
    }

    pub fn scalar_eta(&self) -> Option<f64> {
        match &self.eta {
            EtaSpec::Scalar(v) => Some(*v),
            EtaSpec::Vector(_) => None,
        }
    }

    pub fn vector_eta(&self) -> Option<&[f64]> {
        match &self.eta {
            EtaSpec::Vector(v) => Some(v),
            EtaSpec::Scalar(_) => None,
        }
    }

    /// The constraint body in the domain's dimension.
    pub fn convex_body(&self) -> Result<ConvexBody> {
        ConvexBody::new(self.domain.dim(), self.body.clone())
    }

    /// Field-by-field validation; returns the spec with defaults in place.
    pub fn validate(mut self) -> Result<Self> {
        let field = |name: &str, message: String| Error::Config {
            field: name.to_string(),
            message,
        };
        self.domain = self
            .domain
            .clone()
            .validated()
            .map_err(|e| field("domain", e.to_string()))?;
        self.convex_body().map_err(|e| field("body", e.to_string()))?;
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(field("h", format!("spacing {} must be positive", self.h)));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(field("k", format!("constraint level {} must be positive", self.k)));
        }
        if !self.c.is_finite() {
            return Err(field("c", "boundary value must be finite".into()));
        }
        match &self.eta {
            EtaSpec::Scalar(v) => {
                if !v.is_finite() {
                    return Err(field("eta", "source must be finite".into()));
                }
                if self.formulation == Some(Formulation::VectorValued) {
                    return Err(field(
                        "formulation",
                        "vector_valued needs a vector eta".into(),
                    ));
                }
            }
            EtaSpec::Vector(v) => {
                if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                    return Err(field("eta", "vector source must be finite and nonempty".into()));
                }
                if v.iter().all(|&x| x == 0.0) {
                    return Err(field("eta", "vector source must be nonzero".into()));
                }
                match self.effective_formulation() {
                    Formulation::VectorValued => {}
                    other => {
                        return Err(field(
                            "formulation",
                            format!("vector eta requires vector_valued, got {other:?}"),
                        ))
                    }
                }
                if self.zero_order.is_some() {
                    return Err(field(
                        "zero_order",
                        "vector problems take their source from eta only".into(),
                    ));
                }
            }
        }
        if let Some(ZeroOrderSpec::Quadratic { coeff }) = self.zero_order {
            if !(coeff >= 0.0 && coeff.is_finite()) {
                return Err(field(
                    "zero_order",
                    format!("quadratic coefficient {coeff} must be nonnegative"),
                ));
            }
        }
        if !(self.omega > 0.0 && self.omega < 2.0) {
            return Err(field("omega", format!("relaxation {} must lie in (0, 2)", self.omega)));
        }
        for (name, value) in [
            ("psor_tol", self.psor_tol),
            ("tol_act", self.tol_act),
            ("rho", self.rho),
            ("admm_tol", self.admm_tol),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(field(name, format!("{value} must be positive")));
            }
        }
        if self.psor_max_sweeps == 0 || self.admm_max_iters == 0 {
            return Err(field("psor_max_sweeps", "iteration caps must be positive".into()));
        }
        Ok(self)
    }
}

/// Parses and validates a JSON spec. Parse errors carry serde's line/column
/// diagnostics; validation errors name the field.
pub fn parse_config(text: &str) -> Result<ProblemSpec> {
    let spec: ProblemSpec = serde_json::from_str(text).map_err(|e| Error::Config {
        field: "json".into(),
        message: e.to_string(),
    })?;
    spec.validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let spec = parse_config(
            r#"{
                "domain": {"kind": "interval", "a": -1.0, "b": 1.0},
                "body": {"family": "ball", "radius": 1.0},
                "eta": 4.0,
                "h": 0.00390625
            }"#,
        )
        .unwrap();
        assert_eq!(spec.omega, 1.8);
        assert_eq!(spec.psor_tol, 1e-10);
        assert_eq!(spec.k, 1.0);
        assert_eq!(spec.rho, 10.0);
        assert_eq!(spec.effective_formulation(), Formulation::Both);
    }

    #[test]
    fn nonpositive_k_is_rejected() {
        let err = parse_config(
            r#"{
                "domain": {"kind": "interval", "a": -1.0, "b": 1.0},
                "body": {"family": "ball", "radius": 1.0},
                "eta": 4.0,
                "k": -1.0,
                "h": 0.01
            }"#,
        )
        .unwrap_err();
        match err {
            Error::Config { field, .. } => assert_eq!(field, "k"),
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn vector_config_resolves_to_reduction_path() {
        let spec = parse_config(
            r#"{
                "domain": {"kind": "rectangle", "corner": [0.0, 0.0], "widths": [1.0, 1.0]},
                "body": {"family": "pball", "p": 3.0, "radius": 1.0},
                "eta": [3.0, 4.0],
                "h": 0.0625
            }"#,
        )
        .unwrap();
        assert_eq!(spec.effective_formulation(), Formulation::VectorValued);
        // Round trip through JSON preserves the spec.
        let echoed = serde_json::to_string(&spec).unwrap();
        let back: ProblemSpec = serde_json::from_str(&echoed).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config(
            r#"{
                "domain": {"kind": "interval", "a": -1.0, "b": 1.0},
                "body": {"family": "ball", "radius": 1.0},
                "eta": 4.0,
                "h": 0.01,
                "workers": 8
            }"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("workers"), "{err}");
    }

    #[test]
    fn scalar_eta_cannot_request_vector_formulation() {
        let err = parse_config(
            r#"{
                "domain": {"kind": "interval", "a": -1.0, "b": 1.0},
                "body": {"family": "ball", "radius": 1.0},
                "formulation": "vector_valued",
                "eta": 4.0,
                "h": 0.01
            }"#,
        )
        .unwrap_err();
        match err {
            Error::Config { field, .. } => assert_eq!(field, "formulation"),
            other => panic!("unexpected: {other}"),
        }
    }
}

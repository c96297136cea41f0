//! Feature evaluation: measured actuals against nominal dimensions and tolerances.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decimal::Millimetres;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QualityError {
    #[error("invalid feature spec {feature_id:?}: {reason}")]
    InvalidSpec { feature_id: String, reason: String },
    #[error("invalid measurement for {feature_id:?}: {reason}")]
    InvalidMeasurement { feature_id: String, reason: String },
    #[error("missing measurement for feature {0:?}")]
    MissingMeasurement(String),
    #[error("measurement given for unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("quality report is invalid: {0}")]
    InvalidReport(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    /// Nominal size with a symmetric ± tolerance.
    Dimension,
    /// Form deviation (e.g. flatness) with only an upper bound.
    Band,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub feature_id: String,
    pub display_name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal_mm: Option<Millimetres>,
    pub tolerance_mm: Millimetres,
    #[serde(default)]
    pub description: String,
}

impl FeatureSpec {
    pub fn dimension(
        feature_id: &str,
        display_name: &str,
        nominal_mm: Millimetres,
        tolerance_mm: Millimetres,
        description: &str,
    ) -> Self {
        Self {
            feature_id: feature_id.to_owned(),
            display_name: display_name.to_owned(),
            kind: FeatureKind::Dimension,
            nominal_mm: Some(nominal_mm),
            tolerance_mm,
            description: description.to_owned(),
        }
    }

    pub fn band(
        feature_id: &str,
        display_name: &str,
        tolerance_mm: Millimetres,
        description: &str,
    ) -> Self {
        Self {
            feature_id: feature_id.to_owned(),
            display_name: display_name.to_owned(),
            kind: FeatureKind::Band,
            nominal_mm: None,
            tolerance_mm,
            description: description.to_owned(),
        }
    }

    pub fn validate(&self) -> Result<(), QualityError> {
        let invalid = |reason: &str| QualityError::InvalidSpec {
            feature_id: self.feature_id.clone(),
            reason: reason.to_owned(),
        };
        if self.feature_id.is_empty() {
            return Err(invalid("feature_id is empty"));
        }
        if !self
            .feature_id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
        {
            return Err(invalid(
                "feature_id may only contain ASCII letters, digits, '_' and '-'",
            ));
        }
        if self.tolerance_mm.is_negative() {
            return Err(invalid("tolerance_mm is negative"));
        }
        match (self.kind, self.nominal_mm) {
            (FeatureKind::Dimension, None) => Err(invalid("Dimension feature requires nominal_mm")),
            (FeatureKind::Band, Some(_)) => Err(invalid("Band feature must not carry nominal_mm")),
            _ => Ok(()),
        }
    }
}

/// Checks spec invariants and feature_id uniqueness across a definition.
pub fn validate_specs(specs: &[FeatureSpec]) -> Result<(), QualityError> {
    let mut seen = BTreeSet::new();
    for spec in specs {
        spec.validate()?;
        if !seen.insert(spec.feature_id.as_str()) {
            return Err(QualityError::InvalidSpec {
                feature_id: spec.feature_id.clone(),
                reason: "duplicate feature_id".into(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementRecord {
    pub feature_id: String,
    pub actual_mm: Millimetres,
    pub deviation_mm: Millimetres,
    pub in_spec: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityReport {
    pub workpiece_id: String,
    pub product_name: String,
    pub records: Vec<MeasurementRecord>,
    pub created_at: DateTime<Utc>,
}

impl QualityReport {
    pub fn validate(&self) -> Result<(), QualityError> {
        if self.records.is_empty() {
            return Err(QualityError::InvalidReport("report has no records".into()));
        }
        let mut seen = BTreeSet::new();
        for r in &self.records {
            if !seen.insert(r.feature_id.as_str()) {
                return Err(QualityError::InvalidReport(format!(
                    "duplicate feature_id {:?}",
                    r.feature_id
                )));
            }
        }
        Ok(())
    }

    pub fn all_in_spec(&self) -> bool {
        self.records.iter().all(|r| r.in_spec)
    }
}

/// A workpiece definition file: product name plus ordered feature specs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkpieceDefinition {
    pub product_name: String,
    pub features: Vec<FeatureSpec>,
}

impl WorkpieceDefinition {
    pub fn evaluate(
        &self,
        actuals: &BTreeMap<String, Millimetres>,
        workpiece_id: &str,
        created_at: DateTime<Utc>,
    ) -> Result<QualityReport, QualityError> {
        let mut report = evaluate_workpiece_at(&self.features, actuals, workpiece_id, created_at)?;
        report.product_name = self.product_name.clone();
        Ok(report)
    }
}

pub fn evaluate_feature(
    spec: &FeatureSpec,
    actual_mm: Millimetres,
) -> Result<MeasurementRecord, QualityError> {
    spec.validate()?;
    let deviation_mm = match spec.kind {
        FeatureKind::Dimension => {
            let nominal = spec.nominal_mm.expect("validated");
            actual_mm
                .checked_sub(nominal)
                .ok_or_else(|| QualityError::InvalidMeasurement {
                    feature_id: spec.feature_id.clone(),
                    reason: "deviation out of range".into(),
                })?
        }
        FeatureKind::Band => {
            if actual_mm.is_negative() {
                return Err(QualityError::InvalidMeasurement {
                    feature_id: spec.feature_id.clone(),
                    reason: "form deviation cannot be negative".into(),
                });
            }
            actual_mm
        }
    };
    Ok(MeasurementRecord {
        feature_id: spec.feature_id.clone(),
        actual_mm,
        deviation_mm,
        in_spec: deviation_mm.abs() <= spec.tolerance_mm,
    })
}

/// Evaluates every spec against its actual, timestamped now.
pub fn evaluate_workpiece(
    specs: &[FeatureSpec],
    actuals: &BTreeMap<String, Millimetres>,
    workpiece_id: &str,
) -> Result<QualityReport, QualityError> {
    evaluate_workpiece_at(specs, actuals, workpiece_id, Utc::now())
}

pub fn evaluate_workpiece_at(
    specs: &[FeatureSpec],
    actuals: &BTreeMap<String, Millimetres>,
    workpiece_id: &str,
    created_at: DateTime<Utc>,
) -> Result<QualityReport, QualityError> {
    validate_specs(specs)?;
    if specs.is_empty() {
        return Err(QualityError::InvalidReport(
            "workpiece defines no features".into(),
        ));
    }
    let known: BTreeSet<&str> = specs.iter().map(|s| s.feature_id.as_str()).collect();
    if let Some(extra) = actuals.keys().find(|k| !known.contains(k.as_str())) {
        return Err(QualityError::UnknownFeature(extra.clone()));
    }
    let records = specs
        .iter()
        .map(|spec| {
            let actual = actuals
                .get(&spec.feature_id)
                .ok_or_else(|| QualityError::MissingMeasurement(spec.feature_id.clone()))?;
            evaluate_feature(spec, *actual)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(QualityReport {
        workpiece_id: workpiece_id.to_owned(),
        product_name: String::new(),
        records,
        created_at,
    })
}

/// The Diamond-Circle-Square example workpiece with ±0.10 mm tolerances.
pub fn diamond_circle_square() -> WorkpieceDefinition {
    let mm = |s: &str| s.parse::<Millimetres>().expect("literal");
    let tol = mm("0.10");
    WorkpieceDefinition {
        product_name: "DiamondCicleSquare".into(),
        features: vec![
            FeatureSpec::dimension(
                "Height_Surface_1",
                "Height Area 1",
                mm("2.00"),
                tol,
                "Total height of surface 1",
            ),
            FeatureSpec::dimension(
                "Diameter_Surface_3",
                "Diameter Area 3",
                mm("25.00"),
                tol,
                "Diameter of surface 3",
            ),
            FeatureSpec::dimension(
                "Diameter_Hole_1",
                "Diameter Hole 1",
                mm("15.00"),
                tol,
                "Diameter of hole 1",
            ),
            FeatureSpec::dimension(
                "Height_Surface_3",
                "Height Area 3",
                mm("2.00"),
                tol,
                "Total height of surface 3",
            ),
            FeatureSpec::band(
                "Flatness_Surface_1",
                "Flatness Surface 1",
                tol,
                "Flatness of surface 1",
            ),
        ],
    }
}

/// Measured actuals for the example workpiece.
pub fn diamond_circle_square_actuals() -> BTreeMap<String, Millimetres> {
    [
        ("Height_Surface_1", "2.05"),
        ("Diameter_Surface_3", "25.06"),
        ("Diameter_Hole_1", "14.97"),
        ("Height_Surface_3", "1.95"),
        ("Flatness_Surface_1", "0.10"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v.parse().expect("literal")))
    .collect()
}

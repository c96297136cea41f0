//! Quality-record documents shaped after the AAS "Quality Control for Machining"
//! submodel, with canonical serialization.
//!
//! Wire layout (canonical, keys sorted):
//!
//! ```text
//! {"AssetId":"3","Producer":"company-a","StepIndex":1,
//!  "SubmodelElements":{"MetrologyData_Height_Surface_3":
//!     {"Description":"Total height of surface 3","QualityActualValue":"1.95","QualityInSpec":"True"}},
//!  "SubmodelId":"QualityControlForMachining"}
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::canonical;
use crate::decimal::Millimetres;
use crate::quality::{FeatureSpec, QualityReport};

pub const SUBMODEL_ID: &str = "QualityControlForMachining";
pub const ELEMENT_PREFIX: &str = "MetrologyData_";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AasError {
    #[error("report and feature specs do not match: {0}")]
    SpecReportMismatch(String),
    #[error("malformed document: {0}")]
    Parse(String),
    #[error("document violates schema: {0}")]
    Schema(String),
}

/// One measured feature inside the submodel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetrologyElement {
    #[serde(rename = "QualityActualValue")]
    pub quality_actual_value: Millimetres,
    #[serde(rename = "Description")]
    pub description: String,
    #[serde(rename = "QualityInSpec", with = "python_bool")]
    pub quality_in_spec: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityRecordDocument {
    #[serde(rename = "AssetId")]
    pub asset_id: String,
    #[serde(rename = "SubmodelId")]
    pub submodel_id: String,
    #[serde(rename = "Producer")]
    pub producer: String,
    #[serde(rename = "StepIndex")]
    pub step_index: u64,
    #[serde(rename = "SubmodelElements")]
    pub elements: BTreeMap<String, MetrologyElement>,
}

impl QualityRecordDocument {
    pub fn validate(&self) -> Result<(), AasError> {
        if self.submodel_id != SUBMODEL_ID {
            return Err(AasError::Schema(format!(
                "unexpected SubmodelId {:?}",
                self.submodel_id
            )));
        }
        if self.asset_id.is_empty() || self.producer.is_empty() {
            return Err(AasError::Schema(
                "AssetId and Producer must be non-empty".into(),
            ));
        }
        if self.step_index == 0 {
            return Err(AasError::Schema("StepIndex starts at 1".into()));
        }
        if self.elements.is_empty() {
            return Err(AasError::Schema("SubmodelElements is empty".into()));
        }
        for key in self.elements.keys() {
            if feature_id_of(key).is_none() {
                return Err(AasError::Schema(format!(
                    "element key {key:?} is not MetrologyData_<FeatureId>"
                )));
            }
        }
        Ok(())
    }

    /// Feature id → stored in-spec verdict.
    pub fn in_spec_summary(&self) -> BTreeMap<String, bool> {
        self.elements
            .iter()
            .filter_map(|(k, e)| feature_id_of(k).map(|id| (id.to_owned(), e.quality_in_spec)))
            .collect()
    }

    pub fn element(&self, feature_id: &str) -> Option<&MetrologyElement> {
        self.elements.get(&element_key(feature_id))
    }
}

pub fn element_key(feature_id: &str) -> String {
    format!("{ELEMENT_PREFIX}{feature_id}")
}

/// Strips the `MetrologyData_` prefix, returning `None` for foreign keys.
pub fn feature_id_of(key: &str) -> Option<&str> {
    key.strip_prefix(ELEMENT_PREFIX).filter(|id| {
        !id.is_empty()
            && id
                .bytes()
                .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
    })
}

pub fn build_document(
    report: &QualityReport,
    specs: &[FeatureSpec],
    producer: &str,
    step_index: u64,
) -> Result<QualityRecordDocument, AasError> {
    if report.records.is_empty() {
        return Err(AasError::SpecReportMismatch("report has no records".into()));
    }
    let by_id: BTreeMap<&str, &FeatureSpec> =
        specs.iter().map(|s| (s.feature_id.as_str(), s)).collect();
    let report_ids: BTreeSet<&str> = report
        .records
        .iter()
        .map(|r| r.feature_id.as_str())
        .collect();
    if report_ids.len() != report.records.len() {
        return Err(AasError::SpecReportMismatch(
            "report repeats a feature".into(),
        ));
    }
    if let Some(missing) = by_id.keys().find(|id| !report_ids.contains(*id)) {
        return Err(AasError::SpecReportMismatch(format!(
            "no record for feature {missing:?}"
        )));
    }
    let mut elements = BTreeMap::new();
    for record in &report.records {
        let spec = by_id.get(record.feature_id.as_str()).ok_or_else(|| {
            AasError::SpecReportMismatch(format!("no spec for feature {:?}", record.feature_id))
        })?;
        elements.insert(
            element_key(&record.feature_id),
            MetrologyElement {
                quality_actual_value: record.actual_mm,
                description: spec.description.clone(),
                quality_in_spec: record.in_spec,
            },
        );
    }
    let doc = QualityRecordDocument {
        asset_id: report.workpiece_id.clone(),
        submodel_id: SUBMODEL_ID.to_owned(),
        producer: producer.to_owned(),
        step_index,
        elements,
    };
    doc.validate()
        .map_err(|e| AasError::SpecReportMismatch(e.to_string()))?;
    Ok(doc)
}

pub fn serialize_canonical(doc: &QualityRecordDocument) -> Vec<u8> {
    canonical::to_canonical_bytes(doc).expect("document fields are always representable as JSON")
}

pub fn parse_document(bytes: &[u8]) -> Result<QualityRecordDocument, AasError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| AasError::Parse(e.to_string()))?;
    let doc: QualityRecordDocument =
        serde_json::from_value(value).map_err(|e| AasError::Schema(e.to_string()))?;
    doc.validate()?;
    Ok(doc)
}

mod python_bool {
    use super::*;

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(if *v { "True" } else { "False" })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match String::deserialize(d)?.as_str() {
            "True" => Ok(true),
            "False" => Ok(false),
            other => Err(serde::de::Error::custom(format!(
                "expected \"True\" or \"False\", got {other:?}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::{diamond_circle_square, diamond_circle_square_actuals};
    use chrono::DateTime;

    fn table_doc() -> QualityRecordDocument {
        let def = diamond_circle_square();
        let report = def
            .evaluate(&diamond_circle_square_actuals(), "3", DateTime::UNIX_EPOCH)
            .unwrap();
        build_document(&report, &def.features, "company-a", 1).unwrap()
    }

    #[test]
    fn height_surface_3_element() {
        let doc = table_doc();
        let e = &doc.elements["MetrologyData_Height_Surface_3"];
        assert_eq!(e.quality_actual_value.to_string(), "1.95");
        assert!(e.quality_in_spec);
        assert_eq!(e.description, "Total height of surface 3");
        let bytes = String::from_utf8(serialize_canonical(&doc)).unwrap();
        assert!(bytes.contains(
            r#""MetrologyData_Height_Surface_3":{"Description":"Total height of surface 3","QualityActualValue":"1.95","QualityInSpec":"True"}"#
        ));
    }

    #[test]
    fn empty_report_is_a_mismatch() {
        let def = diamond_circle_square();
        let mut report = def
            .evaluate(&diamond_circle_square_actuals(), "3", DateTime::UNIX_EPOCH)
            .unwrap();
        report.records.clear();
        assert!(matches!(
            build_document(&report, &def.features, "p", 1),
            Err(AasError::SpecReportMismatch(_))
        ));
    }

    #[test]
    fn feature_set_mismatch() {
        let def = diamond_circle_square();
        let report = def
            .evaluate(&diamond_circle_square_actuals(), "3", DateTime::UNIX_EPOCH)
            .unwrap();
        assert!(build_document(&report, &def.features[..4], "p", 1).is_err());
        let mut more = def.features.clone();
        more.push(crate::quality::FeatureSpec::band(
            "Extra",
            "Extra",
            Millimetres::ZERO,
            "",
        ));
        assert!(build_document(&report, &more, "p", 1).is_err());
    }

    #[test]
    fn step_and_identity_fields_are_required() {
        let def = diamond_circle_square();
        let report = def
            .evaluate(&diamond_circle_square_actuals(), "3", DateTime::UNIX_EPOCH)
            .unwrap();
        assert!(build_document(&report, &def.features, "p", 0).is_err());
        assert!(build_document(&report, &def.features, "", 1).is_err());
        let text = String::from_utf8(serialize_canonical(&table_doc())).unwrap();
        let zero = text.replace(r#""StepIndex":1"#, r#""StepIndex":0"#);
        assert!(matches!(
            parse_document(zero.as_bytes()),
            Err(AasError::Schema(_))
        ));
    }

    #[test]
    fn single_feature_round_trip() {
        let def = diamond_circle_square();
        let spec = def.features[3].clone();
        let actuals = [("Height_Surface_3".to_owned(), "1.95".parse().unwrap())].into();
        let report = crate::quality::evaluate_workpiece_at(
            std::slice::from_ref(&spec),
            &actuals,
            "3",
            DateTime::UNIX_EPOCH,
        )
        .unwrap();
        let doc = build_document(&report, &[spec], "p", 1).unwrap();
        assert_eq!(doc.elements.len(), 1);
        let bytes = serialize_canonical(&doc);
        assert_eq!(parse_document(&bytes).unwrap(), doc);
        assert_eq!(serialize_canonical(&parse_document(&bytes).unwrap()), bytes);
    }

    #[test]
    fn insertion_order_does_not_matter() {
        let doc = table_doc();
        let mut reversed = doc.clone();
        reversed.elements = doc
            .elements
            .iter()
            .rev()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        assert_eq!(serialize_canonical(&doc), serialize_canonical(&reversed));
    }

    #[test]
    fn parse_errors() {
        let bytes = serialize_canonical(&table_doc());
        assert!(matches!(
            parse_document(&bytes[..bytes.len() - 3]),
            Err(AasError::Parse(_))
        ));
        assert!(matches!(
            parse_document(&[0xff, 0xfe]),
            Err(AasError::Parse(_))
        ));

        let text = String::from_utf8(bytes.clone()).unwrap();
        let missing = text.replace(r#","QualityInSpec":"True"}"#, "}");
        assert!(matches!(
            parse_document(missing.as_bytes()),
            Err(AasError::Schema(_))
        ));

        let bad_bool = text.replacen(r#""QualityInSpec":"True""#, r#""QualityInSpec":true"#, 1);
        assert!(matches!(
            parse_document(bad_bool.as_bytes()),
            Err(AasError::Schema(_))
        ));

        let unknown = text.replacen('{', r#"{"Extra":1,"#, 1);
        assert!(matches!(
            parse_document(unknown.as_bytes()),
            Err(AasError::Schema(_))
        ));

        let bad_key = text.replace("MetrologyData_Height_Surface_3", "Height_Surface_3");
        assert!(matches!(
            parse_document(bad_key.as_bytes()),
            Err(AasError::Schema(_))
        ));
    }

    #[test]
    fn summary_matches_records() {
        let doc = table_doc();
        let summary = doc.in_spec_summary();
        assert_eq!(summary.len(), 5);
        assert!(summary.values().all(|v| *v));
        assert!(doc.element("Flatness_Surface_1").is_some());
    }
}

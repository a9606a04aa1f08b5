use serde::{Deserialize, Serialize};

use super::{AnnotateError, AnnotationRecord};
use crate::corpus::{DrugClass, SymptomSet};
use crate::metrics::{fleiss_kappa, multilabel_kappa, rating_table, KappaReport, MultilabelKappa};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub annotators: Vec<String>,
    pub n_items: usize,
    /// Fleiss' kappa over the eight drug classes.
    pub drug: KappaReport,
    /// Per-label binary kappa, macro-averaged.
    pub symptoms: MultilabelKappa,
}

/// Agreement among `annotators` over `records`, each of which must carry
/// a decision from every listed annotator.
pub fn agreement_report<'a, I>(records: I, annotators: &[String], labels: &[String]) -> Result<AgreementReport, AnnotateError>
where
    I: IntoIterator<Item = &'a AnnotationRecord>,
{
    let records: Vec<&AnnotationRecord> = records.into_iter().collect();
    let missing: Vec<(String, String)> = records
        .iter()
        .flat_map(|r| {
            annotators
                .iter()
                .filter(|a| r.decision_by(a).is_none())
                .map(|a| (r.post.id.clone(), a.clone()))
        })
        .collect();
    if !missing.is_empty() {
        return Err(AnnotateError::IncompleteCoverage(missing));
    }
    let drugs: Vec<Vec<DrugClass>> = annotators
        .iter()
        .map(|a| records.iter().map(|r| r.decision_by(a).expect("covered").labels.drug).collect())
        .collect();
    let symptoms: Vec<Vec<SymptomSet>> = annotators
        .iter()
        .map(|a| {
            records
                .iter()
                .map(|r| r.decision_by(a).expect("covered").labels.symptoms.clone())
                .collect()
        })
        .collect();
    let table = rating_table(&drugs, &DrugClass::ALL)?;
    Ok(AgreementReport {
        annotators: annotators.to_vec(),
        n_items: records.len(),
        drug: fleiss_kappa(&table, annotators.len())?,
        symptoms: multilabel_kappa(&symptoms, labels)?,
    })
}

use serde::Serialize;

use super::types::{CoverageBlock, DadlDocument};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageSummary {
    pub backend: String,
    /// Tools actually present in the file.
    pub tools_defined: usize,
    pub declared: Option<CoverageBlock>,
    /// 100 · declared tools_defined / estimated_total, when both are declared.
    pub computed_percent: Option<f64>,
    pub reported_percent: Option<u64>,
    /// Declared tools_defined differs from the actual count.
    pub discrepancy: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CoverageTotals {
    pub documents: usize,
    pub tools_defined: usize,
    /// Sum of estimated_total over documents that declare one.
    pub estimated_total: u64,
    pub documents_with_coverage: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub summaries: Vec<CoverageSummary>,
    pub totals: CoverageTotals,
}

pub fn coverage_report(documents: &[DadlDocument]) -> CoverageReport {
    let mut totals = CoverageTotals::default();
    let summaries = documents
        .iter()
        .map(|doc| {
            let actual = doc.tools.len();
            let declared = doc.coverage.clone();
            let computed_percent = declared.as_ref().and_then(|c| {
                match (c.tools_defined, c.estimated_total) {
                    (Some(d), Some(t)) if t > 0 => Some(100.0 * d as f64 / t as f64),
                    _ => None,
                }
            });
            let discrepancy = declared
                .as_ref()
                .and_then(|c| c.tools_defined)
                .is_some_and(|d| d != actual as u64);

            totals.documents += 1;
            totals.tools_defined += actual;
            if let Some(c) = &declared {
                totals.documents_with_coverage += 1;
                totals.estimated_total += c.estimated_total.unwrap_or(0);
            }

            CoverageSummary {
                backend: doc.backend.name.clone(),
                tools_defined: actual,
                reported_percent: computed_percent.map(|p| p.round() as u64),
                computed_percent,
                declared,
                discrepancy,
            }
        })
        .collect();
    CoverageReport { summaries, totals }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::MY_API;
    use crate::model::parse_document;

    fn doc_with_tools(n: usize, coverage: &str) -> DadlDocument {
        let mut text = String::from("backend: { name: gh, type: rest, base_url: \"https://x.test\" }\ntools:\n");
        for i in 0..n {
            text.push_str(&format!("  t{i}: {{ method: GET, path: /t{i}, access: read }}\n"));
        }
        text.push_str(coverage);
        parse_document(&text).unwrap()
    }

    #[test]
    fn github_like_percent() {
        let doc = doc_with_tools(205, "coverage: { tools_defined: 205, estimated_total: 900, percent: 23 }\n");
        let r = coverage_report(&[doc]);
        let s = &r.summaries[0];
        assert!((s.computed_percent.unwrap() - 22.777).abs() < 0.01);
        assert_eq!(s.reported_percent, Some(23));
        assert!(!s.discrepancy);
    }

    #[test]
    fn absent_block() {
        let r = coverage_report(&[parse_document(MY_API).unwrap()]);
        assert_eq!(r.summaries[0].declared, None);
        assert_eq!(r.summaries[0].tools_defined, 1);
        assert!(!r.summaries[0].discrepancy);
    }

    #[test]
    fn declared_count_mismatch_flags() {
        let doc = doc_with_tools(12, "coverage: { tools_defined: 10, estimated_total: 40 }\n");
        let r = coverage_report(&[doc]);
        assert!(r.summaries[0].discrepancy);
        assert_eq!(r.summaries[0].tools_defined, 12);
    }

    #[test]
    fn totals_aggregate() {
        let a = doc_with_tools(3, "coverage: { tools_defined: 3, estimated_total: 10 }\n");
        let b = parse_document(MY_API).unwrap();
        let r = coverage_report(&[a, b]);
        assert_eq!(r.totals.documents, 2);
        assert_eq!(r.totals.tools_defined, 4);
        assert_eq!(r.totals.estimated_total, 10);
        assert_eq!(r.totals.documents_with_coverage, 1);
    }
}

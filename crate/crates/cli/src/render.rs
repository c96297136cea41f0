use pf_core::{FeatureKind, FeatureSpec, QualityReport};

const HEADERS: [&str; 4] = [
    "Feature Name",
    "Actual Size",
    "Deviation",
    "Within Tolerance",
];

/// Renders the evaluation table, one row per record in report order.
pub fn evaluation_table(report: &QualityReport, specs: &[FeatureSpec]) -> String {
    let rows: Vec<[String; 4]> = report
        .records
        .iter()
        .map(|r| {
            let spec = specs.iter().find(|s| s.feature_id == r.feature_id);
            let name = spec.map_or(r.feature_id.clone(), |s| s.display_name.clone());
            let deviation = match spec.map(|s| s.kind) {
                Some(FeatureKind::Band) => format!("±{} mm", r.deviation_mm),
                _ => format!("{} mm", r.deviation_mm.to_signed_string()),
            };
            let verdict = if r.in_spec { "True" } else { "False" };
            [
                name,
                format!("{} mm", r.actual_mm),
                deviation,
                verdict.to_owned(),
            ]
        })
        .collect();

    let mut widths = HEADERS.map(|h| h.chars().count());
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: [&str; 4]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        padded.join(" | ").trim_end().to_owned()
    };
    let mut out = line(HEADERS);
    out.push('\n');
    out.push_str(&widths.map(|w| "-".repeat(w)).join("-+-"));
    out.push('\n');
    for row in &rows {
        out.push_str(&line([&row[0], &row[1], &row[2], &row[3]]));
        out.push('\n');
    }
    out
}

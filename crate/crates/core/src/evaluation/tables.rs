//! Label-by-experiment F1 tables as CSV and aligned text.

use crate::corpus::{Property, SrlTag};
use crate::error::{Error, Result};

use super::metrics::{label_deltas, MetricsReport};

pub const MICRO_ROW: &str = "micro-F1";
pub const MACRO_ROW: &str = "macro-F1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableLayout {
    pub id: String,
    pub title: String,
    pub corner: String,
    pub row_labels: Vec<String>,
    pub columns: Vec<String>,
}

impl TableLayout {
    /// Rows in proto-role property order.
    pub fn sprl(id: &str, title: &str, columns: Vec<String>) -> Self {
        TableLayout {
            id: id.to_owned(),
            title: title.to_owned(),
            corner: "Semantic proto-role".to_owned(),
            row_labels: Property::ALL.iter().map(|p| p.name().to_owned()).collect(),
            columns,
        }
    }

    /// Rows in SRL tag order, B-V first and O last.
    pub fn srl(id: &str, title: &str, columns: Vec<String>) -> Self {
        TableLayout {
            id: id.to_owned(),
            title: title.to_owned(),
            corner: "Semantic Role".to_owned(),
            row_labels: SrlTag::ALL.iter().map(|t| t.name()).collect(),
            columns,
        }
    }

    /// Data rows including the two aggregate rows.
    pub fn row_count(&self) -> usize {
        self.row_labels.len() + 2
    }

    /// Columns including the label column.
    pub fn column_count(&self) -> usize {
        self.columns.len() + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedTable {
    pub csv: String,
    pub text: String,
}

/// Values read back from a rendered CSV table; `None` marks an empty cell.
#[derive(Clone, Debug, PartialEq)]
pub struct TableValues {
    pub corner: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

fn check_labels(layout: &TableLayout, r: &MetricsReport) -> Result<()> {
    let mut want: Vec<&str> = layout.row_labels.iter().map(String::as_str).collect();
    let mut got = r.label_names();
    want.sort_unstable();
    got.sort_unstable();
    if want != got {
        return Err(Error::Metric(format!(
            "report `{}` does not cover the label set of table {}",
            r.experiment, layout.id
        )));
    }
    Ok(())
}

fn column_values(layout: &TableLayout, r: Option<&MetricsReport>) -> Result<Vec<Option<(f64, bool)>>> {
    let Some(r) = r else {
        return Ok(vec![None; layout.row_count()]);
    };
    check_labels(layout, r)?;
    let mut v: Vec<Option<(f64, bool)>> = layout
        .row_labels
        .iter()
        .map(|l| {
            let s = r.label(l).expect("checked label set");
            Some((s.f1, s.support == 0))
        })
        .collect();
    v.push(Some((r.micro_f1, false)));
    v.push(Some((r.macro_f1, false)));
    Ok(v)
}

fn aligned(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_owned()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

/// Render one column per report (`None` for columns without results). CSV cells hold raw F1
/// fractions; the text table shows percentages to one decimal, with `*` on zero-support rows.
pub fn render_report(layout: &TableLayout, reports: &[Option<&MetricsReport>]) -> Result<RenderedTable> {
    if reports.len() != layout.columns.len() {
        return Err(Error::Metric(format!(
            "table {} has {} columns, got {} reports",
            layout.id,
            layout.columns.len(),
            reports.len()
        )));
    }
    let cols: Vec<Vec<Option<(f64, bool)>>> =
        reports.iter().map(|r| column_values(layout, *r)).collect::<Result<_>>()?;
    let mut row_names: Vec<String> = layout.row_labels.clone();
    row_names.push(MICRO_ROW.to_owned());
    row_names.push(MACRO_ROW.to_owned());

    let mut header = vec![layout.corner.clone()];
    header.extend(layout.columns.iter().cloned());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(|e| Error::Metric(e.to_string()))?;
    let mut text_rows = Vec::new();
    let mut any_zero = false;
    for (i, name) in row_names.iter().enumerate() {
        let mut rec = vec![name.clone()];
        let mut txt = vec![name.clone()];
        for c in &cols {
            match c[i] {
                Some((v, zero)) => {
                    rec.push(v.to_string());
                    any_zero |= zero;
                    txt.push(format!("{:.1}{}", 100.0 * v, if zero { "*" } else { "" }));
                }
                None => {
                    rec.push(String::new());
                    txt.push("-".to_owned());
                }
            }
        }
        w.write_record(&rec).map_err(|e| Error::Metric(e.to_string()))?;
        text_rows.push(txt);
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| Error::Metric(e.to_string()))?)
        .map_err(|e| Error::Metric(e.to_string()))?;
    let mut text = format!("{}\n\n", layout.title);
    text.push_str(&aligned(&header, &text_rows));
    if any_zero {
        text.push_str("* no gold support for this label\n");
    }
    Ok(RenderedTable { csv, text })
}

/// Per-label F1 change of every column against `baseline`, as an aligned text table.
pub fn render_deltas(layout: &TableLayout, reports: &[Option<&MetricsReport>], baseline: usize) -> Result<String> {
    let Some(Some(base)) = reports.get(baseline) else {
        return Err(Error::Metric("baseline column has no report".into()));
    };
    let mut header = vec![layout.corner.clone()];
    let mut deltas = Vec::new();
    for (i, (name, r)) in layout.columns.iter().zip(reports).enumerate() {
        if i == baseline {
            continue;
        }
        if let Some(r) = r {
            check_labels(layout, r)?;
            header.push(format!("{name} (vs {})", layout.columns[baseline]));
            deltas.push(label_deltas(r, base)?);
        }
    }
    let rows: Vec<Vec<String>> = layout
        .row_labels
        .iter()
        .map(|l| {
            let mut row = vec![l.clone()];
            for d in &deltas {
                let v = d.iter().find(|(n, _)| n == l).map_or(0.0, |(_, v)| *v);
                row.push(format!("{:+.1}", 100.0 * v));
            }
            row
        })
        .collect();
    Ok(format!("{} per-label F1 change\n\n{}", layout.title, aligned(&header, &rows)))
}

pub fn parse_table_csv(text: &str) -> Result<TableValues> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| Error::Metric(e.to_string()))?.clone();
    let mut fields = header.iter().map(str::to_owned);
    let corner = fields.next().ok_or_else(|| Error::Metric("empty table".into()))?;
    let columns: Vec<String> = fields.collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Metric(e.to_string()))?;
        let mut it = rec.iter();
        let label = it.next().unwrap_or_default().to_owned();
        let values = it
            .map(|c| {
                if c.is_empty() {
                    Ok(None)
                } else {
                    c.parse::<f64>()
                        .map(Some)
                        .map_err(|_| Error::Metric(format!("bad value `{c}`")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((label, values));
    }
    Ok(TableValues { corner, columns, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::metrics::ConfusionCounts;

    fn sprl_report(name: &str, flip: usize) -> MetricsReport {
        let mut c = ConfusionCounts::new(Property::ALL.iter().map(|p| p.name()));
        for k in 0..18 {
            c.add_binary(k, true, true);
            c.add_binary(k, k % 3 == flip, true);
            c.add_binary(k, k == 5, false);
        }
        MetricsReport::from_counts(name, "sprl", &c).unwrap()
    }

    #[test]
    fn layout_arithmetic() {
        let layout = TableLayout::sprl("t", "T", vec!["a".into(), "b".into()]);
        let (a, b) = (sprl_report("a", 0), sprl_report("b", 1));
        let t = render_report(&layout, &[Some(&a), Some(&b)]).unwrap();
        let v = parse_table_csv(&t.csv).unwrap();
        assert_eq!(v.rows.len(), 20);
        assert_eq!(v.columns.len() + 1, 3);
        assert_eq!(v.rows[18].0, MICRO_ROW);
    }

    #[test]
    fn srl_rows_in_tag_order() {
        let layout = TableLayout::srl("t", "T", vec!["x".into()]);
        let names: Vec<&str> = layout.row_labels.iter().map(String::as_str).collect();
        assert_eq!(names[..3], ["B-V", "B-A0", "I-A0"]);
        assert_eq!(names[13], "O");
    }

    #[test]
    fn csv_round_trip_and_missing_columns() {
        let layout = TableLayout::sprl("t", "T", vec!["ref, published".into(), "ours".into()]);
        let r = sprl_report("ours", 2);
        let t = render_report(&layout, &[None, Some(&r)]).unwrap();
        let v = parse_table_csv(&t.csv).unwrap();
        assert_eq!(v.columns, layout.columns);
        for (i, l) in r.labels.iter().enumerate() {
            assert_eq!(v.rows[i].1, vec![None, Some(l.f1)]);
        }
        assert_eq!(v.rows[19].1[1], Some(r.macro_f1));
        assert!(t.text.contains("awareness"));
        assert!(t.text.lines().nth(4).unwrap().contains('-'));
    }

    #[test]
    fn mismatched_labels_rejected() {
        let layout = TableLayout::srl("t", "T", vec!["x".into()]);
        assert!(render_report(&layout, &[Some(&sprl_report("a", 0))]).is_err());
        assert!(render_report(&layout, &[]).is_err());
    }

    #[test]
    fn zero_support_marked() {
        let layout = TableLayout::sprl("t", "T", vec!["a".into()]);
        let mut c = ConfusionCounts::new(Property::ALL.iter().map(|p| p.name()));
        c.add_binary(0, true, true);
        let r = MetricsReport::from_counts("a", "sprl", &c).unwrap();
        let t = render_report(&layout, &[Some(&r)]).unwrap();
        assert!(t.text.contains("0.0*"));
        assert!(t.text.contains("no gold support"));
    }
}

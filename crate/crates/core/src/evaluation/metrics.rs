use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-label true positive, false positive and false negative counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub labels: Vec<String>,
    pub tp: Vec<usize>,
    pub fp: Vec<usize>,
    pub fn_: Vec<usize>,
    /// Number of decisions counted.
    pub decisions: usize,
}

impl ConfusionCounts {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Self {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let n = labels.len();
        ConfusionCounts {
            labels,
            tp: vec![0; n],
            fp: vec![0; n],
            fn_: vec![0; n],
            decisions: 0,
        }
    }

    /// One single-label multiclass decision.
    pub fn add(&mut self, gold: usize, pred: usize) {
        if gold == pred {
            self.tp[gold] += 1;
        } else {
            self.fp[pred] += 1;
            self.fn_[gold] += 1;
        }
        self.decisions += 1;
    }

    /// One binary decision for `label`, counted on its positive class.
    pub fn add_binary(&mut self, label: usize, gold: bool, pred: bool) {
        match (gold, pred) {
            (true, true) => self.tp[label] += 1,
            (false, true) => self.fp[label] += 1,
            (true, false) => self.fn_[label] += 1,
            (false, false) => {}
        }
        self.decisions += 1;
    }

    pub fn from_sequences(labels: &[String], gold: &[usize], pred: &[usize]) -> Result<Self> {
        if gold.len() != pred.len() {
            return Err(Error::Metric(format!(
                "gold has {} items, prediction has {}",
                gold.len(),
                pred.len()
            )));
        }
        let mut c = ConfusionCounts::new(labels.iter().cloned());
        for (&g, &p) in gold.iter().zip(pred) {
            if g >= labels.len() || p >= labels.len() {
                return Err(Error::Metric(format!("label index outside the {}-label set", labels.len())));
            }
            c.add(g, p);
        }
        Ok(c)
    }

    pub fn merge(&mut self, other: &ConfusionCounts) -> Result<()> {
        if self.labels != other.labels {
            return Err(Error::Metric("cannot merge counts over different label sets".into()));
        }
        for i in 0..self.labels.len() {
            self.tp[i] += other.tp[i];
            self.fp[i] += other.fp[i];
            self.fn_[i] += other.fn_[i];
        }
        self.decisions += other.decisions;
        Ok(())
    }

    pub fn support(&self, i: usize) -> usize {
        self.tp[i] + self.fn_[i]
    }

    pub fn label_scores(&self) -> Vec<LabelScore> {
        (0..self.labels.len())
            .map(|i| {
                let (precision, recall, f1) = prf(self.tp[i], self.fp[i], self.fn_[i]);
                LabelScore {
                    label: self.labels[i].clone(),
                    precision,
                    recall,
                    f1,
                    support: self.support(i),
                }
            })
            .collect()
    }
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// Precision, recall and F1 from counts; zero denominators give 0.
pub fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

pub fn per_label_f1<T: PartialEq>(gold: &[T], pred: &[T], label: &T) -> Result<(f64, f64, f64)> {
    if gold.len() != pred.len() {
        return Err(Error::Metric(format!(
            "gold has {} items, prediction has {}",
            gold.len(),
            pred.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        match (g == label, p == label) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(prf(tp, fp, fn_))
}

/// F1 of the counts pooled over all labels.
pub fn micro_f1(counts: &ConfusionCounts) -> Result<f64> {
    if counts.labels.is_empty() {
        return Err(Error::Metric("empty label set".into()));
    }
    let tp = counts.tp.iter().sum();
    let fp = counts.fp.iter().sum();
    let fn_ = counts.fn_.iter().sum();
    Ok(prf(tp, fp, fn_).2)
}

/// Unweighted mean of per-label F1, zero-support labels included.
pub fn macro_f1(f1s: &[f64]) -> Result<f64> {
    if f1s.is_empty() {
        return Err(Error::Metric("empty label set".into()));
    }
    Ok(f1s.iter().sum::<f64>() / f1s.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub experiment: String,
    pub task: String,
    pub labels: Vec<LabelScore>,
    pub micro_f1: f64,
    pub macro_f1: f64,
    #[serde(default)]
    pub config: BTreeMap<String, String>,
}

impl MetricsReport {
    pub fn from_counts(experiment: &str, task: &str, counts: &ConfusionCounts) -> Result<Self> {
        let labels = counts.label_scores();
        let f1s: Vec<f64> = labels.iter().map(|l| l.f1).collect();
        Ok(MetricsReport {
            experiment: experiment.to_owned(),
            task: task.to_owned(),
            micro_f1: micro_f1(counts)?,
            macro_f1: macro_f1(&f1s)?,
            labels,
            config: BTreeMap::new(),
        })
    }

    pub fn label(&self, name: &str) -> Option<&LabelScore> {
        self.labels.iter().find(|l| l.label == name)
    }

    pub fn label_names(&self) -> Vec<&str> {
        self.labels.iter().map(|l| l.label.as_str()).collect()
    }

    /// `label,precision,recall,f1,support` rows followed by `micro-F1` and `macro-F1`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# experiment={}\n# task={}\n", self.experiment, self.task);
        for (k, v) in &self.config {
            out.push_str(&format!("# config.{k}={v}\n"));
        }
        out.push_str("label,precision,recall,f1,support\n");
        for l in &self.labels {
            out.push_str(&format!("{},{},{},{},{}\n", l.label, l.precision, l.recall, l.f1, l.support));
        }
        out.push_str(&format!("micro-F1,,,{},\n", self.micro_f1));
        out.push_str(&format!("macro-F1,,,{},\n", self.macro_f1));
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Metric(format!("metrics CSV: {m}"));
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad number `{s}`")));
        let mut experiment = String::new();
        let mut task = String::new();
        let mut config = BTreeMap::new();
        let mut labels = Vec::new();
        let (mut micro, mut macro_) = (None, None);
        let mut header_seen = false;
        for line in text.lines() {
            if let Some(meta) = line.strip_prefix("# ") {
                match meta.split_once('=') {
                    Some(("experiment", v)) => experiment = v.to_owned(),
                    Some(("task", v)) => task = v.to_owned(),
                    Some((k, v)) if k.starts_with("config.") => {
                        config.insert(k["config.".len()..].to_owned(), v.to_owned());
                    }
                    _ => {}
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            if !header_seen {
                if line != "label,precision,recall,f1,support" {
                    return Err(bad("missing header"));
                }
                header_seen = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad(&format!("expected 5 fields in `{line}`")));
            }
            match f[0] {
                "micro-F1" => micro = Some(num(f[3])?),
                "macro-F1" => macro_ = Some(num(f[3])?),
                _ => labels.push(LabelScore {
                    label: f[0].to_owned(),
                    precision: num(f[1])?,
                    recall: num(f[2])?,
                    f1: num(f[3])?,
                    support: f[4].parse().map_err(|_| bad("bad support"))?,
                }),
            }
        }
        Ok(MetricsReport {
            experiment,
            task,
            labels,
            micro_f1: micro.ok_or_else(|| bad("missing micro-F1"))?,
            macro_f1: macro_.ok_or_else(|| bad("missing macro-F1"))?,
            config,
        })
    }
}

/// Per-label F1 differences `report - baseline`, in the report's label order.
pub fn label_deltas(report: &MetricsReport, baseline: &MetricsReport) -> Result<Vec<(String, f64)>> {
    if report.label_names() != baseline.label_names() {
        return Err(Error::Metric("reports cover different label sets".into()));
    }
    Ok(report
        .labels
        .iter()
        .zip(&baseline.labels)
        .map(|(a, b)| (a.label.clone(), a.f1 - b.f1))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_never_predicted() {
        assert_eq!(per_label_f1(&["A", "B"], &["A", "B"], &"A").unwrap(), (1.0, 1.0, 1.0));
        assert_eq!(per_label_f1(&["A", "B"], &["B", "B"], &"A").unwrap(), (0.0, 0.0, 0.0));
        assert!(per_label_f1(&["A"], &["A", "B"], &"A").is_err());
    }

    #[test]
    fn hand_counted() {
        let (p, r, f) = per_label_f1(&["A", "B", "A"], &["A", "A", "A"], &"A").unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r, 1.0);
        assert!((f - 0.8).abs() < 1e-15);
    }

    #[test]
    fn single_label_micro_equals_macro() {
        let mut c = ConfusionCounts::new(["x"]);
        c.add_binary(0, true, true);
        c.add_binary(0, true, false);
        c.add_binary(0, false, true);
        let f = c.label_scores()[0].f1;
        assert_eq!(micro_f1(&c).unwrap(), f);
        assert_eq!(macro_f1(&[f]).unwrap(), f);
    }

    #[test]
    fn macro_is_mean() {
        assert_eq!(macro_f1(&[1.0, 0.0]).unwrap(), 0.5);
        assert!(macro_f1(&[]).is_err());
        assert!(micro_f1(&ConfusionCounts::new(Vec::<String>::new())).is_err());
    }

    #[test]
    fn micro_equals_accuracy() {
        let labels: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let gold = [0, 1, 2, 2, 1, 0, 0];
        let pred = [0, 2, 2, 1, 1, 0, 1];
        let c = ConfusionCounts::from_sequences(&labels, &gold, &pred).unwrap();
        let acc = 4.0 / 7.0;
        assert!((micro_f1(&c).unwrap() - acc).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let labels: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let c = ConfusionCounts::from_sequences(&labels, &[0, 1, 2, 0, 1], &[0, 2, 2, 1, 1]).unwrap();
        let mut r = MetricsReport::from_counts("exp", "srl", &c).unwrap();
        r.config.insert("seed".into(), "13".into());
        r.config.insert("embedding_path".into(), "/data/emb=v2.txt".into());
        assert_eq!(MetricsReport::from_csv(&r.to_csv()).unwrap(), r);
    }

    #[test]
    fn deltas() {
        let labels: Vec<String> = ["a", "b"].map(String::from).to_vec();
        let base = MetricsReport::from_counts("b", "t", &ConfusionCounts::from_sequences(&labels, &[0, 1], &[1, 1]).unwrap()).unwrap();
        let better = MetricsReport::from_counts("m", "t", &ConfusionCounts::from_sequences(&labels, &[0, 1], &[0, 1]).unwrap()).unwrap();
        let d = label_deltas(&better, &base).unwrap();
        assert_eq!(d[0], ("a".to_owned(), 1.0));
        assert!((d[1].1 - (1.0 - 2.0 / 3.0)).abs() < 1e-15);
    }
}

use std::collections::BTreeMap;
use std::fmt;

use crate::corpus::PROPERTY_COUNT;
use crate::error::{Error, Result};
use crate::model::{Objective, TaskSums};

use super::config::{ExperimentConfig, SprlReduction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Span,
    Head,
    Srl,
    Sprl,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Span, Task::Head, Task::Srl, Task::Sprl];

    pub fn name(self) -> &'static str {
        match self {
            Task::Span => "span",
            Task::Head => "head",
            Task::Srl => "srl",
            Task::Sprl => "sprl",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Weighted sum of task losses. Tasks without an explicit weight count once.
pub fn combined_loss(losses: &BTreeMap<Task, f64>, weights: &BTreeMap<Task, f64>) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::config("combined loss needs at least one task"));
    }
    let mut total = 0.0;
    for (task, loss) in losses {
        let w = weights.get(task).copied().unwrap_or(1.0);
        if !(w >= 0.0) {
            return Err(Error::config(format!("negative weight {w} for task {task}")));
        }
        total += w * loss;
    }
    Ok(total)
}

/// Denominators for mean-reduced task losses.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TaskCounts {
    pub tokens: usize,
    pub sprl: [usize; PROPERTY_COUNT],
}

impl TaskCounts {
    pub fn add(&mut self, o: &TaskCounts) {
        self.tokens += o.tokens;
        for (a, b) in self.sprl.iter_mut().zip(&o.sprl) {
            *a += b;
        }
    }
}

/// The tasks a config optimizes, with their weights.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskPlan {
    pub weights: BTreeMap<Task, f64>,
    pub reduction: SprlReduction,
}

impl TaskPlan {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        let mut weights = BTreeMap::new();
        if cfg.trains_span_head() {
            weights.insert(Task::Span, cfg.weight_span);
            weights.insert(Task::Head, cfg.weight_head);
        }
        if cfg.trains_srl() {
            weights.insert(Task::Srl, cfg.weight_srl);
        }
        if cfg.trains_sprl() {
            weights.insert(Task::Sprl, cfg.weight_sprl);
        }
        TaskPlan {
            weights,
            reduction: cfg.sprl_reduction,
        }
    }

    pub fn has(&self, task: Task) -> bool {
        self.weights.contains_key(&task)
    }

    fn sprl_divisor(&self) -> f64 {
        match self.reduction {
            SprlReduction::Sum => 1.0,
            SprlReduction::Mean => PROPERTY_COUNT as f64,
        }
    }

    /// Per-example gradient scales so the summed gradient is that of the mean-reduced loss.
    pub fn objective(&self, counts: &TaskCounts, head_input: crate::model::HeadInput) -> Objective {
        let tok = |t: Task| {
            self.weights
                .get(&t)
                .map(|w| if counts.tokens == 0 { 0.0 } else { w / counts.tokens as f64 })
        };
        let sprl = self.weights.get(&Task::Sprl).map(|w| {
            let mut s = [0.0; PROPERTY_COUNT];
            for (k, &n) in counts.sprl.iter().enumerate() {
                if n > 0 {
                    s[k] = w / (n as f64 * self.sprl_divisor());
                }
            }
            s
        });
        Objective {
            span: tok(Task::Span),
            head: tok(Task::Head),
            srl: tok(Task::Srl),
            sprl,
            head_input,
        }
    }

    /// Mean-reduced, unweighted per-task losses.
    pub fn task_losses(&self, sums: &TaskSums, counts: &TaskCounts) -> BTreeMap<Task, f64> {
        let per_token = |v: f64| if counts.tokens == 0 { 0.0 } else { v / counts.tokens as f64 };
        let mut out = BTreeMap::new();
        for &task in self.weights.keys() {
            let loss = match task {
                Task::Span => per_token(sums.span),
                Task::Head => per_token(sums.head),
                Task::Srl => per_token(sums.srl),
                Task::Sprl => {
                    sums.sprl
                        .iter()
                        .zip(&counts.sprl)
                        .filter(|(_, &n)| n > 0)
                        .map(|(s, &n)| s / n as f64)
                        .sum::<f64>()
                        / self.sprl_divisor()
                }
            };
            out.insert(task, loss);
        }
        out
    }

    pub fn total(&self, losses: &BTreeMap<Task, f64>) -> Result<f64> {
        combined_loss(losses, &self.weights)
    }
}

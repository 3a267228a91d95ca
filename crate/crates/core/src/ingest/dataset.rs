use serde::{Deserialize, Serialize};

use super::GroundTruth;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Training,
    Validation,
    Testing,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Training, Split::Validation, Split::Testing];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Training => "training",
            Split::Validation => "validation",
            Split::Testing => "testing",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "training" | "train" => Ok(Split::Training),
            "validation" | "val" => Ok(Split::Validation),
            "testing" | "test" => Ok(Split::Testing),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub class: String,
    pub training: u64,
    pub validation: u64,
    pub testing: u64,
    pub total: u64,
}

/// Instance counts per class and split, with row and column totals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub classes: Vec<ClassCounts>,
    pub totals: ClassCounts,
}

impl DatasetSummary {
    pub fn from_counts(rows: Vec<(String, [u64; 3])>) -> Self {
        let mut sums = [0u64; 3];
        let classes = rows
            .into_iter()
            .map(|(class, c)| {
                for (s, v) in sums.iter_mut().zip(c) {
                    *s += v;
                }
                counts_row(class, c)
            })
            .collect();
        DatasetSummary {
            classes,
            totals: counts_row("Total".into(), sums),
        }
    }

    /// Cell-by-cell differences against an expected summary, empty when equal.
    pub fn diff(&self, expected: &DatasetSummary) -> Vec<String> {
        fn compare(out: &mut Vec<String>, a: &ClassCounts, b: &ClassCounts) {
            for (field, x, y) in [
                ("training", a.training, b.training),
                ("validation", a.validation, b.validation),
                ("testing", a.testing, b.testing),
                ("total", a.total, b.total),
            ] {
                if x != y {
                    out.push(format!("{} {field}: got {x}, expected {y}", a.class));
                }
            }
        }
        let mut out = Vec::new();
        for want in &expected.classes {
            match self.classes.iter().find(|c| c.class == want.class) {
                Some(got) => compare(&mut out, got, want),
                None => out.push(format!("{}: missing from dataset", want.class)),
            }
        }
        for got in &self.classes {
            if !expected.classes.iter().any(|c| c.class == got.class) && got.total > 0 {
                out.push(format!("{}: {} instances not in expected summary", got.class, got.total));
            }
        }
        compare(&mut out, &self.totals, &expected.totals);
        out
    }
}

fn counts_row(class: String, c: [u64; 3]) -> ClassCounts {
    ClassCounts {
        class,
        training: c[0],
        validation: c[1],
        testing: c[2],
        total: c.iter().sum(),
    }
}

/// Counts instances per class and split. Classes are keyed by name, ordered
/// by first appearance across the split tables.
pub fn validate_dataset(splits: &[(Split, &GroundTruth)]) -> DatasetSummary {
    let mut rows: Vec<(String, [u64; 3])> = Vec::new();
    for (_, gt) in splits {
        for name in gt.classes.real_names() {
            if !rows.iter().any(|(n, _)| n == name) {
                rows.push((name.clone(), [0; 3]));
            }
        }
    }
    for (split, gt) in splits {
        for inst in gt.images.iter().flat_map(|i| &i.instances) {
            let name = gt.classes.name(inst.class_index).unwrap_or_default();
            if let Some((_, c)) = rows.iter_mut().find(|(n, _)| n == name) {
                c[split.slot()] += 1;
            }
        }
    }
    DatasetSummary::from_counts(rows)
}

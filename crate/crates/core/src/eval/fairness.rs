//! True-positive-rate gaps between two protected groups.

use std::collections::BTreeMap;
use std::fmt::Display;

use serde::Serialize;

use super::similarity::pearson;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TprCell {
    pub class: String,
    /// `true` for the protected group z, `false` for z'.
    pub group: bool,
    pub true_positives: usize,
    pub condition_positives: usize,
    /// Absent when the cell has no condition positives.
    pub tpr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TprTable {
    pub cells: Vec<TprCell>,
}

impl TprTable {
    pub fn tpr(&self, class: &str, group: bool) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.class == class && c.group == group)
            .and_then(|c| c.tpr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassGap {
    pub class: String,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TprGapReport {
    pub table: TprTable,
    /// `TPR(z, y) − TPR(z', y)` for classes where both cells are defined.
    pub gaps: Vec<ClassGap>,
    pub rms: f64,
    /// Pearson correlation between gap and protected-group share per class.
    pub sigma: Option<f64>,
    pub warnings: Vec<String>,
}

/// Share of the protected group among the true members of each class.
pub fn group_shares<T: Ord + Display>(y_true: &[T], z: &[bool]) -> Result<BTreeMap<String, f64>> {
    if y_true.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            got: z.len(),
        });
    }
    let mut counts: BTreeMap<&T, (usize, usize)> = BTreeMap::new();
    for (y, &g) in y_true.iter().zip(z) {
        let e = counts.entry(y).or_default();
        e.0 += usize::from(g);
        e.1 += 1;
    }
    Ok(counts
        .into_iter()
        .map(|(y, (p, n))| (y.to_string(), p as f64 / n as f64))
        .collect())
}

pub fn tpr_gap_suite<T: Ord + Display>(
    y_true: &[T],
    y_pred: &[T],
    z: &[bool],
    shares: Option<&BTreeMap<String, f64>>,
) -> Result<TprGapReport> {
    for other in [y_pred.len(), z.len()] {
        if other != y_true.len() {
            return Err(Error::DimensionMismatch {
                expected: y_true.len(),
                got: other,
            });
        }
    }
    // (class, group) -> (tp, condition positives)
    let mut counts: BTreeMap<(&T, bool), (usize, usize)> = BTreeMap::new();
    let mut classes: Vec<&T> = y_true.iter().collect();
    classes.sort();
    classes.dedup();
    for c in &classes {
        counts.insert((c, false), (0, 0));
        counts.insert((c, true), (0, 0));
    }
    for ((t, p), &g) in y_true.iter().zip(y_pred).zip(z) {
        let e = counts.get_mut(&(t, g)).expect("class registered");
        e.1 += 1;
        if t == p {
            e.0 += 1;
        }
    }
    let cells: Vec<TprCell> = counts
        .iter()
        .map(|(&(c, g), &(tp, cp))| TprCell {
            class: c.to_string(),
            group: g,
            true_positives: tp,
            condition_positives: cp,
            tpr: (cp > 0).then(|| tp as f64 / cp as f64),
        })
        .collect();
    let table = TprTable { cells };

    let mut warnings = Vec::new();
    let mut gaps = Vec::new();
    for c in &classes {
        let name = c.to_string();
        match (table.tpr(&name, true), table.tpr(&name, false)) {
            (Some(a), Some(b)) => gaps.push(ClassGap { class: name, gap: a - b }),
            _ => warnings.push(format!(
                "class {name} lacks condition positives in one group; excluded"
            )),
        }
    }
    if gaps.is_empty() {
        return Err(Error::InvalidInput("no class has a defined TPR gap".into()));
    }
    let rms = (gaps.iter().map(|g| g.gap * g.gap).sum::<f64>() / gaps.len() as f64).sqrt();

    let sigma = match shares {
        None => None,
        Some(shares) => {
            let mut gx = Vec::new();
            let mut sx = Vec::new();
            for g in &gaps {
                match shares.get(&g.class) {
                    Some(&s) => {
                        gx.push(g.gap);
                        sx.push(s);
                    }
                    None => warnings.push(format!("no group share for class {}", g.class)),
                }
            }
            if gx.len() < 3 {
                warnings.push("fewer than 3 classes with shares; correlation skipped".into());
                None
            } else {
                match pearson(&gx, &sx) {
                    Ok(r) => Some(r),
                    Err(e) => {
                        warnings.push(format!("correlation undefined: {e}"));
                        None
                    }
                }
            }
        }
    };
    Ok(TprGapReport {
        table,
        gaps,
        rms,
        sigma,
        warnings,
    })
}

use std::io::Write;

use crate::corpus::View;
use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix};

/// Pseudo-cluster labels of one view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewAssignment {
    pub view: View,
    /// Component of each document, numbered by first appearance in row order.
    pub component_id: Vec<usize>,
    pub nearest: Vec<usize>,
}

impl ViewAssignment {
    pub fn len(&self) -> usize {
        self.component_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.component_id.is_empty()
    }

    pub fn num_components(&self) -> usize {
        self.component_id.iter().max().map_or(0, |&m| m + 1)
    }

    pub fn same(&self, i: usize, j: usize) -> bool {
        self.component_id[i] == self.component_id[j]
    }

    /// Dense `Y` with `Y[i][j] = 1` when `i` and `j` share a component.
    pub fn y_matrix(&self) -> Matrix {
        let n = self.len();
        Matrix::from_fn(n, n, |i, j| if self.same(i, j) { 1.0 } else { 0.0 })
    }
}

/// Both views' assignments; index `i` in either refers to source document `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoLabels {
    pub org: ViewAssignment,
    pub aug: ViewAssignment,
}

impl PseudoLabels {
    /// Splits `z_tilde` into its two halves (originals first) and labels each.
    pub fn from_embeddings(z_tilde: &Matrix) -> Result<Self> {
        let rows = z_tilde.rows();
        if !rows.is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "{rows} rows do not split into two views"
            )));
        }
        let n = rows / 2;
        let org: Vec<usize> = (0..n).collect();
        let aug: Vec<usize> = (n..rows).collect();
        Ok(Self {
            org: build_pseudo_labels(&z_tilde.gather_rows(&org), View::Original)?,
            aug: build_pseudo_labels(&z_tilde.gather_rows(&aug), View::Augmented)?,
        })
    }

    pub fn n(&self) -> usize {
        self.org.len()
    }

    pub fn get(&self, view: View) -> &ViewAssignment {
        match view {
            View::Original => &self.org,
            View::Augmented => &self.aug,
        }
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Nearest neighbour by cosine within one view (ties to the lowest index),
/// then connected components of the symmetrized nearest-neighbour graph.
/// A zero row has cosine 0 to everything.
pub fn build_pseudo_labels(embeddings: &Matrix, view: View) -> Result<ViewAssignment> {
    let n = embeddings.rows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "pseudo-labels need at least 2 documents per view, got {n}"
        )));
    }
    let norms = embeddings.row_norms();
    let cosine = |i: usize, j: usize| {
        if norms[i] == 0.0 || norms[j] == 0.0 {
            0.0
        } else {
            dot(embeddings.row(i), embeddings.row(j)) / (norms[i] * norms[j])
        }
    };
    let nearest: Vec<usize> = (0..n)
        .map(|i| {
            let mut best = usize::MAX;
            let mut best_sim = f64::NEG_INFINITY;
            for j in (0..n).filter(|&j| j != i) {
                let s = cosine(i, j);
                if s > best_sim {
                    best = j;
                    best_sim = s;
                }
            }
            best
        })
        .collect();

    let mut parent: Vec<usize> = (0..n).collect();
    for (i, &j) in nearest.iter().enumerate() {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut ids = vec![usize::MAX; n];
    let mut next = 0;
    let component_id = (0..n)
        .map(|i| {
            let root = find(&mut parent, i);
            if ids[root] == usize::MAX {
                ids[root] = next;
                next += 1;
            }
            ids[root]
        })
        .collect();
    Ok(ViewAssignment {
        view,
        component_id,
        nearest,
    })
}

/// One `doc_id\tview\tcomponent_id` line per document, originals first.
pub fn write_assignment_tsv(
    mut w: impl Write,
    labels: &PseudoLabels,
    org_ids: &[u64],
    aug_ids: &[u64],
) -> Result<()> {
    if org_ids.len() != labels.n() || aug_ids.len() != labels.n() {
        return Err(Error::Shape(
            "document ids do not match the assignment".into(),
        ));
    }
    let mut out = String::from("doc_id\tview\tcomponent_id\n");
    for (a, ids) in [(&labels.org, org_ids), (&labels.aug, aug_ids)] {
        for (id, c) in ids.iter().zip(&a.component_id) {
            out.push_str(&format!("{id}\t{}\t{c}\n", a.view.as_str()));
        }
    }
    w.write_all(out.as_bytes())
        .map_err(|e| Error::io(std::path::Path::new("<pseudo-label dump>"), e))
}
